// Copyright (c) 2026, The PSIS Toolkit Authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "psis/coco.hpp"

namespace psis {

/// Interleaved 8-bit RGB image.
class Raster {
 public:
  using Pixel = std::array<std::uint8_t, 3>;

  Raster() = default;
  Raster(int width, int height, Pixel fill = {0, 0, 0});

  int width() const { return width_; }
  int height() const { return height_; }

  Pixel at(int x, int y) const {
    const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
    return {data_[i], data_[i + 1], data_[i + 2]};
  }
  void set(int x, int y, Pixel p) {
    const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
    data_[i] = p[0];
    data_[i + 1] = p[1];
    data_[i + 2] = p[2];
  }
  std::uint8_t channel(int x, int y, int c) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c];
  }

  std::vector<std::uint8_t>& data() { return data_; }
  const std::vector<std::uint8_t>& data() const { return data_; }

  bool operator==(const Raster&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

enum class ImageFormat { kPng, kJpeg };

Raster load_image(const std::filesystem::path& path);
/// PNG is lossless; JPEG is written at quality 95.
void save_image(const Raster& img, const std::filesystem::path& path, ImageFormat format = ImageFormat::kPng);

/// Supplies pixel data for dataset images.
class ImageSource {
 public:
  virtual ~ImageSource() = default;
  virtual Raster load(const ImageRecord& image) const = 0;
};

/// Reads `image_root / file_name` from disk.
class DiskImageSource : public ImageSource {
 public:
  explicit DiskImageSource(std::filesystem::path root) : root_(std::move(root)) {}
  Raster load(const ImageRecord& image) const override;

 private:
  std::filesystem::path root_;
};

class MemoryImageSource : public ImageSource {
 public:
  void add(ImageId id, Raster img) { images_[id] = std::move(img); }
  Raster load(const ImageRecord& image) const override;

 private:
  std::map<ImageId, Raster> images_;
};

}  // namespace psis
