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

#include "psis/raster.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "psis/error.hpp"

namespace psis {

Raster::Raster(int width, int height, Pixel fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw DegenerateGeometryError("negative raster dimensions");
  data_.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < data_.size(); i += 3) {
    data_[i] = fill[0];
    data_[i + 1] = fill[1];
    data_[i + 2] = fill[2];
  }
}

Raster load_image(const std::filesystem::path& path) {
  cv::Mat bgr;
  try {
    bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw IoError("cannot decode image " + path.string() + ": " + e.what());
  }
  if (bgr.empty()) throw IoError("cannot load image " + path.string());
  Raster out(bgr.cols, bgr.rows);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) out.set(x, y, {row[x][2], row[x][1], row[x][0]});
  }
  return out;
}

void save_image(const Raster& img, const std::filesystem::path& path, ImageFormat format) {
  cv::Mat bgr(img.height(), img.width(), CV_8UC3);
  for (int y = 0; y < img.height(); ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width(); ++x) {
      const auto p = img.at(x, y);
      row[x] = cv::Vec3b(p[2], p[1], p[0]);
    }
  }
  std::vector<int> params;
  if (format == ImageFormat::kJpeg) params = {cv::IMWRITE_JPEG_QUALITY, 95};
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), bgr, params);
  } catch (const cv::Exception& e) {
    throw IoError("cannot encode image " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write image " + path.string());
}

Raster DiskImageSource::load(const ImageRecord& image) const {
  Raster img = load_image(root_ / image.file_name);
  if (img.width() != image.width || img.height() != image.height)
    throw IntegrityError("image " + image.file_name + " dimensions differ from its annotation record");
  return img;
}

Raster MemoryImageSource::load(const ImageRecord& image) const {
  auto it = images_.find(image.id);
  if (it == images_.end()) throw IoError("no in-memory raster for image " + std::to_string(image.id));
  return it->second;
}

}  // namespace psis
