// Copyright 2026 The msfps Authors.
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

#include <cstdint>
#include <filesystem>
#include <vector>

namespace msfps {

// Interleaved samples, row-major. bit_depth is 8 or 16; channels 1, 3 or 4.
struct PngImage {
  std::size_t width = 0;
  std::size_t height = 0;
  int channels = 3;
  int bit_depth = 16;
  std::vector<std::uint16_t> samples;

  std::uint16_t max_value() const { return bit_depth == 16 ? 65535 : 255; }
  std::uint16_t sample(std::size_t row, std::size_t col, int channel) const {
    return samples[(row * width + col) * static_cast<std::size_t>(channels) +
                   static_cast<std::size_t>(channel)];
  }
};

// Throws DataError naming the path on any failure. Palette and gray+alpha
// files are expanded; bit depths below 8 are scaled up to 8.
PngImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const PngImage& image);

}  // namespace msfps
