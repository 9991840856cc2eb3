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

// Capture directories in the DiLiGenT-style layout:
//
//   <dir>/filenames.txt          one image file name per line, in order
//   <dir>/light_directions.txt   one "lx ly lz" row per image
//   <dir>/light_intensities.txt  optional "r g b" rows (default 1 1 1)
//   <dir>/mask.png               8-bit, nonzero = valid
//   <dir>/normal_gt.png          optional 16-bit RGB, c = round((n+1)/2*65535)
//
// Text files are ASCII, whitespace separated, '#' starts a comment. Images
// are 8- or 16-bit PNG; on load they are divided by the light intensity
// channel-wise.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "msfps/png_codec.hpp"
#include "msfps/types.hpp"

namespace msfps {

struct LoadedCapture {
  ImageSet images;
  std::optional<NormalMap> ground_truth;
  std::vector<std::string> warnings;
};

// `subset` selects images (and their lights) by position in filenames.txt.
LoadedCapture load_capture(const std::filesystem::path& dir,
                           const std::optional<std::vector<std::size_t>>& subset = std::nullopt);

// Writes the layout above. Images are multiplied back by the light
// intensity, clamped to [0,1] and stored as 16-bit RGB.
void save_capture(const std::filesystem::path& dir, const ImageSet& set,
                  const NormalMap* ground_truth = nullptr);

// True when `dir` looks like a capture (has filenames.txt).
bool is_capture_dir(const std::filesystem::path& dir);
// `root` itself when it is a capture, otherwise its capture subdirectories
// in lexicographic order.
std::vector<std::filesystem::path> list_captures(const std::filesystem::path& root);

PngImage encode_normal_png(const NormalMap& map);
// Inverts the encoding and re-normalizes. With a mask, pixels outside it are
// zeroed; without one, all-zero pixels are treated as unmasked.
NormalMap decode_normal_png(const PngImage& image, const Mask* mask = nullptr);

// Parses "a-b" ranges and comma lists ("20-95", "0,2,5-7") into indices.
std::vector<std::size_t> parse_index_list(const std::string& text);

}  // namespace msfps
