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

#include "msfps/capture_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "msfps/error.hpp"

namespace msfps {
namespace fs = std::filesystem;
namespace {

std::string strip_comment(const std::string& line) {
  const auto hash = line.find('#');
  std::string s = hash == std::string::npos ? line : line.substr(0, hash);
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open");
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    std::string s = strip_comment(line);
    if (!s.empty()) out.push_back(std::move(s));
  }
  return out;
}

std::vector<Eigen::Vector3d> read_rows3(const fs::path& path) {
  std::vector<Eigen::Vector3d> rows;
  std::size_t lineno = 0;
  for (const auto& line : read_lines(path)) {
    ++lineno;
    std::istringstream ss(line);
    Eigen::Vector3d v;
    std::string extra;
    if (!(ss >> v[0] >> v[1] >> v[2]) || (ss >> extra)) {
      throw DataError(path.string() + ": row " + std::to_string(lineno) +
                      " is not three numbers");
    }
    rows.push_back(v);
  }
  return rows;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  out << text;
  out.flush();
  if (!out) throw DataError(path.string() + ": write failed");
}

Mask decode_mask(const PngImage& img) {
  Mask mask;
  mask.height = img.height;
  mask.width = img.width;
  mask.valid.assign(img.height * img.width, 0);
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) {
      bool any = false;
      for (int ch = 0; ch < std::min(img.channels, 3); ++ch) any |= img.sample(r, c, ch) != 0;
      mask.valid[r * img.width + c] = any ? 1 : 0;
    }
  }
  return mask;
}

}  // namespace

bool is_capture_dir(const fs::path& dir) { return fs::is_regular_file(dir / "filenames.txt"); }

std::vector<fs::path> list_captures(const fs::path& root) {
  if (is_capture_dir(root)) return {root};
  if (!fs::is_directory(root)) throw DataError(root.string() + ": not a directory");
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && is_capture_dir(entry.path())) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw DataError(root.string() + ": no capture directories found");
  return out;
}

LoadedCapture load_capture(const fs::path& dir,
                           const std::optional<std::vector<std::size_t>>& subset) {
  if (!fs::is_directory(dir)) throw DataError(dir.string() + ": not a directory");
  const fs::path names_path = dir / "filenames.txt";
  const fs::path lights_path = dir / "light_directions.txt";
  const fs::path intens_path = dir / "light_intensities.txt";
  const fs::path mask_path = dir / "mask.png";
  if (!fs::exists(names_path)) throw DataError(names_path.string() + ": missing image list");
  if (!fs::exists(lights_path)) throw DataError(lights_path.string() + ": missing light file");
  if (!fs::exists(mask_path)) throw DataError(mask_path.string() + ": missing mask");

  const auto names = read_lines(names_path);
  const auto directions = read_rows3(lights_path);
  if (names.empty()) throw DataError(names_path.string() + ": no images listed");
  if (directions.size() != names.size()) {
    throw DataError(lights_path.string() + ": " + std::to_string(directions.size()) +
                    " light rows for " + std::to_string(names.size()) + " images");
  }
  std::vector<Eigen::Vector3d> intensities(names.size(), Eigen::Vector3d::Ones());
  if (fs::exists(intens_path)) {
    intensities = read_rows3(intens_path);
    if (intensities.size() != names.size()) {
      throw DataError(intens_path.string() + ": " + std::to_string(intensities.size()) +
                      " intensity rows for " + std::to_string(names.size()) + " images");
    }
  }

  std::vector<std::size_t> order(names.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (subset) {
    for (std::size_t idx : *subset) {
      if (idx >= names.size()) {
        throw DataError(dir.string() + ": subset index " + std::to_string(idx) +
                        " out of range for " + std::to_string(names.size()) + " images");
      }
    }
    order = *subset;
    if (order.empty()) throw DataError(dir.string() + ": empty subset");
  }

  LoadedCapture out;
  out.images.name = dir.filename().string();
  if (out.images.name.empty()) out.images.name = dir.parent_path().filename().string();
  out.images.mask = decode_mask(read_png(mask_path));
  const std::size_t h = out.images.mask.height, w = out.images.mask.width;
  if (out.images.mask.count() == 0) out.warnings.push_back(mask_path.string() + ": mask is empty");

  for (std::size_t idx : order) {
    const fs::path img_path = dir / names[idx];
    const PngImage img = read_png(img_path);
    if (img.width != w || img.height != h) {
      throw DataError(img_path.string() + ": size " + std::to_string(img.width) + "x" +
                      std::to_string(img.height) + " differs from mask " + std::to_string(w) +
                      "x" + std::to_string(h));
    }
    Light light;
    light.direction = directions[idx];
    light.intensity = intensities[idx];
    try {
      light.validate();
    } catch (const DataError& e) {
      throw DataError(lights_path.string() + ": row " + std::to_string(idx + 1) + ": " + e.what());
    }
    const double maxv = img.max_value();
    Tensor t = Tensor::zeros({3, h, w});
    auto d = t.mutable_data();
    for (std::size_t p = 0; p < h * w; ++p) {
      for (int c = 0; c < 3; ++c) {
        const int src = img.channels >= 3 ? c : 0;
        const double v = img.samples[p * static_cast<std::size_t>(img.channels) +
                                     static_cast<std::size_t>(src)] / maxv;
        d[static_cast<std::size_t>(c) * h * w + p] = v / light.intensity[c];
      }
    }
    out.images.images.push_back(std::move(t));
    out.images.lights.push_back(light);
  }

  const fs::path gt_path = dir / "normal_gt.png";
  if (fs::exists(gt_path)) {
    const PngImage gt = read_png(gt_path);
    if (gt.width != w || gt.height != h || gt.channels < 3) {
      throw DataError(gt_path.string() + ": size or channel count does not match the capture");
    }
    out.ground_truth = decode_normal_png(gt, &out.images.mask);
  }
  return out;
}

void save_capture(const fs::path& dir, const ImageSet& set, const NormalMap* ground_truth) {
  set.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError(dir.string() + ": cannot create directory: " + ec.message());
  const std::size_t h = set.height(), w = set.width();
  const std::size_t digits = std::max<std::size_t>(3, std::to_string(set.count()).size());

  std::string names, dirs, intens;
  for (std::size_t i = 0; i < set.count(); ++i) {
    std::string idx = std::to_string(i + 1);
    idx.insert(0, digits - idx.size(), '0');
    const std::string name = idx + ".png";
    names += name + "\n";
    const Light& l = set.lights[i];
    dirs += format_double(l.direction[0]) + " " + format_double(l.direction[1]) + " " +
            format_double(l.direction[2]) + "\n";
    intens += format_double(l.intensity[0]) + " " + format_double(l.intensity[1]) + " " +
              format_double(l.intensity[2]) + "\n";

    PngImage img;
    img.width = w;
    img.height = h;
    img.channels = 3;
    img.bit_depth = 16;
    img.samples.resize(h * w * 3);
    const auto d = set.images[i].data();
    for (std::size_t p = 0; p < h * w; ++p) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(d[c * h * w + p] * l.intensity[static_cast<int>(c)], 0.0, 1.0);
        img.samples[p * 3 + c] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
      }
    }
    write_png(dir / name, img);
  }
  write_text(dir / "filenames.txt", names);
  write_text(dir / "light_directions.txt", dirs);
  write_text(dir / "light_intensities.txt", intens);

  PngImage mask;
  mask.width = w;
  mask.height = h;
  mask.channels = 1;
  mask.bit_depth = 8;
  mask.samples.resize(h * w);
  for (std::size_t p = 0; p < h * w; ++p) mask.samples[p] = set.mask.valid[p] ? 255 : 0;
  write_png(dir / "mask.png", mask);

  if (ground_truth) write_png(dir / "normal_gt.png", encode_normal_png(*ground_truth));
}

PngImage encode_normal_png(const NormalMap& map) {
  const std::size_t h = map.mask.height, w = map.mask.width;
  PngImage img;
  img.width = w;
  img.height = h;
  img.channels = 3;
  img.bit_depth = 16;
  img.samples.assign(h * w * 3, 0);
  for (std::size_t p = 0; p < h * w; ++p) {
    if (!map.mask.valid[p]) continue;
    const Eigen::Vector3d n = map.at(p);
    for (int c = 0; c < 3; ++c) {
      const double v = std::clamp((n[c] + 1.0) / 2.0, 0.0, 1.0);
      img.samples[p * 3 + static_cast<std::size_t>(c)] =
          static_cast<std::uint16_t>(std::lround(v * 65535.0));
    }
  }
  return img;
}

NormalMap decode_normal_png(const PngImage& image, const Mask* mask) {
  Mask m;
  if (mask) {
    m = *mask;
  } else {
    m.height = image.height;
    m.width = image.width;
    m.valid.assign(image.height * image.width, 0);
  }
  const std::size_t pixels = image.height * image.width;
  const double maxv = image.max_value();
  const auto raw = [&](std::size_t p, int c) {
    return image.samples[p * static_cast<std::size_t>(image.channels) + static_cast<std::size_t>(c)];
  };
  if (!mask) {
    for (std::size_t p = 0; p < pixels; ++p) {
      m.valid[p] = (raw(p, 0) | raw(p, 1) | raw(p, 2)) != 0 ? 1 : 0;
    }
  }
  NormalMap out = NormalMap::zeros(m);
  for (std::size_t p = 0; p < pixels; ++p) {
    if (!out.mask.valid[p]) continue;
    Eigen::Vector3d n;
    for (int c = 0; c < 3; ++c) n[c] = raw(p, c) / maxv * 2.0 - 1.0;
    const double len = n.norm();
    if (len < 1e-12) {
      out.mask.valid[p] = 0;
      continue;
    }
    out.set(p, n / len);
  }
  return out;
}

std::vector<std::size_t> parse_index_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  const auto parse = [&](const std::string& s) {
    std::size_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw ConfigError("invalid index '" + s + "' in list '" + text + "'");
    }
    return v;
  };
  while (std::getline(ss, item, ',')) {
    item = strip_comment(item);
    if (item.empty()) continue;
    const auto dash = item.find('-');
    if (dash == std::string::npos) {
      out.push_back(parse(item));
    } else {
      const std::size_t a = parse(strip_comment(item.substr(0, dash)));
      const std::size_t b = parse(strip_comment(item.substr(dash + 1)));
      if (b < a) throw ConfigError("descending range '" + item + "'");
      for (std::size_t i = a; i <= b; ++i) out.push_back(i);
    }
  }
  if (out.empty()) throw ConfigError("empty index list");
  return out;
}

}  // namespace msfps
