// Copyright 2026 The compgen Authors. All Rights Reserved.
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
// =============================================================================

#include "compgen/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "compgen/common.hpp"

namespace compgen {

std::filesystem::path ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw RuntimeFailure("cannot create directory " + dir.string() + ": " + ec.message());
  return dir;
}

std::ofstream open_output(const std::filesystem::path& path, bool binary) {
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw RuntimeFailure("cannot open " + path.string() + " for writing");
  return out;
}

std::string format_double(double v, int precision) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

void write_csv_row(std::ostream& out, const Eigen::VectorXd& values, int precision) {
  out << std::setprecision(precision);
  for (Eigen::Index i = 0; i < values.size(); ++i) out << values[i] << (i + 1 < values.size() ? "," : "\n");
}

void write_pgm(std::ostream& out, int width, int height, const std::vector<unsigned char>& gray) {
  if (gray.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw ValidationError("PGM buffer size does not match the image size");
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
}

void write_ppm(std::ostream& out, int width, int height, const std::vector<unsigned char>& rgb) {
  if (rgb.size() != 3 * static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw ValidationError("PPM buffer size does not match the image size");
  out << "P6\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
}

unsigned char to_byte(double value) {
  if (!std::isfinite(value)) value = 0.0;
  return static_cast<unsigned char>(std::lround(255.0 * std::clamp(value, 0.0, 1.0)));
}

void write_image_grid(const std::filesystem::path& path, const CanvasLayout& layout,
                      const Eigen::MatrixXd& values, int columns) {
  if (values.rows() != layout.size()) throw ValidationError("image values do not match the layout");
  if (values.cols() < 1 || columns < 1) throw ValidationError("image grid needs at least one tile");
  const int tiles = static_cast<int>(values.cols());
  columns = std::min(columns, tiles);
  const int rows = (tiles + columns - 1) / columns;
  const int w = layout.width * columns;
  const int h = layout.height * rows;
  const int plane = layout.pixels();
  const bool color = layout.channels >= 3;
  const int ch = color ? 3 : 1;
  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * ch, 0);
  for (int t = 0; t < tiles; ++t) {
    const int ox = (t % columns) * layout.width;
    const int oy = (t / columns) * layout.height;
    for (int r = 0; r < layout.height; ++r)
      for (int c = 0; c < layout.width; ++c)
        for (int k = 0; k < ch; ++k)
          buf[(static_cast<std::size_t>(oy + r) * w + ox + c) * ch + k] =
              to_byte(values(k * plane + r * layout.width + c, t));
  }
  std::ofstream out = open_output(path, true);
  if (color)
    write_ppm(out, w, h, buf);
  else
    write_pgm(out, w, h, buf);
}

void write_image(const std::filesystem::path& path, const CanvasLayout& layout,
                 const Eigen::VectorXd& values) {
  write_image_grid(path, layout, Eigen::MatrixXd(values), 1);
}

}  // namespace compgen
