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

// File helpers: CSV rows, 8-bit PGM/PPM images, output directories.

#ifndef COMPGEN_IO_HPP_
#define COMPGEN_IO_HPP_

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "compgen/generative.hpp"

namespace compgen {

// Creates the directory (and parents) or throws RuntimeFailure.
std::filesystem::path ensure_dir(const std::filesystem::path& dir);

// Opens for writing or throws RuntimeFailure naming the path.
std::ofstream open_output(const std::filesystem::path& path, bool binary = false);

std::string format_double(double v, int precision = 10);

// One CSV row of values with the given precision.
void write_csv_row(std::ostream& out, const Eigen::VectorXd& values, int precision = 10);

// Binary P5, max value 255; `gray` is row-major width*height.
void write_pgm(std::ostream& out, int width, int height, const std::vector<unsigned char>& gray);
// Binary P6, max value 255; `rgb` is row-major interleaved.
void write_ppm(std::ostream& out, int width, int height, const std::vector<unsigned char>& rgb);

// value -> round(255 * clamp(value, 0, 1)).
unsigned char to_byte(double value);

// Writes an observation or canvas: 1 channel -> PGM, >= 3 channels -> PPM of
// the first three. Channel-major input.
void write_image(const std::filesystem::path& path, const CanvasLayout& layout,
                 const Eigen::VectorXd& values);

// Observations as columns in a grid of `columns` tiles.
void write_image_grid(const std::filesystem::path& path, const CanvasLayout& layout,
                      const Eigen::MatrixXd& values, int columns);

}  // namespace compgen

#endif  // COMPGEN_IO_HPP_
