/* Copyright 2026 The fsia Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Grayscale rasters, boxes and the resampling / prior operations that the
// zoom loop is built from.

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace fsia {

/// Grayscale raster, rows = height, intensities in [0,1].
using Frame = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using FrameSequence = std::vector<Frame>;

/// Motion prior on the feature lattice (h x w), floored at kPriorFloor.
using PriorMap = Eigen::MatrixXd;

inline constexpr double kPriorFloor = 1e-6;

/// Axis-aligned box in continuous pixel coordinates; pixel (x, y) covers
/// [x, x+1) x [y, y+1).
struct Box {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool valid() const;

  static Box full(const Frame& frame) {
    return {0.0, 0.0, static_cast<double>(frame.cols()),
            static_cast<double>(frame.rows())};
  }

  friend bool operator==(const Box&, const Box&) = default;
};

double intersection_area(const Box& a, const Box& b);
double iou(const Box& a, const Box& b);

/// Arithmetic mean per coordinate. Throws on an empty input.
Box box_average(std::span<const Box> boxes);

/// Placement of a crop inside the square output of crop_resize.
struct ResizeLayout {
  int target = 0;
  int out_w = 0, out_h = 0;   // resampled region
  int off_x = 0, off_y = 0;   // zero padding before the region
  double scale_x = 1, scale_y = 1;  // source pixels per output pixel
};

ResizeLayout resize_layout(const Box& box, int target_max_side);

/// Bilinear crop of `box` (half-pixel centers), longer side scaled to
/// target_max_side, short side zero padded and centered. Samples falling
/// outside the source read as zero.
Frame crop_resize(const Frame& frame, const Box& box, int target_max_side);

/// Maps `inner`, given in the coordinates of a frame produced by
/// crop_resize(original, outer, zoomed_side), back to original coordinates.
Box compose_box(const Box& inner, const Box& outer, int zoomed_side);

/// Mean of |cur-prev| and |next-cur|, box-averaged onto a grid_h x grid_w
/// lattice and floored at kPriorFloor.
PriorMap motion_prior(const Frame& prev, const Frame& cur, const Frame& next,
                      int grid_h, int grid_w);

/// motion_prior for every frame. The first and last frame substitute the
/// one neighbor they have for the missing one.
std::vector<PriorMap> motion_priors(const FrameSequence& frames, int grid_h,
                                    int grid_w);

/// 8-bit quantization used by the PGM format.
std::uint8_t to_byte(float v);
float from_byte(std::uint8_t b);
Frame quantize(const Frame& frame);

std::string encode_pgm(const Frame& frame);
Frame decode_pgm(const std::string& bytes);
void write_pgm(const std::filesystem::path& path, const Frame& frame);
Frame read_pgm(const std::filesystem::path& path);

}  // namespace fsia
