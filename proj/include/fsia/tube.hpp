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

// Attention maps -> candidate boxes -> linked tube -> zoomed frames.

#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "fsia/imaging.hpp"

namespace fsia {

struct Cell {
  int row = 0, col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

/// Up to k cells that are >= all 8 neighbors, by value descending (ties
/// row-major). Short lists are filled with the highest remaining cells.
std::vector<Cell> find_peaks(const Eigen::MatrixXd& attention, int k);

struct Candidate {
  Box box;
  double score = 0;  // attention at the generating cell
  int frame = 0;
  int rank = 0;
};

/// Pixel center of a lattice cell under linear cell-center scaling.
Eigen::Vector2d cell_center(const Cell& cell, int grid_h, int grid_w, int frame_w, int frame_h);

/// A ratio*W x ratio*H box centered on each peak, shifted the minimum
/// distance needed to lie inside the frame.
std::vector<Candidate> make_candidates(const std::vector<Cell>& peaks, const Eigen::MatrixXd& attention,
                                       double ratio, int frame_w, int frame_h, int frame = 0);

struct Tube {
  std::vector<int> choice;  // candidate index per frame
  std::vector<Box> boxes;
  std::vector<double> scores;
  double objective = 0;
};

/// Linking score a_t + a_{t+1} + lambda * IoU(b_t, b_{t+1}).
double link_score(const Candidate& a, const Candidate& b, double lambda);

/// Viterbi over candidate indices maximizing (1/T) sum_t link_score. With a
/// single frame the best-scoring candidate wins and the objective is its
/// score. Ties go to the lower candidate index.
Tube best_tube(const std::vector<std::vector<Candidate>>& candidates, double lambda);

enum class ZoomMode { kAveraged, kPerFrame };

struct ZoomResult {
  FrameSequence frames;
  std::vector<Box> history;  // per frame, box in original coordinates
};

/// Composes the tube (current-iteration coordinates of side `current_side`)
/// with `history`, crops the original frames once and resizes to
/// target_side. Averaged mode replaces the per-frame boxes by their mean.
/// Throws kOverZoom when a composed box is under 2 px on a side.
ZoomResult zoom_sequence(const FrameSequence& originals, const Tube& tube,
                         const std::vector<Box>& history, int current_side, int target_side,
                         ZoomMode mode = ZoomMode::kAveraged);

/// One line per frame: "t x_min y_min x_max y_max score", original
/// coordinates.
std::string format_tube(const Tube& tube, const std::vector<Box>& history, int current_side);

}  // namespace fsia
