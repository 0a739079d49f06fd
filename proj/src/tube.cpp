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

#include "fsia/tube.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <numeric>

#include "fsia/error.hpp"

namespace fsia {

std::vector<Cell> find_peaks(const Eigen::MatrixXd& attention, int k) {
  const int h = static_cast<int>(attention.rows()), w = static_cast<int>(attention.cols());
  std::vector<Cell> peaks, rest;
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      bool is_peak = true;
      for (int di = -1; di <= 1 && is_peak; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
          int y = i + di, x = j + dj;
          if ((di == 0 && dj == 0) || y < 0 || y >= h || x < 0 || x >= w) continue;
          if (attention(y, x) > attention(i, j)) {
            is_peak = false;
            break;
          }
        }
      }
      (is_peak ? peaks : rest).push_back({i, j});
    }
  }
  auto by_value = [&](const Cell& a, const Cell& b) { return attention(a.row, a.col) > attention(b.row, b.col); };
  // Cells were collected row-major, so a stable sort keeps that tie order.
  std::stable_sort(peaks.begin(), peaks.end(), by_value);
  std::stable_sort(rest.begin(), rest.end(), by_value);
  const auto want = static_cast<std::size_t>(std::max(0, k));
  if (peaks.size() > want) peaks.resize(want);
  for (std::size_t r = 0; peaks.size() < want && r < rest.size(); ++r) peaks.push_back(rest[r]);
  return peaks;
}

Eigen::Vector2d cell_center(const Cell& cell, int grid_h, int grid_w, int frame_w, int frame_h) {
  return {(cell.col + 0.5) * frame_w / grid_w, (cell.row + 0.5) * frame_h / grid_h};
}

std::vector<Candidate> make_candidates(const std::vector<Cell>& peaks, const Eigen::MatrixXd& attention,
                                       double ratio, int frame_w, int frame_h, int frame) {
  if (!(ratio > 0 && ratio < 1)) throw Error(ErrorCode::kInvalidArgument, "make_candidates: ratio must be in (0,1)");
  const double bw = ratio * frame_w, bh = ratio * frame_h;
  std::vector<Candidate> out;
  out.reserve(peaks.size());
  for (std::size_t r = 0; r < peaks.size(); ++r) {
    const Cell& c = peaks[r];
    const Eigen::Vector2d center = cell_center(c, static_cast<int>(attention.rows()),
                                               static_cast<int>(attention.cols()), frame_w, frame_h);
    const double x0 = std::clamp(center.x() - bw / 2, 0.0, frame_w - bw);
    const double y0 = std::clamp(center.y() - bh / 2, 0.0, frame_h - bh);
    out.push_back({Box{x0, y0, x0 + bw, y0 + bh}, attention(c.row, c.col), frame, static_cast<int>(r)});
  }
  return out;
}

double link_score(const Candidate& a, const Candidate& b, double lambda) {
  return a.score + b.score + lambda * iou(a.box, b.box);
}

Tube best_tube(const std::vector<std::vector<Candidate>>& candidates, double lambda) {
  const std::size_t T = candidates.size();
  if (T == 0) throw Error(ErrorCode::kInvalidArgument, "best_tube: no frames");
  for (std::size_t t = 0; t < T; ++t) {
    if (candidates[t].empty()) {
      throw Error(ErrorCode::kInvalidArgument, "best_tube: no candidates at frame " + std::to_string(t));
    }
  }
  Tube tube;
  tube.choice.assign(T, 0);
  if (T == 1) {
    const auto& c = candidates[0];
    for (std::size_t j = 1; j < c.size(); ++j) {
      if (c[j].score > c[tube.choice[0]].score) tube.choice[0] = static_cast<int>(j);
    }
    tube.objective = c[tube.choice[0]].score;
  } else {
    // best[j]: best partial sum of link scores ending at candidate j.
    std::vector<double> best(candidates[0].size(), 0.0);
    std::vector<std::vector<int>> back(T);
    for (std::size_t t = 1; t < T; ++t) {
      const auto& prev = candidates[t - 1];
      const auto& cur = candidates[t];
      std::vector<double> next(cur.size(), -std::numeric_limits<double>::infinity());
      back[t].assign(cur.size(), 0);
      for (std::size_t j = 0; j < cur.size(); ++j) {
        for (std::size_t i = 0; i < prev.size(); ++i) {
          const double s = best[i] + link_score(prev[i], cur[j], lambda);
          if (s > next[j]) {
            next[j] = s;
            back[t][j] = static_cast<int>(i);
          }
        }
      }
      best = std::move(next);
    }
    int j = static_cast<int>(std::max_element(best.begin(), best.end()) - best.begin());
    tube.objective = best[j] / static_cast<double>(T);
    for (std::size_t t = T; t-- > 0;) {
      tube.choice[t] = j;
      if (t > 0) j = back[t][j];
    }
  }
  for (std::size_t t = 0; t < T; ++t) {
    tube.boxes.push_back(candidates[t][tube.choice[t]].box);
    tube.scores.push_back(candidates[t][tube.choice[t]].score);
  }
  return tube;
}

ZoomResult zoom_sequence(const FrameSequence& originals, const Tube& tube,
                         const std::vector<Box>& history, int current_side, int target_side, ZoomMode mode) {
  const std::size_t T = originals.size();
  if (tube.boxes.size() != T || history.size() != T) {
    throw Error(ErrorCode::kShapeMismatch, "zoom_sequence: tube/history length differs from frames");
  }
  const Box mean = box_average(tube.boxes);
  ZoomResult out;
  out.frames.reserve(T);
  out.history.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    const Box& local = mode == ZoomMode::kAveraged ? mean : tube.boxes[t];
    const Box composed = compose_box(local, history[t], current_side);
    if (!(composed.width() >= 2.0 && composed.height() >= 2.0)) {
      throw Error(ErrorCode::kOverZoom, "zoom_sequence: composed box under 2 px at frame " + std::to_string(t));
    }
    out.frames.push_back(crop_resize(originals[t], composed, target_side));
    out.history.push_back(composed);
  }
  return out;
}

std::string format_tube(const Tube& tube, const std::vector<Box>& history, int current_side) {
  std::string out;
  char buf[160];
  for (std::size_t t = 0; t < tube.boxes.size(); ++t) {
    const Box b = compose_box(tube.boxes[t], history.at(t), current_side);
    std::snprintf(buf, sizeof(buf), "%zu %.3f %.3f %.3f %.3f %.6f\n", t, b.x_min, b.y_min, b.x_max, b.y_max,
                  tube.scores[t]);
    out += buf;
  }
  return out;
}

}  // namespace fsia
