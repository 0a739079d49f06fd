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

#include "fsia/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fsia/error.hpp"
#include "fsia/util.hpp"

namespace fsia {

bool Box::valid() const {
  return std::isfinite(x_min) && std::isfinite(y_min) &&
         std::isfinite(x_max) && std::isfinite(y_max) && x_min < x_max &&
         y_min < y_max;
}

double intersection_area(const Box& a, const Box& b) {
  double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (w <= 0 || h <= 0) return 0.0;
  return w * h;
}

double iou(const Box& a, const Box& b) {
  double inter = intersection_area(a, b);
  double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

Box box_average(std::span<const Box> boxes) {
  if (boxes.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "box_average: empty sequence");
  }
  Box sum{0, 0, 0, 0};
  for (const Box& b : boxes) {
    sum.x_min += b.x_min;
    sum.y_min += b.y_min;
    sum.x_max += b.x_max;
    sum.y_max += b.y_max;
  }
  double n = static_cast<double>(boxes.size());
  return {sum.x_min / n, sum.y_min / n, sum.x_max / n, sum.y_max / n};
}

ResizeLayout resize_layout(const Box& box, int target_max_side) {
  if (!box.valid() || target_max_side < 1) {
    throw Error(ErrorCode::kInvalidArgument, "resize_layout: bad box/target");
  }
  ResizeLayout l;
  l.target = target_max_side;
  double w = box.width(), h = box.height();
  if (w >= h) {
    l.out_w = target_max_side;
    l.out_h = std::clamp(static_cast<int>(std::lround(target_max_side * h / w)),
                         1, target_max_side);
  } else {
    l.out_h = target_max_side;
    l.out_w = std::clamp(static_cast<int>(std::lround(target_max_side * w / h)),
                         1, target_max_side);
  }
  l.off_x = (target_max_side - l.out_w) / 2;
  l.off_y = (target_max_side - l.out_h) / 2;
  l.scale_x = w / l.out_w;
  l.scale_y = h / l.out_h;
  return l;
}

namespace {

struct Tap {
  int i0 = 0, i1 = 0;
  double frac = 0;
  bool inside = false;
};

Tap make_tap(double s, int n) {
  Tap tap;
  if (s < -0.5 || s > n - 0.5) return tap;
  tap.inside = true;
  double f = std::floor(s);
  tap.frac = s - f;
  int i = static_cast<int>(f);
  tap.i0 = std::clamp(i, 0, n - 1);
  tap.i1 = std::clamp(i + 1, 0, n - 1);
  return tap;
}

}  // namespace

Frame crop_resize(const Frame& frame, const Box& box, int target_max_side) {
  if (!box.valid()) {
    throw Error(ErrorCode::kInvalidTube, "crop_resize: degenerate box");
  }
  const int W = static_cast<int>(frame.cols());
  const int H = static_cast<int>(frame.rows());
  if (intersection_area(box, Box{0, 0, double(W), double(H)}) <= 0) {
    throw Error(ErrorCode::kInvalidTube, "crop_resize: box outside frame");
  }
  const ResizeLayout l = resize_layout(box, target_max_side);

  std::vector<Tap> xs(l.out_w), ys(l.out_h);
  for (int ox = 0; ox < l.out_w; ++ox) {
    xs[ox] = make_tap(box.x_min + (ox + 0.5) * l.scale_x - 0.5, W);
  }
  for (int oy = 0; oy < l.out_h; ++oy) {
    ys[oy] = make_tap(box.y_min + (oy + 0.5) * l.scale_y - 0.5, H);
  }

  Frame out = Frame::Zero(l.target, l.target);
  for (int oy = 0; oy < l.out_h; ++oy) {
    const Tap& ty = ys[oy];
    if (!ty.inside) continue;
    for (int ox = 0; ox < l.out_w; ++ox) {
      const Tap& tx = xs[ox];
      if (!tx.inside) continue;
      double top = (1.0 - tx.frac) * frame(ty.i0, tx.i0) + tx.frac * frame(ty.i0, tx.i1);
      double bot = (1.0 - tx.frac) * frame(ty.i1, tx.i0) + tx.frac * frame(ty.i1, tx.i1);
      out(l.off_y + oy, l.off_x + ox) =
          static_cast<float>((1.0 - ty.frac) * top + ty.frac * bot);
    }
  }
  return out;
}

Box compose_box(const Box& inner, const Box& outer, int zoomed_side) {
  const ResizeLayout l = resize_layout(outer, zoomed_side);
  return {outer.x_min + (inner.x_min - l.off_x) * l.scale_x,
          outer.y_min + (inner.y_min - l.off_y) * l.scale_y,
          outer.x_min + (inner.x_max - l.off_x) * l.scale_x,
          outer.y_min + (inner.y_max - l.off_y) * l.scale_y};
}

PriorMap motion_prior(const Frame& prev, const Frame& cur, const Frame& next,
                      int grid_h, int grid_w) {
  if (prev.rows() != cur.rows() || prev.cols() != cur.cols() ||
      next.rows() != cur.rows() || next.cols() != cur.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "motion_prior: frame sizes differ");
  }
  const int H = static_cast<int>(cur.rows());
  const int W = static_cast<int>(cur.cols());
  if (grid_h < 1 || grid_w < 1 || grid_h > H || grid_w > W) {
    throw Error(ErrorCode::kInvalidArgument, "motion_prior: bad grid");
  }
  PriorMap map(grid_h, grid_w);
  for (int i = 0; i < grid_h; ++i) {
    const int y0 = i * H / grid_h, y1 = (i + 1) * H / grid_h;
    for (int j = 0; j < grid_w; ++j) {
      const int x0 = j * W / grid_w, x1 = (j + 1) * W / grid_w;
      double sum = 0;
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          double c = cur(y, x);
          sum += 0.5 * (std::abs(c - double(prev(y, x))) +
                        std::abs(double(next(y, x)) - c));
        }
      }
      map(i, j) = std::max(kPriorFloor, sum / ((y1 - y0) * (x1 - x0)));
    }
  }
  return map;
}

std::vector<PriorMap> motion_priors(const FrameSequence& frames, int grid_h,
                                    int grid_w) {
  std::vector<PriorMap> out;
  const std::size_t n = frames.size();
  out.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    std::size_t p = t > 0 ? t - 1 : std::min<std::size_t>(1, n - 1);
    std::size_t q = t + 1 < n ? t + 1 : (t > 0 ? t - 1 : t);
    out.push_back(motion_prior(frames[p], frames[t], frames[q], grid_h, grid_w));
  }
  return out;
}

std::uint8_t to_byte(float v) {
  double s = std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0;
  return static_cast<std::uint8_t>(std::lround(s));
}

float from_byte(std::uint8_t b) { return static_cast<float>(b / 255.0); }

Frame quantize(const Frame& frame) {
  return frame.unaryExpr([](float v) { return from_byte(to_byte(v)); });
}

std::string encode_pgm(const Frame& frame) {
  std::ostringstream ss;
  ss << "P5\n" << frame.cols() << ' ' << frame.rows() << "\n255\n";
  std::string out = ss.str();
  out.reserve(out.size() + frame.size());
  for (Eigen::Index i = 0; i < frame.size(); ++i) {
    out.push_back(static_cast<char>(to_byte(frame.data()[i])));
  }
  return out;
}

Frame decode_pgm(const std::string& bytes) {
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < bytes.size()) {
      char c = bytes[pos];
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else {
        break;
      }
    }
    std::size_t start = pos;
    while (pos < bytes.size() &&
           !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    }
    return bytes.substr(start, pos - start);
  };
  if (next_token() != "P5") {
    throw Error(ErrorCode::kCorruptDataset, "pgm: missing P5 magic");
  }
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token());
    h = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw Error(ErrorCode::kCorruptDataset, "pgm: bad header");
  }
  if (w <= 0 || h <= 0 || maxval != 255) {
    throw Error(ErrorCode::kCorruptDataset, "pgm: unsupported header");
  }
  ++pos;  // single whitespace after maxval
  if (bytes.size() < pos + static_cast<std::size_t>(w) * h) {
    throw Error(ErrorCode::kCorruptDataset, "pgm: truncated raster");
  }
  Frame frame(h, w);
  for (Eigen::Index i = 0; i < frame.size(); ++i) {
    frame.data()[i] = from_byte(static_cast<std::uint8_t>(bytes[pos + i]));
  }
  return frame;
}

void write_pgm(const std::filesystem::path& path, const Frame& frame) {
  write_file_atomic(path, encode_pgm(frame));
}

Frame read_pgm(const std::filesystem::path& path) {
  return decode_pgm(read_file(path));
}

}  // namespace fsia
