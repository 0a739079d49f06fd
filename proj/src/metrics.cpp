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

#include "fsia/metrics.hpp"

#include <algorithm>

#include "fsia/error.hpp"

namespace fsia {

double EditAlignment::accuracy() const {
  if (reference_length <= 0) throw Error(ErrorCode::kInvalidArgument, "letter accuracy: empty reference");
  return 1.0 - static_cast<double>(errors()) / reference_length;
}

EditAlignment& EditAlignment::operator+=(const EditAlignment& o) {
  substitutions += o.substitutions;
  deletions += o.deletions;
  insertions += o.insertions;
  reference_length += o.reference_length;
  return *this;
}

EditAlignment align_letters(std::string_view hyp, std::string_view ref) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const int diag = d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      d[i][j] = std::min({diag, d[i - 1][j] + 1, d[i][j - 1] + 1});
    }
  }
  EditAlignment a;
  a.reference_length = static_cast<int>(n);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++a.substitutions;
      --i;
      --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ++a.deletions;
      --i;
    } else {
      ++a.insertions;
      --j;
    }
  }
  return a;
}

double letter_accuracy(std::string_view hyp, std::string_view ref) {
  if (ref.empty()) throw Error(ErrorCode::kInvalidArgument, "letter_accuracy: empty reference");
  return align_letters(hyp, ref).accuracy();
}

DetectionReport detection_eval(const std::vector<Box>& pred, const std::vector<std::optional<Box>>& gt) {
  if (pred.size() != gt.size()) throw Error(ErrorCode::kShapeMismatch, "detection_eval: frame counts differ");
  DetectionReport r;
  double iou_sum = 0, miss_sum = 0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    if (!gt[t]) continue;
    iou_sum += iou(pred[t], *gt[t]);
    miss_sum += 1.0 - intersection_area(pred[t], *gt[t]) / gt[t]->area();
    ++r.frames;
  }
  if (r.frames == 0) throw Error(ErrorCode::kInvalidArgument, "detection_eval: no frames with ground truth");
  r.avg_iou = iou_sum / r.frames;
  r.miss_rate = miss_sum / r.frames;
  return r;
}

}  // namespace fsia
