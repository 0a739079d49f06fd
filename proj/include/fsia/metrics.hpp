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

// Letter accuracy and detection quality.

#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "fsia/imaging.hpp"

namespace fsia {

struct EditAlignment {
  int substitutions = 0;
  int deletions = 0;
  int insertions = 0;
  int reference_length = 0;

  int errors() const { return substitutions + deletions + insertions; }
  /// 1 - (S + D + I) / N; may be negative.
  double accuracy() const;
  EditAlignment& operator+=(const EditAlignment& o);
};

/// Minimum edit distance alignment with unit costs. Among equal-cost
/// alignments, substitutions are preferred over deletion/insertion pairs.
EditAlignment align_letters(std::string_view hyp, std::string_view ref);

/// Throws kInvalidArgument for an empty reference.
double letter_accuracy(std::string_view hyp, std::string_view ref);

struct DetectionReport {
  double avg_iou = 0;
  double miss_rate = 0;  // mean of 1 - intersection / gt area
  int frames = 0;
};

/// Frames without ground truth are skipped; throws when none remain.
DetectionReport detection_eval(const std::vector<Box>& pred, const std::vector<std::optional<Box>>& gt);

}  // namespace fsia
