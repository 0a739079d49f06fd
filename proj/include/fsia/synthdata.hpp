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

// Synthetic "fingerspelling in clutter": procedurally drawn glyphs drifting
// through large textured frames with static distractor glyphs.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fsia/imaging.hpp"

namespace fsia {

struct SynthSpec {
  std::string alphabet = "abcdefgh";
  int frame_side = 112;
  double glyph_fraction = 0.1;  // mean glyph box area / frame area
  double glyph_scale_jitter = 0.15;
  int min_frames_per_letter = 2;
  int max_frames_per_letter = 4;
  int distractor_count = 3;
  double drift = 1.5;   // px per frame
  double jitter = 1.0;  // max extra per-frame displacement, px
  int blur = 0;         // box-blur radius, 0 = off
  double noise = 0.0;   // uniform per-pixel noise amplitude
  double texture = 0.25;
  std::uint64_t seed = 1;

  /// Throws kInvalidArgument when an invariant is violated.
  void validate() const;
};

struct LabeledSequence {
  std::string id;
  std::string label;
  FrameSequence frames;
  std::vector<Box> gt_boxes;
  std::uint64_t seed = 0;
};

using Dataset = std::vector<LabeledSequence>;

/// Side of the square glyph cell grid.
inline constexpr int kGlyphGrid = 7;

/// Binary kGlyphGrid x kGlyphGrid pattern for a 1-based letter label.
/// Depends only on the label, so every split shares the same glyphs.
Eigen::Matrix<std::uint8_t, kGlyphGrid, kGlyphGrid> glyph_bitmap(int label);

/// Minimum pairwise Hamming distance between the glyphs of labels 1..n.
int min_glyph_distance(int n);

/// Renders one sequence; a pure function of (spec, label).
LabeledSequence render_sequence(const SynthSpec& spec, const std::string& label);

struct SplitSpec {
  int count = 100;
  int lexicon_size = 40;
  int min_word = 2;
  int max_word = 4;
  std::uint64_t lexicon_seed = 7;  // shared across splits
  std::uint64_t seed = 1;          // per split
};

/// Deterministic word list drawn from spec.alphabet.
std::vector<std::string> make_lexicon(const SynthSpec& spec, const SplitSpec& split);

/// `split.count` sequences with labels drawn from the lexicon and
/// per-sequence seeds derived from split.seed.
Dataset make_split(const SynthSpec& spec, const SplitSpec& split,
                   const std::string& id_prefix);

/// Directory layout: manifest.jsonl plus frames/<id>_<t>.pgm.
void save_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& dir);

/// Fraction of frame area covered by ground-truth boxes, averaged over
/// frames.
double mean_glyph_fraction(const LabeledSequence& seq);

}  // namespace fsia
