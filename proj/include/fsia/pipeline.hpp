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

// Iterative attention: train, look, zoom into the originals, retrain.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "fsia/lm.hpp"
#include "fsia/metrics.hpp"
#include "fsia/model.hpp"
#include "fsia/synthdata.hpp"
#include "fsia/tube.hpp"

namespace fsia {

/// A model-ready sequence: frames already cropped/resized to the model
/// input side, with motion priors on the feature lattice.
struct Example {
  std::string id;
  std::string label;
  Labels target;
  FrameSequence frames;
  std::vector<PriorMap> priors;
};

struct LrPhase {
  int epochs = 1;
  double lr = 0.01;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;  // mean per sequence over the epoch
  double dev_accuracy = 0;
};

enum class Optimizer { kSgd, kAdam };

struct TrainConfig {
  ModelConfig model;
  std::vector<LrPhase> phases{{20, 0.01}, {10, 0.001}};
  int batch_size = 1;
  Optimizer optimizer = Optimizer::kSgd;
  double momentum = 0.0;  // SGD heavy-ball term
  std::uint64_t seed = 1;
  /// Global gradient-norm clip, 0 = off.
  double clip_norm = 0.0;
  unsigned threads = 0;
  std::function<void(const EpochLog&)> on_epoch;

  int total_epochs() const;
  void validate() const;
};

struct TrainResult {
  ModelParams<float> params;  // best dev accuracy
  double dev_accuracy = 0;
  int best_epoch = 0;
  ModelParams<float> last_params;
  double last_dev_accuracy = 0;
  double initial_loss = 0;  // mean training loss before the first update
  std::vector<EpochLog> log;
};

/// Crops each original frame with its history box and builds priors.
Example make_example(const LabeledSequence& seq, const std::vector<Box>& history,
                     const ModelConfig& model, const Alphabet& alphabet);
std::vector<Example> make_examples(const Dataset& data, const std::vector<std::vector<Box>>& histories,
                                   const ModelConfig& model, const Alphabet& alphabet, unsigned threads = 0);
std::vector<std::vector<Box>> full_frame_histories(const Dataset& data);

/// Mean per-sequence CTC loss. Throws kUnalignable naming the sequence.
double mean_loss(const ModelParams<float>& params, const std::vector<Example>& data, unsigned threads = 0);

/// Corpus-level letter accuracy of greedy decoding.
EditAlignment evaluate_greedy(const ModelParams<float>& params, const std::vector<Example>& data,
                              unsigned threads = 0);

/// SGD on mean-per-sequence CTC loss with the phase schedule; keeps the
/// epoch with the best dev accuracy (earliest on ties).
TrainResult train_model(const std::vector<Example>& train, const std::vector<Example>& dev,
                        const TrainConfig& config);

struct ZoomConfig {
  double lambda = 0.1;
  int top_k = 3;
  ZoomMode mode = ZoomMode::kAveraged;
};

/// Tube for one example under `params`, in the example's coordinates.
Tube attention_tube(const ModelParams<float>& params, const Example& example, double ratio,
                    const ZoomConfig& zoom);

struct ZoomStep {
  std::vector<std::vector<Box>> histories;  // next-iteration crops, original coords
  std::vector<Tube> tubes;
};

/// Runs `params` over every example, links tubes and composes them with
/// the current histories.
ZoomStep zoom_step(const ModelParams<float>& params, const std::vector<Example>& examples,
                   const std::vector<std::vector<Box>>& histories, double ratio, const ZoomConfig& zoom,
                   unsigned threads = 0);

struct PipelineConfig {
  TrainConfig train;
  ZoomConfig zoom;
  Alphabet alphabet{"abcdefgh"};
  bool early_stop = true;
  /// When set: config.json, iter_<s>/{checkpoint.fsia,tubes/,metrics.json}
  /// and a zoom cache are written here.
  std::filesystem::path run_dir;
  std::function<void(const std::string&)> log;
};

struct IterationRecord {
  int index = 0;      // 1-based
  double ratio = 0;   // zoom applied after this model
  ModelParams<float> params;
  double dev_accuracy = 0;
  int best_epoch = 0;
  std::string fingerprint;  // hash of this model's input frames
  std::vector<std::vector<Box>> train_inputs, dev_inputs;  // histories fed to this model
  std::optional<DetectionReport> dev_detection;  // tube after this model vs gt
};

struct IterationArtifacts {
  std::vector<IterationRecord> iterations;  // up to the best held-out iteration
  std::vector<double> trained_accuracies;   // every trained iteration
};

/// Hash of example frames, in order.
std::string fingerprint(const std::vector<Example>& data);

IterationArtifacts iterative_train(const Dataset& train, const Dataset& dev, const std::vector<double>& schedule,
                                   const PipelineConfig& config);

struct DecodeOptions {
  bool beam = true;
  BeamOptions beam_options;
  const CharNGramLM* lm = nullptr;
};

/// Runs models[0..S-2] only to zoom, then decodes with models[S-1].
Labels iterative_infer(const std::vector<ModelParams<float>>& models, const std::vector<double>& ratios,
                       const LabeledSequence& original, const Alphabet& alphabet, const ZoomConfig& zoom,
                       const DecodeOptions& decode);

/// Zoomed inputs seen by the last model, derived from the originals.
std::vector<Box> iterative_history(const std::vector<ModelParams<float>>& models, const std::vector<double>& ratios,
                                   const LabeledSequence& original, const Alphabet& alphabet, const ZoomConfig& zoom);

struct ScheduleNode {
  std::vector<double> ratios;
  double dev_accuracy = 0;
};

struct ScheduleSearchResult {
  std::vector<double> best;
  double best_accuracy = 0;
  double baseline_accuracy = 0;  // whole-frame model
  std::vector<ScheduleNode> explored;
};

/// Level-wise beam search over ratio sequences. A prefix R_1..R_m is
/// scored by the dev accuracy of the model trained on inputs zoomed by
/// R_1..R_m. Every model is trained from the same initialization.
ScheduleSearchResult search_zoom_schedule(const Dataset& train, const Dataset& dev, const std::vector<double>& ratios,
                                          int beam, int max_depth, const PipelineConfig& config);

/// Peak frame-buffer use of one forward pass when the glyph reaches the
/// same pixel resolution by zooming (crop R of the frame at input_side)
/// versus enlarging (whole frame at input_side / R).
struct MemoryBench {
  double ratio = 0;
  int zoom_side = 0, enlarge_side = 0;
  std::size_t zoom_bytes = 0, enlarge_bytes = 0;
  double measured() const { return static_cast<double>(enlarge_bytes) / static_cast<double>(zoom_bytes); }
  double expected() const { return 1.0 / (ratio * ratio); }
};

MemoryBench bench_zoom_vs_enlarge(const ModelParams<float>& params, const LabeledSequence& seq, double ratio);

nlohmann::json to_json(const TrainConfig& c);

}  // namespace fsia
