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

#include "fsia/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fsia/ctc.hpp"
#include "fsia/error.hpp"
#include "fsia/json_io.hpp"
#include "fsia/util.hpp"

namespace fsia {
namespace {

std::uint64_t splitmix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Example example_from_frames(const LabeledSequence& seq, FrameSequence frames, const ModelConfig& model,
                            const Alphabet& alphabet) {
  Example ex;
  ex.id = seq.id;
  ex.label = seq.label;
  ex.target = alphabet.encode(seq.label);
  const int g = model.grid_side();
  ex.priors = motion_priors(frames, g, g);
  ex.frames = std::move(frames);
  return ex;
}

Eigen::MatrixXd to_double(const MatrixX<float>& m) { return m.cast<double>(); }

double global_norm(const ModelParams<float>& g) {
  double s = 0;
  g.for_each_tensor([&](const std::string&, const float* d, Eigen::Index r, Eigen::Index c) {
    for (Eigen::Index i = 0; i < r * c; ++i) s += static_cast<double>(d[i]) * d[i];
  });
  return std::sqrt(s);
}

std::vector<std::span<float>> spans(ModelParams<float>& p) {
  std::vector<std::span<float>> out;
  p.for_each_tensor([&](const std::string&, float* d, Eigen::Index r, Eigen::Index c) {
    out.emplace_back(d, static_cast<std::size_t>(r * c));
  });
  return out;
}

void log_line(const PipelineConfig& config, const std::string& line) {
  if (config.log) config.log(line);
}

nlohmann::json tube_json(const Tube& tube) {
  nlohmann::json j;
  j["choice"] = tube.choice;
  j["boxes"] = tube.boxes;
  j["scores"] = tube.scores;
  j["objective"] = tube.objective;
  return j;
}

Tube tube_from_json(const nlohmann::json& j) {
  Tube t;
  t.choice = j.at("choice").get<std::vector<int>>();
  t.boxes = j.at("boxes").get<std::vector<Box>>();
  t.scores = j.at("scores").get<std::vector<double>>();
  t.objective = j.at("objective").get<double>();
  return t;
}

std::string zoom_cache_key(const ModelParams<float>& params, const std::string& inputs, double ratio,
                           const ZoomConfig& zoom) {
  std::uint64_t h = fnv1a(encode_checkpoint(params));
  h = fnv1a(inputs, h);
  char buf[128];
  std::snprintf(buf, sizeof(buf), "|%.17g|%d|%.17g|%d", zoom.lambda, zoom.top_k, ratio,
                static_cast<int>(zoom.mode));
  return hex64(fnv1a(buf, h));
}

struct ZoomedSplits {
  ZoomStep train, dev;
};

ZoomedSplits cached_zoom(const ModelParams<float>& params, const std::vector<Example>& train_ex,
                         const std::vector<Example>& dev_ex, const std::vector<std::vector<Box>>& train_hist,
                         const std::vector<std::vector<Box>>& dev_hist, double ratio,
                         const PipelineConfig& config) {
  std::filesystem::path cache_file;
  if (!config.run_dir.empty()) {
    const std::string key =
        zoom_cache_key(params, fingerprint(train_ex) + fingerprint(dev_ex), ratio, config.zoom);
    cache_file = config.run_dir / "cache" / ("zoom_" + key + ".json");
    if (std::filesystem::exists(cache_file)) {
      try {
        const auto j = nlohmann::json::parse(read_file(cache_file));
        ZoomedSplits z;
        for (const char* split : {"train", "dev"}) {
          ZoomStep& step = std::string(split) == "train" ? z.train : z.dev;
          step.histories = j.at(split).at("histories").get<std::vector<std::vector<Box>>>();
          for (const auto& t : j.at(split).at("tubes")) step.tubes.push_back(tube_from_json(t));
        }
        if (z.train.histories.size() == train_ex.size() && z.dev.histories.size() == dev_ex.size()) {
          log_line(config, "zoom cache hit " + cache_file.filename().string());
          return z;
        }
      } catch (const std::exception&) {
        // Unreadable cache entries are recomputed and overwritten.
      }
    }
  }
  ZoomedSplits z;
  z.train = zoom_step(params, train_ex, train_hist, ratio, config.zoom, config.train.threads);
  z.dev = zoom_step(params, dev_ex, dev_hist, ratio, config.zoom, config.train.threads);
  if (!cache_file.empty()) {
    nlohmann::json j;
    for (const char* split : {"train", "dev"}) {
      const ZoomStep& step = std::string(split) == "train" ? z.train : z.dev;
      j[split]["histories"] = step.histories;
      auto& tubes = j[split]["tubes"] = nlohmann::json::array();
      for (const auto& t : step.tubes) tubes.push_back(tube_json(t));
    }
    std::filesystem::create_directories(cache_file.parent_path());
    write_file_atomic(cache_file, j.dump());
  }
  return z;
}

}  // namespace

int TrainConfig::total_epochs() const {
  int n = 0;
  for (const auto& p : phases) n += p.epochs;
  return n;
}

void TrainConfig::validate() const {
  model.validate();
  if (phases.empty() || total_epochs() < 1) throw Error(ErrorCode::kInvalidArgument, "train: need at least one epoch");
  for (const auto& p : phases) {
    if (p.epochs < 0 || !(p.lr > 0) || !std::isfinite(p.lr)) {
      throw Error(ErrorCode::kInvalidArgument, "train: bad learning-rate phase");
    }
  }
  if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "train: batch size must be >= 1");
  if (!(momentum >= 0 && momentum < 1)) throw Error(ErrorCode::kInvalidArgument, "train: momentum must be in [0,1)");
  if (clip_norm < 0) throw Error(ErrorCode::kInvalidArgument, "train: clip norm must be >= 0");
}

Example make_example(const LabeledSequence& seq, const std::vector<Box>& history, const ModelConfig& model,
                     const Alphabet& alphabet) {
  if (history.size() != seq.frames.size()) {
    throw Error(ErrorCode::kShapeMismatch, "make_example: history length differs for " + seq.id);
  }
  FrameSequence frames;
  frames.reserve(seq.frames.size());
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    frames.push_back(crop_resize(seq.frames[t], history[t], model.input_side));
  }
  return example_from_frames(seq, std::move(frames), model, alphabet);
}

std::vector<Example> make_examples(const Dataset& data, const std::vector<std::vector<Box>>& histories,
                                   const ModelConfig& model, const Alphabet& alphabet, unsigned threads) {
  if (histories.size() != data.size()) throw Error(ErrorCode::kShapeMismatch, "make_examples: history count");
  std::vector<Example> out(data.size());
  parallel_for(
      data.size(), [&](std::size_t i) { out[i] = make_example(data[i], histories[i], model, alphabet); }, threads);
  return out;
}

std::vector<std::vector<Box>> full_frame_histories(const Dataset& data) {
  std::vector<std::vector<Box>> out;
  out.reserve(data.size());
  for (const auto& seq : data) {
    std::vector<Box> h;
    h.reserve(seq.frames.size());
    for (const auto& f : seq.frames) h.push_back(Box::full(f));
    out.push_back(std::move(h));
  }
  return out;
}

double mean_loss(const ModelParams<float>& params, const std::vector<Example>& data, unsigned threads) {
  if (data.empty()) throw Error(ErrorCode::kInvalidArgument, "mean_loss: empty set");
  std::vector<double> losses(data.size());
  parallel_for(
      data.size(),
      [&](std::size_t i) {
        const auto fwd = forward_sequence(params, data[i].frames, data[i].priors);
        if (!ctc_detail::alignable(data[i].target, fwd.posteriors.rows())) {
          throw Error(ErrorCode::kUnalignable, "sequence " + data[i].id + ": label longer than CTC allows");
        }
        losses[i] = ctc_loss(fwd.posteriors.cast<double>(), data[i].target);
      },
      threads);
  double s = 0;
  for (double l : losses) s += l;
  return s / static_cast<double>(data.size());
}

EditAlignment evaluate_greedy(const ModelParams<float>& params, const std::vector<Example>& data,
                              unsigned threads) {
  std::vector<EditAlignment> parts(data.size());
  parallel_for(
      data.size(),
      [&](std::size_t i) {
        const auto fwd = forward_sequence(params, data[i].frames, data[i].priors);
        const Labels hyp = greedy_decode(fwd.posteriors);
        // Compare label ids directly; letters only matter for display.
        std::string h, r;
        for (int l : hyp) h.push_back(static_cast<char>(l));
        for (int l : data[i].target) r.push_back(static_cast<char>(l));
        parts[i] = align_letters(h, r);
      },
      threads);
  EditAlignment total;
  for (const auto& p : parts) total += p;
  return total;
}

TrainResult train_model(const std::vector<Example>& train, const std::vector<Example>& dev,
                        const TrainConfig& config) {
  config.validate();
  if (train.empty() || dev.empty()) throw Error(ErrorCode::kInvalidArgument, "train_model: empty train or dev set");
  const int n_labels = config.model.num_labels();
  for (const auto* set : {&train, &dev}) {
    for (const auto& ex : *set) {
      for (int l : ex.target) {
        if (l < 1 || l >= n_labels) {
          throw Error(ErrorCode::kInvalidArgument, "sequence " + ex.id + ": label outside the model alphabet");
        }
      }
    }
  }
  for (const auto& ex : train) {
    if (!ctc_detail::alignable(ex.target, static_cast<Eigen::Index>(ex.frames.size()))) {
      throw Error(ErrorCode::kUnalignable, "sequence " + ex.id + ": " + std::to_string(ex.frames.size()) +
                                               " frames cannot align label \"" + ex.label + "\"");
    }
  }

  TrainResult result;
  ModelParams<float> params = init_params<float>(config.model, config.seed);
  result.initial_loss = mean_loss(params, train, config.threads);
  result.params = params;
  result.dev_accuracy = -std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 shuffle_rng(splitmix(config.seed, 0x5eed));

  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  std::vector<LossAndGrad<float>> slots(std::min(batch, train.size()));
  ModelParams<float> velocity = params.zeros_like();
  ModelParams<float> second = params.zeros_like();
  const auto mu = static_cast<float>(config.momentum);
  long step = 0;
  int epoch = 0;
  for (const auto& phase : config.phases) {
    for (int e = 0; e < phase.epochs; ++e, ++epoch) {
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[shuffle_rng() % i]);
      }
      double epoch_loss = 0;
      for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t n = std::min(batch, order.size() - start);
        parallel_for(
            n,
            [&](std::size_t b) {
              const std::size_t idx = order[start + b];
              const Example& ex = train[idx];
              if (config.model.dropout) {
                std::mt19937_64 rng(splitmix(splitmix(config.seed, static_cast<std::uint64_t>(epoch)), idx));
                slots[b] = loss_and_grad(params, ex.frames, ex.priors, ex.target, &rng);
              } else {
                slots[b] = loss_and_grad(params, ex.frames, ex.priors, ex.target);
              }
            },
            config.threads);
        ModelParams<float> grad = std::move(slots[0].grads);
        epoch_loss += slots[0].loss;
        for (std::size_t b = 1; b < n; ++b) {
          accumulate(grad, slots[b].grads);
          epoch_loss += slots[b].loss;
        }
        float scale = 1.0f / static_cast<float>(n);
        if (config.clip_norm > 0) {
          const double norm = global_norm(grad) * scale;
          if (norm > config.clip_norm) scale *= static_cast<float>(config.clip_norm / norm);
        }
        ++step;
        if (config.optimizer == Optimizer::kAdam) {
          constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
          const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
          const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
          auto ps = spans(params), gs = spans(grad), ms = spans(velocity), vs = spans(second);
          for (std::size_t k = 0; k < ps.size(); ++k) {
            for (std::size_t i = 0; i < ps[k].size(); ++i) {
              const double g = static_cast<double>(gs[k][i]) * scale;
              const double m = b1 * ms[k][i] + (1 - b1) * g;
              const double v = b2 * vs[k][i] + (1 - b2) * g * g;
              ms[k][i] = static_cast<float>(m);
              vs[k][i] = static_cast<float>(v);
              ps[k][i] -= static_cast<float>(phase.lr * (m / c1) / (std::sqrt(v / c2) + eps));
            }
          }
        } else if (mu > 0) {
          velocity.for_each_tensor([&](const std::string&, float* d, Eigen::Index r, Eigen::Index c) {
            for (Eigen::Index i = 0; i < r * c; ++i) d[i] *= mu;
          });
          accumulate(velocity, grad, scale);
          params = sgd_step(params, velocity, static_cast<float>(phase.lr));
        } else {
          params = sgd_step(params, grad, static_cast<float>(phase.lr) * scale);
        }
        if (!params.all_finite()) {
          throw Error(ErrorCode::kNonFinite, "train_model: parameters diverged in epoch " + std::to_string(epoch + 1));
        }
      }
      EpochLog log;
      log.epoch = epoch + 1;
      log.lr = phase.lr;
      log.train_loss = epoch_loss / static_cast<double>(train.size());
      log.dev_accuracy = evaluate_greedy(params, dev, config.threads).accuracy();
      result.log.push_back(log);
      if (config.on_epoch) config.on_epoch(log);
      if (log.dev_accuracy > result.dev_accuracy) {
        result.dev_accuracy = log.dev_accuracy;
        result.best_epoch = log.epoch;
        result.params = params;
      }
    }
  }
  result.last_params = params;
  result.last_dev_accuracy = result.log.back().dev_accuracy;
  return result;
}

Tube attention_tube(const ModelParams<float>& params, const Example& example, double ratio,
                    const ZoomConfig& zoom) {
  if (zoom.top_k < 1) throw Error(ErrorCode::kInvalidArgument, "attention_tube: top_k must be >= 1");
  const auto fwd = forward_sequence(params, example.frames, example.priors);
  std::vector<std::vector<Candidate>> cands;
  cands.reserve(example.frames.size());
  for (std::size_t t = 0; t < example.frames.size(); ++t) {
    const Eigen::MatrixXd a = to_double(fwd.attention[t]);
    const auto peaks = find_peaks(a, zoom.top_k);
    cands.push_back(make_candidates(peaks, a, ratio, static_cast<int>(example.frames[t].cols()),
                                    static_cast<int>(example.frames[t].rows()), static_cast<int>(t)));
  }
  return best_tube(cands, zoom.lambda);
}

ZoomStep zoom_step(const ModelParams<float>& params, const std::vector<Example>& examples,
                   const std::vector<std::vector<Box>>& histories, double ratio, const ZoomConfig& zoom,
                   unsigned threads) {
  if (histories.size() != examples.size()) throw Error(ErrorCode::kShapeMismatch, "zoom_step: history count");
  ZoomStep out;
  out.histories.resize(examples.size());
  out.tubes.resize(examples.size());
  const int side = params.config.input_side;
  parallel_for(
      examples.size(),
      [&](std::size_t i) {
        out.tubes[i] = attention_tube(params, examples[i], ratio, zoom);
        const Tube& tube = out.tubes[i];
        const Box mean = box_average(tube.boxes);
        auto& h = out.histories[i];
        h.reserve(tube.boxes.size());
        for (std::size_t t = 0; t < tube.boxes.size(); ++t) {
          const Box& local = zoom.mode == ZoomMode::kAveraged ? mean : tube.boxes[t];
          const Box composed = compose_box(local, histories[i][t], side);
          if (!(composed.width() >= 2.0 && composed.height() >= 2.0)) {
            throw Error(ErrorCode::kOverZoom, "sequence " + examples[i].id + ": zoomed box under 2 px");
          }
          h.push_back(composed);
        }
      },
      threads);
  return out;
}

std::string fingerprint(const std::vector<Example>& data) {
  std::uint64_t h = fnv1a(std::string_view{});
  for (const auto& ex : data) {
    h = fnv1a(ex.id, h);
    for (const auto& f : ex.frames) {
      const auto* p = reinterpret_cast<const std::uint8_t*>(f.data());
      h = fnv1a(std::span<const std::uint8_t>(p, static_cast<std::size_t>(f.size()) * sizeof(float)), h);
    }
  }
  return hex64(h);
}

MemoryBench bench_zoom_vs_enlarge(const ModelParams<float>& params, const LabeledSequence& seq, double ratio) {
  if (!(ratio > 0 && ratio < 1)) throw Error(ErrorCode::kInvalidArgument, "bench: ratio must be in (0,1)");
  if (seq.frames.empty()) throw Error(ErrorCode::kInvalidArgument, "bench: empty sequence");
  MemoryBench out;
  out.ratio = ratio;
  out.zoom_side = params.config.input_side;
  out.enlarge_side = static_cast<int>(std::lround(out.zoom_side / ratio));

  auto peak = [&](const ModelParams<float>& p, const FrameSequence& frames) {
    const int g = p.config.grid_side();
    const auto fwd = forward_sequence(p, frames, motion_priors(frames, g, g));
    std::size_t input = 0;
    for (const auto& f : frames) input += static_cast<std::size_t>(f.size()) * sizeof(float);
    return input + fwd.cache.frame_buffer_bytes();
  };

  // Zoom: a ratio-sized crop centred on the mean glyph box.
  const Frame& first = seq.frames.front();
  const double w = ratio * first.cols(), h = ratio * first.rows();
  double cx = first.cols() / 2.0, cy = first.rows() / 2.0;
  if (!seq.gt_boxes.empty()) {
    const Box m = box_average(seq.gt_boxes);
    cx = (m.x_min + m.x_max) / 2;
    cy = (m.y_min + m.y_max) / 2;
  }
  const double x0 = std::clamp(cx - w / 2, 0.0, first.cols() - w);
  const double y0 = std::clamp(cy - h / 2, 0.0, first.rows() - h);
  const Box crop{x0, y0, x0 + w, y0 + h};
  FrameSequence zoomed, enlarged;
  for (const auto& f : seq.frames) {
    zoomed.push_back(crop_resize(f, crop, out.zoom_side));
    enlarged.push_back(crop_resize(f, Box::full(f), out.enlarge_side));
  }
  ModelParams<float> big = params;
  big.config.input_side = out.enlarge_side;
  out.zoom_bytes = peak(params, zoomed);
  out.enlarge_bytes = peak(big, enlarged);
  return out;
}

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["model"] = c.model;
  auto& phases = j["phases"] = nlohmann::json::array();
  for (const auto& p : c.phases) phases.push_back({{"epochs", p.epochs}, {"lr", p.lr}});
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["optimizer"] = c.optimizer == Optimizer::kAdam ? "adam" : "sgd";
  j["momentum"] = c.momentum;
  j["clip_norm"] = c.clip_norm;
  return j;
}

IterationArtifacts iterative_train(const Dataset& train, const Dataset& dev, const std::vector<double>& schedule,
                                   const PipelineConfig& config) {
  if (schedule.empty()) throw Error(ErrorCode::kInvalidArgument, "iterative_train: empty zoom schedule");
  for (double r : schedule) {
    if (!(r > 0 && r < 1)) throw Error(ErrorCode::kInvalidArgument, "iterative_train: zoom ratios must be in (0,1)");
  }
  config.train.validate();
  const auto& model = config.train.model;
  if (model.alphabet_size != config.alphabet.size()) {
    throw Error(ErrorCode::kInvalidArgument, "iterative_train: model alphabet size differs from the alphabet");
  }
  const bool write = !config.run_dir.empty();
  if (write) {
    std::filesystem::create_directories(config.run_dir);
    nlohmann::json cfg;
    cfg["train"] = to_json(config.train);
    cfg["zoom"] = {{"lambda", config.zoom.lambda},
                   {"top_k", config.zoom.top_k},
                   {"mode", config.zoom.mode == ZoomMode::kAveraged ? "averaged" : "per-frame"}};
    cfg["alphabet"] = config.alphabet.letters();
    cfg["schedule"] = schedule;
    cfg["early_stop"] = config.early_stop;
    write_file_atomic(config.run_dir / "config.json", cfg.dump(2) + "\n");
  }

  IterationArtifacts out;
  auto train_hist = full_frame_histories(train);
  auto dev_hist = full_frame_histories(dev);
  double best = -std::numeric_limits<double>::infinity();
  std::size_t keep = 0;
  for (std::size_t s = 0; s < schedule.size(); ++s) {
    const auto train_ex = make_examples(train, train_hist, model, config.alphabet, config.train.threads);
    const auto dev_ex = make_examples(dev, dev_hist, model, config.alphabet, config.train.threads);
    log_line(config, "iteration " + std::to_string(s + 1) + ": training");
    TrainResult tr = train_model(train_ex, dev_ex, config.train);

    IterationRecord rec;
    rec.index = static_cast<int>(s + 1);
    rec.ratio = schedule[s];
    rec.dev_accuracy = tr.dev_accuracy;
    rec.best_epoch = tr.best_epoch;
    rec.fingerprint = fingerprint(train_ex) + fingerprint(dev_ex);
    rec.train_inputs = train_hist;
    rec.dev_inputs = dev_hist;
    rec.params = std::move(tr.params);

    const ZoomedSplits z = cached_zoom(rec.params, train_ex, dev_ex, train_hist, dev_hist, schedule[s], config);
    std::vector<Box> pred;
    std::vector<std::optional<Box>> gt;
    for (std::size_t i = 0; i < dev.size(); ++i) {
      for (std::size_t t = 0; t < dev[i].frames.size(); ++t) {
        pred.push_back(z.dev.histories[i][t]);
        if (t < dev[i].gt_boxes.size()) {
          gt.emplace_back(dev[i].gt_boxes[t]);
        } else {
          gt.emplace_back(std::nullopt);
        }
      }
    }
    if (std::any_of(gt.begin(), gt.end(), [](const auto& b) { return b.has_value(); })) {
      rec.dev_detection = detection_eval(pred, gt);
    }
    log_line(config, "iteration " + std::to_string(s + 1) + ": dev letter accuracy " +
                         std::to_string(rec.dev_accuracy));

    if (write) {
      const auto dir = config.run_dir / ("iter_" + std::to_string(s + 1));
      std::filesystem::create_directories(dir / "tubes");
      save_checkpoint(dir / "checkpoint.fsia", rec.params);
      for (std::size_t i = 0; i < dev.size(); ++i) {
        write_file_atomic(dir / "tubes" / (dev[i].id + ".txt"),
                          format_tube(z.dev.tubes[i], dev_hist[i], model.input_side));
      }
      nlohmann::json m;
      m["iteration"] = rec.index;
      m["ratio"] = rec.ratio;
      m["letter_accuracy"] = rec.dev_accuracy;
      m["avg_iou"] = rec.dev_detection ? nlohmann::json(rec.dev_detection->avg_iou) : nlohmann::json();
      m["miss_rate"] = rec.dev_detection ? nlohmann::json(rec.dev_detection->miss_rate) : nlohmann::json();
      m["perplexity"] = nullptr;
      m["best_epoch"] = rec.best_epoch;
      m["fingerprint"] = rec.fingerprint;
      write_file_atomic(dir / "metrics.json", m.dump(2) + "\n");
    }

    out.trained_accuracies.push_back(rec.dev_accuracy);
    const bool dropped = rec.dev_accuracy < best;
    if (rec.dev_accuracy > best) {
      best = rec.dev_accuracy;
      keep = s + 1;
    }
    out.iterations.push_back(std::move(rec));
    if (dropped && config.early_stop) {
      log_line(config, "dev accuracy dropped; stopping");
      break;
    }
    train_hist = z.train.histories;
    dev_hist = z.dev.histories;
  }
  if (config.early_stop) out.iterations.resize(keep);
  return out;
}

std::vector<Box> iterative_history(const std::vector<ModelParams<float>>& models, const std::vector<double>& ratios,
                                   const LabeledSequence& original, const Alphabet& alphabet,
                                   const ZoomConfig& zoom) {
  if (models.empty()) throw Error(ErrorCode::kInvalidArgument, "iterative_infer: no models");
  if (ratios.size() + 1 < models.size()) {
    throw Error(ErrorCode::kInvalidArgument, "iterative_infer: need a zoom ratio for every model but the last");
  }
  std::vector<Box> history;
  for (const auto& f : original.frames) history.push_back(Box::full(f));
  for (std::size_t s = 0; s + 1 < models.size(); ++s) {
    const Example ex = make_example(original, history, models[s].config, alphabet);
    const Tube tube = attention_tube(models[s], ex, ratios[s], zoom);
    const int next_side = models[s + 1].config.input_side;
    history = zoom_sequence(original.frames, tube, history, models[s].config.input_side, next_side, zoom.mode).history;
  }
  return history;
}

Labels iterative_infer(const std::vector<ModelParams<float>>& models, const std::vector<double>& ratios,
                       const LabeledSequence& original, const Alphabet& alphabet, const ZoomConfig& zoom,
                       const DecodeOptions& decode) {
  const auto history = iterative_history(models, ratios, original, alphabet, zoom);
  const auto& last = models.back();
  LabeledSequence unlabeled = original;
  unlabeled.label.clear();
  const Example ex = make_example(unlabeled, history, last.config, alphabet);
  const auto fwd = forward_sequence(last, ex.frames, ex.priors);
  if (!decode.beam) return greedy_decode(fwd.posteriors);
  return beam_decode(fwd.posteriors.cast<double>(), decode.lm, decode.beam_options);
}

ScheduleSearchResult search_zoom_schedule(const Dataset& train, const Dataset& dev, const std::vector<double>& ratios,
                                          int beam, int max_depth, const PipelineConfig& config) {
  if (ratios.empty()) throw Error(ErrorCode::kInvalidArgument, "schedule search: empty ratio set");
  for (double r : ratios) {
    if (!(r > 0 && r < 1)) throw Error(ErrorCode::kInvalidArgument, "schedule search: ratios must be in (0,1)");
  }
  if (beam < 1 || max_depth < 1) throw Error(ErrorCode::kInvalidArgument, "schedule search: beam and depth >= 1");
  config.train.validate();
  const auto& model = config.train.model;
  const unsigned threads = config.train.threads;

  struct Node {
    std::vector<double> ratios;
    double accuracy = 0;
    ModelParams<float> params;
    std::vector<std::vector<Box>> train_hist, dev_hist;
  };
  auto train_node = [&](Node& node) {
    const auto train_ex = make_examples(train, node.train_hist, model, config.alphabet, threads);
    const auto dev_ex = make_examples(dev, node.dev_hist, model, config.alphabet, threads);
    TrainResult tr = train_model(train_ex, dev_ex, config.train);
    node.accuracy = tr.dev_accuracy;
    node.params = std::move(tr.params);
  };

  ScheduleSearchResult result;
  Node root;
  root.train_hist = full_frame_histories(train);
  root.dev_hist = full_frame_histories(dev);
  log_line(config, "schedule search: whole-frame model");
  train_node(root);
  result.baseline_accuracy = root.accuracy;
  result.best_accuracy = -std::numeric_limits<double>::infinity();

  std::vector<Node> frontier;
  frontier.push_back(std::move(root));
  for (int depth = 1; depth <= max_depth && !frontier.empty(); ++depth) {
    std::vector<Node> children;
    for (const auto& parent : frontier) {
      const auto train_ex = make_examples(train, parent.train_hist, model, config.alphabet, threads);
      const auto dev_ex = make_examples(dev, parent.dev_hist, model, config.alphabet, threads);
      for (double r : ratios) {
        Node child;
        child.ratios = parent.ratios;
        child.ratios.push_back(r);
        const ZoomedSplits z = cached_zoom(parent.params, train_ex, dev_ex, parent.train_hist, parent.dev_hist, r,
                                           config);
        child.train_hist = z.train.histories;
        child.dev_hist = z.dev.histories;
        train_node(child);
        std::string desc;
        for (double x : child.ratios) desc += (desc.empty() ? "" : ",") + std::to_string(x);
        log_line(config, "schedule [" + desc + "]: dev letter accuracy " + std::to_string(child.accuracy));
        result.explored.push_back({child.ratios, child.accuracy});
        if (child.accuracy > result.best_accuracy) {
          result.best_accuracy = child.accuracy;
          result.best = child.ratios;
        }
        children.push_back(std::move(child));
      }
    }
    std::stable_sort(children.begin(), children.end(),
                     [](const Node& a, const Node& b) { return a.accuracy > b.accuracy; });
    if (children.size() > static_cast<std::size_t>(beam)) children.resize(static_cast<std::size_t>(beam));
    frontier = std::move(children);
  }
  if (!config.run_dir.empty()) {
    nlohmann::json j;
    j["ratios"] = result.best;
    j["dev_accuracy"] = result.best_accuracy;
    j["baseline_accuracy"] = result.baseline_accuracy;
    auto& ex = j["explored"] = nlohmann::json::array();
    for (const auto& n : result.explored) ex.push_back({{"ratios", n.ratios}, {"dev_accuracy", n.dev_accuracy}});
    std::filesystem::create_directories(config.run_dir);
    write_file_atomic(config.run_dir / "schedule.json", j.dump(2) + "\n");
  }
  return result;
}

}  // namespace fsia
