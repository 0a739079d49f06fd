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

#include "fsia/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "fsia/error.hpp"
#include "fsia/json_io.hpp"
#include "fsia/pipeline.hpp"
#include "fsia/util.hpp"

namespace fsia {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct TrainFlags {
  std::string lr_schedule = "20@0.01,10@0.001";
  std::string optimizer = "sgd";
  double momentum = 0.0;
  int batch_size = 1;
  double clip_norm = 0.0;
  int input_side = 112;
  int hidden = 64;
  double alpha = 1.0;
  bool dropout = false;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

struct ZoomFlags {
  std::string ratios = "0.6561";
  double lambda = 0.1;
  int top_k = 3;
  bool per_frame = false;
};

struct DecodeFlags {
  int beam_width = 16;
  double lm_weight = 0.4;
  double insertion_bias = 0.0;
  std::string lm_path;
  bool greedy = false;
};

void add_train_flags(CLI::App* app, TrainFlags& f) {
  app->add_option("--lr-schedule", f.lr_schedule, "Epoch phases as epochs@lr, comma separated")->capture_default_str();
  app->add_option("--optimizer", f.optimizer, "sgd or adam")
      ->check(CLI::IsMember({"sgd", "adam"}))
      ->capture_default_str();
  app->add_option("--momentum", f.momentum, "SGD momentum")->capture_default_str();
  app->add_option("--batch-size", f.batch_size)->capture_default_str();
  app->add_option("--clip-norm", f.clip_norm, "Gradient-norm clip, 0 = off")->capture_default_str();
  app->add_option("--input-side", f.input_side, "Model input side in pixels")->capture_default_str();
  app->add_option("--hidden", f.hidden, "LSTM hidden size")->capture_default_str();
  app->add_option("--alpha", f.alpha, "Prior exponent")->capture_default_str();
  app->add_flag("--dropout", f.dropout, "Enable 2D channel dropout");
  app->add_option("--seed", f.seed)->capture_default_str();
  app->add_option("--threads", f.threads, "Worker threads, 0 = auto")->capture_default_str();
}

void add_zoom_flags(CLI::App* app, ZoomFlags& f) {
  app->add_option("--zoom-ratios", f.ratios, "Comma-separated zoom ratios")->capture_default_str();
  app->add_option("--lambda", f.lambda, "Tube smoothness weight")->capture_default_str();
  app->add_option("--top-k", f.top_k, "Attention peaks per frame")->capture_default_str();
  app->add_flag("--per-frame", f.per_frame, "Zoom each frame with its own box instead of the averaged box");
}

void add_decode_flags(CLI::App* app, DecodeFlags& f) {
  app->add_option("--beam-width", f.beam_width)->capture_default_str();
  app->add_option("--lm-weight", f.lm_weight)->capture_default_str();
  app->add_option("--insertion-bias", f.insertion_bias)->capture_default_str();
  app->add_option("--lm", f.lm_path, "Language model file from lm-train");
  app->add_flag("--greedy", f.greedy, "Greedy decoding instead of beam search");
}

std::vector<double> parse_ratios(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw Error(ErrorCode::kInvalidArgument, "bad zoom ratio '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw Error(ErrorCode::kInvalidArgument, "no zoom ratios given");
  return out;
}

std::vector<LrPhase> parse_phases(const std::string& text) {
  std::vector<LrPhase> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto at = item.find('@');
    try {
      if (at == std::string::npos) throw std::invalid_argument(item);
      out.push_back({std::stoi(item.substr(0, at)), std::stod(item.substr(at + 1))});
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, "bad lr phase '" + item + "' (want epochs@lr)");
    }
  }
  return out;
}

Alphabet dataset_alphabet(const Dataset& a, const Dataset& b) {
  std::string letters;
  for (const auto* d : {&a, &b}) {
    for (const auto& s : *d) {
      for (char c : s.label) {
        if (letters.find(c) == std::string::npos) letters.push_back(c);
      }
    }
  }
  std::sort(letters.begin(), letters.end());
  return Alphabet(letters);
}

/// The alphabet recorded next to a dataset, else the letters it uses.
Alphabet alphabet_for(const fs::path& train_dir, const Dataset& train, const Dataset& dev) {
  const fs::path meta = train_dir / "alphabet.txt";
  if (fs::exists(meta)) {
    std::string s = read_file(meta);
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return Alphabet(s);
  }
  return dataset_alphabet(train, dev);
}

TrainConfig make_train_config(const TrainFlags& f, const Alphabet& alphabet) {
  TrainConfig c;
  c.phases = parse_phases(f.lr_schedule);
  c.optimizer = f.optimizer == "adam" ? Optimizer::kAdam : Optimizer::kSgd;
  c.momentum = f.momentum;
  c.batch_size = f.batch_size;
  c.clip_norm = f.clip_norm;
  c.seed = f.seed;
  c.threads = f.threads;
  c.model.input_side = f.input_side;
  c.model.hidden = f.hidden;
  c.model.alpha = f.alpha;
  c.model.dropout = f.dropout;
  c.model.alphabet_size = alphabet.size();
  c.validate();
  return c;
}

ZoomConfig make_zoom_config(const ZoomFlags& f) {
  ZoomConfig z;
  z.lambda = f.lambda;
  z.top_k = f.top_k;
  z.mode = f.per_frame ? ZoomMode::kPerFrame : ZoomMode::kAveraged;
  return z;
}

void log_stderr(const std::string& s) { std::cerr << s << "\n"; }

std::string json_text(const json& j) { return j.dump(2) + "\n"; }

json metrics_json(std::optional<double> acc, std::optional<DetectionReport> det, std::optional<double> ppl) {
  json m;
  m["letter_accuracy"] = acc ? json(*acc) : json();
  m["avg_iou"] = det ? json(det->avg_iou) : json();
  m["miss_rate"] = det ? json(det->miss_rate) : json();
  m["perplexity"] = ppl ? json(*ppl) : json();
  return m;
}

struct LoadedRun {
  std::vector<ModelParams<float>> models;
  std::vector<double> ratios;
  Alphabet alphabet;
  ZoomConfig zoom;
};

/// A run directory from zoom-train/train, or a single checkpoint file.
LoadedRun load_run(const fs::path& path) {
  LoadedRun run;
  if (fs::is_regular_file(path)) {
    run.models.push_back(load_checkpoint(path));
  } else {
    if (!fs::is_directory(path)) throw Error(ErrorCode::kNotFound, "run not found: " + path.string());
    if (fs::exists(path / "config.json")) {
      const json cfg = json::parse(read_file(path / "config.json"));
      if (cfg.contains("schedule")) run.ratios = cfg.at("schedule").get<std::vector<double>>();
      if (cfg.contains("zoom")) {
        const auto& z = cfg.at("zoom");
        run.zoom.lambda = z.value("lambda", run.zoom.lambda);
        run.zoom.top_k = z.value("top_k", run.zoom.top_k);
        run.zoom.mode = z.value("mode", std::string("averaged")) == "per-frame" ? ZoomMode::kPerFrame
                                                                                 : ZoomMode::kAveraged;
      }
      if (cfg.contains("alphabet")) run.alphabet = Alphabet(cfg.at("alphabet").get<std::string>());
    }
    // Only the iterations kept after early stopping are listed.
    int keep = 0;
    if (fs::exists(path / "summary.json")) {
      keep = json::parse(read_file(path / "summary.json")).at("kept_iterations").get<int>();
    }
    for (int s = 1;; ++s) {
      const fs::path ck = path / ("iter_" + std::to_string(s)) / "checkpoint.fsia";
      if (!fs::exists(ck) || (keep > 0 && s > keep)) break;
      run.models.push_back(load_checkpoint(ck));
    }
    if (run.models.empty() && fs::exists(path / "checkpoint.fsia")) {
      run.models.push_back(load_checkpoint(path / "checkpoint.fsia"));
    }
    if (run.models.empty()) throw Error(ErrorCode::kNotFound, "no checkpoints under " + path.string());
  }
  if (run.alphabet.size() == 0 || run.alphabet.size() != run.models.back().config.alphabet_size) {
    std::string letters;
    for (int i = 0; i < run.models.back().config.alphabet_size; ++i) letters.push_back(static_cast<char>('a' + i));
    run.alphabet = Alphabet(letters);
  }
  return run;
}

Frame draw_box(Frame f, const Box& b) {
  const int x0 = std::clamp(static_cast<int>(b.x_min), 0, static_cast<int>(f.cols()) - 1);
  const int x1 = std::clamp(static_cast<int>(std::ceil(b.x_max)) - 1, 0, static_cast<int>(f.cols()) - 1);
  const int y0 = std::clamp(static_cast<int>(b.y_min), 0, static_cast<int>(f.rows()) - 1);
  const int y1 = std::clamp(static_cast<int>(std::ceil(b.y_max)) - 1, 0, static_cast<int>(f.rows()) - 1);
  for (int x = x0; x <= x1; ++x) f(y0, x) = f(y1, x) = 1.0f;
  for (int y = y0; y <= y1; ++y) f(y, x0) = f(y, x1) = 1.0f;
  return f;
}

Frame attention_overlay(const Frame& frame, const MatrixX<float>& a) {
  Frame out = frame;
  const float peak = std::max(a.maxCoeff(), 1e-12f);
  for (Eigen::Index y = 0; y < frame.rows(); ++y) {
    for (Eigen::Index x = 0; x < frame.cols(); ++x) {
      const Eigen::Index i = y * a.rows() / frame.rows(), j = x * a.cols() / frame.cols();
      out(y, x) = 0.5f * frame(y, x) + 0.5f * a(i, j) / peak;
    }
  }
  return out;
}

Dataset load_split(const std::string& dir) { return load_dataset(dir); }

int cmd_synth(const fs::path& out, int count, const SynthSpec& spec, const SplitSpec& split_in,
              const std::string& prefix) {
  SplitSpec split = split_in;
  split.count = count;
  const Dataset d = make_split(spec, split, prefix);
  save_dataset(out, d);
  write_file_atomic(out / "alphabet.txt", spec.alphabet + "\n");
  std::cout << "wrote " << d.size() << " sequences to " << out.string() << "\n";
  return 0;
}

int cmd_train(const std::string& train_dir, const std::string& dev_dir, const fs::path& out, const TrainFlags& tf) {
  const Dataset train = load_split(train_dir), dev = load_split(dev_dir);
  const Alphabet alphabet = alphabet_for(train_dir, train, dev);
  TrainConfig tc = make_train_config(tf, alphabet);
  tc.on_epoch = [](const EpochLog& l) {
    std::fprintf(stderr, "epoch %d lr %g loss %.4f dev %.4f\n", l.epoch, l.lr, l.train_loss, l.dev_accuracy);
  };
  const auto tr_ex = make_examples(train, full_frame_histories(train), tc.model, alphabet, tc.threads);
  const auto dv_ex = make_examples(dev, full_frame_histories(dev), tc.model, alphabet, tc.threads);
  const TrainResult r = train_model(tr_ex, dv_ex, tc);
  fs::create_directories(out);
  save_checkpoint(out / "checkpoint.fsia", r.params);
  json cfg;
  cfg["train"] = to_json(tc);
  cfg["alphabet"] = alphabet.letters();
  write_file_atomic(out / "config.json", json_text(cfg));
  json m = metrics_json(r.dev_accuracy, std::nullopt, std::nullopt);
  m["best_epoch"] = r.best_epoch;
  write_file_atomic(out / "metrics.json", json_text(m));
  std::cout << "dev letter accuracy " << r.dev_accuracy << " (epoch " << r.best_epoch << ")\n";
  return 0;
}

int cmd_zoom_train(const std::string& train_dir, const std::string& dev_dir, const fs::path& out,
                   const TrainFlags& tf, const ZoomFlags& zf, int iters, bool no_early_stop) {
  const Dataset train = load_split(train_dir), dev = load_split(dev_dir);
  PipelineConfig pc;
  pc.alphabet = alphabet_for(train_dir, train, dev);
  pc.train = make_train_config(tf, pc.alphabet);
  pc.zoom = make_zoom_config(zf);
  pc.early_stop = !no_early_stop;
  pc.run_dir = out;
  pc.log = log_stderr;
  std::vector<double> schedule = parse_ratios(zf.ratios);
  if (iters < 1) throw Error(ErrorCode::kInvalidArgument, "--iters must be >= 1");
  while (static_cast<int>(schedule.size()) < iters) schedule.push_back(schedule.back());
  schedule.resize(static_cast<std::size_t>(iters));
  const auto art = iterative_train(train, dev, schedule, pc);
  json summary;
  summary["kept_iterations"] = art.iterations.size();
  summary["trained_accuracies"] = art.trained_accuracies;
  write_file_atomic(out / "summary.json", json_text(summary));
  for (std::size_t s = 0; s < art.trained_accuracies.size(); ++s) {
    std::cout << "iteration " << s + 1 << " dev letter accuracy " << art.trained_accuracies[s] << "\n";
  }
  std::cout << "kept " << art.iterations.size() << " iteration(s)\n";
  return 0;
}

int cmd_schedule_search(const std::string& train_dir, const std::string& dev_dir, const fs::path& out,
                        const TrainFlags& tf, const ZoomFlags& zf, int beam, int depth) {
  const Dataset train = load_split(train_dir), dev = load_split(dev_dir);
  PipelineConfig pc;
  pc.alphabet = alphabet_for(train_dir, train, dev);
  pc.train = make_train_config(tf, pc.alphabet);
  pc.zoom = make_zoom_config(zf);
  pc.run_dir = out;
  pc.log = log_stderr;
  const auto r = search_zoom_schedule(train, dev, parse_ratios(zf.ratios), beam, depth, pc);
  std::cout << "baseline " << r.baseline_accuracy << "\nbest";
  for (double x : r.best) std::cout << " " << x;
  std::cout << " -> " << r.best_accuracy << "\n";
  return 0;
}

int cmd_decode(const fs::path& run_path, const std::string& data_dir, const fs::path& out, const DecodeFlags& df) {
  const LoadedRun run = load_run(run_path);
  const Dataset data = load_split(data_dir);
  std::optional<CharNGramLM> lm;
  if (!df.lm_path.empty()) lm = CharNGramLM::load(df.lm_path);
  DecodeOptions opt;
  opt.beam = !df.greedy;
  opt.beam_options.beam_width = df.beam_width;
  opt.beam_options.lm_weight = df.lm_weight;
  opt.beam_options.insertion_bias = df.insertion_bias;
  opt.lm = lm ? &*lm : nullptr;
  std::vector<std::string> hyps(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    hyps[i] = run.alphabet.decode(iterative_infer(run.models, run.ratios, data[i], run.alphabet, run.zoom, opt));
  });
  std::string tsv;
  EditAlignment total;
  std::vector<std::string> refs;
  for (std::size_t i = 0; i < data.size(); ++i) {
    tsv += data[i].id + "\t" + hyps[i] + "\t" + data[i].label + "\n";
    total += align_letters(hyps[i], data[i].label);
    refs.push_back(data[i].label);
  }
  std::optional<double> ppl;
  if (lm) ppl = perplexity(*lm, refs);
  fs::create_directories(out);
  write_file_atomic(out / "hyps.tsv", tsv);
  write_file_atomic(out / "metrics.json", json_text(metrics_json(total.accuracy(), std::nullopt, ppl)));
  std::cout << "letter accuracy " << total.accuracy() << "\n";
  return 0;
}

int cmd_eval(const fs::path& hyp_file, const std::string& out) {
  std::istringstream in(read_file(hyp_file));
  std::string line;
  EditAlignment total;
  int n = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto t1 = line.find('\t'), t2 = line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos) {
      throw Error(ErrorCode::kInvalidArgument, "hypothesis line " + std::to_string(n + 1) + ": want id<TAB>hyp<TAB>ref");
    }
    total += align_letters(line.substr(t1 + 1, t2 - t1 - 1), line.substr(t2 + 1));
    ++n;
  }
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "no hypotheses in " + hyp_file.string());
  const double acc = total.accuracy();
  if (!out.empty()) write_file_atomic(out, json_text(metrics_json(acc, std::nullopt, std::nullopt)));
  std::printf("letter_accuracy %.6f (S=%d D=%d I=%d N=%d)\n", acc, total.substitutions, total.deletions,
              total.insertions, total.reference_length);
  return 0;
}

/// Tube after the last model, composed into original coordinates.
std::vector<Box> final_boxes(const LoadedRun& run, const LabeledSequence& seq) {
  std::vector<ModelParams<float>> chain = run.models;
  chain.push_back(run.models.back());
  std::vector<double> ratios = run.ratios;
  if (ratios.size() < run.models.size()) ratios.resize(run.models.size(), ratios.empty() ? 0.6561 : ratios.back());
  return iterative_history(chain, ratios, seq, run.alphabet, run.zoom);
}

int cmd_detect_eval(const fs::path& run_path, const std::string& data_dir, const std::string& out) {
  const LoadedRun run = load_run(run_path);
  const Dataset data = load_split(data_dir);
  std::vector<std::vector<Box>> boxes(data.size());
  parallel_for(data.size(), [&](std::size_t i) { boxes[i] = final_boxes(run, data[i]); });
  std::vector<Box> pred;
  std::vector<std::optional<Box>> gt;
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t t = 0; t < boxes[i].size(); ++t) {
      pred.push_back(boxes[i][t]);
      gt.push_back(t < data[i].gt_boxes.size() ? std::optional<Box>(data[i].gt_boxes[t]) : std::nullopt);
    }
  }
  const DetectionReport r = detection_eval(pred, gt);
  if (!out.empty()) write_file_atomic(out, json_text(metrics_json(std::nullopt, r, std::nullopt)));
  std::printf("avg_iou %.6f miss_rate %.6f frames %d\n", r.avg_iou, r.miss_rate, r.frames);
  return 0;
}

int cmd_lm_train(const std::string& data_dir, const std::string& dev_dir, const fs::path& out, int order,
                 const std::string& letters) {
  const Dataset data = load_split(data_dir);
  std::vector<std::string> corpus;
  for (const auto& s : data) corpus.push_back(s.label);
  const Alphabet alphabet = letters.empty() ? alphabet_for(data_dir, data, {}) : Alphabet(letters);
  const auto lm = CharNGramLM::train(alphabet, corpus, order);
  lm.save(out);
  const Dataset eval = dev_dir.empty() ? data : load_split(dev_dir);
  std::vector<std::string> refs;
  for (const auto& s : eval) refs.push_back(s.label);
  std::printf("perplexity %.6f\n", perplexity(lm, refs));
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, long corrupt) {
  const GradCheckInstance g = make_gradcheck_instance(seed);
  GradCheckOptions opt;
  opt.corrupt_index = corrupt;
  const auto rep = finite_diff_check(g.params, g.frames, g.priors, g.target, opt);
  std::printf("max_rel_error %.3e at %zu over %zu parameters (closest ReLU kink %.2e, step %.0e)\n",
              rep.max_rel_error, rep.worst_index, rep.checked, g.min_preactivation, opt.step);
  return rep.max_rel_error < 1e-3 ? 0 : 1;
}

int cmd_bench(double ratio, int input_side, std::uint64_t seed) {
  SynthSpec spec;
  spec.seed = seed;
  const auto seq = render_sequence(spec, "abcd");
  ModelConfig cfg;
  cfg.input_side = input_side;
  const auto params = init_params<float>(cfg, seed);
  const MemoryBench b = bench_zoom_vs_enlarge(params, seq, ratio);
  json j;
  j["ratio"] = b.ratio;
  j["zoom"] = {{"input_side", b.zoom_side}, {"peak_frame_bytes", b.zoom_bytes}};
  j["enlarge"] = {{"input_side", b.enlarge_side}, {"peak_frame_bytes", b.enlarge_bytes}};
  j["measured_ratio"] = b.measured();
  j["expected_ratio"] = b.expected();
  std::cout << j.dump(2) << "\n";
  return b.zoom_bytes < b.enlarge_bytes ? 0 : 1;
}

int cmd_viz(const fs::path& run_path, const std::string& data_dir, const std::string& id, const fs::path& out) {
  const LoadedRun run = load_run(run_path);
  const Dataset data = load_split(data_dir);
  auto it = std::find_if(data.begin(), data.end(), [&](const LabeledSequence& s) { return id.empty() || s.id == id; });
  if (it == data.end()) throw Error(ErrorCode::kNotFound, "sequence not found: " + id);
  const LabeledSequence& seq = *it;
  std::vector<ModelParams<float>> upto(run.models.begin(), run.models.end());
  const auto history = iterative_history(upto, run.ratios, seq, run.alphabet, run.zoom);
  const auto& last = run.models.back();
  const Example ex = make_example(seq, history, last.config, run.alphabet);
  const auto fwd = forward_sequence(last, ex.frames, ex.priors);
  const auto boxes = final_boxes(run, seq);
  fs::create_directories(out);
  char name[64];
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    std::snprintf(name, sizeof(name), "attention_%03zu.pgm", t);
    write_file_atomic(out / name, encode_pgm(attention_overlay(ex.frames[t], fwd.attention[t])));
    std::snprintf(name, sizeof(name), "tube_%03zu.pgm", t);
    write_file_atomic(out / name, encode_pgm(draw_box(seq.frames[t], boxes[t])));
  }
  std::cout << "wrote " << 2 * seq.frames.size() << " images for " << seq.id << " to " << out.string() << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"fsia: iterative visual attention for glyph-sequence recognition"};
  app.set_version_flag("--version", std::string("fsia ") + FSIA_VERSION);
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset split");
  SynthSpec spec;
  SplitSpec split;
  std::string synth_out, prefix = "seq";
  int count = 100;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--count", count)->capture_default_str();
  synth->add_option("--prefix", prefix, "Sequence id prefix")->capture_default_str();
  synth->add_option("--seed", split.seed, "Split seed")->capture_default_str();
  synth->add_option("--lexicon-seed", split.lexicon_seed)->capture_default_str();
  synth->add_option("--lexicon-size", split.lexicon_size)->capture_default_str();
  synth->add_option("--min-word", split.min_word)->capture_default_str();
  synth->add_option("--max-word", split.max_word)->capture_default_str();
  synth->add_option("--alphabet", spec.alphabet)->capture_default_str();
  synth->add_option("--frame-side", spec.frame_side)->capture_default_str();
  synth->add_option("--glyph-fraction", spec.glyph_fraction)->capture_default_str();
  synth->add_option("--distractors", spec.distractor_count)->capture_default_str();
  synth->add_option("--min-frames-per-letter", spec.min_frames_per_letter)->capture_default_str();
  synth->add_option("--max-frames-per-letter", spec.max_frames_per_letter)->capture_default_str();
  synth->add_option("--jitter", spec.jitter)->capture_default_str();
  synth->add_option("--drift", spec.drift)->capture_default_str();
  synth->add_option("--blur", spec.blur)->capture_default_str();
  synth->add_option("--noise", spec.noise)->capture_default_str();

  std::string train_dir, dev_dir, out_dir;
  TrainFlags tf;
  ZoomFlags zf;
  DecodeFlags df;

  auto* train = app.add_subcommand("train", "Train one model on whole frames");
  train->add_option("--train", train_dir)->required();
  train->add_option("--dev", dev_dir)->required();
  train->add_option("--out", out_dir, "Output directory")->required();
  add_train_flags(train, tf);

  auto* zoom = app.add_subcommand("zoom-train", "Iterative zoom training");
  int iters = 2;
  bool no_early_stop = false;
  zoom->add_option("--train", train_dir)->required();
  zoom->add_option("--dev", dev_dir)->required();
  zoom->add_option("--out", out_dir, "Run directory")->required();
  zoom->add_option("--iters", iters, "Number of models to train")->capture_default_str();
  zoom->add_flag("--no-early-stop", no_early_stop, "Train every iteration even if dev accuracy drops");
  add_train_flags(zoom, tf);
  add_zoom_flags(zoom, zf);

  auto* search = app.add_subcommand("schedule-search", "Beam search over zoom-ratio schedules");
  int beam = 2, depth = 1;
  search->add_option("--train", train_dir)->required();
  search->add_option("--dev", dev_dir)->required();
  search->add_option("--out", out_dir, "Output directory for schedule.json")->required();
  search->add_option("--beam", beam)->capture_default_str();
  search->add_option("--iters", depth, "Maximum schedule length")->capture_default_str();
  ZoomFlags search_zf;
  search_zf.ratios = "0.9,0.81,0.729,0.6561";
  add_train_flags(search, tf);
  add_zoom_flags(search, search_zf);

  std::string run_path, data_dir, metrics_out;
  auto* decode = app.add_subcommand("decode", "Decode a dataset with a trained run");
  decode->add_option("--run", run_path, "Run directory or checkpoint file")->required();
  decode->add_option("--data", data_dir)->required();
  decode->add_option("--out", out_dir, "Directory for hyps.tsv and metrics.json")->required();
  add_decode_flags(decode, df);

  std::string hyp_file;
  auto* eval = app.add_subcommand("eval", "Letter accuracy of a hypothesis dump");
  eval->add_option("--hyp", hyp_file, "id<TAB>hyp<TAB>ref file")->required();
  eval->add_option("--out", metrics_out, "metrics.json path");

  auto* detect = app.add_subcommand("detect-eval", "Attention tubes against ground-truth boxes");
  detect->add_option("--run", run_path)->required();
  detect->add_option("--data", data_dir)->required();
  detect->add_option("--out", metrics_out, "metrics.json path");

  auto* lmt = app.add_subcommand("lm-train", "Train a character n-gram language model");
  std::string lm_out, lm_dev, lm_alphabet;
  int order = 4;
  lmt->add_option("--data", data_dir)->required();
  lmt->add_option("--dev", lm_dev, "Split for the reported perplexity");
  lmt->add_option("--out", lm_out)->required();
  lmt->add_option("--order", order)->capture_default_str();
  lmt->add_option("--alphabet", lm_alphabet);

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of the model gradient");
  std::uint64_t grad_seed = 11;
  long corrupt = -1;
  grad->add_option("--seed", grad_seed)->capture_default_str();
  grad->add_option("--corrupt-index", corrupt, "Perturb one analytic gradient entry")->capture_default_str();

  auto* bench = app.add_subcommand("bench-zoom-vs-enlarge", "Frame-buffer memory of zooming vs enlarging");
  double bench_ratio = 0.729;
  int bench_side = 112;
  std::uint64_t bench_seed = 1;
  bench->add_option("--ratio", bench_ratio)->capture_default_str();
  bench->add_option("--input-side", bench_side)->capture_default_str();
  bench->add_option("--seed", bench_seed)->capture_default_str();

  auto* viz = app.add_subcommand("viz", "Write attention and tube overlays as PGM images");
  std::string viz_id;
  viz->add_option("--run", run_path)->required();
  viz->add_option("--data", data_dir)->required();
  viz->add_option("--id", viz_id, "Sequence id (default: first)");
  viz->add_option("--out", out_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) return cmd_synth(synth_out, count, spec, split, prefix);
    if (*train) return cmd_train(train_dir, dev_dir, out_dir, tf);
    if (*zoom) return cmd_zoom_train(train_dir, dev_dir, out_dir, tf, zf, iters, no_early_stop);
    if (*search) return cmd_schedule_search(train_dir, dev_dir, out_dir, tf, search_zf, beam, depth);
    if (*decode) return cmd_decode(run_path, data_dir, out_dir, df);
    if (*eval) return cmd_eval(hyp_file, metrics_out);
    if (*detect) return cmd_detect_eval(run_path, data_dir, metrics_out);
    if (*lmt) return cmd_lm_train(data_dir, lm_dev, lm_out, order, lm_alphabet);
    if (*grad) return cmd_gradcheck(grad_seed, corrupt);
    if (*bench) return cmd_bench(bench_ratio, bench_side, bench_seed);
    if (*viz) return cmd_viz(run_path, data_dir, viz_id, out_dir);
  } catch (const Error& e) {
    std::cerr << "fsia: error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "fsia: error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace fsia
