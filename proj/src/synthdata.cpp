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

#include "fsia/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "fsia/error.hpp"
#include "fsia/json_io.hpp"
#include "fsia/util.hpp"

namespace fsia {

using nlohmann::json;
using Glyph = Eigen::Matrix<std::uint8_t, kGlyphGrid, kGlyphGrid>;

void SynthSpec::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidArgument, "synth spec: " + m); };
  if (alphabet.size() < 2) fail("alphabet needs at least two letters");
  for (char c : alphabet) {
    if (c == '^' || c == '$' || c == '\t' || c == '\n' || c == '"' || c == '\\') fail("reserved alphabet symbol");
  }
  if (!(glyph_fraction > 0 && glyph_fraction <= 0.5)) fail("glyph_fraction must be in (0, 0.5]");
  if (min_frames_per_letter < 1 || max_frames_per_letter < min_frames_per_letter) fail("bad frames_per_letter range");
  if (frame_side < 16) fail("frame_side too small");
  if (distractor_count < 0 || blur < 0 || noise < 0 || jitter < 0) fail("negative parameter");
  Alphabet check(alphabet);
  (void)check;
}

namespace {

// Stroke primitives on the glyph grid.
void add_primitive(Glyph& g, std::mt19937_64& rng) {
  const int n = kGlyphGrid;
  auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng() % (hi - lo + 1)); };
  switch (rng() % 6) {
    case 0: {  // horizontal bar
      int r = pick(0, n - 1), a = pick(0, 2), b = pick(4, n - 1);
      for (int c = a; c <= b; ++c) g(r, c) = 1;
      break;
    }
    case 1: {  // vertical bar
      int c = pick(0, n - 1), a = pick(0, 2), b = pick(4, n - 1);
      for (int r = a; r <= b; ++r) g(r, c) = 1;
      break;
    }
    case 2: {  // diagonal
      bool anti = rng() % 2;
      for (int k = 0; k < n; ++k) g(k, anti ? n - 1 - k : k) = 1;
      break;
    }
    case 3: {  // dot
      int r = pick(0, n - 2), c = pick(0, n - 2);
      g.block<2, 2>(r, c).setOnes();
      break;
    }
    case 4: {  // corner arc
      int r0 = pick(0, 3), c0 = pick(0, 3);
      int len = pick(3, n - std::max(r0, c0));
      bool flip = rng() % 2;
      for (int k = 0; k < len; ++k) {
        g(r0, c0 + k) = 1;
        g(r0 + k, flip ? c0 : c0 + len - 1) = 1;
      }
      break;
    }
    default: {  // small ring
      int r0 = pick(0, n - 4), c0 = pick(0, n - 4);
      for (int k = 0; k < 4; ++k) {
        g(r0, c0 + k) = g(r0 + 3, c0 + k) = 1;
        g(r0 + k, c0) = g(r0 + k, c0 + 3) = 1;
      }
      break;
    }
  }
}

int hamming(const Glyph& a, const Glyph& b) {
  return (a.array() != b.array()).count();
}

const std::vector<Glyph>& glyph_table() {
  static const std::vector<Glyph> table = [] {
    std::vector<Glyph> out;
    std::mt19937_64 rng(0x5eed6171f5a1ULL);
    const int wanted = 62;
    while (static_cast<int>(out.size()) < wanted) {
      Glyph g = Glyph::Zero();
      int strokes = 2 + static_cast<int>(rng() % 2);
      for (int s = 0; s < strokes; ++s) add_primitive(g, rng);
      int ink = g.cast<int>().sum();
      if (ink < 10 || ink > 30) continue;
      bool distinct = std::all_of(out.begin(), out.end(), [&](const Glyph& o) { return hamming(o, g) >= 10; });
      if (distinct) out.push_back(g);
    }
    return out;
  }();
  return table;
}

// Smooth static background: a few random low-frequency waves.
Frame make_texture(int side, double amplitude, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Frame bg(side, side);
  const int waves = 4;
  double fx[waves], fy[waves], ph[waves], w[waves];
  for (int k = 0; k < waves; ++k) {
    fx[k] = (u(rng) * 2 - 1) * 0.12;
    fy[k] = (u(rng) * 2 - 1) * 0.12;
    ph[k] = u(rng) * 6.283185307179586;
    w[k] = 0.5 + u(rng);
  }
  double wsum = w[0] + w[1] + w[2] + w[3];
  double base = 0.15 + 0.2 * u(rng);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      double v = 0;
      for (int k = 0; k < waves; ++k) v += w[k] * std::sin(fx[k] * x + fy[k] * y + ph[k]);
      bg(y, x) = static_cast<float>(base + amplitude * 0.5 * (1.0 + v / wsum));
    }
  }
  return bg;
}

void blit(Frame& f, const Glyph& g, int x0, int y0, int size, float ink) {
  for (int y = 0; y < size; ++y) {
    int yy = y0 + y;
    if (yy < 0 || yy >= f.rows()) continue;
    int gr = y * kGlyphGrid / size;
    for (int x = 0; x < size; ++x) {
      int xx = x0 + x;
      if (xx < 0 || xx >= f.cols()) continue;
      if (g(gr, x * kGlyphGrid / size)) f(yy, xx) = ink;
    }
  }
}

Frame box_blur(const Frame& f, int r) {
  Frame out(f.rows(), f.cols());
  const int H = static_cast<int>(f.rows()), W = static_cast<int>(f.cols());
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double s = 0;
      int n = 0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
          s += f(yy, xx);
          ++n;
        }
      }
      out(y, x) = static_cast<float>(s / n);
    }
  }
  return out;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Glyph glyph_bitmap(int label) {
  const auto& table = glyph_table();
  if (label < 1 || label > static_cast<int>(table.size())) {
    throw Error(ErrorCode::kInvalidArgument, "glyph_bitmap: label out of range");
  }
  return table[label - 1];
}

int min_glyph_distance(int n) {
  int best = kGlyphGrid * kGlyphGrid;
  for (int a = 1; a <= n; ++a) {
    for (int b = a + 1; b <= n; ++b) best = std::min(best, hamming(glyph_bitmap(a), glyph_bitmap(b)));
  }
  return best;
}

LabeledSequence render_sequence(const SynthSpec& spec, const std::string& label) {
  spec.validate();
  const Alphabet alphabet(spec.alphabet);
  if (label.empty()) throw Error(ErrorCode::kInvalidArgument, "render_sequence: empty label");
  const Labels letters = alphabet.encode(label);

  std::mt19937_64 rng(mix_seed(spec.seed, fnv1a(label)));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int side = spec.frame_side;
  const double base = std::sqrt(spec.glyph_fraction) * side;
  const int gsize = std::clamp(
      static_cast<int>(std::lround(base * (1.0 + spec.glyph_scale_jitter * (2 * u(rng) - 1)))),
      kGlyphGrid, side - 2);

  Frame background = make_texture(side, spec.texture, rng);
  // Static distractors share the alphabet's glyphs.
  for (int d = 0; d < spec.distractor_count; ++d) {
    int which = 1 + static_cast<int>(rng() % alphabet.size());
    int x = static_cast<int>(rng() % (side - gsize + 1));
    int y = static_cast<int>(rng() % (side - gsize + 1));
    blit(background, glyph_bitmap(which), x, y, gsize, static_cast<float>(0.75 + 0.2 * u(rng)));
  }

  LabeledSequence seq;
  seq.label = label;
  seq.seed = spec.seed;
  const double max_pos = side - gsize;
  double px = u(rng) * max_pos, py = u(rng) * max_pos;
  const float ink = static_cast<float>(0.8 + 0.2 * u(rng));
  for (int letter : letters) {
    const double theta = u(rng) * 6.283185307179586;
    double vx = spec.drift * std::cos(theta), vy = spec.drift * std::sin(theta);
    const int span = spec.min_frames_per_letter +
                     static_cast<int>(rng() % (spec.max_frames_per_letter - spec.min_frames_per_letter + 1));
    for (int k = 0; k < span; ++k) {
      px += vx;
      py += vy;
      if (px < 0 || px > max_pos) {
        vx = -vx;
        px = std::clamp(px, 0.0, max_pos);
      }
      if (py < 0 || py > max_pos) {
        vy = -vy;
        py = std::clamp(py, 0.0, max_pos);
      }
      const double jx = spec.jitter * (2 * u(rng) - 1), jy = spec.jitter * (2 * u(rng) - 1);
      const int x = static_cast<int>(std::lround(std::clamp(px + jx, 0.0, max_pos)));
      const int y = static_cast<int>(std::lround(std::clamp(py + jy, 0.0, max_pos)));
      Frame f = background;
      blit(f, glyph_bitmap(letter), x, y, gsize, ink);
      if (spec.blur > 0) f = box_blur(f, spec.blur);
      if (spec.noise > 0) {
        for (Eigen::Index i = 0; i < f.size(); ++i) {
          f.data()[i] += static_cast<float>(spec.noise * (2 * u(rng) - 1));
        }
      }
      seq.frames.push_back(quantize(f.cwiseMax(0.0f).cwiseMin(1.0f)));
      seq.gt_boxes.push_back({double(x), double(y), double(x + gsize), double(y + gsize)});
    }
  }
  return seq;
}

std::vector<std::string> make_lexicon(const SynthSpec& spec, const SplitSpec& split) {
  if (split.lexicon_size < 1 || split.min_word < 1 || split.max_word < split.min_word) {
    throw Error(ErrorCode::kInvalidArgument, "split spec: bad lexicon parameters");
  }
  std::mt19937_64 rng(split.lexicon_seed);
  std::vector<std::string> words;
  const auto n = spec.alphabet.size();
  while (static_cast<int>(words.size()) < split.lexicon_size) {
    int len = split.min_word + static_cast<int>(rng() % (split.max_word - split.min_word + 1));
    std::string w;
    for (int i = 0; i < len; ++i) w.push_back(spec.alphabet[rng() % n]);
    if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
  }
  return words;
}

Dataset make_split(const SynthSpec& spec, const SplitSpec& split, const std::string& id_prefix) {
  const auto lexicon = make_lexicon(spec, split);
  std::mt19937_64 rng(mix_seed(split.seed, 0x51));
  Dataset out(static_cast<std::size_t>(std::max(0, split.count)));
  std::vector<std::pair<std::string, std::uint64_t>> jobs;
  for (int i = 0; i < split.count; ++i) {
    jobs.emplace_back(lexicon[rng() % lexicon.size()], mix_seed(split.seed, 1000 + i));
  }
  parallel_for(out.size(), [&](std::size_t i) {
    SynthSpec s = spec;
    s.seed = jobs[i].second;
    out[i] = render_sequence(s, jobs[i].first);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%05zu", i);
    out[i].id = id_prefix + buf;
  });
  return out;
}

double mean_glyph_fraction(const LabeledSequence& seq) {
  if (seq.frames.empty()) return 0;
  double total = 0;
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    total += seq.gt_boxes[t].area() / static_cast<double>(seq.frames[t].size());
  }
  return total / seq.frames.size();
}

namespace {

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::string frame_file(const std::string& id, std::size_t t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_%03zu.pgm", t);
  return "frames/" + id + buf;
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const Dataset& data) {
  std::filesystem::create_directories(dir / "frames");
  std::ostringstream manifest;
  for (const LabeledSequence& seq : data) {
    if (seq.gt_boxes.size() != seq.frames.size()) {
      throw Error(ErrorCode::kInvalidArgument, "save_dataset: gt_boxes/frames length mismatch in " + seq.id);
    }
    std::uint64_t checksum = 0xcbf29ce484222325ULL;
    std::string files = "[", boxes = "[";
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
      const std::string rel = frame_file(seq.id, t);
      const std::string bytes = encode_pgm(seq.frames[t]);
      checksum = fnv1a(bytes, checksum);
      write_file_atomic(dir / rel, bytes);
      const Box& b = seq.gt_boxes[t];
      files += (t ? "," : "") + json(rel).dump();
      boxes += std::string(t ? "," : "") + "[" + fixed3(b.x_min) + "," + fixed3(b.y_min) + "," +
               fixed3(b.x_max) + "," + fixed3(b.y_max) + "]";
    }
    manifest << "{\"id\":" << json(seq.id).dump() << ",\"label\":" << json(seq.label).dump()
             << ",\"frame_files\":" << files << "],\"gt_boxes\":" << boxes << "],\"seed\":" << seq.seed
             << ",\"checksum\":\"" << hex64(checksum) << "\"}\n";
  }
  write_file_atomic(dir / "manifest.jsonl", manifest.str());
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.jsonl";
  if (!std::filesystem::is_directory(dir) || !std::filesystem::exists(manifest_path)) {
    throw Error(ErrorCode::kNotFound, "dataset not found: " + dir.string());
  }
  std::istringstream lines(read_file(manifest_path));
  Dataset out;
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.empty()) continue;
    LabeledSequence seq;
    std::vector<std::string> files;
    std::string checksum;
    try {
      json rec = json::parse(line);
      seq.id = rec.at("id").get<std::string>();
      seq.label = rec.at("label").get<std::string>();
      files = rec.at("frame_files").get<std::vector<std::string>>();
      seq.gt_boxes = rec.at("gt_boxes").get<std::vector<Box>>();
      seq.seed = rec.at("seed").get<std::uint64_t>();
      if (rec.contains("checksum")) checksum = rec.at("checksum").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kMalformedManifest,
                  "manifest line " + std::to_string(lineno) + ": " + e.what());
    }
    if (files.empty() || files.size() != seq.gt_boxes.size() || seq.label.empty()) {
      throw Error(ErrorCode::kMalformedManifest,
                  "manifest line " + std::to_string(lineno) + ": inconsistent record");
    }
    std::uint64_t sum = 0xcbf29ce484222325ULL;
    for (const std::string& rel : files) {
      const auto path = dir / rel;
      if (!std::filesystem::exists(path)) {
        throw Error(ErrorCode::kCorruptDataset, "corrupt dataset: missing frame " + path.string());
      }
      const std::string bytes = read_file(path);
      sum = fnv1a(bytes, sum);
      seq.frames.push_back(decode_pgm(bytes));
    }
    if (!checksum.empty() && checksum != hex64(sum)) {
      throw Error(ErrorCode::kChecksumMismatch, "checksum mismatch for sequence " + seq.id);
    }
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace fsia
