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

#include "fsia/lm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "fsia/error.hpp"
#include "fsia/util.hpp"

namespace fsia {

CharNGramLM CharNGramLM::train(const Alphabet& alphabet, std::span<const std::string> corpus, int order) {
  if (order < 1) throw Error(ErrorCode::kInvalidArgument, "train_ngram: order must be >= 1");
  if (corpus.empty()) throw Error(ErrorCode::kInvalidArgument, "train_ngram: empty corpus");
  CharNGramLM lm;
  lm.order_ = order;
  lm.alphabet_ = alphabet;
  for (const std::string& word : corpus) {
    for (char c : word) {
      if (!alphabet.contains(c)) {
        throw Error(ErrorCode::kInvalidArgument, "train_ngram: symbol outside alphabet in '" + word + "'");
      }
    }
    const std::string history = std::string(order - 1, kBos) + word;
    for (std::size_t i = 0; i <= word.size(); ++i) {
      const char next = i < word.size() ? word[i] : kEos;
      const std::size_t end = order - 1 + i;  // history[0, end) precedes `next`
      for (int k = 0; k < order; ++k) {
        ContextStats& s = lm.table_[history.substr(end - k, k)];
        ++s.next[next];
        ++s.total;
      }
    }
  }
  return lm;
}

CharNGramLM CharNGramLM::uniform(const Alphabet& alphabet) {
  CharNGramLM lm;
  lm.alphabet_ = alphabet;
  lm.order_ = 1;
  return lm;
}

char CharNGramLM::symbol_char(int label) const {
  return label == eos() ? kEos : alphabet_.letter(label);
}

double CharNGramLM::logprob(std::span<const int> prefix, int next) const {
  if (next < 1 || next > eos()) throw Error(ErrorCode::kInvalidArgument, "lm_logprob: bad symbol");
  const char w = symbol_char(next);
  std::string history(order_ - 1, kBos);
  for (int l : prefix) history.push_back(alphabet_.letter(l));
  double p = 1.0 / vocab_size();
  for (int k = 0; k < order_; ++k) {
    auto it = table_.find(history.substr(history.size() - k, k));
    if (it == table_.end()) continue;
    const ContextStats& s = it->second;
    const double types = static_cast<double>(s.next.size());
    auto c = s.next.find(w);
    const double cw = c == s.next.end() ? 0.0 : static_cast<double>(c->second);
    p = (cw + types * p) / (static_cast<double>(s.total) + types);
  }
  return std::log(p);
}

std::uint64_t CharNGramLM::count(const std::string& context, char symbol) const {
  auto it = table_.find(context);
  if (it == table_.end()) return 0;
  auto c = it->second.next.find(symbol);
  return c == it->second.next.end() ? 0 : c->second;
}

std::string CharNGramLM::serialize() const {
  std::ostringstream out;
  out << "order=" << order_ << "\talphabet=" << alphabet_.letters() << "\n";
  for (const auto& [ctx, stats] : table_) {
    for (const auto& [sym, n] : stats.next) out << ctx << '\t' << sym << '\t' << n << '\n';
  }
  return out.str();
}

CharNGramLM CharNGramLM::parse(const std::string& text) {
  std::istringstream in(text);
  std::string header;
  std::getline(in, header);
  auto tab = header.find('\t');
  if (header.rfind("order=", 0) != 0 || tab == std::string::npos ||
      header.compare(tab + 1, 9, "alphabet=") != 0) {
    throw Error(ErrorCode::kInvalidArgument, "lm: bad header");
  }
  CharNGramLM lm;
  lm.order_ = std::stoi(header.substr(6, tab - 6));
  lm.alphabet_ = Alphabet(header.substr(tab + 10));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto t1 = line.find('\t');
    auto t2 = line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 != t1 + 2) throw Error(ErrorCode::kInvalidArgument, "lm: bad row '" + line + "'");
    ContextStats& s = lm.table_[line.substr(0, t1)];
    const std::uint64_t n = std::stoull(line.substr(t2 + 1));
    s.next[line[t1 + 1]] += n;
    s.total += n;
  }
  return lm;
}

void CharNGramLM::save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }

CharNGramLM CharNGramLM::load(const std::filesystem::path& path) { return parse(read_file(path)); }

double perplexity(const CharNGramLM& lm, std::span<const std::string> corpus) {
  double nll = 0;
  std::size_t symbols = 0;
  for (const std::string& word : corpus) {
    const Labels labels = lm.alphabet().encode(word);
    for (std::size_t i = 0; i <= labels.size(); ++i) {
      const int next = i < labels.size() ? labels[i] : lm.eos();
      nll -= lm.logprob(std::span<const int>(labels.data(), i), next);
      ++symbols;
    }
  }
  if (symbols == 0) throw Error(ErrorCode::kInvalidArgument, "perplexity: empty corpus");
  return std::exp(nll / static_cast<double>(symbols));
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Hyp {
  double log_blank = kNegInf;
  double log_nonblank = kNegInf;
  double lm_score = 0;  // gamma * sum log P_lm + delta * |prefix|

  double acoustic() const { return ctc_detail::log_add(log_blank, log_nonblank); }
  double score() const { return acoustic() + lm_score; }
};

}  // namespace

Labels beam_decode(const Eigen::MatrixXd& posteriors, const CharNGramLM* lm,
                   const BeamOptions& options, BeamTrace* trace) {
  if (options.beam_width < 1) throw Error(ErrorCode::kInvalidArgument, "beam_decode: beam_width must be >= 1");
  if (!std::isfinite(options.lm_weight) || !std::isfinite(options.insertion_bias)) {
    throw Error(ErrorCode::kInvalidArgument, "beam_decode: weights must be finite");
  }
  const Eigen::Index K = posteriors.cols();
  const Eigen::MatrixXd lp = posteriors.array().log().matrix();
  const bool use_lm = lm != nullptr && options.lm_weight != 0.0;

  auto extension_score = [&](const Labels& prefix, int c) {
    double s = options.insertion_bias;
    if (use_lm) s += options.lm_weight * lm->logprob(prefix, c);
    return s;
  };

  std::map<Labels, Hyp> beam;
  beam[{}].log_blank = 0.0;
  for (Eigen::Index t = 0; t < posteriors.rows(); ++t) {
    std::map<Labels, Hyp> next;
    auto slot = [&](const Labels& prefix, double lm_score) -> Hyp& {
      auto [it, inserted] = next.try_emplace(prefix);
      if (inserted) it->second.lm_score = lm_score;
      return it->second;
    };
    for (const auto& [prefix, h] : beam) {
      const double total = h.acoustic();
      Hyp& same = slot(prefix, h.lm_score);
      same.log_blank = ctc_detail::log_add(same.log_blank, total + lp(t, kBlank));
      for (int c = 1; c < K; ++c) {
        const double emit = lp(t, c);
        if (emit == kNegInf) continue;
        Labels ext = prefix;
        ext.push_back(c);
        if (!prefix.empty() && prefix.back() == c) {
          Hyp& stay = slot(prefix, h.lm_score);
          stay.log_nonblank = ctc_detail::log_add(stay.log_nonblank, h.log_nonblank + emit);
          Hyp& grow = slot(ext, h.lm_score + extension_score(prefix, c));
          grow.log_nonblank = ctc_detail::log_add(grow.log_nonblank, h.log_blank + emit);
        } else {
          Hyp& grow = slot(ext, h.lm_score + extension_score(prefix, c));
          grow.log_nonblank = ctc_detail::log_add(grow.log_nonblank, total + emit);
        }
      }
    }
    // Rank by score; the map order breaks ties lexicographically.
    std::vector<std::pair<const Labels*, const Hyp*>> ranked;
    ranked.reserve(next.size());
    for (const auto& [prefix, h] : next) ranked.emplace_back(&prefix, &h);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second->score() > b.second->score(); });
    if (ranked.size() > static_cast<std::size_t>(options.beam_width)) ranked.resize(options.beam_width);
    std::map<Labels, Hyp> kept;
    for (const auto& [prefix, h] : ranked) kept.emplace(*prefix, *h);
    beam = std::move(kept);
    if (trace) trace->max_beam = std::max(trace->max_beam, beam.size());
  }

  const Labels* best = nullptr;
  double best_score = kNegInf;
  for (const auto& [prefix, h] : beam) {
    double s = h.score();
    if (use_lm) s += options.lm_weight * lm->logprob(prefix, lm->eos());
    if (best == nullptr || s > best_score) {
      best = &prefix;
      best_score = s;
    }
  }
  return best ? *best : Labels{};
}

}  // namespace fsia
