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

// Character n-gram language model (interpolated Witten-Bell) and CTC prefix
// beam search with LM fusion.

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fsia/ctc.hpp"

namespace fsia {

class CharNGramLM {
 public:
  static constexpr char kBos = '^';
  static constexpr char kEos = '$';

  /// Counts every context of length 0..order-1 (histories padded with BOS).
  /// Throws on an empty corpus or order < 1.
  static CharNGramLM train(const Alphabet& alphabet, std::span<const std::string> corpus, int order);

  /// No counts: every symbol gets 1 / (|L| + 1).
  static CharNGramLM uniform(const Alphabet& alphabet);

  int order() const { return order_; }
  const Alphabet& alphabet() const { return alphabet_; }
  /// Letters plus EOS.
  int vocab_size() const { return alphabet_.size() + 1; }
  /// Label used for EOS in logprob().
  int eos() const { return alphabet_.size() + 1; }

  /// log P(next | prefix); next is a letter label 1..|L| or eos().
  double logprob(std::span<const int> prefix, int next) const;

  std::uint64_t count(const std::string& context, char symbol) const;

  /// Header line "order=<n>\talphabet=<letters>", then sorted
  /// "context\tsymbol\tcount" rows.
  std::string serialize() const;
  static CharNGramLM parse(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static CharNGramLM load(const std::filesystem::path& path);

 private:
  struct ContextStats {
    std::map<char, std::uint64_t> next;
    std::uint64_t total = 0;
  };

  char symbol_char(int label) const;

  int order_ = 1;
  Alphabet alphabet_;
  std::map<std::string, ContextStats> table_;
};

/// exp(mean negative log-likelihood per symbol, EOS included).
double perplexity(const CharNGramLM& lm, std::span<const std::string> corpus);

struct BeamOptions {
  int beam_width = 16;
  double lm_weight = 0.4;       // gamma
  double insertion_bias = 0.0;  // delta, added per emitted letter
};

struct BeamTrace {
  std::size_t max_beam = 0;
};

/// CTC prefix beam search. Extending a prefix by letter c adds
/// gamma * log P_lm(c | prefix) + delta; final ranking adds
/// gamma * log P_lm(EOS | prefix). `lm` may be null (no LM term).
Labels beam_decode(const Eigen::MatrixXd& posteriors, const CharNGramLM* lm,
                   const BeamOptions& options, BeamTrace* trace = nullptr);

}  // namespace fsia
