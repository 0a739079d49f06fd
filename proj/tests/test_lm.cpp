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

#include <cmath>
#include <map>
#include <random>

#include "doctest.h"
#include "fsia/ctc.hpp"
#include "fsia/error.hpp"
#include "fsia/lm.hpp"

using namespace fsia;

namespace {

Eigen::MatrixXd random_posteriors(std::mt19937_64& rng, int T, int K) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Eigen::MatrixXd p(T, K);
  for (int t = 0; t < T; ++t) {
    for (int k = 0; k < K; ++k) p(t, k) = u(rng);
    p.row(t) /= p.row(t).sum();
  }
  return p;
}

// Exhaustive MAP over collapsed labelings; ties go to the smaller labeling.
std::pair<Labels, double> exhaustive_map(const Eigen::MatrixXd& p) {
  const int T = static_cast<int>(p.rows()), K = static_cast<int>(p.cols());
  std::map<Labels, double> mass;
  std::vector<int> path(T, 0);
  while (true) {
    double prob = 1;
    for (int t = 0; t < T; ++t) prob *= p(t, path[t]);
    mass[collapse(path)] += prob;
    int t = 0;
    while (t < T && ++path[t] == K) path[t++] = 0;
    if (t == T) break;
  }
  auto best = mass.begin();
  for (auto it = mass.begin(); it != mass.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return *best;
}

double labeling_mass(const Eigen::MatrixXd& p, const Labels& l) {
  const int T = static_cast<int>(p.rows()), K = static_cast<int>(p.cols());
  double m = 0;
  std::vector<int> path(T, 0);
  while (true) {
    double prob = 1;
    for (int t = 0; t < T; ++t) prob *= p(t, path[t]);
    if (collapse(path) == l) m += prob;
    int t = 0;
    while (t < T && ++path[t] == K) path[t++] = 0;
    if (t == T) break;
  }
  return m;
}

}  // namespace

TEST_CASE("witten-bell hand-computed bigram") {
  const Alphabet ab("ab");
  const std::vector<std::string> corpus{"ab"};
  const auto lm = CharNGramLM::train(ab, corpus, 2);
  const Labels a{1};
  CHECK(std::exp(lm.logprob(a, 2)) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  // Unigram context: counts a, b, $ once each -> (1 + 3/3) / (3 + 3).
  const Labels none;
  const auto uni = CharNGramLM::train(ab, corpus, 1);
  CHECK(std::exp(uni.logprob(none, 2)) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(lm.count("a", 'b') == 1);
  CHECK(lm.count("^", 'a') == 1);
  CHECK(lm.count("b", 'a') == 0);
}

TEST_CASE("conditional distributions sum to one") {
  const Alphabet abc("abcd");
  const std::vector<std::string> corpus{"abc", "abd", "dcba", "aa", "b", "cab"};
  std::mt19937_64 rng(3);
  for (int order = 1; order <= 4; ++order) {
    const auto lm = CharNGramLM::train(abc, corpus, order);
    for (int trial = 0; trial < 30; ++trial) {
      Labels prefix;
      const int len = static_cast<int>(rng() % 5);
      for (int i = 0; i < len; ++i) prefix.push_back(1 + static_cast<int>(rng() % 4));
      double total = 0;
      for (int s = 1; s <= lm.eos(); ++s) {
        const double lp = lm.logprob(prefix, s);
        CHECK(std::isfinite(lp));
        total += std::exp(lp);
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("uniform model and perplexity") {
  const Alphabet abc("abc");
  const auto lm = CharNGramLM::uniform(abc);
  const Labels p{1, 2};
  CHECK(std::exp(lm.logprob(p, 3)) == doctest::Approx(0.25));
  const std::vector<std::string> words{"abc", "a"};
  CHECK(perplexity(lm, words) == doctest::Approx(4.0).epsilon(1e-12));
  // A model trained on the corpus beats uniform on it.
  const auto trained = CharNGramLM::train(abc, words, 3);
  CHECK(perplexity(trained, words) < 4.0);
}

TEST_CASE("lm rejects bad input") {
  const Alphabet ab("ab");
  const std::vector<std::string> bad{"abz"};
  CHECK_THROWS_AS(CharNGramLM::train(ab, bad, 2), Error);
  const std::vector<std::string> ok{"ab"};
  CHECK_THROWS_AS(CharNGramLM::train(ab, ok, 0), Error);
  const auto lm = CharNGramLM::train(ab, ok, 2);
  CHECK_THROWS_AS(lm.logprob(Labels{}, 0), Error);
  CHECK_THROWS_AS(lm.logprob(Labels{}, 4), Error);
  CHECK_THROWS_AS(CharNGramLM::parse("garbage\n"), Error);
}

TEST_CASE("serialization round trip preserves probabilities") {
  const Alphabet abc("abc");
  const std::vector<std::string> corpus{"abc", "cab", "bb", "acca"};
  const auto lm = CharNGramLM::train(abc, corpus, 3);
  const auto back = CharNGramLM::parse(lm.serialize());
  CHECK(back.order() == 3);
  CHECK(back.alphabet().letters() == "abc");
  CHECK(back.serialize() == lm.serialize());
  for (const Labels& prefix : {Labels{}, Labels{1}, Labels{3, 1}, Labels{2, 2, 2}}) {
    for (int s = 1; s <= lm.eos(); ++s) CHECK(back.logprob(prefix, s) == lm.logprob(prefix, s));
  }
}

TEST_CASE("beam decode equals exhaustive MAP without LM") {
  std::mt19937_64 rng(17);
  BeamOptions opt;
  opt.beam_width = 1 << 10;
  opt.lm_weight = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int T = 1 + static_cast<int>(rng() % 5);
    const int K = 2 + static_cast<int>(rng() % 2);
    const auto p = random_posteriors(rng, T, K);
    const auto [map_labels, map_mass] = exhaustive_map(p);
    const Labels got = beam_decode(p, nullptr, opt);
    CHECK(labeling_mass(p, got) >= map_mass * (1 - 1e-12));
  }
}

TEST_CASE("beam decode handles degenerate inputs") {
  BeamOptions opt;
  Eigen::MatrixXd all_blank = Eigen::MatrixXd::Zero(3, 3);
  all_blank.col(0).setOnes();
  CHECK(beam_decode(all_blank, nullptr, opt).empty());
  Eigen::MatrixXd one_hot = Eigen::MatrixXd::Zero(4, 3);
  one_hot(0, 1) = one_hot(1, 0) = one_hot(2, 1) = one_hot(3, 2) = 1;
  CHECK(beam_decode(one_hot, nullptr, opt) == Labels{1, 1, 2});
  BeamTrace trace;
  opt.beam_width = 2;
  std::mt19937_64 rng(1);
  beam_decode(random_posteriors(rng, 5, 3), nullptr, opt, &trace);
  CHECK(trace.max_beam <= 2);
  opt.beam_width = 0;
  CHECK_THROWS_AS(beam_decode(one_hot, nullptr, opt), Error);
}

TEST_CASE("beam width 1 without LM picks the best single-prefix path") {
  Eigen::MatrixXd p(3, 3);
  p << 0.1, 0.8, 0.1,
       0.7, 0.2, 0.1,
       0.1, 0.1, 0.8;
  BeamOptions opt;
  opt.beam_width = 1;
  CHECK(beam_decode(p, nullptr, opt) == Labels{1, 2});
}

TEST_CASE("LM fusion shifts ambiguous decisions toward likely words") {
  const Alphabet ab("ab");
  // Acoustics slightly prefer "aa".
  Eigen::MatrixXd p(3, 3);
  p << 0.02, 0.96, 0.02,
       0.60, 0.20, 0.20,
       0.10, 0.60, 0.30;
  BeamOptions opt;
  opt.lm_weight = 0;
  const Labels plain = beam_decode(p, nullptr, opt);
  const std::vector<std::string> corpus(20, "ab");
  const auto lm = CharNGramLM::train(ab, corpus, 2);
  opt.lm_weight = 2.0;
  const Labels fused = beam_decode(p, &lm, opt);
  CHECK(plain == Labels{1, 1});
  CHECK(fused == Labels{1, 2});
}

TEST_CASE("insertion bias trades deletions for insertions") {
  Eigen::MatrixXd p(4, 2);
  p << 0.6, 0.4,
       0.6, 0.4,
       0.6, 0.4,
       0.6, 0.4;
  BeamOptions opt;
  opt.insertion_bias = 0;
  const auto base = beam_decode(p, nullptr, opt);
  opt.insertion_bias = 5.0;
  const auto biased = beam_decode(p, nullptr, opt);
  CHECK(biased.size() > base.size());
  opt.insertion_bias = -5.0;
  CHECK(beam_decode(p, nullptr, opt).empty());
}
