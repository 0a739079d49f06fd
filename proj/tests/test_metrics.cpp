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

#include <algorithm>
#include <numeric>
#include <random>
#include <string>

#include "doctest.h"
#include "fsia/error.hpp"
#include "fsia/metrics.hpp"

using namespace fsia;

namespace {

// Two-row Levenshtein, written independently of align_letters.
int levenshtein(const std::string& a, const std::string& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1])});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string random_word(std::mt19937_64& rng, int max_len, int letters) {
  std::string s(rng() % (max_len + 1), 'a');
  for (char& c : s) c = static_cast<char>('a' + rng() % letters);
  return s;
}

}  // namespace

TEST_CASE("letter accuracy examples") {
  CHECK(letter_accuracy("helo", "hello") == 0.8);
  CHECK(letter_accuracy("abc", "abc") == 1.0);
  CHECK(letter_accuracy("", "abc") == 0.0);
  CHECK(letter_accuracy("xxxxxx", "ab") == -2.0);
  const auto a = align_letters("", "abc");
  CHECK(a.deletions == 3);
  CHECK(a.substitutions == 0);
  CHECK(a.insertions == 0);
  CHECK_THROWS_AS(letter_accuracy("a", ""), Error);
}

TEST_CASE("substitutions are preferred over insertion-deletion pairs") {
  const auto a = align_letters("abd", "abc");
  CHECK(a.substitutions == 1);
  CHECK(a.deletions == 0);
  CHECK(a.insertions == 0);
}

TEST_CASE("alignment agrees with an independent Levenshtein oracle") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 3000; ++trial) {
    const std::string ref = "a" + random_word(rng, 7, 4);
    const std::string hyp = random_word(rng, 8, 4);
    const auto al = align_letters(hyp, ref);
    CHECK(al.errors() == levenshtein(hyp, ref));
    CHECK(al.substitutions + al.deletions <= al.reference_length);
    CHECK(al.substitutions >= 0);
    // Edit operations account for both lengths.
    CHECK(static_cast<int>(ref.size()) - al.deletions + al.insertions == static_cast<int>(hyp.size()));
    CHECK(letter_accuracy(hyp, ref) == 1.0 - static_cast<double>(levenshtein(hyp, ref)) / ref.size());
  }
}

TEST_CASE("letter accuracy is invariant to relabeling") {
  std::mt19937_64 rng(43);
  std::string perm = "abcdef";
  for (int trial = 0; trial < 500; ++trial) {
    const std::string ref = "a" + random_word(rng, 6, 6);
    const std::string hyp = random_word(rng, 7, 6);
    CHECK(letter_accuracy(ref, ref) == 1.0);
    std::shuffle(perm.begin(), perm.end(), rng);
    auto map = [&](std::string s) {
      for (char& c : s) c = perm[c - 'a'];
      return s;
    };
    CHECK(letter_accuracy(map(hyp), map(ref)) == letter_accuracy(hyp, ref));
  }
}

TEST_CASE("corpus accumulation") {
  EditAlignment total = align_letters("helo", "hello");
  total += align_letters("abc", "abc");
  CHECK(total.reference_length == 8);
  CHECK(total.errors() == 1);
  CHECK(total.accuracy() == 1.0 - 1.0 / 8.0);
}

TEST_CASE("detection examples") {
  const Box gt{0, 0, 10, 10};
  auto r = detection_eval({gt, gt}, {gt, gt});
  CHECK(r.avg_iou == 1.0);
  CHECK(r.miss_rate == 0.0);
  CHECK(r.frames == 2);
  r = detection_eval({Box{20, 20, 30, 30}}, {gt});
  CHECK(r.avg_iou == 0.0);
  CHECK(r.miss_rate == 1.0);
  r = detection_eval({Box{0, 0, 5, 10}}, {gt});
  CHECK(r.miss_rate == 0.5);
  CHECK(r.avg_iou == 0.5);
  // Frames without ground truth are skipped.
  r = detection_eval({Box{20, 20, 30, 30}, gt}, {std::nullopt, gt});
  CHECK(r.frames == 1);
  CHECK(r.avg_iou == 1.0);
  CHECK_THROWS_AS(detection_eval({gt}, {std::nullopt}), Error);
  CHECK_THROWS_AS(detection_eval({gt, gt}, {gt}), Error);
}
