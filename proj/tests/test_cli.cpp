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

#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "fsia/cli.hpp"
#include "fsia/model.hpp"
#include "fsia/util.hpp"

using namespace fsia;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "fsia");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fsia_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const std::vector<std::string> kSmallModel{"--input-side", "24", "--hidden", "8", "--optimizer", "adam",
                                           "--lr-schedule", "2@0.003", "--threads", "1"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void make_splits(const fs::path& root) {
  const std::vector<std::string> common{"--frame-side", "48", "--alphabet", "abcd", "--max-word", "3",
                                        "--lexicon-size", "8"};
  REQUIRE(run(with({"synth", "--out", (root / "train").string(), "--count", "10", "--seed", "1", "--prefix", "tr"},
                   common)) == 0);
  REQUIRE(run(with({"synth", "--out", (root / "dev").string(), "--count", "4", "--seed", "2", "--prefix", "dv"},
                   common)) == 0);
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  CHECK(run({"no-such-command"}) == 2);
  CHECK(run({}) == 2);
  CHECK(run({"synth", "--out", "x", "--bogus-flag"}) == 2);
  CHECK(run({"train"}) == 2);
  CHECK(run({"--version"}) == 0);
}

TEST_CASE("runtime failures exit 1") {
  CHECK(run({"eval", "--hyp", "/nonexistent/hyps.tsv"}) == 1);
  CHECK(run({"decode", "--run", "/nonexistent", "--data", "/nonexistent", "--out", "/tmp/x"}) == 1);
}

TEST_CASE("gradcheck subcommand") {
  CHECK(run({"gradcheck", "--seed", "11"}) == 0);
  CHECK(run({"gradcheck", "--seed", "11", "--corrupt-index", "5"}) == 1);
}

TEST_CASE("synth then train writes a checkpoint") {
  const fs::path root = scratch_dir("train");
  make_splits(root);
  CHECK(fs::exists(root / "train" / "manifest.jsonl"));
  CHECK(run(with({"train", "--train", (root / "train").string(), "--dev", (root / "dev").string(), "--out",
                  (root / "model").string()},
                 kSmallModel)) == 0);
  CHECK(fs::exists(root / "model" / "checkpoint.fsia"));
  const auto m = nlohmann::json::parse(read_file(root / "model" / "metrics.json"));
  CHECK(m.contains("letter_accuracy"));
  CHECK(load_checkpoint(root / "model" / "checkpoint.fsia").config.alphabet_size == 4);
  fs::remove_all(root);
}

TEST_CASE("zoom-train, decode, eval, detect-eval, lm-train, viz") {
  const fs::path root = scratch_dir("zoom");
  make_splits(root);
  const std::string train = (root / "train").string(), dev = (root / "dev").string();
  const auto zoom_args = with({"zoom-train", "--train", train, "--dev", dev, "--iters", "2", "--zoom-ratios", "0.7",
                               "--no-early-stop", "--lambda", "0.1", "--top-k", "2", "--seed", "3"},
                              kSmallModel);
  REQUIRE(run(with(zoom_args, {"--out", (root / "run_a").string()})) == 0);
  REQUIRE(run(with(zoom_args, {"--out", (root / "run_b").string()})) == 0);
  for (const char* it : {"iter_1", "iter_2"}) {
    CHECK(read_file(root / "run_a" / it / "checkpoint.fsia") == read_file(root / "run_b" / it / "checkpoint.fsia"));
    CHECK(read_file(root / "run_a" / it / "metrics.json") == read_file(root / "run_b" / it / "metrics.json"));
  }
  CHECK(fs::exists(root / "run_a" / "config.json"));

  const std::string lm = (root / "lm.txt").string();
  CHECK(run({"lm-train", "--data", train, "--dev", dev, "--out", lm, "--order", "3"}) == 0);
  CHECK(fs::exists(lm));

  CHECK(run({"decode", "--run", (root / "run_a").string(), "--data", dev, "--out", (root / "dec").string(), "--lm",
             lm, "--beam-width", "4", "--lm-weight", "0.5", "--insertion-bias", "0.1"}) == 0);
  const std::string hyps = read_file(root / "dec" / "hyps.tsv");
  CHECK(std::count(hyps.begin(), hyps.end(), '\n') == 4);
  CHECK(hyps.rfind("dv00000\t", 0) == 0);
  const auto m = nlohmann::json::parse(read_file(root / "dec" / "metrics.json"));
  for (const char* key : {"letter_accuracy", "avg_iou", "miss_rate", "perplexity"}) CHECK(m.contains(key));
  CHECK(m["perplexity"].is_number());

  CHECK(run({"eval", "--hyp", (root / "dec" / "hyps.tsv").string(), "--out", (root / "eval.json").string()}) == 0);
  const auto e = nlohmann::json::parse(read_file(root / "eval.json"));
  CHECK(e["letter_accuracy"].get<double>() == m["letter_accuracy"].get<double>());

  CHECK(run({"detect-eval", "--run", (root / "run_a").string(), "--data", dev, "--out",
             (root / "det.json").string()}) == 0);
  const auto d = nlohmann::json::parse(read_file(root / "det.json"));
  CHECK(d["avg_iou"].get<double>() >= 0.0);
  CHECK(d["miss_rate"].get<double>() <= 1.0);

  CHECK(run({"viz", "--run", (root / "run_a").string(), "--data", dev, "--out", (root / "viz").string()}) == 0);
  CHECK(fs::exists(root / "viz" / "attention_000.pgm"));
  CHECK(fs::exists(root / "viz" / "tube_000.pgm"));

  CHECK(run(with({"schedule-search", "--train", train, "--dev", dev, "--out", (root / "search").string(),
                  "--zoom-ratios", "0.9,0.7", "--beam", "1"},
                 kSmallModel)) == 0);
  CHECK(fs::exists(root / "search" / "schedule.json"));
  fs::remove_all(root);
}

TEST_CASE("hypothesis dumps must have three columns") {
  const fs::path root = scratch_dir("eval");
  write_file_atomic(root / "bad.tsv", "id\tonly-two\n");
  CHECK(run({"eval", "--hyp", (root / "bad.tsv").string()}) == 1);
  write_file_atomic(root / "good.tsv", "a\thelo\thello\n");
  CHECK(run({"eval", "--hyp", (root / "good.tsv").string(), "--out", (root / "m.json").string()}) == 0);
  CHECK(nlohmann::json::parse(read_file(root / "m.json"))["letter_accuracy"].get<double>() == 0.8);
  fs::remove_all(root);
}

TEST_CASE("bench-zoom-vs-enlarge") {
  CHECK(run({"bench-zoom-vs-enlarge", "--ratio", "0.5", "--input-side", "40"}) == 0);
}
