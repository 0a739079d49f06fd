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

#include <random>

#include "doctest.h"
#include "fsia/model.hpp"

using namespace fsia;

namespace {

FrameSequence random_frames(std::mt19937_64& rng, int T, int side) {
  std::uniform_real_distribution<float> u(0.f, 1.f);
  FrameSequence frames;
  for (int t = 0; t < T; ++t) {
    Frame f(side, side);
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = u(rng);
    frames.push_back(f);
  }
  return frames;
}

struct Tiny {
  ModelParams<double> params;
  FrameSequence frames;
  std::vector<PriorMap> priors;
  Labels target{1, 2};
};

Tiny make_tiny(std::uint64_t seed) {
  Tiny t;
  t.params = init_params<double>(ModelConfig::tiny(3), seed);
  std::mt19937_64 rng(seed + 100);
  t.frames = random_frames(rng, 3, 16);
  t.priors = motion_priors(t.frames, 3, 3);
  return t;
}

bool params_equal(const ModelParams<double>& a, const ModelParams<double>& b) {
  bool eq = true;
  std::vector<double> va, vb;
  a.for_each_tensor([&](const std::string&, const double* d, Eigen::Index r, Eigen::Index c) { va.insert(va.end(), d, d + r * c); });
  b.for_each_tensor([&](const std::string&, const double* d, Eigen::Index r, Eigen::Index c) { vb.insert(vb.end(), d, d + r * c); });
  eq = va == vb;
  return eq;
}

double max_abs(const ModelParams<double>& p) {
  double m = 0;
  p.for_each_tensor([&](const std::string&, const double* d, Eigen::Index r, Eigen::Index c) {
    for (Eigen::Index i = 0; i < r * c; ++i) m = std::max(m, std::abs(d[i]));
  });
  return m;
}

}  // namespace

TEST_CASE("config geometry") {
  ModelConfig def;
  CHECK(def.grid_side() == 14);
  CHECK(ModelConfig::tiny(3).grid_side() == 3);
  ModelConfig bad = def;
  bad.hidden = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = def;
  bad.input_side = 2;
  bad.conv = {{4, 5, 1, 0}};
  CHECK_THROWS_AS(init_params<double>(bad, 1), Error);
}

TEST_CASE("init_params is deterministic and shaped by the config") {
  ModelConfig cfg = ModelConfig::tiny(3);
  cfg.hidden = 8;
  auto a = init_params<double>(cfg, 42);
  auto b = init_params<double>(cfg, 42);
  auto c = init_params<double>(cfg, 43);
  CHECK(params_equal(a, b));
  CHECK_FALSE(params_equal(a, c));
  CHECK(a.cls_w.rows() == 4);
  CHECK(a.cls_w.cols() == 8);
  CHECK(a.lstm_bias.segment(8, 8).isOnes());
  CHECK(a.lstm_bias.segment(0, 8).isZero());
}

TEST_CASE("zero attention scores give an exactly uniform beta") {
  Tiny t = make_tiny(1);
  t.params.att_score.setZero();
  auto out = forward_sequence(t.params, t.frames, t.priors);
  for (const auto& beta : out.beta) {
    CHECK((beta.array() == 1.0 / 9.0).all());
  }
}

TEST_CASE("alpha = 0 leaves attention equal to beta") {
  Tiny t = make_tiny(2);
  t.params.config.alpha = 0.0;
  auto out = forward_sequence(t.params, t.frames, t.priors);
  for (std::size_t i = 0; i < out.beta.size(); ++i) CHECK(out.attention[i] == out.beta[i]);
}

TEST_CASE("a uniform prior cancels in the normalization") {
  Tiny t = make_tiny(3);
  std::vector<PriorMap> flat(3, PriorMap::Constant(3, 3, 0.37));
  auto out = forward_sequence(t.params, t.frames, flat);
  for (std::size_t i = 0; i < out.beta.size(); ++i) {
    CHECK((out.attention[i] - out.beta[i]).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("attention maps and posteriors are distributions") {
  Tiny t = make_tiny(4);
  auto out = forward_sequence(t.params, t.frames, t.priors);
  for (Eigen::Index r = 0; r < out.posteriors.rows(); ++r) {
    CHECK(std::abs(out.posteriors.row(r).sum() - 1.0) <= 1e-9);
  }
  for (std::size_t i = 0; i < out.attention.size(); ++i) {
    CHECK((out.attention[i].array() >= 0).all());
    CHECK(std::abs(out.attention[i].sum() - 1.0) <= 1e-6);
    CHECK(std::abs(out.beta[i].sum() - 1.0) <= 1e-6);
  }
}

TEST_CASE("forward reports the first non-finite frame") {
  Tiny t = make_tiny(5);
  t.frames[1](0, 0) = std::numeric_limits<float>::quiet_NaN();
  try {
    forward_sequence(t.params, t.frames, t.priors);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonFinite);
    CHECK(std::string(e.what()).find("frame 1") != std::string::npos);
  }
}

TEST_CASE("forward validates prior shapes") {
  Tiny t = make_tiny(5);
  std::vector<PriorMap> wrong(3, PriorMap::Ones(4, 4));
  CHECK_THROWS_AS(forward_sequence(t.params, t.frames, wrong), Error);
}

TEST_CASE("backward is linear in the upstream gradient") {
  Tiny t = make_tiny(6);
  auto out = forward_sequence(t.params, t.frames, t.priors);
  MatrixX<double> zero = MatrixX<double>::Zero(3, 4);
  CHECK(max_abs(backward_sequence(t.params, out.cache, zero)) == 0.0);

  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  MatrixX<double> d(3, 4);
  for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = n(rng);
  auto g1 = backward_sequence(t.params, out.cache, d);
  auto g2 = backward_sequence(t.params, out.cache, MatrixX<double>(2.0 * d));
  accumulate(g2, g1, -2.0);
  CHECK(max_abs(g2) <= 1e-12 * std::max(1.0, max_abs(g1)));
}

TEST_CASE("backward rejects a mismatched cache") {
  Tiny t = make_tiny(7);
  auto out = forward_sequence(t.params, t.frames, t.priors);
  CHECK_THROWS_AS(backward_sequence(t.params, out.cache, MatrixX<double>(MatrixX<double>::Zero(2, 4))), Error);
  auto other = init_params<double>(ModelConfig::tiny(4), 1);
  CHECK_THROWS_AS(backward_sequence(other, out.cache, MatrixX<double>(MatrixX<double>::Zero(3, 5))), Error);
}

TEST_CASE("end-to-end gradient matches central differences") {
  for (std::uint64_t seed : {11, 12, 13}) {
    Tiny t = make_tiny(seed);
    GradCheckReport r = finite_diff_check(t.params, t.frames, t.priors, t.target);
    CHECK(r.checked == t.params.num_scalars());
    CHECK(r.max_rel_error < 1e-3);
    GradCheckReport again = finite_diff_check(t.params, t.frames, t.priors, t.target);
    CHECK(again.max_rel_error == r.max_rel_error);
  }
}

TEST_CASE("gradient check detects a corrupted gradient") {
  Tiny t = make_tiny(11);
  GradCheckOptions opt;
  opt.corrupt_index = 5;
  GradCheckReport r = finite_diff_check(t.params, t.frames, t.priors, t.target, opt);
  CHECK(r.max_rel_error > 1e-1);
  CHECK(r.worst_index == 5);
}

TEST_CASE("gradient with dropout matches finite differences under a fixed mask") {
  Tiny t = make_tiny(14);
  t.params.config.conv = {{2, 3, 2, 0}, {3, 3, 1, 0}, {3, 3, 1, 0}};
  t.params.config.input_side = 16;
  t.params.config.dropout = true;
  t.params.config.dropout_rate = 0.3;
  t.params = init_params<double>(t.params.config, 14);
  REQUIRE(t.params.config.grid_side(16) == 3);
  auto loss = [&](const ModelParams<double>& p) {
    std::mt19937_64 rng(99);
    return ctc_loss(forward_sequence(p, t.frames, t.priors, &rng).posteriors, t.target);
  };
  std::mt19937_64 rng(99);
  auto lg = loss_and_grad(t.params, t.frames, t.priors, t.target, &rng);
  CHECK(lg.loss == loss(t.params));
  ModelParams<double> probe = t.params;
  auto slots = model_detail::flat_slots(probe);
  auto grads = model_detail::flat_slots(lg.grads);
  double worst = 0;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    double saved = *slots[k];
    *slots[k] = saved + 1e-4;
    double up = loss(probe);
    *slots[k] = saved - 1e-4;
    double down = loss(probe);
    *slots[k] = saved;
    double num = (up - down) / 2e-4;
    worst = std::max(worst, std::abs(num - *grads[k]) / std::max({std::abs(num), std::abs(*grads[k]), 1e-6}));
  }
  CHECK(worst < 1e-3);
  // Without an rng the same config runs deterministically, dropout off.
  auto a = forward_sequence(t.params, t.frames, t.priors);
  auto off = t.params;
  off.config.dropout = false;
  auto b = forward_sequence(off, t.frames, t.priors);
  CHECK(a.posteriors == b.posteriors);
}

TEST_CASE("sgd_step") {
  Tiny t = make_tiny(15);
  auto g = t.params.zeros_like();
  CHECK(params_equal(sgd_step(t.params, g, 0.1), t.params));
  g.cls_b.setConstant(0.5);
  CHECK(params_equal(sgd_step(t.params, g, 0.0), t.params));
  t.params.cls_b(0) = 1.0;
  CHECK(sgd_step(t.params, g, 0.1).cls_b(0) == doctest::Approx(0.95).epsilon(1e-15));
}

TEST_CASE("checkpoint round trip is exact") {
  ModelConfig cfg;
  cfg.alphabet_size = 5;
  auto p = init_params<float>(cfg, 77);
  std::string bytes = encode_checkpoint(p);
  CHECK(bytes.substr(0, 5) == "FSIA1");
  auto q = decode_checkpoint(bytes);
  CHECK(q.config == p.config);
  CHECK(encode_checkpoint(q) == bytes);
  CHECK(q.lstm_input == p.lstm_input);
  CHECK_THROWS_AS(decode_checkpoint("FSIA0xxxx"), Error);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), Error);
}

TEST_CASE("float forward matches double forward") {
  Tiny t = make_tiny(16);
  auto pf = t.params.cast<float>();
  auto a = forward_sequence(pf, t.frames, t.priors);
  auto b = forward_sequence(pf.cast<double>(), t.frames, t.priors);
  CHECK((a.posteriors.cast<double>() - b.posteriors).cwiseAbs().maxCoeff() < 1e-5);
}
