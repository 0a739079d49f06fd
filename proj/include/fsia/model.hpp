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

// Attention-based convolutional-recurrent encoder.
//
// Per frame t:
//   f_t     conv stack output, C x P with P = h*w cells in row-major order
//   v_t     u^T tanh(W_d e_{t-1} + W_f f_t[:, p])
//   beta_t  softmax(v_t) over all P cells
//   A_t     beta_t * M_t^alpha / sum(beta_t * M_t^alpha)
//   h_t     f_t A_t
//   e_t     LSTM(e_{t-1}, h_t)
//   logits  W_e e_t + b_e, posteriors = softmax(logits)
//
// Everything is templated on the scalar type: double for gradient checks,
// float for training.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "fsia/ctc.hpp"
#include "fsia/error.hpp"
#include "fsia/imaging.hpp"

namespace fsia {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct ConvLayerConfig {
  int out_channels = 8;
  int kernel = 3;
  int stride = 2;
  int padding = 1;

  friend bool operator==(const ConvLayerConfig&, const ConvLayerConfig&) = default;
};

struct ModelConfig {
  int input_side = 112;
  std::vector<ConvLayerConfig> conv = {{8, 3, 2, 1}, {16, 3, 2, 1}, {32, 3, 2, 1}};
  int attention_dim = 32;
  int hidden = 64;
  int alphabet_size = 8;
  double alpha = 1.0;  // prior exponent
  bool dropout = false;
  double dropout_rate = 0.2;

  int feature_channels() const { return conv.empty() ? 1 : conv.back().out_channels; }
  int num_labels() const { return alphabet_size + 1; }
  /// Feature lattice side for a square input of `side` pixels.
  int grid_side(int side) const;
  int grid_side() const { return grid_side(input_side); }
  /// Throws kInvalidArgument on inconsistent dimensions.
  void validate() const;

  /// 16x16 input, two unpadded stride-2 layers -> 3x3 lattice, hidden 4.
  static ModelConfig tiny(int alphabet_size);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline int conv_output_size(int in, const ConvLayerConfig& c) {
  return (in + 2 * c.padding - c.kernel) / c.stride + 1;
}

inline int ModelConfig::grid_side(int side) const {
  for (const auto& c : conv) side = conv_output_size(side, c);
  return side;
}

template <typename Scalar>
struct ModelParams {
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;

  ModelConfig config;
  std::vector<Matrix> conv_w;  // out x (in * k * k)
  std::vector<Vector> conv_b;
  Matrix att_state;    // W_d: attention_dim x hidden
  Matrix att_feature;  // W_f: attention_dim x C
  Vector att_score;    // u_f
  Matrix lstm_input;      // 4H x C, gate order i, f, g, o
  Matrix lstm_recurrent;  // 4H x H
  Vector lstm_bias;       // 4H
  Matrix cls_w;  // W^e: (|L| + 1) x H
  Vector cls_b;  // b^e

  /// Visits every trainable tensor in declaration order as
  /// visit(name, data, rows, cols).
  template <typename Visit>
  void for_each_tensor(Visit&& visit) {
    for (std::size_t l = 0; l < conv_w.size(); ++l) {
      visit("conv" + std::to_string(l) + ".w", conv_w[l].data(), conv_w[l].rows(), conv_w[l].cols());
      visit("conv" + std::to_string(l) + ".b", conv_b[l].data(), conv_b[l].rows(), Eigen::Index{1});
    }
    visit(std::string("att.W_d"), att_state.data(), att_state.rows(), att_state.cols());
    visit(std::string("att.W_f"), att_feature.data(), att_feature.rows(), att_feature.cols());
    visit(std::string("att.u_f"), att_score.data(), att_score.rows(), Eigen::Index{1});
    visit(std::string("lstm.W_x"), lstm_input.data(), lstm_input.rows(), lstm_input.cols());
    visit(std::string("lstm.W_h"), lstm_recurrent.data(), lstm_recurrent.rows(), lstm_recurrent.cols());
    visit(std::string("lstm.b"), lstm_bias.data(), lstm_bias.rows(), Eigen::Index{1});
    visit(std::string("cls.W_e"), cls_w.data(), cls_w.rows(), cls_w.cols());
    visit(std::string("cls.b_e"), cls_b.data(), cls_b.rows(), Eigen::Index{1});
  }

  template <typename Visit>
  void for_each_tensor(Visit&& visit) const {
    const_cast<ModelParams*>(this)->for_each_tensor(
        [&](const std::string& name, Scalar* data, Eigen::Index rows, Eigen::Index cols) {
          visit(name, static_cast<const Scalar*>(data), rows, cols);
        });
  }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for_each_tensor([&](const std::string&, const Scalar*, Eigen::Index r, Eigen::Index c) {
      n += static_cast<std::size_t>(r * c);
    });
    return n;
  }

  /// Same shapes, all zeros.
  ModelParams zeros_like() const {
    ModelParams z = *this;
    z.for_each_tensor([](const std::string&, Scalar* d, Eigen::Index r, Eigen::Index c) {
      std::fill(d, d + r * c, Scalar(0));
    });
    return z;
  }

  template <typename Other>
  ModelParams<Other> cast() const {
    ModelParams<Other> out;
    out.config = config;
    for (const auto& w : conv_w) out.conv_w.push_back(w.template cast<Other>());
    for (const auto& b : conv_b) out.conv_b.push_back(b.template cast<Other>());
    out.att_state = att_state.template cast<Other>();
    out.att_feature = att_feature.template cast<Other>();
    out.att_score = att_score.template cast<Other>();
    out.lstm_input = lstm_input.template cast<Other>();
    out.lstm_recurrent = lstm_recurrent.template cast<Other>();
    out.lstm_bias = lstm_bias.template cast<Other>();
    out.cls_w = cls_w.template cast<Other>();
    out.cls_b = cls_b.template cast<Other>();
    return out;
  }

  bool all_finite() const {
    bool ok = true;
    for_each_tensor([&](const std::string&, const Scalar* d, Eigen::Index r, Eigen::Index c) {
      for (Eigen::Index i = 0; i < r * c; ++i) ok = ok && std::isfinite(d[i]);
    });
    return ok;
  }
};

/// Intermediates of one frame, retained for the backward pass.
template <typename Scalar>
struct StepCache {
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;

  std::vector<int> in_side;       // per conv layer, square input side
  std::vector<int> out_side;      // per conv layer
  std::vector<Matrix> cols;       // im2col of each layer input
  std::vector<Matrix> acts;       // post-ReLU output of each layer
  std::vector<Vector> drop_mask;  // channel mask applied to acts[l] (empty = none)
  Matrix features;                // dropout-free alias of acts.back()
  Matrix att_hidden;              // tanh(W_d e + W_f f), attention_dim x P
  Vector beta;                    // P
  Vector prior_pow;               // M^alpha (empty when alpha == 0)
  Scalar prior_norm = 1;          // sum(beta * M^alpha)
  Vector attention;               // A, P
  Vector context;                 // h
  Vector gate_i, gate_f, gate_g, gate_o;
  Vector cell_prev, cell, hidden_prev, hidden;
};

template <typename Scalar>
struct SequenceCache {
  ModelConfig config;
  int grid = 0;
  std::vector<StepCache<Scalar>> steps;

  /// Bytes held in frame-sized buffers (layer inputs and activations).
  std::size_t frame_buffer_bytes() const {
    std::size_t n = 0;
    for (const auto& s : steps) {
      for (const auto& c : s.cols) n += static_cast<std::size_t>(c.size());
      for (const auto& a : s.acts) n += static_cast<std::size_t>(a.size());
    }
    return n * sizeof(Scalar);
  }
};

template <typename Scalar>
struct ForwardResult {
  MatrixX<Scalar> logits;      // T x (|L| + 1)
  MatrixX<Scalar> posteriors;  // T x (|L| + 1), rows sum to 1
  std::vector<MatrixX<Scalar>> beta;       // h x w per frame
  std::vector<MatrixX<Scalar>> attention;  // A_t, h x w per frame
  SequenceCache<Scalar> cache;
};

template <typename Scalar>
ModelParams<Scalar> init_params(const ModelConfig& config, std::uint64_t seed);

/// Runs the encoder over a sequence. `priors` may be empty (no prior,
/// A = beta); otherwise one map per frame sized to the feature lattice.
/// Dropout is applied only when config.dropout is set and `rng` is given.
template <typename Scalar>
ForwardResult<Scalar> forward_sequence(const ModelParams<Scalar>& params,
                                       const FrameSequence& frames,
                                       const std::vector<PriorMap>& priors,
                                       std::mt19937_64* rng = nullptr);

/// Reverse mode through classifier, LSTM, attention and conv stack.
template <typename Scalar>
ModelParams<Scalar> backward_sequence(const ModelParams<Scalar>& params,
                                      const SequenceCache<Scalar>& cache,
                                      const MatrixX<Scalar>& d_logits);

/// p - lr * g, elementwise.
template <typename Scalar>
ModelParams<Scalar> sgd_step(const ModelParams<Scalar>& params,
                             const ModelParams<Scalar>& grads, Scalar lr);

/// In-place accumulation acc += scale * g.
template <typename Scalar>
void accumulate(ModelParams<Scalar>& acc, const ModelParams<Scalar>& g, Scalar scale = 1);

template <typename Scalar>
struct LossAndGrad {
  double loss = 0;
  ModelParams<Scalar> grads;
};

/// CTC loss of `target` and its gradient with respect to every parameter.
template <typename Scalar>
LossAndGrad<Scalar> loss_and_grad(const ModelParams<Scalar>& params,
                                  const FrameSequence& frames,
                                  const std::vector<PriorMap>& priors,
                                  const Labels& target,
                                  std::mt19937_64* rng = nullptr);

struct GradCheckOptions {
  double step = 1e-4;
  /// Denominator floor of the relative error.
  double floor = 1e-6;
  /// When >= 0, the analytic gradient of this flat parameter index gets
  /// +corrupt_delta before comparison (sensitivity control).
  long corrupt_index = -1;
  double corrupt_delta = 1.0;
};

struct GradCheckReport {
  double max_rel_error = 0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Compares backward_sequence o ctc_grad against central differences of the
/// end-to-end CTC loss, over every parameter. 64-bit only.
GradCheckReport finite_diff_check(const ModelParams<double>& params,
                                  const FrameSequence& frames,
                                  const std::vector<PriorMap>& priors,
                                  const Labels& target,
                                  const GradCheckOptions& options = {});

/// Tiny-config instance (16x16 frames, T = 3, hidden 4, 3x3 grid) with
/// uniform random pixels. Central differences are only meaningful away
/// from ReLU kinks; `min_preactivation` reports the closest one.
struct GradCheckInstance {
  ModelParams<double> params;
  FrameSequence frames;
  std::vector<PriorMap> priors;
  Labels target{1, 2};
  double min_preactivation = 0;
};

GradCheckInstance make_gradcheck_instance(std::uint64_t seed);

/// Checkpoint: "FSIA1", u32 header length, JSON header (config + tensor
/// shapes), then little-endian float32 tensors in declaration order.
std::string encode_checkpoint(const ModelParams<float>& params);
ModelParams<float> decode_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& params);
ModelParams<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace fsia

#include "fsia/model_impl.hpp"
