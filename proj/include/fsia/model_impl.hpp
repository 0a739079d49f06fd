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

// Template definitions for fsia/model.hpp.

#pragma once

#include <algorithm>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace fsia {
namespace model_detail {

// Uniform in [-scale, scale) from the top 53 bits, identical across
// standard libraries.
inline double uniform_sym(std::mt19937_64& rng, double scale) {
  double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return (2.0 * u - 1.0) * scale;
}

template <typename Scalar>
void fill_uniform(MatrixX<Scalar>& m, std::mt19937_64& rng, double scale) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<Scalar>(uniform_sym(rng, scale));
  }
}

template <typename Scalar>
void fill_uniform(VectorX<Scalar>& v, std::mt19937_64& rng, double scale) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v.data()[i] = static_cast<Scalar>(uniform_sym(rng, scale));
  }
}

template <typename Scalar>
std::vector<Scalar*> flat_slots(ModelParams<Scalar>& p) {
  std::vector<Scalar*> out;
  p.for_each_tensor([&](const std::string&, Scalar* d, Eigen::Index r, Eigen::Index c) {
    for (Eigen::Index i = 0; i < r * c; ++i) out.push_back(d + i);
  });
  return out;
}

template <typename Scalar>
std::vector<std::pair<Scalar*, Eigen::Index>> tensor_spans(ModelParams<Scalar>& p) {
  std::vector<std::pair<Scalar*, Eigen::Index>> out;
  p.for_each_tensor([&](const std::string&, Scalar* d, Eigen::Index r, Eigen::Index c) {
    out.emplace_back(d, r * c);
  });
  return out;
}

template <typename Scalar>
void check_same_shapes(const ModelParams<Scalar>& a, const ModelParams<Scalar>& b) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> sa, sb;
  a.for_each_tensor([&](const std::string&, const Scalar*, Eigen::Index r, Eigen::Index c) {
    sa.emplace_back(r, c);
  });
  b.for_each_tensor([&](const std::string&, const Scalar*, Eigen::Index r, Eigen::Index c) {
    sb.emplace_back(r, c);
  });
  if (sa != sb) throw Error(ErrorCode::kShapeMismatch, "parameter shapes differ");
}

// Input is C x (side*side), one row per channel, cells row-major.
template <typename Scalar>
MatrixX<Scalar> im2col(const MatrixX<Scalar>& in, int side,
                       const ConvLayerConfig& conv, int out_side) {
  const int k = conv.kernel;
  const Eigen::Index channels = in.rows();
  MatrixX<Scalar> col = MatrixX<Scalar>::Zero(channels * k * k, out_side * out_side);
  for (Eigen::Index ch = 0; ch < channels; ++ch) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Eigen::Index row = (ch * k + ky) * k + kx;
        for (int oy = 0; oy < out_side; ++oy) {
          const int y = oy * conv.stride - conv.padding + ky;
          if (y < 0 || y >= side) continue;
          for (int ox = 0; ox < out_side; ++ox) {
            const int x = ox * conv.stride - conv.padding + kx;
            if (x < 0 || x >= side) continue;
            col(row, oy * out_side + ox) = in(ch, y * side + x);
          }
        }
      }
    }
  }
  return col;
}

template <typename Scalar>
MatrixX<Scalar> col2im(const MatrixX<Scalar>& col, Eigen::Index channels, int side,
                       const ConvLayerConfig& conv, int out_side) {
  const int k = conv.kernel;
  MatrixX<Scalar> out = MatrixX<Scalar>::Zero(channels, side * side);
  for (Eigen::Index ch = 0; ch < channels; ++ch) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Eigen::Index row = (ch * k + ky) * k + kx;
        for (int oy = 0; oy < out_side; ++oy) {
          const int y = oy * conv.stride - conv.padding + ky;
          if (y < 0 || y >= side) continue;
          for (int ox = 0; ox < out_side; ++ox) {
            const int x = ox * conv.stride - conv.padding + kx;
            if (x < 0 || x >= side) continue;
            out(ch, y * side + x) += col(row, oy * out_side + ox);
          }
        }
      }
    }
  }
  return out;
}

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return (Scalar(1) / (Scalar(1) + (-x.array()).exp())).matrix();
}

template <typename Scalar>
VectorX<Scalar> softmax(const VectorX<Scalar>& v) {
  VectorX<Scalar> e = (v.array() - v.maxCoeff()).exp().matrix();
  return e / e.sum();
}

inline bool dropout_after(const ModelConfig& cfg, std::size_t layer) {
  const std::size_t n = cfg.conv.size();
  // Between the last three conv layers: outputs of layers n-3 and n-2.
  return n >= 2 && layer + 2 <= n && layer + 3 >= n;
}

}  // namespace model_detail

inline ModelConfig ModelConfig::tiny(int alphabet_size) {
  ModelConfig c;
  c.input_side = 16;
  c.conv = {{2, 3, 2, 0}, {3, 3, 2, 0}};
  c.attention_dim = 4;
  c.hidden = 4;
  c.alphabet_size = alphabet_size;
  c.alpha = 1.0;
  return c;
}

inline void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidArgument, "model config: " + m); };
  if (input_side < 1) fail("input_side must be positive");
  if (conv.empty()) fail("need at least one conv layer");
  int side = input_side;
  for (const auto& c : conv) {
    if (c.out_channels < 1 || c.kernel < 1 || c.stride < 1 || c.padding < 0) fail("bad conv layer");
    side = conv_output_size(side, c);
    if (side < 1) fail("feature map collapses to zero size");
  }
  if (attention_dim < 1 || hidden < 1) fail("attention_dim and hidden must be positive");
  if (alphabet_size < 1) fail("alphabet_size must be positive");
  if (!(alpha >= 0) || !std::isfinite(alpha)) fail("alpha must be finite and >= 0");
  if (dropout_rate < 0 || dropout_rate >= 1) fail("dropout_rate must be in [0,1)");
}

template <typename Scalar>
ModelParams<Scalar> init_params(const ModelConfig& config, std::uint64_t seed) {
  using model_detail::fill_uniform;
  config.validate();
  std::mt19937_64 rng(seed);
  ModelParams<Scalar> p;
  p.config = config;
  int in_ch = 1;
  for (const auto& c : config.conv) {
    const int fan_in = in_ch * c.kernel * c.kernel;
    MatrixX<Scalar> w(c.out_channels, fan_in);
    fill_uniform(w, rng, std::sqrt(6.0 / fan_in));
    p.conv_w.push_back(std::move(w));
    p.conv_b.push_back(VectorX<Scalar>::Zero(c.out_channels));
    in_ch = c.out_channels;
  }
  const int C = config.feature_channels();
  const int H = config.hidden;
  const int D = config.attention_dim;
  p.att_state.resize(D, H);
  fill_uniform(p.att_state, rng, 1.0 / std::sqrt(double(H)));
  p.att_feature.resize(D, C);
  fill_uniform(p.att_feature, rng, 1.0 / std::sqrt(double(C)));
  p.att_score.resize(D);
  fill_uniform(p.att_score, rng, 1.0 / std::sqrt(double(D)));
  p.lstm_input.resize(4 * H, C);
  fill_uniform(p.lstm_input, rng, 1.0 / std::sqrt(double(H)));
  p.lstm_recurrent.resize(4 * H, H);
  fill_uniform(p.lstm_recurrent, rng, 1.0 / std::sqrt(double(H)));
  p.lstm_bias = VectorX<Scalar>::Zero(4 * H);
  p.lstm_bias.segment(H, H).setConstant(Scalar(1));
  p.cls_w.resize(config.num_labels(), H);
  fill_uniform(p.cls_w, rng, 1.0 / std::sqrt(double(H)));
  p.cls_b = VectorX<Scalar>::Zero(config.num_labels());
  return p;
}

template <typename Scalar>
ForwardResult<Scalar> forward_sequence(const ModelParams<Scalar>& params,
                                       const FrameSequence& frames,
                                       const std::vector<PriorMap>& priors,
                                       std::mt19937_64* rng) {
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;
  const ModelConfig& cfg = params.config;
  const auto T = static_cast<Eigen::Index>(frames.size());
  if (T == 0) throw Error(ErrorCode::kInvalidArgument, "forward: empty sequence");
  const int side = static_cast<int>(frames[0].rows());
  for (const Frame& f : frames) {
    if (f.rows() != side || f.cols() != side) {
      throw Error(ErrorCode::kShapeMismatch, "forward: frames must be square and equal-sized");
    }
  }
  const int grid = cfg.grid_side(side);
  if (grid < 1) throw Error(ErrorCode::kShapeMismatch, "forward: frame too small");
  const Eigen::Index P = Eigen::Index{grid} * grid;
  if (!priors.empty()) {
    if (static_cast<Eigen::Index>(priors.size()) != T) {
      throw Error(ErrorCode::kShapeMismatch, "forward: one prior per frame required");
    }
    for (const auto& m : priors) {
      if (m.rows() != grid || m.cols() != grid) {
        throw Error(ErrorCode::kShapeMismatch, "forward: prior does not match feature lattice");
      }
    }
  }
  const bool use_prior = !priors.empty() && cfg.alpha != 0.0;
  const bool use_dropout = cfg.dropout && rng != nullptr && cfg.dropout_rate > 0;
  const int H = cfg.hidden;
  const int K = cfg.num_labels();

  ForwardResult<Scalar> out;
  out.cache.config = cfg;
  out.cache.grid = grid;
  out.cache.steps.resize(T);
  out.logits.resize(T, K);
  out.posteriors.resize(T, K);

  Vector e = Vector::Zero(H);
  Vector c = Vector::Zero(H);
  for (Eigen::Index t = 0; t < T; ++t) {
    StepCache<Scalar>& s = out.cache.steps[t];
    Matrix x = Eigen::Map<const Eigen::Matrix<float, 1, Eigen::Dynamic>>(
                   frames[t].data(), frames[t].size())
                   .template cast<Scalar>();
    int cur = side;
    for (std::size_t l = 0; l < cfg.conv.size(); ++l) {
      const ConvLayerConfig& conv = cfg.conv[l];
      const int next = conv_output_size(cur, conv);
      s.in_side.push_back(cur);
      s.out_side.push_back(next);
      s.cols.push_back(model_detail::im2col(x, cur, conv, next));
      Matrix a = ((params.conv_w[l] * s.cols.back()).colwise() + params.conv_b[l])
                     .cwiseMax(Scalar(0));
      Vector mask;
      if (use_dropout && model_detail::dropout_after(cfg, l)) {
        const Scalar keep = Scalar(1) / Scalar(1 - cfg.dropout_rate);
        std::bernoulli_distribution drop(cfg.dropout_rate);
        mask.resize(a.rows());
        for (Eigen::Index ch = 0; ch < a.rows(); ++ch) mask(ch) = drop(*rng) ? Scalar(0) : keep;
        x = mask.asDiagonal() * a;
      } else {
        x = a;
      }
      s.drop_mask.push_back(std::move(mask));
      s.acts.push_back(std::move(a));
      cur = next;
    }
    const Matrix& f = s.acts.back();

    s.hidden_prev = e;
    s.cell_prev = c;
    const Vector state_proj = params.att_state * e;
    s.att_hidden = ((params.att_feature * f).colwise() + state_proj).array().tanh().matrix();
    const Vector v = (params.att_score.transpose() * s.att_hidden).transpose();
    s.beta = model_detail::softmax<Scalar>(v);
    if (use_prior) {
      const PriorMap& m = priors[t];
      s.prior_pow.resize(P);
      for (int i = 0; i < grid; ++i) {
        for (int j = 0; j < grid; ++j) {
          s.prior_pow(i * grid + j) = static_cast<Scalar>(std::pow(m(i, j), cfg.alpha));
        }
      }
      const Vector weighted = s.beta.cwiseProduct(s.prior_pow);
      s.prior_norm = weighted.sum();
      s.attention = weighted / s.prior_norm;
    } else {
      s.attention = s.beta;
    }
    s.context = f * s.attention;

    const Vector gates = params.lstm_input * s.context + params.lstm_recurrent * e + params.lstm_bias;
    s.gate_i = model_detail::sigmoid(gates.segment(0, H));
    s.gate_f = model_detail::sigmoid(gates.segment(H, H));
    s.gate_g = gates.segment(2 * H, H).array().tanh().matrix();
    s.gate_o = model_detail::sigmoid(gates.segment(3 * H, H));
    c = s.gate_f.cwiseProduct(c) + s.gate_i.cwiseProduct(s.gate_g);
    e = s.gate_o.cwiseProduct(c.array().tanh().matrix());
    s.cell = c;
    s.hidden = e;

    const Vector logits = params.cls_w * e + params.cls_b;
    if (!logits.allFinite()) {
      throw Error(ErrorCode::kNonFinite,
                  "forward: non-finite logits at frame " + std::to_string(t));
    }
    out.logits.row(t) = logits.transpose();
    out.posteriors.row(t) = model_detail::softmax<Scalar>(logits).transpose();

    Matrix beta_map(grid, grid), att_map(grid, grid);
    for (int i = 0; i < grid; ++i) {
      for (int j = 0; j < grid; ++j) {
        beta_map(i, j) = s.beta(i * grid + j);
        att_map(i, j) = s.attention(i * grid + j);
      }
    }
    out.beta.push_back(std::move(beta_map));
    out.attention.push_back(std::move(att_map));
  }
  return out;
}

template <typename Scalar>
ModelParams<Scalar> backward_sequence(const ModelParams<Scalar>& params,
                                      const SequenceCache<Scalar>& cache,
                                      const MatrixX<Scalar>& d_logits) {
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;
  const ModelConfig& cfg = params.config;
  const auto T = static_cast<Eigen::Index>(cache.steps.size());
  if (!(cache.config == cfg) || d_logits.rows() != T || d_logits.cols() != cfg.num_labels()) {
    throw Error(ErrorCode::kShapeMismatch, "backward: cache does not match params/gradient");
  }
  const int H = cfg.hidden;
  const std::size_t L = cfg.conv.size();

  ModelParams<Scalar> g = params.zeros_like();
  Vector de_next = Vector::Zero(H);
  Vector dc_next = Vector::Zero(H);
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    const StepCache<Scalar>& s = cache.steps[t];
    const Vector dlogit = d_logits.row(t).transpose();
    g.cls_w.noalias() += dlogit * s.hidden.transpose();
    g.cls_b += dlogit;
    const Vector de = params.cls_w.transpose() * dlogit + de_next;

    const Vector tanh_c = s.cell.array().tanh().matrix();
    const Vector dc = dc_next + de.cwiseProduct(s.gate_o)
                                    .cwiseProduct((Scalar(1) - tanh_c.array().square()).matrix());
    Vector dgates(4 * H);
    dgates.segment(0, H) = dc.cwiseProduct(s.gate_g).array() * s.gate_i.array() * (Scalar(1) - s.gate_i.array());
    dgates.segment(H, H) = dc.cwiseProduct(s.cell_prev).array() * s.gate_f.array() * (Scalar(1) - s.gate_f.array());
    dgates.segment(2 * H, H) = dc.cwiseProduct(s.gate_i).array() * (Scalar(1) - s.gate_g.array().square());
    dgates.segment(3 * H, H) = de.cwiseProduct(tanh_c).array() * s.gate_o.array() * (Scalar(1) - s.gate_o.array());
    dc_next = dc.cwiseProduct(s.gate_f);

    g.lstm_input.noalias() += dgates * s.context.transpose();
    g.lstm_recurrent.noalias() += dgates * s.hidden_prev.transpose();
    g.lstm_bias += dgates;
    const Vector dcontext = params.lstm_input.transpose() * dgates;
    Vector de_prev = params.lstm_recurrent.transpose() * dgates;

    // h = f A
    const Matrix& f = s.acts.back();
    Matrix dfeat = dcontext * s.attention.transpose();
    const Vector dA = f.transpose() * dcontext;
    Vector dbeta;
    if (s.prior_pow.size() > 0) {
      const Scalar proj = dA.dot(s.attention);
      dbeta = s.prior_pow.cwiseProduct((dA.array() - proj).matrix()) / s.prior_norm;
    } else {
      dbeta = dA;
    }
    const Vector dv = s.beta.cwiseProduct((dbeta.array() - dbeta.dot(s.beta)).matrix());
    g.att_score.noalias() += s.att_hidden * dv;
    const Matrix dpre = (params.att_score * dv.transpose()).cwiseProduct(
        (Scalar(1) - s.att_hidden.array().square()).matrix());
    const Vector dstate = dpre.rowwise().sum();
    g.att_state.noalias() += dstate * s.hidden_prev.transpose();
    de_prev.noalias() += params.att_state.transpose() * dstate;
    g.att_feature.noalias() += dpre * f.transpose();
    dfeat.noalias() += params.att_feature.transpose() * dpre;

    // conv stack, dfeat is the gradient of the last post-ReLU activation
    Matrix dact = std::move(dfeat);
    for (std::size_t li = L; li-- > 0;) {
      const Matrix dout = dact.cwiseProduct((s.acts[li].array() > Scalar(0)).template cast<Scalar>().matrix());
      g.conv_w[li].noalias() += dout * s.cols[li].transpose();
      g.conv_b[li] += dout.rowwise().sum();
      if (li == 0) break;
      const Matrix dcol = params.conv_w[li].transpose() * dout;
      dact = model_detail::col2im(dcol, s.acts[li - 1].rows(), s.in_side[li], cfg.conv[li], s.out_side[li]);
      if (s.drop_mask[li - 1].size() > 0) dact = s.drop_mask[li - 1].asDiagonal() * dact;
    }

    de_next = de_prev;
  }
  return g;
}

template <typename Scalar>
void accumulate(ModelParams<Scalar>& acc, const ModelParams<Scalar>& g, Scalar scale) {
  model_detail::check_same_shapes(acc, g);
  auto a = model_detail::tensor_spans(acc);
  auto b = model_detail::tensor_spans(const_cast<ModelParams<Scalar>&>(g));
  for (std::size_t k = 0; k < a.size(); ++k) {
    Eigen::Map<VectorX<Scalar>>(a[k].first, a[k].second) +=
        scale * Eigen::Map<const VectorX<Scalar>>(b[k].first, b[k].second);
  }
}

template <typename Scalar>
ModelParams<Scalar> sgd_step(const ModelParams<Scalar>& params,
                             const ModelParams<Scalar>& grads, Scalar lr) {
  ModelParams<Scalar> out = params;
  accumulate(out, grads, -lr);
  return out;
}

template <typename Scalar>
LossAndGrad<Scalar> loss_and_grad(const ModelParams<Scalar>& params,
                                  const FrameSequence& frames,
                                  const std::vector<PriorMap>& priors,
                                  const Labels& target, std::mt19937_64* rng) {
  ForwardResult<Scalar> fwd = forward_sequence(params, frames, priors, rng);
  LossAndGrad<Scalar> out;
  out.loss = ctc_loss(fwd.posteriors, target);
  const MatrixX<Scalar> d_logits = ctc_grad(fwd.posteriors, target);
  out.grads = backward_sequence(params, fwd.cache, d_logits);
  return out;
}

}  // namespace fsia
