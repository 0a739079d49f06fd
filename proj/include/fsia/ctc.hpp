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

// Connectionist temporal classification: label collapsing, forward-backward
// loss and gradient in log space, greedy decoding, and an enumeration oracle.
// Blank is label 0; letters are 1..|L|.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fsia/error.hpp"

namespace fsia {

using Labels = std::vector<int>;

inline constexpr int kBlank = 0;

class Alphabet {
 public:
  Alphabet() = default;
  explicit Alphabet(std::string letters);

  /// Number of letters, blank excluded.
  int size() const { return static_cast<int>(letters_.size()); }
  const std::string& letters() const { return letters_; }

  bool contains(char c) const { return letters_.find(c) != std::string::npos; }
  /// 1-based label of `c`; throws kInvalidArgument if absent.
  int index(char c) const;
  char letter(int label) const;

  Labels encode(std::string_view text) const;
  std::string decode(std::span<const int> labels) const;

  friend bool operator==(const Alphabet&, const Alphabet&) = default;

 private:
  std::string letters_;
};

/// B: merge adjacent duplicates, then drop blanks.
Labels collapse(std::span<const int> frame_labels);

namespace ctc_detail {

inline double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

inline Labels extended(const Labels& target) {
  Labels ext(2 * target.size() + 1, kBlank);
  for (std::size_t u = 0; u < target.size(); ++u) ext[2 * u + 1] = target[u];
  return ext;
}

inline bool alignable(const Labels& target, Eigen::Index frames) {
  Eigen::Index need = static_cast<Eigen::Index>(target.size());
  for (std::size_t u = 1; u < target.size(); ++u) {
    if (target[u] == target[u - 1]) ++need;
  }
  return need <= frames;
}

template <typename Derived>
Eigen::MatrixXd log_posteriors(const Eigen::MatrixBase<Derived>& posteriors) {
  return posteriors.template cast<double>().array().log().matrix();
}

// log alpha_t(s), emissions included.
inline Eigen::MatrixXd forward(const Eigen::MatrixXd& lp, const Labels& ext) {
  const double ninf = -std::numeric_limits<double>::infinity();
  const Eigen::Index T = lp.rows();
  const Eigen::Index S = static_cast<Eigen::Index>(ext.size());
  Eigen::MatrixXd alpha = Eigen::MatrixXd::Constant(T, S, ninf);
  alpha(0, 0) = lp(0, ext[0]);
  if (S > 1) alpha(0, 1) = lp(0, ext[1]);
  for (Eigen::Index t = 1; t < T; ++t) {
    for (Eigen::Index s = 0; s < S; ++s) {
      double a = alpha(t - 1, s);
      if (s >= 1) a = log_add(a, alpha(t - 1, s - 1));
      if (s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2]) {
        a = log_add(a, alpha(t - 1, s - 2));
      }
      alpha(t, s) = a + lp(t, ext[s]);
    }
  }
  return alpha;
}

// log beta_t(s), emission at t excluded.
inline Eigen::MatrixXd backward(const Eigen::MatrixXd& lp, const Labels& ext) {
  const double ninf = -std::numeric_limits<double>::infinity();
  const Eigen::Index T = lp.rows();
  const Eigen::Index S = static_cast<Eigen::Index>(ext.size());
  Eigen::MatrixXd beta = Eigen::MatrixXd::Constant(T, S, ninf);
  beta(T - 1, S - 1) = 0.0;
  if (S > 1) beta(T - 1, S - 2) = 0.0;
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    for (Eigen::Index s = 0; s < S; ++s) {
      double b = beta(t + 1, s) + lp(t + 1, ext[s]);
      if (s + 1 < S) b = log_add(b, beta(t + 1, s + 1) + lp(t + 1, ext[s + 1]));
      if (s + 2 < S && ext[s + 2] != kBlank && ext[s + 2] != ext[s]) {
        b = log_add(b, beta(t + 1, s + 2) + lp(t + 1, ext[s + 2]));
      }
      beta(t, s) = b;
    }
  }
  return beta;
}

}  // namespace ctc_detail

/// -log p(target | posteriors), summed over all labelings that collapse to
/// `target`. Returns +infinity when no labeling can.
template <typename Derived>
double ctc_loss(const Eigen::MatrixBase<Derived>& posteriors,
                const Labels& target) {
  const Eigen::Index T = posteriors.rows();
  if (T < 1) throw Error(ErrorCode::kInvalidArgument, "ctc_loss: no frames");
  for (int c : target) {
    if (c <= kBlank || c >= posteriors.cols()) {
      throw Error(ErrorCode::kInvalidArgument, "ctc_loss: label out of range");
    }
  }
  if (!ctc_detail::alignable(target, T)) {
    return std::numeric_limits<double>::infinity();
  }
  const Labels ext = ctc_detail::extended(target);
  const Eigen::MatrixXd alpha =
      ctc_detail::forward(ctc_detail::log_posteriors(posteriors), ext);
  const Eigen::Index S = static_cast<Eigen::Index>(ext.size());
  double ll = alpha(T - 1, S - 1);
  if (S > 1) ll = ctc_detail::log_add(ll, alpha(T - 1, S - 2));
  return -ll;
}

/// Gradient of ctc_loss with respect to the pre-softmax logits whose softmax
/// is `posteriors`. Throws kUnalignable when the loss is infinite.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
ctc_grad(const Eigen::MatrixBase<Derived>& posteriors, const Labels& target) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index T = posteriors.rows();
  const Eigen::Index K = posteriors.cols();
  if (!ctc_detail::alignable(target, T)) {
    throw Error(ErrorCode::kUnalignable, "ctc_grad: target cannot be aligned");
  }
  for (int c : target) {
    if (c <= kBlank || c >= K) {
      throw Error(ErrorCode::kInvalidArgument, "ctc_grad: label out of range");
    }
  }
  const Labels ext = ctc_detail::extended(target);
  const Eigen::MatrixXd lp = ctc_detail::log_posteriors(posteriors);
  const Eigen::MatrixXd alpha = ctc_detail::forward(lp, ext);
  const Eigen::MatrixXd beta = ctc_detail::backward(lp, ext);
  const Eigen::Index S = static_cast<Eigen::Index>(ext.size());
  double log_z = alpha(T - 1, S - 1);
  if (S > 1) log_z = ctc_detail::log_add(log_z, alpha(T - 1, S - 2));

  Eigen::MatrixXd occupancy = Eigen::MatrixXd::Zero(T, K);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index s = 0; s < S; ++s) {
      double g = alpha(t, s) + beta(t, s) - log_z;
      if (std::isfinite(g)) occupancy(t, ext[s]) += std::exp(g);
    }
  }
  Eigen::MatrixXd grad = posteriors.template cast<double>() - occupancy;
  return grad.template cast<Scalar>();
}

/// Per-frame argmax (ties to the lower label), then collapse.
template <typename Derived>
Labels greedy_decode(const Eigen::MatrixBase<Derived>& posteriors) {
  Labels best(posteriors.rows());
  for (Eigen::Index t = 0; t < posteriors.rows(); ++t) {
    Eigen::Index arg = 0;
    for (Eigen::Index k = 1; k < posteriors.cols(); ++k) {
      if (posteriors(t, k) > posteriors(t, arg)) arg = k;
    }
    best[t] = static_cast<int>(arg);
  }
  return collapse(best);
}

/// Enumerates every frame labeling. Test oracle for ctc_loss; refuses
/// instances with more than 10^6 labelings.
template <typename Derived>
double brute_force_nll(const Eigen::MatrixBase<Derived>& posteriors,
                       const Labels& target) {
  const Eigen::Index T = posteriors.rows();
  const Eigen::Index K = posteriors.cols();
  double count = std::pow(static_cast<double>(K), static_cast<double>(T));
  if (count > 1e6) {
    throw Error(ErrorCode::kTooLarge, "brute_force_nll: too many labelings");
  }
  Labels pi(T, 0);
  double total = 0.0;
  for (;;) {
    if (collapse(pi) == target) {
      double p = 1.0;
      for (Eigen::Index t = 0; t < T; ++t) p *= double(posteriors(t, pi[t]));
      total += p;
    }
    Eigen::Index t = 0;
    while (t < T && ++pi[t] == K) pi[t++] = 0;
    if (t == T) break;
  }
  return -std::log(total);
}

}  // namespace fsia
