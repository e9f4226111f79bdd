#pragma once

// Reference implementations used only by tests. Each one follows the
// textbook definition directly and shares no code with the library path it
// checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "ovad/s3m.hpp"

namespace ovad::oracle {

/// P(s+ > s-) + 0.5 P(s+ = s-) over all positive/negative pairs.
inline double pairwise_auc(const std::vector<double>& scores,
                           const std::vector<std::uint8_t>& labels) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

/// Direct O(n k) convolution with taps exp(-i^2/(2 sigma^2)), |i| <= ceil(3 sigma),
/// renormalized over the in-bounds taps.
inline std::vector<double> direct_smooth(const std::vector<double>& x, double sigma) {
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  const int n = static_cast<int>(x.size());
  std::vector<double> y(x.size());
  for (int i = 0; i < n; ++i) {
    double num = 0.0, den = 0.0;
    for (int j = 0; j < n; ++j) {
      const int off = j - i;
      if (off < -r || off > r) continue;
      const double w = std::exp(-(off * off) / (2.0 * sigma * sigma));
      num += w * x[static_cast<std::size_t>(j)];
      den += w;
    }
    y[static_cast<std::size_t>(i)] = num / den;
  }
  return y;
}

/// Scalar-loop evaluation of the S3M mean squared prediction error.
inline double naive_loss(const S3MParams& p, const FeatureSequence& seq) {
  const long T = seq.rows(), D = seq.cols(), O = p.state.rows();
  std::vector<double> h(static_cast<std::size_t>(O), 0.0), next(h.size());
  double sum = 0.0;
  for (long t = 0; t + 1 < T; ++t) {
    for (long a = 0; a < O; ++a) {
      double v = p.encoder_bias(a);
      for (long q = 0; q < D; ++q) v += p.encoder_weight(a, q) * seq(t, q);
      for (long b = 0; b < O; ++b) v += p.state(a, b) * h[static_cast<std::size_t>(b)];
      next[static_cast<std::size_t>(a)] = v;
    }
    h = next;
    for (long q = 0; q < D; ++q) {
      double pred = p.decoder_bias(q);
      for (long a = 0; a < O; ++a) pred += p.decoder_weight(q, a) * h[static_cast<std::size_t>(a)];
      const double r = pred - seq(t + 1, q);
      sum += r * r;
    }
  }
  return sum / static_cast<double>((T - 1) * D);
}

/// Central finite differences of naive_loss over every parameter entry,
/// returned in the same layout as the parameters.
inline S3MParams finite_difference_gradient(const S3MParams& p, const FeatureSequence& seq,
                                            double eps) {
  S3MParams grad = S3MParams::zeros(p.feature_dim(), p.state_dim());
  auto probe = [&](auto member) {
    S3MParams work = p;
    auto& w = work.*member;
    auto& g = grad.*member;
    for (Eigen::Index k = 0; k < w.size(); ++k) {
      const double orig = w.data()[k];
      w.data()[k] = orig + eps;
      const double up = naive_loss(work, seq);
      w.data()[k] = orig - eps;
      const double down = naive_loss(work, seq);
      w.data()[k] = orig;
      g.data()[k] = (up - down) / (2.0 * eps);
    }
  };
  probe(&S3MParams::encoder_weight);
  probe(&S3MParams::encoder_bias);
  probe(&S3MParams::state);
  probe(&S3MParams::decoder_weight);
  probe(&S3MParams::decoder_bias);
  return grad;
}

/// Largest |a - n| / max(|a|, |n|, floor) over all entries.
inline double max_relative_error(const S3MParams& analytic, const S3MParams& numeric,
                                 double floor = 1e-8) {
  double worst = 0.0;
  auto cmp = [&](const auto& a, const auto& n) {
    for (Eigen::Index k = 0; k < a.size(); ++k) {
      const double x = a.data()[k], y = n.data()[k];
      const double den = std::max({std::abs(x), std::abs(y), floor});
      worst = std::max(worst, std::abs(x - y) / den);
    }
  };
  cmp(analytic.encoder_weight, numeric.encoder_weight);
  cmp(analytic.encoder_bias, numeric.encoder_bias);
  cmp(analytic.state, numeric.state);
  cmp(analytic.decoder_weight, numeric.decoder_weight);
  cmp(analytic.decoder_bias, numeric.decoder_bias);
  return worst;
}

/// One-step affine predictor W_d (W_e f_t + b_e) + b_d, the C = 0 model.
inline Eigen::VectorXd affine_scores(const S3MParams& p, const FeatureSequence& seq) {
  const long T = seq.rows();
  Eigen::VectorXd s(T - 1);
  for (long t = 0; t + 1 < T; ++t) {
    const Eigen::VectorXd f = seq.row(t).transpose();
    const Eigen::VectorXd pred =
        p.decoder_weight * (p.encoder_weight * f + p.encoder_bias) + p.decoder_bias;
    s(t) = (pred - seq.row(t + 1).transpose()).squaredNorm() / static_cast<double>(seq.cols());
  }
  return s;
}

/// Random parameters with a contractive state matrix.
inline S3MParams random_params(std::size_t d, std::size_t o, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 0.5);
  S3MParams p = S3MParams::zeros(d, o);
  auto fill = [&](auto& m, double scale) {
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = scale * n(rng);
  };
  fill(p.encoder_weight, 1.0);
  fill(p.encoder_bias, 1.0);
  fill(p.state, 0.6 / std::sqrt(static_cast<double>(o)));
  fill(p.decoder_weight, 1.0);
  fill(p.decoder_bias, 1.0);
  return p;
}

inline FeatureSequence random_sequence(std::size_t t, std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  FeatureSequence s(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(d));
  for (Eigen::Index k = 0; k < s.size(); ++k) s.data()[k] = n(rng);
  return s;
}

}  // namespace ovad::oracle
