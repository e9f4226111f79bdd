#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "ovad/tracker.hpp"

namespace ovad {

/// Linear state-space next-feature predictor.
///
///   x_t = W_e f_t + b_e
///   h_t = C h_{t-1} + x_t,  h_0 = 0
///   f'_{t+1} = W_d h_t + b_d
///
/// The encoder maps D -> O, the decoder O -> D, and C is the O x O state
/// transition. The same layout holds the gradients returned by backward().
struct S3MParams {
  Eigen::MatrixXd encoder_weight;  ///< O x D
  Eigen::VectorXd encoder_bias;    ///< O
  Eigen::MatrixXd state;           ///< O x O
  Eigen::MatrixXd decoder_weight;  ///< D x O
  Eigen::VectorXd decoder_bias;    ///< D

  static S3MParams zeros(std::size_t feature_dim, std::size_t state_dim);

  std::size_t feature_dim() const { return static_cast<std::size_t>(encoder_weight.cols()); }
  std::size_t state_dim() const { return static_cast<std::size_t>(encoder_weight.rows()); }

  /// Throws ConfigError on inconsistent shapes.
  void check_shapes() const;
  bool all_finite() const;
  double squared_norm() const;

  /// Visits the five blocks in declaration order as flat arrays.
  void for_each_block(const std::function<void(Eigen::Map<Eigen::ArrayXd>)>& fn);

  friend bool operator==(const S3MParams& a, const S3MParams& b);
};

enum class InitMode { gaussian, hippo };
enum class OptimizerKind { adam, sgd };

struct TrainConfig {
  int epochs = 20;
  double lr0 = 5e-5;
  double lr_decay = 0.99;
  double init_std = 0.02;
  InitMode init_mode = InitMode::gaussian;
  double hippo_dt = 1.0 / 8.0;  ///< step used for C = I + dt * A_LegS
  double grad_clip_norm = 1.0;  ///< <= 0 disables clipping
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

/// HiPPO-LegS state matrix: A_nk = -sqrt(2n+1) sqrt(2k+1) for n > k,
/// -(n+1) on the diagonal, 0 above it.
Eigen::MatrixXd hippo_legs(std::size_t n);

/// Gaussian N(0, init_std^2) weights and zero biases. In hippo mode the state
/// matrix is replaced by I + hippo_dt * hippo_legs(O).
S3MParams init_params(std::size_t feature_dim, std::size_t state_dim, const TrainConfig& cfg);

/// Hidden states h_1..h_{T-1} as rows.
Eigen::MatrixXd hidden_states(const S3MParams& p, const FeatureSequence& seq);

/// Predictions for frames 2..T, one row each. Throws DivergenceError on a
/// non-finite value and ConfigError when T < 2 or D mismatches.
FeatureSequence forward(const S3MParams& p, const FeatureSequence& seq);

/// Mean squared prediction error over (T-1) x D entries.
double loss(const S3MParams& p, const FeatureSequence& seq);

struct LossAndGradient {
  double loss = 0.0;
  S3MParams gradient;
};

/// Exact gradient of loss() by backpropagation through the recurrence.
LossAndGradient backward(const S3MParams& p, const FeatureSequence& seq);

/// Per-predicted-frame error |f'_t - f_t|^2 / D for frames 2..T.
Eigen::VectorXd temporal_score(const S3MParams& p, const FeatureSequence& seq);

struct TrainResult {
  S3MParams params;
  std::vector<double> epoch_loss;  ///< mean pre-update clip loss per epoch
};

/// One optimizer step per clip, clips reshuffled each epoch, learning rate
/// lr0 * lr_decay^epoch, global gradient-norm clipping. Deterministic for a
/// fixed cfg.seed. Throws DivergenceError naming the epoch and step.
TrainResult train(std::span<const FeatureSequence> clips, std::size_t state_dim,
                  const TrainConfig& cfg);

/// Same as above but starting from the given parameters.
TrainResult train_from(S3MParams init, std::span<const FeatureSequence> clips,
                       const TrainConfig& cfg);

inline constexpr const char* kS3MModelFile = "s3m_model.bin";

/// Header: magic "OS3M", u32 version, u64 D, u64 O; then W_e, b_e, C, W_d,
/// b_d as little-endian binary64, matrices row-major.
void save_s3m(const S3MParams& p, const std::filesystem::path& file);
S3MParams load_s3m(const std::filesystem::path& file);

}  // namespace ovad
