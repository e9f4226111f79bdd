#include "ovad/s3m.hpp"

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "ovad/error.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace ovad {
namespace {

FeatureSequence rows(std::initializer_list<std::initializer_list<double>> r) {
  FeatureSequence s(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) s(i, j++) = v;
    ++i;
  }
  return s;
}

// Noiseless clips from f_{t+1} = M f_t with spectral radius 0.8.
std::vector<FeatureSequence> linear_system_clips(std::size_t d, std::size_t count, std::size_t t,
                                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(d, d);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = n(rng);
  m *= 0.8 / Eigen::EigenSolver<Eigen::MatrixXd>(m).eigenvalues().cwiseAbs().maxCoeff();
  std::vector<FeatureSequence> clips;
  for (std::size_t c = 0; c < count; ++c) {
    FeatureSequence s(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(d));
    for (Eigen::Index j = 0; j < s.cols(); ++j) s(0, j) = n(rng);
    for (Eigen::Index i = 1; i < s.rows(); ++i) s.row(i) = (m * s.row(i - 1).transpose()).transpose();
    clips.push_back(std::move(s));
  }
  return clips;
}

TEST(Init, DeterministicGaussian) {
  TrainConfig cfg;
  cfg.seed = 99;
  const S3MParams a = init_params(6, 4, cfg), b = init_params(6, 4, cfg);
  EXPECT_TRUE(a == b);
  EXPECT_TRUE(a.encoder_bias.isZero() && a.decoder_bias.isZero());
  cfg.seed = 100;
  EXPECT_FALSE(a == init_params(6, 4, cfg));
}

TEST(Init, GaussianStd) {
  TrainConfig cfg;
  cfg.seed = 5;
  const S3MParams p = init_params(200, 150, cfg);  // 30000 + 22500 + 30000 weights
  double sum = 0.0, sq = 0.0, n = 0.0;
  for (const auto* m : {&p.encoder_weight, &p.state, &p.decoder_weight})
    for (Eigen::Index k = 0; k < m->size(); ++k) {
      sum += m->data()[k];
      sq += m->data()[k] * m->data()[k];
      n += 1.0;
    }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_NEAR(sd, 0.02, 0.02 * 0.05);
  EXPECT_NEAR(mean, 0.0, 1e-3);
}

TEST(Init, HippoLegs) {
  const Eigen::MatrixXd a = hippo_legs(2);
  EXPECT_DOUBLE_EQ(a(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(a(0, 1), 0.0);
  EXPECT_NEAR(a(1, 0), -std::sqrt(3.0), 1e-15);
  EXPECT_DOUBLE_EQ(a(1, 1), -2.0);
  const Eigen::MatrixXd a4 = hippo_legs(4);
  EXPECT_NEAR(a4(3, 1), -std::sqrt(7.0 * 3.0), 1e-12);

  TrainConfig cfg;
  cfg.init_mode = InitMode::hippo;
  cfg.hippo_dt = 0.25;
  const S3MParams p = init_params(3, 2, cfg);
  EXPECT_TRUE(p.state.isApprox(Eigen::MatrixXd::Identity(2, 2) + 0.25 * a));
}

TEST(Forward, ZeroInputGivesBiases) {
  S3MParams p = S3MParams::zeros(2, 3);
  p.decoder_bias << 0.5, -1.0;
  const FeatureSequence pred = forward(p, FeatureSequence::Zero(4, 2));
  ASSERT_EQ(pred.rows(), 3);
  for (Eigen::Index t = 0; t < 3; ++t) {
    EXPECT_DOUBLE_EQ(pred(t, 0), 0.5);
    EXPECT_DOUBLE_EQ(pred(t, 1), -1.0);
  }
}

TEST(Forward, ScalarRecurrence) {
  S3MParams p = S3MParams::zeros(1, 1);
  p.encoder_weight(0, 0) = 1.0;
  p.state(0, 0) = 0.5;
  p.decoder_weight(0, 0) = 1.0;
  const FeatureSequence pred = forward(p, rows({{1}, {1}, {7}}));
  EXPECT_DOUBLE_EQ(pred(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(pred(1, 0), 1.5);
}

TEST(Forward, MemorylessMatchesAffineOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    S3MParams p = oracle::random_params(5, 3, rng);
    p.state.setZero();
    const FeatureSequence seq = oracle::random_sequence(7, 5, rng);
    const Eigen::VectorXd want = oracle::affine_scores(p, seq);
    const Eigen::VectorXd got = temporal_score(p, seq);
    EXPECT_LE((got - want).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Forward, LinearWithoutBiases) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> a(-3.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    S3MParams p = oracle::random_params(4, 3, rng);
    p.encoder_bias.setZero();
    p.decoder_bias.setZero();
    const FeatureSequence seq = oracle::random_sequence(6, 4, rng);
    const double alpha = a(rng);
    const FeatureSequence lhs = forward(p, alpha * seq);
    const FeatureSequence rhs = alpha * forward(p, seq);
    EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12 * (1.0 + rhs.cwiseAbs().maxCoeff()));
  }
}

TEST(Forward, Errors) {
  const S3MParams p = S3MParams::zeros(2, 2);
  EXPECT_THROW(forward(p, FeatureSequence::Zero(1, 2)), ConfigError);
  EXPECT_THROW(forward(p, FeatureSequence::Zero(3, 3)), ConfigError);
  S3MParams bad = p;
  bad.decoder_bias(0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(forward(bad, FeatureSequence::Zero(3, 2)), DivergenceError);
}

TEST(Loss, ZeroParameters) {
  EXPECT_DOUBLE_EQ(loss(S3MParams::zeros(2, 2), rows({{9, 9}, {0.5, 0.5}})), 0.25);
}

TEST(Loss, MatchesScalarOracle) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const S3MParams p = oracle::random_params(5, 4, rng);
    const FeatureSequence seq = oracle::random_sequence(6, 5, rng);
    EXPECT_NEAR(loss(p, seq), oracle::naive_loss(p, seq), 1e-12 * (1.0 + loss(p, seq)));
  }
}

TEST(Backward, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    std::mt19937_64 rng(seed);
    const S3MParams p = oracle::random_params(6, 4, rng);
    const FeatureSequence seq = oracle::random_sequence(5, 6, rng);
    const LossAndGradient lg = backward(p, seq);
    EXPECT_NEAR(lg.loss, oracle::naive_loss(p, seq), 1e-12 * (1.0 + lg.loss));
    const S3MParams fd = oracle::finite_difference_gradient(p, seq, 1e-4);
    EXPECT_LE(oracle::max_relative_error(lg.gradient, fd), 1e-4) << "seed " << seed;
  }
}

TEST(Backward, ZeroInputIsStationary) {
  std::mt19937_64 rng(7);
  S3MParams p = oracle::random_params(3, 2, rng);
  p.encoder_bias.setZero();
  p.decoder_bias.setZero();
  const LossAndGradient lg = backward(p, FeatureSequence::Zero(5, 3));
  EXPECT_EQ(lg.loss, 0.0);
  EXPECT_EQ(lg.gradient.squared_norm(), 0.0);
}

TEST(Backward, DecoderBiasIsScaledMeanResidual) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const S3MParams p = oracle::random_params(4, 3, rng);
    const FeatureSequence seq = oracle::random_sequence(6, 4, rng);
    const FeatureSequence resid = forward(p, seq) - seq.bottomRows(5);
    const Eigen::VectorXd want = (2.0 / 4.0) * resid.colwise().mean().transpose();
    EXPECT_LE((backward(p, seq).gradient.decoder_bias - want).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(TemporalScore, Properties) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    S3MParams p = oracle::random_params(3, 2, rng);
    const FeatureSequence seq = oracle::random_sequence(5, 3, rng);
    const Eigen::VectorXd s = temporal_score(p, seq);
    ASSERT_EQ(s.size(), 4);
    EXPECT_GE(s.minCoeff(), 0.0);
    EXPECT_NEAR(s.mean(), loss(p, seq), 1e-12 * (1.0 + s.mean()));

    // Doubling the residual. With W_e = C = 0 the prediction ignores the
    // inputs, so shifting each target by its residual doubles the residual.
    S3MParams mem = p;
    mem.encoder_weight.setZero();
    mem.state.setZero();
    FeatureSequence d2 = seq;
    d2.bottomRows(4) -= forward(mem, seq) - seq.bottomRows(4);
    EXPECT_LE((temporal_score(mem, d2) - 4.0 * temporal_score(mem, seq)).cwiseAbs().maxCoeff(),
              1e-10);
  }
  // Perfectly predicted sequence
  S3MParams id = S3MParams::zeros(2, 2);
  id.encoder_weight.setIdentity();
  id.decoder_weight.setIdentity();
  EXPECT_TRUE(temporal_score(id, rows({{1, 2}, {1, 2}, {1, 2}})).isZero());
}

TEST(Train, RealizableSystemConverges) {
  const auto clips = linear_system_clips(4, 32, 8, 1);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.lr0 = 1e-2;
  cfg.seed = 3;
  const TrainResult r = train(clips, 4, cfg);
  double mse = 0.0;
  for (const auto& c : clips) mse += loss(r.params, c);
  mse /= static_cast<double>(clips.size());
  EXPECT_LT(mse, 1e-6);
  EXPECT_EQ(r.epoch_loss.size(), 200u);
}

TEST(Train, BitIdenticalUnderFixedSeed) {
  const auto clips = linear_system_clips(3, 10, 6, 2);
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.lr0 = 1e-2;
  cfg.seed = 11;
  const TrainResult a = train(clips, 5, cfg), b = train(clips, 5, cfg);
  EXPECT_TRUE(a.params == b.params);
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
  cfg.seed = 12;
  EXPECT_FALSE(train(clips, 5, cfg).params == a.params);
}

TEST(Train, SgdAndHippoRun) {
  const auto clips = linear_system_clips(3, 8, 6, 3);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.lr0 = 1e-2;
  cfg.optimizer = OptimizerKind::sgd;
  cfg.init_mode = InitMode::hippo;
  const TrainResult r = train(clips, 4, cfg);
  EXPECT_LT(r.epoch_loss.back(), r.epoch_loss.front());
}

TEST(Train, DivergenceNamesEpochAndStep) {
  FeatureSequence clip(4, 1);
  clip << 1e300, -1e300, 1e300, -1e300;
  S3MParams p = S3MParams::zeros(1, 1);
  p.encoder_weight(0, 0) = 1e10;
  p.decoder_weight(0, 0) = 1e10;
  TrainConfig cfg;
  cfg.epochs = 2;
  try {
    train_from(p, std::vector<FeatureSequence>{clip}, cfg);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos);
  }
}

TEST(Train, RejectsBadInput) {
  TrainConfig cfg;
  EXPECT_THROW(train({}, 2, cfg), ConfigError);
  cfg.epochs = 0;
  EXPECT_THROW(train(linear_system_clips(2, 2, 4, 0), 2, cfg), ConfigError);
  const std::vector<FeatureSequence> mixed{FeatureSequence::Zero(3, 2), FeatureSequence::Zero(3, 3)};
  EXPECT_THROW(train(mixed, 2, TrainConfig{}), ConfigError);
}

TEST(ModelFile, RoundTrip) {
  testing::TempDir dir;
  std::mt19937_64 rng(10);
  const S3MParams p = oracle::random_params(5, 3, rng);
  save_s3m(p, dir / kS3MModelFile);
  EXPECT_TRUE(load_s3m(dir / kS3MModelFile) == p);
  const std::string bytes = testing::slurp(dir / kS3MModelFile);
  EXPECT_EQ(bytes.substr(0, 4), "OS3M");
  EXPECT_EQ(bytes.size(), 4u + 4u + 8u + 8u + 8u * (15 + 3 + 9 + 15 + 5));

  testing::spit(dir / "bad.bin", "XXXX" + bytes.substr(4));
  EXPECT_THROW(load_s3m(dir / "bad.bin"), DataError);
  testing::spit(dir / "short.bin", bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(load_s3m(dir / "short.bin"), DataError);
}

}  // namespace
}  // namespace ovad
