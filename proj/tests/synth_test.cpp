#include "ovad/synth.hpp"

#include <filesystem>

#include <gtest/gtest.h>

#include "ovad/dataset.hpp"
#include "ovad/error.hpp"
#include "ovad/s3m.hpp"
#include "test_util.hpp"

namespace ovad {
namespace {

namespace fs = std::filesystem;

SynthConfig small_config() {
  SynthConfig cfg;
  cfg.n_videos = 4;
  cfg.n_train = 2;
  cfg.frames_per_video = 120;
  cfg.objects_per_video = 2;
  cfg.dim = 5;
  cfg.n_windows = 3;
  cfg.window_length = 20;
  return cfg;
}

std::string tree_bytes(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) all += fs::relative(f, root).string() + "\n" + testing::slurp(f);
  return all;
}

TEST(Synth, DeterministicAndLoadable) {
  testing::TempDir a, b;
  const SynthConfig cfg = small_config();
  generate(cfg, a.path());
  generate(cfg, b.path());
  EXPECT_EQ(tree_bytes(a.path()), tree_bytes(b.path()));
  generate(cfg, a.path());  // regenerating into a synth root is allowed
  EXPECT_EQ(tree_bytes(a.path()), tree_bytes(b.path()));

  const Dataset ds = load_dataset(a.path());
  EXPECT_EQ(ds.train.size(), 2u);
  EXPECT_EQ(ds.test.size(), 2u);
  EXPECT_EQ(ds.feature_dim(), 5u);
  for (const auto& v : ds.train) EXPECT_FALSE(v.labels.has_value());
  for (const auto& v : ds.test) EXPECT_TRUE(v.labels.has_value());
}

TEST(Synth, LabelsMatchWindows) {
  testing::TempDir dir;
  const SynthConfig cfg = small_config();
  const SynthGroundTruth gt = generate(cfg, dir.path());
  ASSERT_EQ(gt.windows.size(), 3u);
  const Dataset ds = load_dataset(dir.path());
  for (std::size_t v = 0; v < ds.test.size(); ++v) {
    std::vector<std::uint8_t> want(static_cast<std::size_t>(cfg.frames_per_video), 0);
    for (const auto& w : gt.windows)
      if (w.test_video == v)
        for (auto t = w.start; t < w.end; ++t) want[static_cast<std::size_t>(t)] = 1;
    EXPECT_EQ(*ds.test[v].labels, want);
  }
  const SynthGroundTruth back = load_ground_truth(dir / kGroundTruthFile);
  EXPECT_EQ(back.test_ids, gt.test_ids);
  EXPECT_TRUE(back.dynamics.isApprox(gt.dynamics, 1e-15));
}

TEST(Synth, ZeroWindowsGiveNormalLabels) {
  testing::TempDir dir;
  SynthConfig cfg = small_config();
  cfg.n_windows = 0;
  generate(cfg, dir.path());
  for (const auto& v : load_dataset(dir.path()).test)
    for (auto l : *v.labels) EXPECT_EQ(l, 0);
}

TEST(Synth, DynamicsProperties) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    testing::TempDir dir;
    SynthConfig cfg = small_config();
    cfg.seed = seed;
    const SynthGroundTruth gt = generate(cfg, dir.path());
    EXPECT_LE(spectral_radius(gt.dynamics), 0.9 + 1e-12);
    EXPECT_LE(spectral_radius(gt.anomalous_dynamics), 0.9 + 1e-12);
    EXPECT_GE((gt.dynamics - gt.anomalous_dynamics).norm(), 1.0);
  }
}

// With no noise the true one-step map f -> M f + (I - M) mean predicts every
// normal transition exactly; only transitions into dynamics windows miss.
TEST(Synth, ExactPredictorIsSilentOutsideWindows) {
  testing::TempDir dir;
  SynthConfig cfg = small_config();
  cfg.noise_std = 0.0;
  cfg.windows = {{0, 1, 40, 60, AnomalyType::dynamics}, {1, 0, 70, 90, AnomalyType::both}};
  const SynthGroundTruth gt = generate(cfg, dir.path());
  const auto d = static_cast<Eigen::Index>(cfg.dim);

  S3MParams p = S3MParams::zeros(cfg.dim, cfg.dim);
  p.encoder_weight = gt.dynamics;
  p.decoder_weight.setIdentity();
  p.decoder_bias = (Eigen::MatrixXd::Identity(d, d) - gt.dynamics) * gt.mean;

  const Dataset ds = load_dataset(dir.path());
  double inside_max = 0.0;
  for (std::size_t v = 0; v < ds.test.size(); ++v) {
    const VideoManifest& video = ds.test[v];
    for (std::size_t o = 0; o < cfg.objects_per_video; ++o) {
      FeatureSequence seq(cfg.frames_per_video, d);
      for (Eigen::Index t = 0; t < seq.rows(); ++t) {
        const auto& det = video.detections[static_cast<std::size_t>(t) * cfg.objects_per_video + o];
        const auto row = video.features.row(det.feature_ref);
        for (Eigen::Index i = 0; i < d; ++i) seq(t, i) = row[static_cast<std::size_t>(i)];
      }
      const Eigen::VectorXd s = temporal_score(p, seq);
      for (Eigen::Index k = 0; k < s.size(); ++k) {
        const std::int64_t frame = k + 1;
        bool inside = false;
        for (const auto& w : gt.windows)
          inside |= w.test_video == v && w.object == o && w.has_dynamics() && frame >= w.start &&
                    frame < w.end;
        if (inside) inside_max = std::max(inside_max, s(k));
        else EXPECT_LT(s(k), 1e-10) << "video " << v << " object " << o << " frame " << frame;
      }
    }
  }
  EXPECT_GT(inside_max, 1e-3);
}

TEST(Synth, RejectsInvalidConfigs) {
  testing::TempDir dir;
  auto expect_bad = [&](auto mutate) {
    SynthConfig cfg = small_config();
    mutate(cfg);
    EXPECT_THROW(generate(cfg, dir / "x"), ConfigError);
  };
  expect_bad([](SynthConfig& c) { c.spectral_radius = 0.95; });
  expect_bad([](SynthConfig& c) { c.n_train = c.n_videos; });
  expect_bad([](SynthConfig& c) { c.windows = {{0, 5, 10, 20, AnomalyType::both}}; });
  expect_bad([](SynthConfig& c) { c.windows = {{0, 0, 100, 130, AnomalyType::both}}; });
  expect_bad([](SynthConfig& c) {
    c.prompts[0].anomalous = c.prompts[0].normal;
    c.windows = {{0, 0, 10, 20, AnomalyType::caption}};
  });
  EXPECT_NEAR(total_variation({{"a", 1.0}}, {{"b", 1.0}}), 1.0, 1e-15);
  EXPECT_NEAR(total_variation({{"a", 0.5}, {"b", 0.5}}, {{"a", 1.0}}), 0.5, 1e-15);
  EXPECT_EQ(parse_anomaly_type(to_string(AnomalyType::caption)), AnomalyType::caption);
  EXPECT_THROW(parse_anomaly_type("odd"), ConfigError);
}

TEST(Synth, RefusesForeignDirectory) {
  testing::TempDir dir;
  testing::spit(dir / "precious.txt", "keep me");
  EXPECT_THROW(generate(small_config(), dir.path()), ConfigError);
  EXPECT_EQ(testing::slurp(dir / "precious.txt"), "keep me");
}

TEST(Synth, DefaultWindowsCycleTypes) {
  const auto w = resolve_windows(SynthConfig{});
  ASSERT_EQ(w.size(), 4u);
  EXPECT_EQ(w[0].type, AnomalyType::caption);
  EXPECT_EQ(w[1].type, AnomalyType::dynamics);
  EXPECT_EQ(w[2].type, AnomalyType::both);
  EXPECT_EQ(w[3].type, AnomalyType::caption);
  for (std::size_t i = 0; i < w.size(); ++i) {
    EXPECT_EQ(w[i].test_video, i);
    EXPECT_EQ(w[i].end - w[i].start, 30);
  }
}

}  // namespace
}  // namespace ovad
