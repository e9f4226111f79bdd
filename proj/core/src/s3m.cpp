#include "ovad/s3m.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include "ovad/error.hpp"

namespace ovad {

namespace {

using Index = Eigen::Index;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr char kMagic[4] = {'O', 'S', '3', 'M'};
constexpr std::uint32_t kVersion = 1;

void check_sequence(const S3MParams& p, const FeatureSequence& seq) {
  if (seq.rows() < 2) throw ConfigError("sequence needs at least 2 frames");
  if (static_cast<std::size_t>(seq.cols()) != p.feature_dim())
    throw ConfigError("sequence dim " + std::to_string(seq.cols()) + " != model dim " +
                      std::to_string(p.feature_dim()));
}

}  // namespace

S3MParams S3MParams::zeros(std::size_t feature_dim, std::size_t state_dim) {
  const auto d = static_cast<Index>(feature_dim);
  const auto o = static_cast<Index>(state_dim);
  return {Eigen::MatrixXd::Zero(o, d), Eigen::VectorXd::Zero(o), Eigen::MatrixXd::Zero(o, o),
          Eigen::MatrixXd::Zero(d, o), Eigen::VectorXd::Zero(d)};
}

void S3MParams::check_shapes() const {
  const Index o = encoder_weight.rows();
  const Index d = encoder_weight.cols();
  if (o < 1 || d < 1 || encoder_bias.size() != o || state.rows() != o || state.cols() != o ||
      decoder_weight.rows() != d || decoder_weight.cols() != o || decoder_bias.size() != d)
    throw ConfigError("inconsistent S3M parameter shapes");
}

bool S3MParams::all_finite() const {
  return encoder_weight.allFinite() && encoder_bias.allFinite() && state.allFinite() &&
         decoder_weight.allFinite() && decoder_bias.allFinite();
}

double S3MParams::squared_norm() const {
  return encoder_weight.squaredNorm() + encoder_bias.squaredNorm() + state.squaredNorm() +
         decoder_weight.squaredNorm() + decoder_bias.squaredNorm();
}

void S3MParams::for_each_block(const std::function<void(Eigen::Map<Eigen::ArrayXd>)>& fn) {
  fn(Eigen::Map<Eigen::ArrayXd>(encoder_weight.data(), encoder_weight.size()));
  fn(Eigen::Map<Eigen::ArrayXd>(encoder_bias.data(), encoder_bias.size()));
  fn(Eigen::Map<Eigen::ArrayXd>(state.data(), state.size()));
  fn(Eigen::Map<Eigen::ArrayXd>(decoder_weight.data(), decoder_weight.size()));
  fn(Eigen::Map<Eigen::ArrayXd>(decoder_bias.data(), decoder_bias.size()));
}

bool operator==(const S3MParams& a, const S3MParams& b) {
  auto same = [](const auto& x, const auto& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() && x == y;
  };
  return same(a.encoder_weight, b.encoder_weight) && same(a.encoder_bias, b.encoder_bias) &&
         same(a.state, b.state) && same(a.decoder_weight, b.decoder_weight) &&
         same(a.decoder_bias, b.decoder_bias);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(lr0 > 0.0)) throw ConfigError("learning rate must be > 0");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must be in (0,1]");
  if (!(init_std >= 0.0)) throw ConfigError("init_std must be >= 0");
  if (!(hippo_dt > 0.0)) throw ConfigError("hippo_dt must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("adam betas must be in [0,1)");
}

Eigen::MatrixXd hippo_legs(std::size_t n) {
  const auto size = static_cast<Index>(n);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(size, size);
  for (Index r = 0; r < size; ++r) {
    for (Index k = 0; k < r; ++k)
      a(r, k) = -std::sqrt(2.0 * static_cast<double>(r) + 1.0) *
                std::sqrt(2.0 * static_cast<double>(k) + 1.0);
    a(r, r) = -(static_cast<double>(r) + 1.0);
  }
  return a;
}

S3MParams init_params(std::size_t feature_dim, std::size_t state_dim, const TrainConfig& cfg) {
  if (feature_dim < 1 || state_dim < 1) throw ConfigError("D and O must be >= 1");
  S3MParams p = S3MParams::zeros(feature_dim, state_dim);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, cfg.init_std);
  auto fill = [&](Eigen::MatrixXd& m) {
    // Row-major fill so the draw order matches the on-disk layout.
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) m(r, c) = cfg.init_std > 0.0 ? normal(rng) : 0.0;
  };
  fill(p.encoder_weight);
  fill(p.state);
  fill(p.decoder_weight);
  if (cfg.init_mode == InitMode::hippo) {
    const auto o = static_cast<Index>(state_dim);
    p.state = Eigen::MatrixXd::Identity(o, o) + cfg.hippo_dt * hippo_legs(state_dim);
  }
  return p;
}

Eigen::MatrixXd hidden_states(const S3MParams& p, const FeatureSequence& seq) {
  check_sequence(p, seq);
  const Index steps = seq.rows() - 1;
  // Row t holds x_t then gets overwritten with h_t.
  Eigen::MatrixXd h = seq.topRows(steps) * p.encoder_weight.transpose();
  h.rowwise() += p.encoder_bias.transpose();
  for (Index t = 1; t < steps; ++t) h.row(t) += h.row(t - 1) * p.state.transpose();
  return h;
}

FeatureSequence forward(const S3MParams& p, const FeatureSequence& seq) {
  const Eigen::MatrixXd h = hidden_states(p, seq);
  FeatureSequence pred = h * p.decoder_weight.transpose();
  pred.rowwise() += p.decoder_bias.transpose();
  if (!pred.allFinite()) throw DivergenceError("non-finite value in S3M forward pass");
  return pred;
}

double loss(const S3MParams& p, const FeatureSequence& seq) {
  const FeatureSequence pred = forward(p, seq);
  const Index steps = seq.rows() - 1;
  return (pred - seq.bottomRows(steps)).squaredNorm() / static_cast<double>(pred.size());
}

LossAndGradient backward(const S3MParams& p, const FeatureSequence& seq) {
  const Eigen::MatrixXd h = hidden_states(p, seq);
  const Index steps = seq.rows() - 1;
  RowMatrix resid = h * p.decoder_weight.transpose();
  resid.rowwise() += p.decoder_bias.transpose();
  resid -= seq.bottomRows(steps);
  if (!resid.allFinite()) throw DivergenceError("non-finite value in S3M forward pass");

  LossAndGradient out;
  const double n = static_cast<double>(resid.size());
  out.loss = resid.squaredNorm() / n;

  // dL/dprediction
  const RowMatrix g = (2.0 / n) * resid;
  S3MParams& grad = out.gradient;
  grad.decoder_weight = g.transpose() * h;
  grad.decoder_bias = g.colwise().sum().transpose();

  // dL/dh_t, accumulated backwards through h_{t+1} = C h_t + x_{t+1}.
  Eigen::MatrixXd dh = g * p.decoder_weight;
  for (Index t = steps - 2; t >= 0; --t) dh.row(t) += dh.row(t + 1) * p.state;

  grad.state = Eigen::MatrixXd::Zero(p.state.rows(), p.state.cols());
  if (steps > 1) grad.state = dh.bottomRows(steps - 1).transpose() * h.topRows(steps - 1);
  grad.encoder_weight = dh.transpose() * seq.topRows(steps);
  grad.encoder_bias = dh.colwise().sum().transpose();
  return out;
}

Eigen::VectorXd temporal_score(const S3MParams& p, const FeatureSequence& seq) {
  const FeatureSequence pred = forward(p, seq);
  const Index steps = seq.rows() - 1;
  return (pred - seq.bottomRows(steps)).rowwise().squaredNorm() /
         static_cast<double>(seq.cols());
}

TrainResult train(std::span<const FeatureSequence> clips, std::size_t state_dim,
                  const TrainConfig& cfg) {
  if (clips.empty()) throw ConfigError("training needs at least one clip");
  return train_from(init_params(static_cast<std::size_t>(clips.front().cols()), state_dim, cfg),
                    clips, cfg);
}

TrainResult train_from(S3MParams params, std::span<const FeatureSequence> clips,
                       const TrainConfig& cfg) {
  cfg.validate();
  params.check_shapes();
  if (clips.empty()) throw ConfigError("training needs at least one clip");
  for (const auto& c : clips)
    if (static_cast<std::size_t>(c.cols()) != params.feature_dim())
      throw ConfigError("clip feature dimension differs from model dimension");

  S3MParams m = S3MParams::zeros(params.feature_dim(), params.state_dim());
  S3MParams v = m;

  std::vector<std::size_t> order(clips.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Separate stream from the one init_params draws from.
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  TrainResult result;
  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const double lr = cfg.lr0 * std::pow(cfg.lr_decay, epoch);
    double epoch_sum = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      LossAndGradient lg;
      try {
        lg = backward(params, clips[order[k]]);
      } catch (const DivergenceError&) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch + 1) +
                              ", step " + std::to_string(k + 1));
      }
      if (!std::isfinite(lg.loss) || !lg.gradient.all_finite())
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch + 1) +
                              ", step " + std::to_string(k + 1) + ": non-finite loss");
      epoch_sum += lg.loss;
      ++step;

      if (cfg.grad_clip_norm > 0.0) {
        const double norm = std::sqrt(lg.gradient.squared_norm());
        if (norm > cfg.grad_clip_norm)
          lg.gradient.for_each_block([s = cfg.grad_clip_norm / norm](auto g) { g *= s; });
      }

      // Walk the five blocks of params, gradient and moments in lockstep.
      std::vector<Eigen::Map<Eigen::ArrayXd>> pb, gb, mb, vb;
      auto collect = [](auto& dst) { return [&dst](Eigen::Map<Eigen::ArrayXd> b) { dst.push_back(b); }; };
      params.for_each_block(collect(pb));
      lg.gradient.for_each_block(collect(gb));
      if (cfg.optimizer == OptimizerKind::adam) {
        m.for_each_block(collect(mb));
        v.for_each_block(collect(vb));
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
        for (std::size_t b = 0; b < pb.size(); ++b) {
          mb[b] = cfg.beta1 * mb[b] + (1.0 - cfg.beta1) * gb[b];
          vb[b] = cfg.beta2 * vb[b] + (1.0 - cfg.beta2) * gb[b].square();
          pb[b] -= lr * (mb[b] / bc1) / ((vb[b] / bc2).sqrt() + cfg.adam_eps);
        }
      } else {
        for (std::size_t b = 0; b < pb.size(); ++b) pb[b] -= lr * gb[b];
      }
    }
    result.epoch_loss.push_back(epoch_sum / static_cast<double>(order.size()));
    if (!params.all_finite())
      throw DivergenceError("training diverged at epoch " + std::to_string(epoch + 1) +
                            ": non-finite parameters");
  }
  result.params = std::move(params);
  return result;
}

namespace {

template <typename T>
void write_le(std::ostream& out, T value) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    out.write(bytes.data(), sizeof(T));
  } else {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
}

template <typename T>
T read_le(std::istream& in) {
  std::array<char, sizeof(T)> bytes{};
  in.read(bytes.data(), sizeof(T));
  if (!in) throw DataError("truncated S3M model file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

template <typename M>
void write_block(std::ostream& out, const M& m) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) write_le<double>(out, m(r, c));
}

template <typename M>
void read_block(std::istream& in, M& m) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = read_le<double>(in);
}

}  // namespace

void save_s3m(const S3MParams& p, const std::filesystem::path& file) {
  p.check_shapes();
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + file.string());
  out.write(kMagic, sizeof kMagic);
  write_le<std::uint32_t>(out, kVersion);
  write_le<std::uint64_t>(out, p.feature_dim());
  write_le<std::uint64_t>(out, p.state_dim());
  write_block(out, p.encoder_weight);
  write_block(out, p.encoder_bias);
  write_block(out, p.state);
  write_block(out, p.decoder_weight);
  write_block(out, p.decoder_bias);
}

S3MParams load_s3m(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open " + file.string());
  char magic[4] = {};
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw DataError(file.string() + ": not an S3M model file");
  if (read_le<std::uint32_t>(in) != kVersion)
    throw DataError(file.string() + ": unsupported S3M model version");
  const auto d = read_le<std::uint64_t>(in);
  const auto o = read_le<std::uint64_t>(in);
  if (d == 0 || o == 0 || d > (1u << 24) || o > (1u << 16))
    throw DataError(file.string() + ": implausible model dimensions");
  S3MParams p = S3MParams::zeros(d, o);
  read_block(in, p.encoder_weight);
  read_block(in, p.encoder_bias);
  read_block(in, p.state);
  read_block(in, p.decoder_weight);
  read_block(in, p.decoder_bias);
  if (in.peek() != std::char_traits<char>::eof())
    throw DataError(file.string() + ": trailing bytes after model");
  if (!p.all_finite()) throw DataError(file.string() + ": non-finite weights");
  return p;
}

}  // namespace ovad
