#pragma once

// Small deterministic models and batches shared by unit and acceptance tests.

#include <bit>
#include <vector>

#include "mmasr/model.hpp"

namespace mmasr::testing {

inline Matrix<double> random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double stddev = 1.0) {
  Rng rng(seed);
  return normal_init<double>(rows, cols, stddev, rng);
}

inline ModelConfig tiny_config(FusionMode mode = FusionMode::none, int vocab = 9) {
  ModelConfig cfg;
  cfg.n_mels = 8;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_encoder_blocks = 1;
  cfg.n_decoder_blocks = 1;
  cfg.ff_dim = 12;
  cfg.vocab_size = vocab;
  cfg.subsample_channels = 2;
  cfg.dropout = 0.0;
  cfg.max_target_len = 16;
  cfg.fusion.mode = mode;
  cfg.fusion.audio_proj_dim = 4;
  cfg.fusion.visual_proj_dim = 4;
  cfg.visual.image_size = 8;
  cfg.visual.stem_channels = 2;
  cfg.visual.n_blocks = 1;
  cfg.visual.embedding_dim = 4;
  if (mode == FusionMode::seq) cfg.visual.n_gmlp = 1;
  return cfg;
}

// Random utterances with token ids in [4, vocab) (no specials).
inline std::vector<Utterance> random_batch(const ModelConfig& cfg, std::size_t n, std::uint64_t seed,
                                           bool with_image) {
  Rng rng(seed);
  std::vector<Utterance> batch(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& u = batch[i];
    u.id = "u" + std::to_string(i);
    const auto frames = static_cast<Eigen::Index>(6 + rng() % 20);
    u.features = random_matrix(frames, cfg.n_mels, rng());
    const auto len = 1 + rng() % 5;
    for (std::size_t k = 0; k < len; ++k)
      u.tokens.push_back(4 + static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.vocab_size - 4)));
    if (with_image) {
      const int s = cfg.visual.image_size;
      u.visual = VisualInput{VisualInput::Kind::image, random_matrix(3, s * s, rng()), s, s};
    }
  }
  return batch;
}

// Gives zero-initialized parameters (biases, the emb output projection)
// random values so gradient checks exercise every path.
template <typename Scalar>
void randomize_zero_parameters(ParameterSet<Scalar>& params, std::uint64_t seed = 99) {
  Rng rng(seed);
  for (auto& p : params)
    if (p->value.isZero()) p->value = normal_init<Scalar>(p->value.rows(), p->value.cols(), 0.3, rng);
}

inline bool same_bits(const Matrix<float>& a, const Matrix<float>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint32_t>(a.data()[i]) != std::bit_cast<std::uint32_t>(b.data()[i])) return false;
  return true;
}

}  // namespace mmasr::testing
