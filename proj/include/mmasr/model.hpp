#pragma once

// Transformer encoder-decoder with an optional visual channel.
//
// Audio path: two 3x3 stride-2 convolutions over the (mel x frame) plane,
// so T_out = ceil(ceil(T / 2) / 2) = ceil(T / 4); a linear map to d_model,
// scaling by sqrt(d_model), sinusoidal positions, pre-norm self-attention
// blocks and a final layer norm. The fused sequence feeds a pre-norm decoder
// with causal self-attention and a single cross-attention over every fused
// position.

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmasr/audio.hpp"
#include "mmasr/checkpoint.hpp"
#include "mmasr/fusion.hpp"
#include "mmasr/specaugment.hpp"
#include "mmasr/tokenizer.hpp"
#include "mmasr/visual_encoder.hpp"

namespace mmasr {

inline constexpr int kSubsampleFactor = 4;

// Encoder output length for a given number of input frames.
int subsampled_length(int frames);

struct ModelConfig {
  int n_mels = 80;
  int d_model = 64;
  int n_heads = 4;
  int n_encoder_blocks = 4;
  int n_decoder_blocks = 2;
  int ff_dim = 128;
  int vocab_size = 200;
  int subsample_channels = 8;
  double dropout = 0.1;
  int max_target_len = 128;
  bool positional_encoding = true;
  FusionConfig fusion;
  VisualConfig visual;

  void validate() const;
  // Flat "model.*" keys, as stored in checkpoint metadata and config files.
  std::map<std::string, std::string> to_kv() const;
  // Returns false when `key` is not a model key; throws ParameterError on a bad value.
  bool set(std::string_view key, std::string_view value);
  static ModelConfig from_kv(const std::map<std::string, std::string>& kv);
};

struct Utterance {
  std::string id;
  Matrix<double> features;  // frames x n_mels, before normalization
  std::optional<VisualInput> visual;
  TokenSequence tokens;  // without sos / eos
};

struct LossOptions {
  bool train = false;  // dropout, augmentation and image flips
  std::optional<AugmentPolicy> augment;
  bool flip_images = true;
  double label_smoothing = 0.1;
  std::size_t pad_to = 0;  // pad decoder input/target to at least this length
};

template <typename Scalar>
struct LossResult {
  Var<Scalar> loss;        // token-weighted mean over the batch
  std::size_t tokens = 0;  // non-pad target positions
};

struct Hypothesis {
  TokenSequence ids;  // emitted tokens, without sos; ends with eos when finished
  double score = 0.0;
  bool finished = false;
};

// Log-probabilities over the vocabulary for the next token after `prefix`
// (which starts with sos).
using StepScorer = std::function<Eigen::VectorXd(std::span<const int> prefix)>;

// Tokens that can never be emitted (pad, sos) are excluded from both searches.
Hypothesis greedy_search(const StepScorer& scorer, int max_len);
Hypothesis beam_search(const StepScorer& scorer, int beam_size, int max_len, double length_penalty);
double normalized_score(const Hypothesis& h, double length_penalty);
// Transcription tokens of a hypothesis (eos removed).
TokenSequence strip_eos(const Hypothesis& h);

struct DecodeOptions {
  int beam_size = 1;
  int max_len = 64;
  double length_penalty = 0.0;
};

enum class ComponentInit { random, load };
enum class ComponentTrain { frozen, finetune };

struct ComponentSpec {
  ComponentInit init = ComponentInit::random;
  ComponentTrain train = ComponentTrain::finetune;
  std::filesystem::path path;  // checkpoint to load from when init == load
};

using ComponentPlan = std::map<Component, ComponentSpec>;

template <typename Scalar>
class AsrModel {
 public:
  AsrModel(const ModelConfig& cfg, std::uint64_t seed);
  AsrModel(AsrModel&&) noexcept = default;

  static AsrModel from_checkpoint(const Checkpoint& ckpt);
  Checkpoint to_checkpoint() const;

  const ModelConfig& config() const { return cfg_; }
  ParameterSet<Scalar>& parameters() { return params_; }
  const ParameterSet<Scalar>& parameters() const { return params_; }
  const FeatureStats& feature_stats() const { return stats_; }
  void set_feature_stats(FeatureStats stats) { stats_ = std::move(stats); }
  bool multimodal() const { return cfg_.fusion.mode != FusionMode::none; }
  VisualKind visual_kind() const;
  const VisualEncoder<Scalar>* visual_encoder() const { return visual_ ? &*visual_ : nullptr; }

  // Applies the stored normalization statistics (identity when absent).
  Matrix<double> normalize(const Matrix<double>& features) const;

  // features: frames x n_mels, already normalized. Returns D x ceil(frames / 4).
  Var<Scalar> audio_encode(Tape<Scalar>& tape, const Matrix<double>& features, Rng* dropout_rng = nullptr) const;
  // Self-attention stack alone, on a D x T sequence (after subsampling).
  Var<Scalar> encoder_blocks(Tape<Scalar>& tape, const Var<Scalar>& x, Rng* dropout_rng = nullptr) const;
  std::optional<Var<Scalar>> visual_encode(Tape<Scalar>& tape, const std::optional<VisualInput>& visual) const;
  FusedSequence<Scalar> encode(Tape<Scalar>& tape, const Matrix<double>& features,
                               const std::optional<VisualInput>& visual, Rng* dropout_rng = nullptr) const;

  // inputs: sos-prefixed token ids. Returns V x L logits, column k predicting token k + 1.
  Var<Scalar> decoder_logits(Tape<Scalar>& tape, const Var<Scalar>& memory, std::span<const int> inputs,
                             Rng* dropout_rng = nullptr) const;

  // Inference on raw (unnormalized) features.
  Matrix<Scalar> encode_for_decoding(const Matrix<double>& features, const std::optional<VisualInput>& visual) const;
  Eigen::VectorXd decode_step(const Matrix<Scalar>& fused, std::span<const int> prefix) const;
  // Log-probabilities for every position of a teacher-forced prefix: V x L.
  Matrix<Scalar> parallel_log_probs(const Matrix<Scalar>& fused, std::span<const int> prefix) const;
  Hypothesis greedy_decode(const Matrix<Scalar>& fused, int max_len) const;
  Hypothesis beam_search(const Matrix<Scalar>& fused, int beam_size, int max_len, double length_penalty) const;
  TokenSequence transcribe(const Matrix<double>& features, const std::optional<VisualInput>& visual,
                           const DecodeOptions& opts) const;

  LossResult<Scalar> forward_loss(Tape<Scalar>& tape, std::span<const Utterance> batch, const LossOptions& opts,
                                  Rng& rng) const;

  // Initializes and freezes components per plan. Components absent from the
  // plan keep their current values and trainability.
  void configure_components(const ComponentPlan& plan);
  void load_component(const Checkpoint& ckpt, Component component);

 private:
  struct EncoderBlock {
    LayerNorm<Scalar> attn_norm, ff_norm;
    MultiHeadAttention<Scalar> attn;
    FeedForward<Scalar> ff;
  };
  struct DecoderBlock {
    LayerNorm<Scalar> self_norm, cross_norm, ff_norm;
    MultiHeadAttention<Scalar> self_attn, cross_attn;
    FeedForward<Scalar> ff;
  };

  ModelConfig cfg_;
  ParameterSet<Scalar> params_;
  FeatureStats stats_;

  Conv2d<Scalar> sub1_, sub2_;
  Linear<Scalar> in_proj_;
  std::vector<EncoderBlock> enc_blocks_;
  LayerNorm<Scalar> enc_norm_;
  std::optional<VisualEncoder<Scalar>> visual_;
  Fusion<Scalar> fusion_;
  Parameter<Scalar>* embedding_ = nullptr;  // D x V
  std::vector<DecoderBlock> dec_blocks_;
  LayerNorm<Scalar> dec_norm_;
  Linear<Scalar> out_proj_;
};

std::string_view to_string(ComponentInit v);
std::string_view to_string(ComponentTrain v);

}  // namespace mmasr
