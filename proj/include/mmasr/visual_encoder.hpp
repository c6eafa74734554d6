#pragma once

// Small residual CNN standing in for an ImageNet ResNet. The pre-pool
// activation map (D_v x G*G, cell (i, j) at column i * G + j) is the grid
// embedding; its column mean is the global embedding. Optional gMLP layers
// refine grid embeddings along the sequence axis.

#include <optional>
#include <string>
#include <vector>

#include "mmasr/image.hpp"
#include "mmasr/layers.hpp"

namespace mmasr {

struct VisualConfig {
  int image_size = 32;
  int stem_channels = 16;
  int n_blocks = 3;  // the first three blocks downsample by 2
  int embedding_dim = 64;
  int n_gmlp = 0;

  int grid_size() const;
  int block_channels(int block) const;
  void validate() const;
};

enum class VisualKind { global, grid };

// What the model receives on the visual channel: a preprocessed image
// (3 x H*W) or a precomputed pre-refinement embedding (D_v x K).
struct VisualInput {
  enum class Kind { image, embedding };
  Kind kind = Kind::image;
  Matrix<double> values;
  int height = 0;
  int width = 0;

  static VisualInput from_image(const Image& img) { return {Kind::image, img.pixels, img.height, img.width}; }
  static VisualInput from_embedding(Matrix<double> e) { return {Kind::embedding, std::move(e), 0, 0}; }
};

template <typename Scalar>
struct GmlpLayer {
  LayerNorm<Scalar> norm;
  Linear<Scalar> expand;            // D -> 2D
  Parameter<Scalar>* spatial_weight = nullptr;  // K x K
  Parameter<Scalar>* spatial_bias = nullptr;    // K x 1
  Linear<Scalar> project;           // D -> D

  static GmlpLayer create(ParameterSet<Scalar>& params, const std::string& name, Component component, int dim,
                          int seq_len, Rng& rng);
  Var<Scalar> operator()(Tape<Scalar>& tape, const Var<Scalar>& x) const;
};

template <typename Scalar>
class VisualEncoder {
 public:
  VisualEncoder(const VisualConfig& cfg, ParameterSet<Scalar>& params, Rng& rng,
                const std::string& prefix = "visual_encoder", Component component = Component::visual_encoder);

  const VisualConfig& config() const { return cfg_; }
  int embedding_dim() const { return cfg_.embedding_dim; }
  int grid_size() const { return cfg_.grid_size(); }

  // image: 3 x (H * W) with H = W = image_size.
  Var<Scalar> encode_grid(Tape<Scalar>& tape, const Var<Scalar>& image) const;
  Var<Scalar> encode_global(Tape<Scalar>& tape, const Var<Scalar>& image) const;
  // gMLP stack over a D_v x K grid (K > 1); identity with zero layers.
  Var<Scalar> refine(Tape<Scalar>& tape, const Var<Scalar>& grid) const;
  // Full visual path used by the model for the requested embedding kind.
  Var<Scalar> encode(Tape<Scalar>& tape, const VisualInput& input, VisualKind kind) const;

 private:
  struct Block {
    Conv2d<Scalar> conv1, conv2;
    std::optional<Conv2d<Scalar>> shortcut;
  };

  VisualConfig cfg_;
  Conv2d<Scalar> stem_;
  std::vector<Block> blocks_;
  std::vector<GmlpLayer<Scalar>> gmlp_;
};

// Encoder plus a linear head over the global embedding, for pretraining on
// an image-classification task. The head is not part of any model checkpoint.
template <typename Scalar>
class VisualClassifier {
 public:
  VisualClassifier(const VisualConfig& cfg, int n_classes, std::uint64_t seed);

  ParameterSet<Scalar>& parameters() { return params_; }
  const ParameterSet<Scalar>& parameters() const { return params_; }
  const VisualEncoder<Scalar>& encoder() const { return encoder_; }
  Var<Scalar> logits(Tape<Scalar>& tape, const Matrix<double>& image) const;

 private:
  ParameterSet<Scalar> params_;
  Rng rng_;
  VisualEncoder<Scalar> encoder_;
  Linear<Scalar> head_;
};

}  // namespace mmasr
