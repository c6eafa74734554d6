#include "mmasr/visual_encoder.hpp"

namespace mmasr {

int VisualConfig::grid_size() const {
  int g = image_size;
  for (int b = 0; b < std::min(n_blocks, 3); ++b) g = (g - 1) / 2 + 1;
  return g;
}

int VisualConfig::block_channels(int block) const {
  int shift = n_blocks - 1 - block;
  return std::max(stem_channels, embedding_dim >> shift);
}

void VisualConfig::validate() const {
  if (image_size < 8 || stem_channels <= 0 || n_blocks <= 0 || embedding_dim <= 0 || n_gmlp < 0)
    throw ParameterError("visual config: invalid sizes");
}

template <typename Scalar>
GmlpLayer<Scalar> GmlpLayer<Scalar>::create(ParameterSet<Scalar>& params, const std::string& name,
                                            Component component, int dim, int seq_len, Rng& rng) {
  GmlpLayer l;
  l.norm = LayerNorm<Scalar>::create(params, name + ".norm", component, dim);
  l.expand = Linear<Scalar>::create(params, name + ".expand", component, dim, 2 * dim, rng);
  l.spatial_weight = &params.add(name + ".spatial.w", component, normal_init<Scalar>(seq_len, seq_len, 1e-3, rng));
  l.spatial_bias = &params.add(name + ".spatial.b", component, Matrix<Scalar>::Ones(seq_len, 1));
  l.project = Linear<Scalar>::create(params, name + ".project", component, dim, dim, rng);
  return l;
}

template <typename Scalar>
Var<Scalar> GmlpLayer<Scalar>::operator()(Tape<Scalar>& tape, const Var<Scalar>& x) const {
  const Eigen::Index dim = x.rows();
  if (x.cols() != spatial_weight->value.rows())
    throw DimensionError("gmlp: sequence length " + std::to_string(x.cols()) + " does not match spatial map of " +
                         std::to_string(spatial_weight->value.rows()));
  auto u = gelu(expand(tape, norm(tape, x)));
  auto z1 = slice(u, 0, 0, dim);
  auto z2 = slice(u, 0, dim, dim);
  // Dense map along the sequence axis: (W z2^T + b)^T.
  auto mixed = transpose(add(matmul(tape.parameter(*spatial_weight), transpose(z2)), tape.parameter(*spatial_bias)));
  return add(x, project(tape, mul(z1, mixed)));
}

template <typename Scalar>
VisualEncoder<Scalar>::VisualEncoder(const VisualConfig& cfg, ParameterSet<Scalar>& params, Rng& rng,
                                     const std::string& prefix, Component component)
    : cfg_(cfg) {
  cfg_.validate();
  stem_ = Conv2d<Scalar>::create(params, prefix + ".stem", component, 3, cfg.stem_channels, 3, 1, 1, rng);
  int in = cfg.stem_channels;
  for (int b = 0; b < cfg.n_blocks; ++b) {
    const int out = cfg.block_channels(b);
    const int stride = b < 3 ? 2 : 1;
    const std::string name = prefix + ".block" + std::to_string(b);
    Block blk{Conv2d<Scalar>::create(params, name + ".conv1", component, in, out, 3, stride, 1, rng),
              Conv2d<Scalar>::create(params, name + ".conv2", component, out, out, 3, 1, 1, rng),
              std::nullopt};
    if (stride != 1 || in != out)
      blk.shortcut = Conv2d<Scalar>::create(params, name + ".shortcut", component, in, out, 1, stride, 0, rng);
    blocks_.push_back(std::move(blk));
    in = out;
  }
  const int g = cfg.grid_size();
  for (int l = 0; l < cfg.n_gmlp; ++l)
    gmlp_.push_back(GmlpLayer<Scalar>::create(params, prefix + ".gmlp" + std::to_string(l), component,
                                              cfg.embedding_dim, g * g, rng));
}

template <typename Scalar>
Var<Scalar> VisualEncoder<Scalar>::encode_grid(Tape<Scalar>& tape, const Var<Scalar>& image) const {
  const int size = cfg_.image_size;
  if (image.rows() != 3 || image.cols() != static_cast<Eigen::Index>(size) * size)
    throw DimensionError("visual encoder: expected [3x" + std::to_string(size * size) + "] image, got [" +
                         std::to_string(image.rows()) + "x" + std::to_string(image.cols()) + "]");
  auto s = stem_(tape, image, size, size);
  Var<Scalar> x = relu(s.values);
  int h = s.height, w = s.width;
  for (const auto& blk : blocks_) {
    auto a = blk.conv1(tape, x, h, w);
    auto b = blk.conv2(tape, relu(a.values), a.height, a.width);
    Var<Scalar> skip = blk.shortcut ? (*blk.shortcut)(tape, x, h, w).values : x;
    x = relu(add(b.values, skip));
    h = b.height;
    w = b.width;
  }
  return x;
}

template <typename Scalar>
Var<Scalar> VisualEncoder<Scalar>::encode_global(Tape<Scalar>& tape, const Var<Scalar>& image) const {
  return mean_cols(encode_grid(tape, image));
}

template <typename Scalar>
Var<Scalar> VisualEncoder<Scalar>::refine(Tape<Scalar>& tape, const Var<Scalar>& grid) const {
  if (gmlp_.empty()) return grid;
  if (grid.cols() <= 1) throw PreconditionError("gmlp: needs a sequence of more than one embedding");
  Var<Scalar> x = grid;
  for (const auto& layer : gmlp_) x = layer(tape, x);
  return x;
}

template <typename Scalar>
Var<Scalar> VisualEncoder<Scalar>::encode(Tape<Scalar>& tape, const VisualInput& input, VisualKind kind) const {
  Var<Scalar> grid;
  if (input.kind == VisualInput::Kind::image) {
    grid = encode_grid(tape, tape.constant(input.values.cast<Scalar>()));
  } else {
    if (input.values.rows() != cfg_.embedding_dim)
      throw DimensionError("visual embedding has " + std::to_string(input.values.rows()) + " rows, expected " +
                           std::to_string(cfg_.embedding_dim));
    grid = tape.constant(input.values.cast<Scalar>());
  }
  if (kind == VisualKind::global) return grid.cols() == 1 ? grid : mean_cols(grid);
  return refine(tape, grid);
}

template <typename Scalar>
VisualClassifier<Scalar>::VisualClassifier(const VisualConfig& cfg, int n_classes, std::uint64_t seed)
    : rng_(seed), encoder_(cfg, params_, rng_) {
  head_ = Linear<Scalar>::create(params_, "classifier", Component::visual_encoder, cfg.embedding_dim, n_classes, rng_);
}

template <typename Scalar>
Var<Scalar> VisualClassifier<Scalar>::logits(Tape<Scalar>& tape, const Matrix<double>& image) const {
  return head_(tape, encoder_.encode_global(tape, tape.constant(image.cast<Scalar>())));
}

template struct GmlpLayer<float>;
template struct GmlpLayer<double>;
template class VisualEncoder<float>;
template class VisualEncoder<double>;
template class VisualClassifier<float>;
template class VisualClassifier<double>;

}  // namespace mmasr
