#include "mmasr/layers.hpp"

#include <cmath>
#include <map>
#include <tuple>

namespace mmasr {

template <typename Scalar>
Linear<Scalar> Linear<Scalar>::create(ParameterSet<Scalar>& params, const std::string& name, Component component,
                                      int in, int out, Rng& rng, InitKind init) {
  Matrix<Scalar> w;
  switch (init) {
    case InitKind::xavier: w = xavier_uniform<Scalar>(out, in, rng); break;
    case InitKind::zeros: w = Matrix<Scalar>::Zero(out, in); break;
    case InitKind::he: w = he_normal<Scalar>(out, in, in, rng); break;
  }
  Linear l;
  l.weight = &params.add(name + ".w", component, std::move(w));
  l.bias = &params.add(name + ".b", component, Matrix<Scalar>::Zero(out, 1));
  return l;
}

template <typename Scalar>
Var<Scalar> Linear<Scalar>::operator()(Tape<Scalar>& tape, const Var<Scalar>& x) const {
  return add(matmul(tape.parameter(*weight), x), tape.parameter(*bias));
}

template <typename Scalar>
LayerNorm<Scalar> LayerNorm<Scalar>::create(ParameterSet<Scalar>& params, const std::string& name,
                                            Component component, int dim) {
  LayerNorm n;
  n.gain = &params.add(name + ".g", component, Matrix<Scalar>::Ones(dim, 1));
  n.bias = &params.add(name + ".b", component, Matrix<Scalar>::Zero(dim, 1));
  return n;
}

template <typename Scalar>
Var<Scalar> LayerNorm<Scalar>::operator()(Tape<Scalar>& tape, const Var<Scalar>& x) const {
  return layer_norm(x, tape.parameter(*gain), tape.parameter(*bias), 1e-5);
}

Im2ColTable im2col_table(int channels, int height, int width, int kernel, int stride, int padding) {
  using Key = std::tuple<int, int, int, int, int, int>;
  thread_local std::map<Key, Im2ColTable> cache;
  Key key{channels, height, width, kernel, stride, padding};
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  Im2ColTable t;
  t.out_height = (height + 2 * padding - kernel) / stride + 1;
  t.out_width = (width + 2 * padding - kernel) / stride + 1;
  const std::size_t cols = static_cast<std::size_t>(t.out_height) * t.out_width;
  auto index = std::make_shared<std::vector<std::ptrdiff_t>>(static_cast<std::size_t>(channels) * kernel * kernel * cols);
  std::size_t at = 0;
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < kernel; ++ky)
      for (int kx = 0; kx < kernel; ++kx)
        for (int oy = 0; oy < t.out_height; ++oy)
          for (int ox = 0; ox < t.out_width; ++ox) {
            int y = oy * stride + ky - padding;
            int x = ox * stride + kx - padding;
            (*index)[at++] = (y < 0 || y >= height || x < 0 || x >= width)
                                 ? -1
                                 : static_cast<std::ptrdiff_t>(c) * height * width + static_cast<std::ptrdiff_t>(y) * width + x;
          }
  t.index = std::move(index);
  cache.emplace(key, t);
  return t;
}

template <typename Scalar>
Conv2d<Scalar> Conv2d<Scalar>::create(ParameterSet<Scalar>& params, const std::string& name, Component component,
                                      int in, int out, int kernel, int stride, int padding, Rng& rng) {
  Conv2d c;
  const int fan_in = in * kernel * kernel;
  c.weight = &params.add(name + ".w", component, he_normal<Scalar>(out, fan_in, fan_in, rng));
  c.bias = &params.add(name + ".b", component, Matrix<Scalar>::Zero(out, 1));
  c.in_channels = in;
  c.out_channels = out;
  c.kernel = kernel;
  c.stride = stride;
  c.padding = padding;
  return c;
}

template <typename Scalar>
typename Conv2d<Scalar>::Output Conv2d<Scalar>::operator()(Tape<Scalar>& tape, const Var<Scalar>& x, int height,
                                                           int width) const {
  if (x.rows() != in_channels || x.cols() != static_cast<Eigen::Index>(height) * width)
    throw DimensionError("conv2d: expected [" + std::to_string(in_channels) + "x" + std::to_string(height * width) +
                         "] input, got [" + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) + "]");
  Im2ColTable t = im2col_table(in_channels, height, width, kernel, stride, padding);
  auto patches = gather(x, static_cast<Eigen::Index>(in_channels) * kernel * kernel,
                        static_cast<Eigen::Index>(t.out_height) * t.out_width, t.index);
  auto y = add(matmul(tape.parameter(*weight), patches), tape.parameter(*bias));
  return {y, t.out_height, t.out_width};
}

template <typename Scalar>
MultiHeadAttention<Scalar> MultiHeadAttention<Scalar>::create(ParameterSet<Scalar>& params, const std::string& name,
                                                              Component component, int dim, int heads, Rng& rng) {
  if (heads <= 0 || dim % heads != 0)
    throw ParameterError("attention: model dim " + std::to_string(dim) + " not divisible by " +
                         std::to_string(heads) + " heads");
  MultiHeadAttention a;
  a.query = Linear<Scalar>::create(params, name + ".wq", component, dim, dim, rng);
  a.key = Linear<Scalar>::create(params, name + ".wk", component, dim, dim, rng);
  a.value = Linear<Scalar>::create(params, name + ".wv", component, dim, dim, rng);
  a.output = Linear<Scalar>::create(params, name + ".wo", component, dim, dim, rng);
  a.heads = heads;
  return a;
}

template <typename Scalar>
Var<Scalar> MultiHeadAttention<Scalar>::operator()(Tape<Scalar>& tape, const Var<Scalar>& query_in,
                                                   const Var<Scalar>& memory, const Matrix<Scalar>* additive_mask,
                                                   double dropout_rate, Rng* rng) const {
  auto q = query(tape, query_in);
  auto k = key(tape, memory);
  auto v = value(tape, memory);
  const Eigen::Index dim = q.rows();
  const Eigen::Index head_dim = dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Var<Scalar> mask;
  if (additive_mask) {
    if (additive_mask->rows() != memory.cols() || additive_mask->cols() != query_in.cols())
      throw DimensionError("attention: mask shape does not match keys x queries");
    mask = tape.constant(*additive_mask);
  }
  std::vector<Var<Scalar>> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    auto qh = slice(q, 0, h * head_dim, head_dim);
    auto kh = slice(k, 0, h * head_dim, head_dim);
    auto vh = slice(v, 0, h * head_dim, head_dim);
    auto scores = scale(matmul(transpose(kh), qh), inv_sqrt);  // Tk x Tq
    if (additive_mask) scores = add(scores, mask);
    auto weights = softmax(scores, 0);
    if (rng && dropout_rate > 0.0) weights = dropout(weights, dropout_rate, *rng);
    outs.push_back(matmul(vh, weights));
  }
  auto merged = heads == 1 ? outs.front() : concat<Scalar>(std::span<const Var<Scalar>>(outs), 0);
  return output(tape, merged);
}

template <typename Scalar>
FeedForward<Scalar> FeedForward<Scalar>::create(ParameterSet<Scalar>& params, const std::string& name,
                                                Component component, int dim, int hidden, Rng& rng) {
  FeedForward f;
  f.expand = Linear<Scalar>::create(params, name + ".w1", component, dim, hidden, rng);
  f.project = Linear<Scalar>::create(params, name + ".w2", component, hidden, dim, rng);
  return f;
}

template <typename Scalar>
Var<Scalar> FeedForward<Scalar>::operator()(Tape<Scalar>& tape, const Var<Scalar>& x, double dropout_rate,
                                            Rng* rng) const {
  auto h = relu(expand(tape, x));
  if (rng && dropout_rate > 0.0) h = dropout(h, dropout_rate, *rng);
  return project(tape, h);
}

template <typename Scalar>
Matrix<Scalar> sinusoidal_positions(int dim, int length) {
  Matrix<Scalar> pe(dim, length);
  for (int pos = 0; pos < length; ++pos)
    for (int i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(i - i % 2) / dim);
      pe(i, pos) = static_cast<Scalar>(i % 2 == 0 ? std::sin(pos * rate) : std::cos(pos * rate));
    }
  return pe;
}

template <typename Scalar>
Matrix<Scalar> causal_mask(int length) {
  Matrix<Scalar> m = Matrix<Scalar>::Zero(length, length);
  for (int key = 0; key < length; ++key)
    for (int query = 0; query < key; ++query) m(key, query) = static_cast<Scalar>(-1e9);
  return m;
}

template struct Linear<float>;
template struct Linear<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;
template struct Conv2d<float>;
template struct Conv2d<double>;
template struct MultiHeadAttention<float>;
template struct MultiHeadAttention<double>;
template struct FeedForward<float>;
template struct FeedForward<double>;
template Matrix<float> sinusoidal_positions<float>(int, int);
template Matrix<double> sinusoidal_positions<double>(int, int);
template Matrix<float> causal_mask<float>(int);
template Matrix<double> causal_mask<double>(int);

}  // namespace mmasr
