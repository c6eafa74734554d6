#pragma once

// Building blocks shared by the audio encoder, visual encoder, fusion and
// decoder. Each layer holds non-owning pointers into a ParameterSet.

#include <memory>
#include <string>

#include "mmasr/autodiff.hpp"
#include "mmasr/parameters.hpp"

namespace mmasr {

enum class InitKind { xavier, zeros, he };

template <typename Scalar>
struct Linear {
  Parameter<Scalar>* weight = nullptr;  // out x in
  Parameter<Scalar>* bias = nullptr;    // out x 1

  static Linear create(ParameterSet<Scalar>& params, const std::string& name, Component component, int in, int out,
                       Rng& rng, InitKind init = InitKind::xavier);
  Var<Scalar> operator()(Tape<Scalar>& tape, const Var<Scalar>& x) const;
  int in_features() const { return static_cast<int>(weight->value.cols()); }
  int out_features() const { return static_cast<int>(weight->value.rows()); }
};

template <typename Scalar>
struct LayerNorm {
  Parameter<Scalar>* gain = nullptr;
  Parameter<Scalar>* bias = nullptr;

  static LayerNorm create(ParameterSet<Scalar>& params, const std::string& name, Component component, int dim);
  Var<Scalar> operator()(Tape<Scalar>& tape, const Var<Scalar>& x) const;
};

// Gather table turning a C x (H * W) map into (C * k * k) x (H_out * W_out)
// patches; zero padding is encoded as index -1.
struct Im2ColTable {
  std::shared_ptr<const std::vector<std::ptrdiff_t>> index;
  int out_height = 0;
  int out_width = 0;
};
Im2ColTable im2col_table(int channels, int height, int width, int kernel, int stride, int padding);

template <typename Scalar>
struct Conv2d {
  Parameter<Scalar>* weight = nullptr;  // out x (in * k * k)
  Parameter<Scalar>* bias = nullptr;    // out x 1
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int padding = 1;

  struct Output {
    Var<Scalar> values;  // out_channels x (height * width)
    int height = 0;
    int width = 0;
  };

  static Conv2d create(ParameterSet<Scalar>& params, const std::string& name, Component component, int in, int out,
                       int kernel, int stride, int padding, Rng& rng);
  Output operator()(Tape<Scalar>& tape, const Var<Scalar>& x, int height, int width) const;
};

template <typename Scalar>
struct MultiHeadAttention {
  Linear<Scalar> query, key, value, output;
  int heads = 1;

  static MultiHeadAttention create(ParameterSet<Scalar>& params, const std::string& name, Component component,
                                   int dim, int heads, Rng& rng);
  // query_in: D x Tq, memory: D x Tk. additive_mask, when given, is Tk x Tq.
  Var<Scalar> operator()(Tape<Scalar>& tape, const Var<Scalar>& query_in, const Var<Scalar>& memory,
                         const Matrix<Scalar>* additive_mask, double dropout, Rng* rng) const;
};

template <typename Scalar>
struct FeedForward {
  Linear<Scalar> expand, project;

  static FeedForward create(ParameterSet<Scalar>& params, const std::string& name, Component component, int dim,
                            int hidden, Rng& rng);
  Var<Scalar> operator()(Tape<Scalar>& tape, const Var<Scalar>& x, double dropout, Rng* rng) const;
};

// D x length sinusoidal position table.
template <typename Scalar>
Matrix<Scalar> sinusoidal_positions(int dim, int length);

// Tk x Tq mask with a large negative value wherever key > query.
template <typename Scalar>
Matrix<Scalar> causal_mask(int length);

}  // namespace mmasr
