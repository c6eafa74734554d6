#pragma once

// Fusion of speech embeddings (D_a x T) with visual embeddings (D_v x K).
//
//   emb: out = speech + P_out [ P_a speech ; repeat_T(P_v visual) ]   (K = 1)
//   seq: out = [ speech , P_v visual ]  along the sequence axis       (any K)
//
// P_out starts at zero, so an untrained emb fusion returns the speech input.

#include <optional>
#include <string_view>

#include "mmasr/layers.hpp"

namespace mmasr {

enum class FusionMode { none, emb, seq };

std::string_view to_string(FusionMode mode);
FusionMode parse_fusion_mode(std::string_view name);

struct FusionConfig {
  FusionMode mode = FusionMode::none;
  int audio_proj_dim = 16;   // D_a'
  int visual_proj_dim = 16;  // D_v'
};

template <typename Scalar>
struct FusedSequence {
  Var<Scalar> values;        // D_a x T_out
  Eigen::Index boundary = 0;  // first visual-derived column (== T)
};

template <typename Scalar>
class Fusion {
 public:
  Fusion() = default;
  Fusion(const FusionConfig& cfg, int audio_dim, int visual_dim, ParameterSet<Scalar>& params, Rng& rng);

  FusionMode mode() const { return cfg_.mode; }

  FusedSequence<Scalar> fuse_emb(Tape<Scalar>& tape, const Var<Scalar>& speech, const Var<Scalar>& visual) const;
  FusedSequence<Scalar> fuse_seq(Tape<Scalar>& tape, const Var<Scalar>& speech, const Var<Scalar>& visual) const;
  FusedSequence<Scalar> fuse(Tape<Scalar>& tape, const Var<Scalar>& speech,
                             const std::optional<Var<Scalar>>& visual) const;

 private:
  FusionConfig cfg_;
  int audio_dim_ = 0;
  int visual_dim_ = 0;
  Linear<Scalar> audio_proj_;
  Linear<Scalar> visual_proj_;
  Linear<Scalar> out_proj_;
};

}  // namespace mmasr
