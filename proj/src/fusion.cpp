#include "mmasr/fusion.hpp"

namespace mmasr {

std::string_view to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::none: return "none";
    case FusionMode::emb: return "emb";
    case FusionMode::seq: return "seq";
  }
  return "none";
}

FusionMode parse_fusion_mode(std::string_view name) {
  if (name == "none") return FusionMode::none;
  if (name == "emb") return FusionMode::emb;
  if (name == "seq") return FusionMode::seq;
  throw ParameterError("unknown fusion mode '" + std::string(name) + "'");
}

template <typename Scalar>
Fusion<Scalar>::Fusion(const FusionConfig& cfg, int audio_dim, int visual_dim, ParameterSet<Scalar>& params, Rng& rng)
    : cfg_(cfg), audio_dim_(audio_dim), visual_dim_(visual_dim) {
  const Component c = Component::fusion;
  if (cfg.mode == FusionMode::emb) {
    audio_proj_ = Linear<Scalar>::create(params, "fusion.audio_proj", c, audio_dim, cfg.audio_proj_dim, rng);
    visual_proj_ = Linear<Scalar>::create(params, "fusion.visual_proj", c, visual_dim, cfg.visual_proj_dim, rng);
    out_proj_ = Linear<Scalar>::create(params, "fusion.out_proj", c, cfg.audio_proj_dim + cfg.visual_proj_dim,
                                       audio_dim, rng, InitKind::zeros);
  } else if (cfg.mode == FusionMode::seq) {
    visual_proj_ = Linear<Scalar>::create(params, "fusion.visual_proj", c, visual_dim, audio_dim, rng);
  }
}

namespace {

template <typename Scalar>
void check_dims(const Var<Scalar>& speech, const Var<Scalar>& visual, int audio_dim, int visual_dim) {
  if (speech.rows() != audio_dim)
    throw DimensionError("fusion: speech embeddings have " + std::to_string(speech.rows()) + " rows, expected " +
                         std::to_string(audio_dim));
  if (visual.rows() != visual_dim)
    throw DimensionError("fusion: visual embeddings have " + std::to_string(visual.rows()) + " rows, expected " +
                         std::to_string(visual_dim));
}

}  // namespace

template <typename Scalar>
FusedSequence<Scalar> Fusion<Scalar>::fuse_emb(Tape<Scalar>& tape, const Var<Scalar>& speech,
                                               const Var<Scalar>& visual) const {
  if (cfg_.mode != FusionMode::emb) throw StateError("fusion: emb parameters were not created");
  if (visual.cols() != 1)
    throw PreconditionError("fusion emb: needs a single visual embedding, got K=" + std::to_string(visual.cols()));
  check_dims(speech, visual, audio_dim_, visual_dim_);
  const Eigen::Index frames = speech.cols();
  auto a = audio_proj_(tape, speech);
  auto v = replicate_cols(visual_proj_(tape, visual), frames);
  auto joint = concat<Scalar>({a, v}, 0);
  return {add(speech, out_proj_(tape, joint)), frames};
}

template <typename Scalar>
FusedSequence<Scalar> Fusion<Scalar>::fuse_seq(Tape<Scalar>& tape, const Var<Scalar>& speech,
                                               const Var<Scalar>& visual) const {
  if (cfg_.mode != FusionMode::seq) throw StateError("fusion: seq parameters were not created");
  check_dims(speech, visual, audio_dim_, visual_dim_);
  return {concat<Scalar>({speech, visual_proj_(tape, visual)}, 1), speech.cols()};
}

template <typename Scalar>
FusedSequence<Scalar> Fusion<Scalar>::fuse(Tape<Scalar>& tape, const Var<Scalar>& speech,
                                           const std::optional<Var<Scalar>>& visual) const {
  switch (cfg_.mode) {
    case FusionMode::none: return {speech, speech.cols()};
    case FusionMode::emb:
      if (!visual) throw std::invalid_argument("fusion emb: visual input required");
      return fuse_emb(tape, speech, *visual);
    case FusionMode::seq:
      if (!visual) throw std::invalid_argument("fusion seq: visual input required");
      return fuse_seq(tape, speech, *visual);
  }
  return {speech, speech.cols()};
}

template class Fusion<float>;
template class Fusion<double>;

}  // namespace mmasr
