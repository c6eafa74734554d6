#include "mmasr/dataset.hpp"

namespace mmasr {

Matrix<double> load_features(const ManifestEntry& e, const std::filesystem::path& root, const FeatureConfig& cfg) {
  if (!e.features.empty()) {
    const auto path = resolve_path(root, e.features);
    const Tensor t = load_tensor(path);
    if (t.rank() != 2 || static_cast<int>(t.extent(1)) != cfg.n_mels)
      throw DataError(path.string() + ": expected a frames x " + std::to_string(cfg.n_mels) + " feature tensor, got " +
                      shape_string(t.shape()));
    return t.to_matrix<double>();
  }
  return logmel(read_wav(resolve_path(root, e.audio)), cfg).values;
}

std::optional<VisualInput> load_visual(const ManifestEntry& e, const std::filesystem::path& root,
                                       const PreprocessConfig& cfg) {
  if (!e.visual_embedding.empty()) {
    const auto path = resolve_path(root, e.visual_embedding);
    const Tensor t = load_tensor(path);
    if (t.rank() != 2) throw DataError(path.string() + ": visual embedding must be a D_v x K tensor");
    return VisualInput::from_embedding(t.to_matrix<double>());
  }
  if (!e.image.empty()) {
    Rng unused(0);
    return VisualInput::from_image(preprocess(load_image(resolve_path(root, e.image)), cfg, false, unused));
  }
  return std::nullopt;
}

std::vector<Utterance> load_utterances(std::span<const ManifestEntry> entries, const std::filesystem::path& root,
                                       const Vocabulary* vocab, const DataOptions& opts) {
  std::vector<Utterance> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    Utterance u;
    u.id = e.utt_id;
    try {
      u.features = load_features(e, root, opts.features);
      if (opts.load_visual) u.visual = load_visual(e, root, opts.image);
    } catch (const DataError& err) {
      throw DataError("utterance '" + e.utt_id + "': " + err.what());
    }
    if (vocab) u.tokens = vocab->encode(e.text);
    out.push_back(std::move(u));
  }
  return out;
}

}  // namespace mmasr
