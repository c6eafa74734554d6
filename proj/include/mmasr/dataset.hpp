#pragma once

// Turns manifest entries into model-ready utterances: log-mel features
// (precomputed tensor or computed from the WAV), the visual input
// (precomputed embedding or preprocessed image) and subword tokens.

#include <filesystem>
#include <span>
#include <vector>

#include "mmasr/audio.hpp"
#include "mmasr/image.hpp"
#include "mmasr/manifest.hpp"
#include "mmasr/model.hpp"
#include "mmasr/tokenizer.hpp"

namespace mmasr {

struct DataOptions {
  FeatureConfig features;
  PreprocessConfig image;
  bool load_visual = true;
};

Matrix<double> load_features(const ManifestEntry& e, const std::filesystem::path& root, const FeatureConfig& cfg);
std::optional<VisualInput> load_visual(const ManifestEntry& e, const std::filesystem::path& root,
                                       const PreprocessConfig& cfg);

// Tokens are left empty when vocab is null.
std::vector<Utterance> load_utterances(std::span<const ManifestEntry> entries, const std::filesystem::path& root,
                                       const Vocabulary* vocab, const DataOptions& opts);

}  // namespace mmasr
