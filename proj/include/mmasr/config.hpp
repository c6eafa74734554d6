#pragma once

// Flat "key = value" experiment configuration. Blank lines and lines
// starting with '#' are ignored; unknown keys and invalid values are
// rejected with the file name and line number.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "mmasr/audio.hpp"
#include "mmasr/image.hpp"
#include "mmasr/model.hpp"
#include "mmasr/synthetic.hpp"
#include "mmasr/tokenizer.hpp"
#include "mmasr/training.hpp"

namespace mmasr {

struct ExperimentConfig {
  ModelConfig model;
  std::uint64_t model_seed = 1;
  FeatureConfig features;
  bool augment_enabled = true;
  AugmentPolicy augment = AugmentPolicy::toy_default();
  TrainConfig train;
  ComponentPlan components;
  std::string tokenizer_path = "tokenizer.vocab";
  UnigramTrainerConfig tokenizer;
  PreprocessConfig image;
  DecodeOptions decode;
  std::size_t average_n = 10;
  VisualPretrainConfig visual_pretrain;
  int visual_per_class = 64;
  SyntheticSpec synthetic;

  // Applies one key; throws ParameterError for unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  void validate() const;
  // Every key with its current value, one "key = value" line each.
  std::string dump() const;
  static const std::vector<std::string>& keys();

  // Training options derived from the augment and train sections.
  TrainConfig train_config() const;
};

ExperimentConfig parse_config(std::istream& in, const std::string& source);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace mmasr
