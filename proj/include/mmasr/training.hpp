#pragma once

// Optimization: learning-rate schedule, Adam, bucketed batching, the
// epoch loop with per-epoch validation checkpoints, and n-best averaging.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmasr/checkpoint.hpp"
#include "mmasr/model.hpp"

namespace mmasr {

// Linear warmup from lr_start to lr_peak over warmup_steps, then
// lr_peak * (warmup_steps / s)^decay_exponent.
struct Schedule {
  double lr_start = 3.2e-8;
  double lr_peak = 8e-4;
  long warmup_steps = 500;
  double decay_exponent = 2.0;

  void validate() const;
  double lr(long step) const;
  // The two pieces, defined for any real step; lr() switches at warmup_steps.
  double warmup_lr(double step) const;
  double decay_lr(double step) const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

template <typename Scalar>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // Updates every trainable parameter; a missing gradient counts as zero.
  // Frozen parameters are never touched. Throws NumericError naming the
  // first parameter with a non-finite gradient, before any update.
  void step(ParameterSet<Scalar>& params, const GradientMap<Scalar>& grads, double lr);

  long steps() const { return t_; }
  const Matrix<Scalar>* first_moment(const std::string& name) const;
  const Matrix<Scalar>* second_moment(const std::string& name) const;

 private:
  struct Moments {
    Matrix<Scalar> m, v;
  };
  AdamConfig cfg_;
  long t_ = 0;
  std::map<std::string, Moments> state_;
};

struct TrainConfig {
  int epochs = 20;
  int batch_size = 8;
  std::uint64_t seed = 1;
  long max_steps = 0;  // 0: no limit
  Schedule schedule;
  AdamConfig adam;
  std::optional<AugmentPolicy> augment;
  double label_smoothing = 0.1;
  bool flip_images = true;
  std::size_t keep_checkpoints = 10;  // 0 keeps all
};

// Checkpoints of one run with their validation losses, persisted as an
// index file next to the checkpoint files. Retention keeps the best ones.
class CheckpointStore {
 public:
  struct Record {
    long step = 0;
    int epoch = 0;
    double val_loss = 0.0;
    std::string file;  // relative to the store directory
  };

  static constexpr const char* kIndexName = "index.tsv";

  CheckpointStore() = default;
  CheckpointStore(std::filesystem::path dir, std::size_t retention);
  static CheckpointStore open(const std::filesystem::path& dir);

  const std::filesystem::path& directory() const { return dir_; }
  const std::vector<Record>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  std::filesystem::path path(const Record& r) const { return dir_ / r.file; }

  void add(const Checkpoint& ckpt, long step, int epoch, double val_loss);
  // Up to n records by ascending validation loss (ties: earlier step first).
  std::vector<Record> best(std::size_t n) const;

 private:
  void write_index() const;

  std::filesystem::path dir_;
  std::size_t retention_ = 0;
  std::vector<Record> records_;
};

struct LogLine {
  long step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

std::string format_log_line(const LogLine& line);

struct TrainResult {
  CheckpointStore store;
  std::vector<LogLine> log;
  long steps = 0;
};

// Batches of similar length: sort by frame count, cut into batches, shuffle
// the batch order.
std::vector<std::vector<std::size_t>> make_batches(std::span<const Utterance> data, int batch_size, Rng& rng);

// Token-weighted mean loss without augmentation or dropout.
template <typename Scalar>
double evaluate_loss(const AsrModel<Scalar>& model, std::span<const Utterance> data, int batch_size,
                     double label_smoothing);

// One optimizer update on a batch; returns the batch loss.
template <typename Scalar>
double train_step(AsrModel<Scalar>& model, Adam<Scalar>& adam, std::span<const Utterance> batch,
                  const LossOptions& opts, double lr, Rng& rng);

// Runs the epoch loop. When `store_dir` is empty checkpoints are kept in
// memory only as log entries; otherwise one checkpoint is saved per epoch.
TrainResult train(AsrModel<float>& model, std::span<const Utterance> train_set, std::span<const Utterance> val_set,
                  const TrainConfig& cfg, const std::filesystem::path& store_dir, std::ostream* log = nullptr);

// Mean of the n lowest-validation-loss checkpoints; n is capped at the
// store size, which adds a message to `warnings`.
Checkpoint average_checkpoints(const CheckpointStore& store, std::size_t n,
                               std::vector<std::string>* warnings = nullptr);

// Feature normalization statistics over a training set.
FeatureStats feature_stats_for(std::span<const Utterance> data);

struct VisualPretrainConfig {
  int epochs = 10;
  int batch_size = 16;
  double lr = 2e-3;
  std::uint64_t seed = 1;
};

// Classification pretraining of the visual encoder; returns final training accuracy.
double pretrain_visual(VisualClassifier<float>& classifier, std::span<const Matrix<double>> images,
                       std::span<const int> labels, const VisualPretrainConfig& cfg, std::ostream* log = nullptr);

// Visual-encoder parameters of a classifier as a checkpoint (head excluded).
Checkpoint visual_encoder_checkpoint(const VisualClassifier<float>& classifier);

}  // namespace mmasr
