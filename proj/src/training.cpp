#include "mmasr/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

namespace mmasr {

// --- schedule ---------------------------------------------------------------

void Schedule::validate() const {
  if (!(lr_start >= 0.0) || !(lr_peak > 0.0)) throw ParameterError("schedule: learning rates must be positive");
  if (warmup_steps < 1) throw ParameterError("schedule: warmup_steps must be >= 1");
  if (!(decay_exponent >= 0.0)) throw ParameterError("schedule: decay exponent must be >= 0");
}

double Schedule::warmup_lr(double step) const {
  const double t = step / static_cast<double>(warmup_steps);
  return lr_start * (1.0 - t) + lr_peak * t;
}

double Schedule::decay_lr(double step) const {
  return lr_peak * std::pow(static_cast<double>(warmup_steps) / step, decay_exponent);
}

double Schedule::lr(long step) const {
  if (step < 0) throw PreconditionError("schedule: negative step");
  const auto s = static_cast<double>(step);
  return step <= warmup_steps ? warmup_lr(s) : decay_lr(s);
}

// --- Adam -------------------------------------------------------------------

template <typename Scalar>
void Adam<Scalar>::step(ParameterSet<Scalar>& params, const GradientMap<Scalar>& grads, double lr) {
  for (const auto& [name, g] : grads) {
    const Parameter<Scalar>* p = params.find(name);
    if (!p) throw ParameterError("adam: gradient for unknown parameter '" + name + "'");
    if (g.rows() != p->value.rows() || g.cols() != p->value.cols())
      throw DimensionError("adam: gradient shape differs from parameter '" + name + "'");
    if (!g.allFinite()) throw NumericError("adam: non-finite gradient for parameter '" + name + "'");
  }
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const auto step_size = static_cast<Scalar>(lr / c1);
  const auto inv_c2 = static_cast<Scalar>(1.0 / c2);
  const auto eps = static_cast<Scalar>(cfg_.eps);

  for (auto& p : params) {
    if (!p->trainable) continue;
    auto [it, fresh] = state_.try_emplace(p->name);
    Moments& s = it->second;
    if (fresh) {
      s.m = Matrix<Scalar>::Zero(p->value.rows(), p->value.cols());
      s.v = Matrix<Scalar>::Zero(p->value.rows(), p->value.cols());
    }
    s.m *= static_cast<Scalar>(b1);
    s.v *= static_cast<Scalar>(b2);
    if (auto g = grads.find(p->name); g != grads.end()) {
      s.m += static_cast<Scalar>(1.0 - b1) * g->second;
      s.v += static_cast<Scalar>(1.0 - b2) * g->second.cwiseAbs2();
    }
    p->value.array() -= step_size * s.m.array() / ((s.v.array() * inv_c2).sqrt() + eps);
  }
}

template <typename Scalar>
const Matrix<Scalar>* Adam<Scalar>::first_moment(const std::string& name) const {
  auto it = state_.find(name);
  return it == state_.end() ? nullptr : &it->second.m;
}

template <typename Scalar>
const Matrix<Scalar>* Adam<Scalar>::second_moment(const std::string& name) const {
  auto it = state_.find(name);
  return it == state_.end() ? nullptr : &it->second.v;
}

template class Adam<float>;
template class Adam<double>;

// --- checkpoint store -------------------------------------------------------

CheckpointStore::CheckpointStore(std::filesystem::path dir, std::size_t retention)
    : dir_(std::move(dir)), retention_(retention) {}

CheckpointStore CheckpointStore::open(const std::filesystem::path& dir) {
  const auto index = dir / kIndexName;
  std::ifstream in(index);
  if (!in) throw DataError(index.string() + ": cannot open checkpoint index");
  CheckpointStore store(dir, 0);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    std::istringstream fields(line);
    Record r;
    if (!(fields >> r.step >> r.epoch >> r.val_loss >> r.file))
      throw DataError(index.string() + ":" + std::to_string(lineno) + ": malformed index line");
    store.records_.push_back(std::move(r));
  }
  if (store.records_.empty()) throw DataError(index.string() + ": no checkpoints recorded");
  return store;
}

void CheckpointStore::write_index() const {
  const auto index = dir_ / kIndexName;
  std::ofstream out(index);
  if (!out) throw DataError(index.string() + ": cannot write checkpoint index");
  out << "# step\tepoch\tval_loss\tfile\n";
  out << std::setprecision(17);
  for (const auto& r : records_) out << r.step << '\t' << r.epoch << '\t' << r.val_loss << '\t' << r.file << '\n';
}

void CheckpointStore::add(const Checkpoint& ckpt, long step, int epoch, double val_loss) {
  std::filesystem::create_directories(dir_);
  std::ostringstream name;
  name << "epoch" << std::setw(4) << std::setfill('0') << epoch << ".ckpt";
  Record r{step, epoch, val_loss, name.str()};
  save_checkpoint(path(r), ckpt);
  records_.push_back(r);
  if (retention_ > 0 && records_.size() > retention_) {
    const auto keep = best(retention_);
    std::vector<Record> kept;
    for (const auto& rec : records_) {
      const bool in_best =
          std::any_of(keep.begin(), keep.end(), [&](const Record& k) { return k.file == rec.file; });
      if (in_best)
        kept.push_back(rec);
      else
        std::filesystem::remove(path(rec));
    }
    records_ = std::move(kept);
  }
  write_index();
}

std::vector<CheckpointStore::Record> CheckpointStore::best(std::size_t n) const {
  std::vector<Record> sorted = records_;
  std::stable_sort(sorted.begin(), sorted.end(), [](const Record& a, const Record& b) {
    if (a.val_loss != b.val_loss) return a.val_loss < b.val_loss;
    return a.step < b.step;
  });
  if (sorted.size() > n) sorted.resize(n);
  return sorted;
}

// --- loop -------------------------------------------------------------------

std::string format_log_line(const LogLine& line) {
  std::ostringstream s;
  s << line.step << '\t' << std::setprecision(6) << line.lr << '\t' << line.train_loss << '\t' << line.val_loss;
  return s.str();
}

std::vector<std::vector<std::size_t>> make_batches(std::span<const Utterance> data, int batch_size, Rng& rng) {
  if (batch_size < 1) throw ParameterError("batching: batch_size must be >= 1");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return data[a].features.rows() < data[b].features.rows(); });
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), i + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

template <typename Scalar>
double evaluate_loss(const AsrModel<Scalar>& model, std::span<const Utterance> data, int batch_size,
                     double label_smoothing) {
  if (data.empty()) throw PreconditionError("evaluate_loss: empty data set");
  LossOptions opts;
  opts.label_smoothing = label_smoothing;
  Rng unused(0);
  double total = 0.0;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < data.size(); i += static_cast<std::size_t>(batch_size)) {
    const std::size_t n = std::min(data.size() - i, static_cast<std::size_t>(batch_size));
    Tape<Scalar> tape(false);
    auto r = model.forward_loss(tape, data.subspan(i, n), opts, unused);
    total += static_cast<double>(r.loss.value()(0, 0)) * static_cast<double>(r.tokens);
    tokens += r.tokens;
  }
  return total / static_cast<double>(tokens);
}

template <typename Scalar>
double train_step(AsrModel<Scalar>& model, Adam<Scalar>& adam, std::span<const Utterance> batch,
                  const LossOptions& opts, double lr, Rng& rng) {
  Tape<Scalar> tape;
  auto r = model.forward_loss(tape, batch, opts, rng);
  const double loss = static_cast<double>(r.loss.value()(0, 0));
  if (!std::isfinite(loss)) throw NumericError("training: non-finite loss");
  adam.step(model.parameters(), tape.backward(r.loss), lr);
  return loss;
}

TrainResult train(AsrModel<float>& model, std::span<const Utterance> train_set, std::span<const Utterance> val_set,
                  const TrainConfig& cfg, const std::filesystem::path& store_dir, std::ostream* log) {
  if (train_set.empty()) throw PreconditionError("train: empty training set");
  if (val_set.empty()) throw PreconditionError("train: empty validation set");
  cfg.schedule.validate();
  if (cfg.epochs < 1) throw ParameterError("train: epochs must be >= 1");

  TrainResult result;
  result.store = CheckpointStore(store_dir, cfg.keep_checkpoints);
  Adam<float> adam(cfg.adam);
  Rng rng(cfg.seed);
  LossOptions opts;
  opts.train = true;
  opts.augment = cfg.augment;
  opts.flip_images = cfg.flip_images;
  opts.label_smoothing = cfg.label_smoothing;

  std::vector<Utterance> batch;
  long step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    int n_batches = 0;
    double lr = 0.0;
    for (const auto& idx : make_batches(train_set, cfg.batch_size, rng)) {
      if (cfg.max_steps > 0 && step >= cfg.max_steps) break;
      batch.clear();
      for (std::size_t i : idx) batch.push_back(train_set[i]);
      ++step;
      lr = cfg.schedule.lr(step);
      loss_sum += train_step(model, adam, batch, opts, lr, rng);
      ++n_batches;
    }
    if (n_batches == 0) break;
    LogLine line{step, lr, loss_sum / n_batches, evaluate_loss(model, val_set, cfg.batch_size, cfg.label_smoothing)};
    result.log.push_back(line);
    if (log) *log << format_log_line(line) << '\n' << std::flush;
    if (!store_dir.empty()) {
      Checkpoint ckpt = model.to_checkpoint();
      ckpt.metadata["train.epoch"] = std::to_string(epoch);
      ckpt.metadata["train.step"] = std::to_string(step);
      std::ostringstream v;
      v << std::setprecision(17) << line.val_loss;
      ckpt.metadata["train.val_loss"] = v.str();
      result.store.add(ckpt, step, epoch, line.val_loss);
    }
  }
  result.steps = step;
  return result;
}

Checkpoint average_checkpoints(const CheckpointStore& store, std::size_t n, std::vector<std::string>* warnings) {
  if (store.size() == 0) throw CheckpointError("average: checkpoint store is empty");
  if (n == 0) throw ParameterError("average: n must be >= 1");
  if (n > store.size() && warnings)
    warnings->push_back("requested " + std::to_string(n) + " checkpoints but the store holds " +
                        std::to_string(store.size()) + "; averaging " + std::to_string(store.size()));
  std::vector<Checkpoint> ckpts;
  for (const auto& r : store.best(n)) ckpts.push_back(load_checkpoint(store.path(r)));
  return average_parameters(ckpts);
}

FeatureStats feature_stats_for(std::span<const Utterance> data) {
  std::vector<FeatureMatrix> feats;
  feats.reserve(data.size());
  for (const auto& u : data) feats.push_back(FeatureMatrix{u.features, 25.0, 10.0});
  return compute_feature_stats(feats);
}

// --- visual pretraining -----------------------------------------------------

double pretrain_visual(VisualClassifier<float>& classifier, std::span<const Matrix<double>> images,
                       std::span<const int> labels, const VisualPretrainConfig& cfg, std::ostream* log) {
  if (images.empty() || images.size() != labels.size())
    throw PreconditionError("visual pretraining: images and labels must be nonempty and equally long");
  Adam<float> adam;
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  double accuracy = 0.0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t correct = 0;
    double loss_sum = 0.0;
    int n_batches = 0;
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), i + static_cast<std::size_t>(cfg.batch_size));
      Tape<float> tape;
      Var<float> total;
      for (std::size_t j = i; j < end; ++j) {
        auto logits = classifier.logits(tape, images[order[j]]);
        Eigen::Index pred = 0;
        logits.value().col(0).maxCoeff(&pred);
        if (pred == labels[order[j]]) ++correct;
        const int target = labels[order[j]];
        auto ce = cross_entropy(logits, std::span<const int>(&target, 1), 0.0, -1, Reduction::sum);
        total = total.valid() ? add(total, ce) : ce;
      }
      auto loss = scale(total, 1.0 / static_cast<double>(end - i));
      loss_sum += loss.value()(0, 0);
      ++n_batches;
      adam.step(classifier.parameters(), tape.backward(loss), cfg.lr);
    }
    accuracy = static_cast<double>(correct) / static_cast<double>(images.size());
    if (log) *log << "visual epoch " << epoch << "\tloss " << loss_sum / n_batches << "\taccuracy " << accuracy << '\n';
  }
  return accuracy;
}

Checkpoint visual_encoder_checkpoint(const VisualClassifier<float>& classifier) {
  Checkpoint all;
  export_parameters(classifier.parameters(), all);
  Checkpoint out;
  out.metadata["kind"] = "visual_encoder";
  for (auto& rec : all.params)
    if (rec.name.starts_with("visual_encoder.")) out.params.push_back(std::move(rec));
  return out;
}

template double evaluate_loss<float>(const AsrModel<float>&, std::span<const Utterance>, int, double);
template double evaluate_loss<double>(const AsrModel<double>&, std::span<const Utterance>, int, double);
template double train_step<float>(AsrModel<float>&, Adam<float>&, std::span<const Utterance>, const LossOptions&,
                                  double, Rng&);
template double train_step<double>(AsrModel<double>&, Adam<double>&, std::span<const Utterance>, const LossOptions&,
                                   double, Rng&);

}  // namespace mmasr
