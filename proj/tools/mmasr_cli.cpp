// mmasr command-line interface. Every path argument is relative to --root.

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "mmasr/config.hpp"
#include "mmasr/dataset.hpp"
#include "mmasr/manifest.hpp"
#include "mmasr/metrics.hpp"
#include "mmasr/synthetic.hpp"
#include "mmasr/training.hpp"

namespace fs = std::filesystem;
using namespace mmasr;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Common {
  std::string root = ".";
  std::string config;
  std::vector<std::string> overrides;

  fs::path path(const std::string& p) const { return resolve_path(root, p); }

  ExperimentConfig load() const {
    ExperimentConfig cfg;
    if (!config.empty()) cfg = load_config(path(config));
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ParameterError("--set expects key=value, got '" + kv + "'");
      try {
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
      } catch (const ParameterError& e) {
        throw ParameterError(std::string("--set: ") + e.what());
      }
    }
    cfg.validate();
    return cfg;
  }
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Experiment config (key = value lines)");
  cmd->add_option("--set", c.overrides, "Override a config key: key=value (repeatable)");
}

DataOptions data_options(const ExperimentConfig& cfg) {
  DataOptions d;
  d.features = cfg.features;
  d.features.n_mels = cfg.model.n_mels;
  d.image = cfg.image;
  d.image.size = cfg.model.visual.image_size;
  return d;
}

DataOptions data_options(const ModelConfig& model, const ExperimentConfig& cfg) {
  DataOptions d = data_options(cfg);
  d.features.n_mels = model.n_mels;
  d.image.size = model.visual.image_size;
  d.load_visual = model.fusion.mode != FusionMode::none;
  return d;
}

std::map<std::string, std::string> read_hypotheses(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError(file.string() + ": cannot open hypotheses");
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError(file.string() + ":" + std::to_string(lineno) + ": expected 'utt_id<TAB>text'");
    out[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return out;
}

// --- commands ---------------------------------------------------------------

int cmd_gen_data(const Common& c, const std::string& out) {
  const ExperimentConfig cfg = c.load();
  const SyntheticCorpus corpus = generate(cfg.synthetic);
  write_corpus(corpus, c.path(out), c.root);
  std::cout << "wrote " << corpus.train.size() << "/" << corpus.val.size() << "/" << corpus.test.size()
            << " train/val/test utterances to " << c.path(out).string() << "\n";
  return kOk;
}

int cmd_tokenizer_train(const Common& c, const std::string& manifest, const std::string& out) {
  const ExperimentConfig cfg = c.load();
  std::vector<std::string> corpus;
  for (const auto& e : read_manifest(c.path(manifest), c.root, false)) corpus.push_back(e.text);
  const Vocabulary vocab = train_unigram(corpus, cfg.tokenizer);
  vocab.save(c.path(out));
  std::cout << "vocabulary of " << vocab.size() << " entries written to " << c.path(out).string() << "\n";
  return kOk;
}

int cmd_features_extract(const Common& c, const std::string& manifest, const std::string& out_dir,
                         const std::string& out_manifest, const std::string& visual_ckpt) {
  const ExperimentConfig cfg = c.load();
  const DataOptions opts = data_options(cfg);
  auto entries = read_manifest(c.path(manifest), c.root);
  const fs::path dir = c.path(out_dir);
  fs::create_directories(dir);
  const fs::path rel = fs::relative(fs::absolute(dir), fs::absolute(c.root));

  std::optional<AsrModel<float>> encoder_host;
  if (!visual_ckpt.empty()) {
    ModelConfig mc = cfg.model;
    if (mc.fusion.mode == FusionMode::none) mc.fusion.mode = FusionMode::emb;
    mc.visual.n_gmlp = 0;
    encoder_host.emplace(mc, cfg.model_seed);
    encoder_host->load_component(load_checkpoint(c.path(visual_ckpt)), Component::visual_encoder);
  }

  for (auto& e : entries) {
    const Matrix<double> feats = load_features(e, c.root, opts.features);
    const fs::path feat_file = fs::path(e.utt_id + ".feat");
    save_tensor(dir / feat_file, Tensor::from_matrix(feats, DType::f32));
    e.features = (rel / feat_file).generic_string();
    if (encoder_host && !e.image.empty()) {
      auto visual = load_visual(e, c.root, opts.image);
      Tape<float> tape(false);
      const auto* enc = encoder_host->visual_encoder();
      Matrix<double> grid = enc->encode(tape, *visual, VisualKind::grid).value().cast<double>();
      const fs::path emb_file = fs::path(e.utt_id + ".vemb");
      save_tensor(dir / emb_file, Tensor::from_matrix(grid, DType::f32));
      e.visual_embedding = (rel / emb_file).generic_string();
    }
  }
  write_manifest(c.path(out_manifest), entries);
  std::cout << "extracted features for " << entries.size() << " utterances\n";
  return kOk;
}

int cmd_visual_pretrain(const Common& c, const std::string& out) {
  const ExperimentConfig cfg = c.load();
  VisualConfig vc = cfg.model.visual;
  vc.n_gmlp = 0;
  const int n_classes = 2 * cfg.synthetic.n_homophone_pairs;
  if (n_classes < 2) throw ParameterError("visual-pretrain: needs at least one homophone pair");
  const VisualClassSet set =
      make_visual_class_set(n_classes, cfg.visual_per_class, cfg.synthetic.image_size, cfg.visual_pretrain.seed);
  PreprocessConfig pc = cfg.image;
  pc.size = vc.image_size;
  Rng unused(0);
  std::vector<Matrix<double>> images;
  for (const auto& img : set.images) images.push_back(preprocess(img, pc, false, unused).pixels);
  VisualClassifier<float> clf(vc, n_classes, cfg.visual_pretrain.seed);
  const double acc = pretrain_visual(clf, images, set.labels, cfg.visual_pretrain, &std::cout);
  save_checkpoint(c.path(out), visual_encoder_checkpoint(clf));
  std::cout << "visual encoder accuracy " << acc << ", written to " << c.path(out).string() << "\n";
  return kOk;
}

int cmd_train(const Common& c, const std::string& train_manifest, const std::string& val_manifest,
              const std::string& tokenizer, const std::string& out_dir) {
  const ExperimentConfig cfg = c.load();
  const Vocabulary vocab = Vocabulary::load(c.path(tokenizer.empty() ? cfg.tokenizer_path : tokenizer));
  ModelConfig mc = cfg.model;
  mc.vocab_size = static_cast<int>(vocab.size());
  const DataOptions opts = data_options(mc, cfg);
  const auto train_set = load_utterances(read_manifest(c.path(train_manifest), c.root), c.root, &vocab, opts);
  const auto val_set = load_utterances(read_manifest(c.path(val_manifest), c.root), c.root, &vocab, opts);

  AsrModel<float> model(mc, cfg.model_seed);
  model.set_feature_stats(feature_stats_for(train_set));
  ComponentPlan plan = cfg.components;
  for (auto& [which, spec] : plan)
    if (spec.init == ComponentInit::load) spec.path = c.path(spec.path.string());
  model.configure_components(plan);
  for (Component which : kAllComponents)
    std::cout << "trainable " << to_string(which) << " " << model.parameters().trainable_count(which) << "\n";
  std::cout << "trainable total " << model.parameters().trainable_count() << "\n";

  const fs::path dir = c.path(out_dir);
  fs::create_directories(dir);
  std::ofstream log(dir / "train.log", std::ios::app);
  log << "# step\tlr\ttrain_loss\tval_loss\n";
  std::ofstream(dir / "config.txt") << cfg.dump();
  struct Tee : std::streambuf {
    std::streambuf* a;
    std::streambuf* b;
    int overflow(int ch) override {
      if (ch == EOF) return !EOF;
      a->sputc(static_cast<char>(ch));
      b->sputc(static_cast<char>(ch));
      return ch;
    }
    int sync() override { return a->pubsync() | b->pubsync(); }
  } tee;
  tee.a = log.rdbuf();
  tee.b = std::cout.rdbuf();
  std::ostream both(&tee);
  const TrainResult r = train(model, train_set, val_set, cfg.train_config(), dir, &both);
  std::cout << "trained " << r.steps << " steps; " << r.store.size() << " checkpoints in " << dir.string() << "\n";
  return kOk;
}

int cmd_avg_ckpt(const Common& c, const std::string& store_dir, std::size_t n, const std::string& out) {
  const CheckpointStore store = CheckpointStore::open(c.path(store_dir));
  std::vector<std::string> warnings;
  const Checkpoint avg = average_checkpoints(store, n, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  save_checkpoint(c.path(out), avg);
  std::cout << "averaged " << avg.metadata.at("averaged_from") << " checkpoints into " << c.path(out).string()
            << "\n";
  return kOk;
}

int cmd_decode(const Common& c, const std::string& model_path, const std::string& manifest,
               const std::string& tokenizer, const std::string& out) {
  const ExperimentConfig cfg = c.load();
  const AsrModel<float> model = AsrModel<float>::from_checkpoint(load_checkpoint(c.path(model_path)));
  const Vocabulary vocab = Vocabulary::load(c.path(tokenizer.empty() ? cfg.tokenizer_path : tokenizer));
  if (static_cast<int>(vocab.size()) != model.config().vocab_size)
    throw DataError("decode: vocabulary has " + std::to_string(vocab.size()) + " entries but the model expects " +
                    std::to_string(model.config().vocab_size));
  const auto utts =
      load_utterances(read_manifest(c.path(manifest), c.root), c.root, nullptr, data_options(model.config(), cfg));
  std::ofstream file;
  if (!out.empty()) {
    file.open(c.path(out));
    if (!file) throw DataError(c.path(out).string() + ": cannot write hypotheses");
  }
  std::ostream& dst = out.empty() ? std::cout : file;
  for (const auto& u : utts) dst << u.id << '\t' << vocab.decode(model.transcribe(u.features, u.visual, cfg.decode)) << '\n';
  return kOk;
}

int cmd_eval(const Common& c, const std::string& manifest, const std::string& hyp_file, const std::string& out,
             const std::string& targets) {
  const auto entries = read_manifest(c.path(manifest), c.root, false);
  const auto hyps = read_hypotheses(c.path(hyp_file));
  std::vector<Words> refs, hyp_words;
  std::vector<std::string> ids;
  for (const auto& e : entries) {
    auto it = hyps.find(e.utt_id);
    if (it == hyps.end()) throw DataError(c.path(hyp_file).string() + ": no hypothesis for '" + e.utt_id + "'");
    refs.push_back(split_words(normalize_text(e.text)));
    hyp_words.push_back(split_words(normalize_text(it->second)));
    ids.push_back(e.utt_id);
  }
  const WerResult r = wer(refs, hyp_words, ids);
  std::ofstream file;
  if (!out.empty()) file.open(c.path(out));
  std::ostream& dst = out.empty() ? std::cout : file;
  for (const auto& u : r.utterances) dst << format_score_line(u) << '\n';
  std::cout << format_summary(r) << '\n';
  if (!targets.empty()) {
    std::set<std::string> words;
    for (const auto& w : split_words(targets)) words.insert(w);
    const auto t = target_word_errors(refs, hyp_words, words);
    std::cout << "target-word error rate " << std::fixed << std::setprecision(4) << t.rate() << " (" << t.errors
              << "/" << t.occurrences << ")\n";
  }
  return kOk;
}

int cmd_probe(const Common& c, const std::string& model_path, const std::string& manifest,
              const std::string& tokenizer, const std::string& pairing, std::uint64_t seed) {
  const ExperimentConfig cfg = c.load();
  const AsrModel<float> model = AsrModel<float>::from_checkpoint(load_checkpoint(c.path(model_path)));
  const Vocabulary vocab = Vocabulary::load(c.path(tokenizer.empty() ? cfg.tokenizer_path : tokenizer));
  const auto entries = read_manifest(c.path(manifest), c.root);
  const auto utts = load_utterances(entries, c.root, nullptr, data_options(model.config(), cfg));
  std::vector<ProbeItem> items;
  for (std::size_t i = 0; i < utts.size(); ++i) {
    if (!utts[i].visual) throw DataError(c.path(manifest).string() + ": '" + utts[i].id + "' has no visual input");
    items.push_back({utts[i].id, utts[i].features, *utts[i].visual, split_words(normalize_text(entries[i].text))});
  }
  const ProbeResult r = grounding_probe(model, vocab, items, parse_pairing(pairing), seed, cfg.decode);
  for (const auto& u : r.score.utterances) std::cout << format_score_line(u) << '\n';
  std::cout << to_string(r.pairing) << ' ' << format_summary(r.score) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal speech recognition toolkit"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--root", common.root, "Workspace root for all relative paths");

  std::string out, manifest, tokenizer, model_path, store, val_manifest, out_dir, out_manifest, visual_ckpt, hyp,
      pairing = "matched", targets;
  std::size_t n_avg = 10;
  std::uint64_t seed = 1;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic corpus");
  gen->add_option("--out", out, "Output directory")->required();

  auto* tok = app.add_subcommand("tokenizer-train", "Train a unigram subword vocabulary");
  tok->add_option("--manifest", manifest, "Training manifest")->required();
  tok->add_option("--out", out, "Vocabulary file")->required();

  auto* feat = app.add_subcommand("features-extract", "Precompute log-mel features (and visual embeddings)");
  feat->add_option("--manifest", manifest, "Input manifest")->required();
  feat->add_option("--out-dir", out_dir, "Directory for tensor files")->required();
  feat->add_option("--out-manifest", out_manifest, "Manifest referencing the tensors")->required();
  feat->add_option("--visual-encoder", visual_ckpt, "Visual encoder checkpoint for embedding extraction");

  auto* vis = app.add_subcommand("visual-pretrain", "Pretrain the visual encoder on pattern classification");
  vis->add_option("--out", out, "Visual encoder checkpoint")->required();

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--train-manifest", manifest, "Training manifest")->required();
  tr->add_option("--val-manifest", val_manifest, "Validation manifest")->required();
  tr->add_option("--tokenizer", tokenizer, "Vocabulary file (default: tokenizer.path)");
  tr->add_option("--out-dir", out_dir, "Checkpoint store directory")->required();

  auto* avg = app.add_subcommand("avg-ckpt", "Average the n best checkpoints of a store");
  avg->add_option("--store", store, "Checkpoint store directory")->required();
  avg->add_option("--n", n_avg, "Number of checkpoints")->check(CLI::PositiveNumber);
  avg->add_option("--out", out, "Averaged checkpoint")->required();

  auto* dec = app.add_subcommand("decode", "Transcribe a manifest");
  dec->add_option("--model", model_path, "Model checkpoint")->required();
  dec->add_option("--manifest", manifest, "Manifest")->required();
  dec->add_option("--tokenizer", tokenizer, "Vocabulary file (default: tokenizer.path)");
  dec->add_option("--out", out, "Hypotheses file (utt_id<TAB>text); stdout when omitted");

  auto* ev = app.add_subcommand("eval", "Score hypotheses against a manifest");
  ev->add_option("--manifest", manifest, "Reference manifest")->required();
  ev->add_option("--hyp", hyp, "Hypotheses file")->required();
  ev->add_option("--out", out, "Per-utterance score lines; stdout when omitted");
  ev->add_option("--target-words", targets, "Space-separated words for a targeted error rate");

  auto* pr = app.add_subcommand("probe", "Decode with matched, mismatched or no images");
  pr->add_option("--model", model_path, "Multimodal model checkpoint")->required();
  pr->add_option("--manifest", manifest, "Test manifest")->required();
  pr->add_option("--tokenizer", tokenizer, "Vocabulary file (default: tokenizer.path)");
  pr->add_option("--pairing", pairing, "matched | mismatched | none");
  pr->add_option("--seed", seed, "Derangement seed");

  for (auto* cmd : {gen, tok, feat, vis, tr, avg, dec, ev, pr}) add_common(cmd, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*gen) return cmd_gen_data(common, out);
    if (*tok) return cmd_tokenizer_train(common, manifest, out);
    if (*feat) return cmd_features_extract(common, manifest, out_dir, out_manifest, visual_ckpt);
    if (*vis) return cmd_visual_pretrain(common, out);
    if (*tr) return cmd_train(common, manifest, val_manifest, tokenizer, out_dir);
    if (*avg) return cmd_avg_ckpt(common, store, n_avg, out);
    if (*dec) return cmd_decode(common, model_path, manifest, tokenizer, out);
    if (*ev) return cmd_eval(common, manifest, hyp, out, targets);
    if (*pr) return cmd_probe(common, model_path, manifest, tokenizer, pairing, seed);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
