#include "commands.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include "mtb/analysis.hpp"
#include "mtb/checkpoint.hpp"
#include "mtb/error.hpp"
#include "mtb/log.hpp"
#include "mtb/multitask.hpp"
#include "mtb/stats.hpp"

namespace mtb::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Jsonl {
 public:
  explicit Jsonl(const fs::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw DataError("cannot write " + path.string());
  }
  void write(const json& j) {
    out_ << j.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

fs::path prepare_run(const RunConfig& cfg) {
  const fs::path dir = run_directory(cfg);
  fs::create_directories(dir);
  write_json(dir / "config.json", to_json(cfg));
  log::info("run directory " + dir.string());
  return dir;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void truncate(std::vector<Example>& v, std::size_t limit) {
  if (limit > 0 && v.size() > limit) v.resize(limit);
}

TaskSplits load_splits(const DataSection& d, std::size_t n_examples) {
  TaskSplits s;
  if (d.dir.empty()) {
    auto c = generate_synthetic({n_examples, d.n_dev, d.seed, d.vocab_size});
    s = {c.sst_train, c.sst_dev, c.para_train, c.para_dev, c.sts_train, c.sts_dev};
  } else {
    const fs::path dir = d.dir;
    if (!fs::is_directory(dir)) throw DataError("data directory not found: " + dir.string());
    s.sst_train = load_tsv(dir / "sst_train.tsv", Task::sst);
    s.sst_dev = load_tsv(dir / "sst_dev.tsv", Task::sst);
    s.para_train = load_tsv(dir / "para_train.tsv", Task::para);
    s.para_dev = load_tsv(dir / "para_dev.tsv", Task::para);
    s.sts_train = load_tsv(dir / "sts_train.tsv", Task::sts);
    s.sts_dev = load_tsv(dir / "sts_dev.tsv", Task::sts);
  }
  truncate(s.para_train, d.para_train_limit);
  truncate(s.para_dev, d.para_dev_limit);
  return s;
}

Vocab build_vocab(const TaskSplits& s) {
  std::vector<std::string> texts;
  for (const auto* v : {&s.sst_train, &s.para_train, &s.sts_train})
    for (const auto& e : *v) {
      texts.push_back(e.text_a);
      if (e.text_b) texts.push_back(*e.text_b);
    }
  return Vocab::build(texts);
}

// Accepts a run directory (with a checkpoint/ child) or the checkpoint directory itself.
fs::path checkpoint_dir(const fs::path& p) {
  if (fs::exists(p / "manifest.json")) return p;
  if (fs::exists(p / "checkpoint" / "manifest.json")) return p / "checkpoint";
  throw DataError("no checkpoint found under " + p.string());
}

void record_metrics(Jsonl& out, std::size_t epoch, const char* split, const TaskMetrics& m) {
  out.write({{"epoch", epoch}, {"task", "sst"}, {"split", split}, {"metric", "accuracy"}, {"value", m.sst_accuracy}});
  out.write({{"epoch", epoch}, {"task", "para"}, {"split", split}, {"metric", "accuracy"}, {"value", m.para_accuracy}});
  out.write({{"epoch", epoch}, {"task", "sts"}, {"split", split}, {"metric", "pearson"}, {"value", m.sts_pearson}});
}

std::string fmt(const TaskMetrics& m) {
  std::ostringstream s;
  s.precision(3);
  s << "sst " << m.sst_accuracy << " para " << m.para_accuracy << " sts " << m.sts_pearson;
  return s.str();
}

Task gan_task(const RunConfig& cfg) { return parse_task(cfg.gan.task); }

std::vector<Example>& task_train(TaskSplits& s, Task t) { return t == Task::para ? s.para_train : s.sst_train; }
std::vector<Example>& task_dev(TaskSplits& s, Task t) { return t == Task::para ? s.para_dev : s.sst_dev; }

json step_record(const GanStepRecord& r) {
  return {{"step", r.step}, {"L_D_S", r.d_sup}, {"L_D_U", r.d_unsup}, {"L_G_FM", r.g_fm}, {"L_G_U", r.g_unsup}};
}

}  // namespace

void gen_data(const RunConfig& cfg) {
  const fs::path dir = prepare_run(cfg);
  auto corpus = generate_synthetic({cfg.data.n_examples, cfg.data.n_dev, cfg.data.seed, cfg.data.vocab_size});
  write_corpus(dir, corpus);
  log::info("wrote " + std::to_string(cfg.data.n_examples) + " train / " + std::to_string(cfg.data.n_dev) +
            " dev examples per task");
}

void train_multitask_cmd(const RunConfig& cfg) {
  const fs::path dir = prepare_run(cfg);
  const auto splits = load_splits(cfg.data, cfg.data.n_examples);
  const auto vocab = build_vocab(splits);

  MultitaskTrainConfig tc;
  tc.mode = parse_train_mode(cfg.train.mode);
  tc.adam.lr = cfg.train.lr;
  tc.adam.weight_decay = cfg.train.weight_decay;
  tc.batch_size = cfg.train.batch_size;
  tc.epochs = cfg.train.epochs;
  tc.halve_paraphrase = cfg.train.halve_paraphrase;
  tc.seed = cfg.seed;
  HeadConfig heads = cfg.heads;
  heads.baseline = tc.mode == TrainMode::baseline;
  MultitaskModel model(cfg.encoder, heads, vocab, cfg.seed);
  log::info("multitask " + cfg.train.mode + ": " + std::to_string(model.params().total_size()) + " parameters");

  Jsonl metrics(dir / "metrics.jsonl");
  Stopwatch clock;
  auto history = train_multitask(model, splits, tc, [&](const EpochMetrics& e) {
    record_metrics(metrics, e.epoch, "train", e.train);
    record_metrics(metrics, e.epoch, "dev", e.dev);
    log::info("epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.mean_loss) + " | train " +
              fmt(e.train) + " | dev " + fmt(e.dev));
    return true;
  });
  log::info("trained in " + std::to_string(clock.seconds()) + " s");

  const fs::path ck = dir / "checkpoint";
  save_checkpoint(ck, model.params(), {{"kind", "multitask"}, {"epochs", history.size()}, {"config", to_json(cfg)}});
  vocab.save(ck / "vocab.txt");
}

void train_gan_cmd(const RunConfig& cfg) {
  const fs::path dir = prepare_run(cfg);
  const Task task = gan_task(cfg);
  auto splits = load_splits(cfg.data, cfg.data.gan_n_examples);

  Vocab vocab;
  std::optional<Checkpoint> init;
  if (!cfg.gan.init_encoder.empty()) {
    const fs::path ck = checkpoint_dir(cfg.gan.init_encoder);
    init = load_checkpoint(ck);
    vocab = Vocab::load(ck / "vocab.txt");
  } else {
    vocab = build_vocab(splits);
  }
  GanModel model(cfg.encoder, cfg.gan.model, vocab, task, cfg.seed);
  if (init) restore(model.params(), *init, "encoder.");

  GanTrainConfig tc;
  tc.batch_size = cfg.gan.batch_size;
  tc.seed = cfg.seed;
  tc.freeze_encoder = cfg.gan.freeze_encoder;
  const auto train = mask_labels(task_train(splits, task), cfg.gan.lambda, cfg.seed);
  const auto& dev = task_dev(splits, task);

  Jsonl metrics(dir / "metrics.jsonl");
  Stopwatch clock;
  auto run = train_gan(
      model, train, dev, tc, [&](const GanStepRecord& r) { metrics.write(step_record(r)); },
      [&](const GanEpoch& e) {
        metrics.write({{"epoch", e.epoch},
                       {"task", cfg.gan.task},
                       {"split", "dev"},
                       {"metric", "accuracy"},
                       {"value", e.dev_accuracy}});
        log::info("epoch " + std::to_string(e.epoch) + " dev accuracy " + std::to_string(e.dev_accuracy));
      });
  log::info("trained in " + std::to_string(clock.seconds()) + " s");

  // Real dev [CLS] embeddings next to generator samples, for t-SNE.
  Rng rng(cfg.seed, 0x64756d70);
  std::vector<EmbeddingRow> rows;
  const auto labeled = labeled_only(dev);
  const std::size_t n_real = std::min(cfg.gan.samples, labeled.size());
  for (std::size_t i = 0; i < n_real; i += 64) {
    std::vector<Example> part(labeled.begin() + static_cast<long>(i),
                              labeled.begin() + static_cast<long>(std::min(n_real, i + 64)));
    auto cls = model.real_cls(part, false, rng);
    const std::size_t h = cls.size(1);
    for (std::size_t r = 0; r < part.size(); ++r) {
      auto v = cls.values().subspan(r * h, h);
      rows.push_back({"real", static_cast<int>(*part[r].label), {v.begin(), v.end()}, std::nullopt});
    }
  }
  auto gen = sample_generator(model, cfg.gan.samples, rng);
  const std::size_t h = gen.embeddings.size(1);
  for (std::size_t r = 0; r < gen.labels.size(); ++r) {
    auto v = gen.embeddings.values().subspan(r * h, h);
    rows.push_back({"generated", gen.labels[r], {v.begin(), v.end()}, std::nullopt});
  }
  write_embeddings(dir / "embeddings.csv", rows);

  const double ratio = class_separation_ratio(gen.embeddings, gen.labels);
  const double variance = batch_variance(gen.embeddings);
  write_json(dir / "summary.json", {{"conditional", cfg.gan.model.conditional},
                                    {"hidden_depth", cfg.gan.model.hidden_depth},
                                    {"lambda", cfg.gan.lambda},
                                    {"final_dev_accuracy", run.epochs.empty() ? 0.0 : run.epochs.back().dev_accuracy},
                                    {"generated_class_ratio", ratio},
                                    {"generated_variance", variance}});
  log::info("generator class ratio " + std::to_string(ratio) + ", variance " + std::to_string(variance));

  const fs::path ck = dir / "checkpoint";
  save_checkpoint(ck, model.params(), {{"kind", "gan"}, {"epochs", run.epochs.size()}, {"config", to_json(cfg)}});
  vocab.save(ck / "vocab.txt");
}

void sweep_cmd(const RunConfig& cfg) {
  const fs::path dir = prepare_run(cfg);
  const Task task = gan_task(cfg);
  auto splits = load_splits(cfg.data, cfg.data.gan_n_examples);

  GanSweepSetup setup;
  setup.encoder = cfg.encoder;
  setup.gan = cfg.gan.model;
  setup.train.batch_size = cfg.gan.batch_size;
  setup.train.freeze_encoder = cfg.gan.freeze_encoder;
  setup.vocab = build_vocab(splits);
  setup.task = task;
  setup.train_set = task_train(splits, task);
  setup.dev_set = task_dev(splits, task);

  const auto& lambdas = cfg.sweep.lambdas;
  std::vector<std::vector<SweepResult>> per_seed;
  Stopwatch clock;
  for (std::size_t r = 0; r < cfg.sweep.seeds; ++r) {
    setup.base_seed = cfg.seed + 1000 * r;
    setup.checkpoint_dir = dir / "checkpoints" / ("replicate_" + std::to_string(r));
    per_seed.push_back(run_sweep(
        lambdas, [&](double lambda, std::size_t index) { return gan_sweep_run(setup, lambda, index); },
        cfg.sweep.jobs));
    log::info("replicate " + std::to_string(r) + " done after " + std::to_string(clock.seconds()) + " s");
  }

  // Written after all runs finish so the file order does not depend on scheduling.
  Jsonl metrics(dir / "metrics.jsonl");
  std::vector<SweepResult> pooled;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    std::vector<double> all;
    for (std::size_t r = 0; r < per_seed.size(); ++r) {
      const auto& acc = per_seed[r][i].accuracies;
      for (std::size_t e = 0; e < acc.size(); ++e)
        metrics.write({{"lambda", lambdas[i]},
                       {"replicate", r},
                       {"seed", cfg.seed + 1000 * r + i},
                       {"epoch", e + 1},
                       {"task", cfg.gan.task},
                       {"split", "dev"},
                       {"metric", "accuracy"},
                       {"value", acc[e]}});
      all.insert(all.end(), acc.begin(), acc.end());
    }
    pooled.push_back(summarize(lambdas[i], all));
  }
  const auto matrix = p_value_matrix(pooled);
  write_p_value_csv(dir / "pvalues.csv", pooled, matrix);

  json results = json::array();
  for (const auto& p : pooled)
    results.push_back(
        {{"lambda", p.lambda}, {"accuracies", p.accuracies}, {"max", p.max}, {"min", p.min}, {"mean", p.mean}});
  json rows = json::array();
  for (std::size_t r = 0; r < matrix.size(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c <= r; ++c) row.push_back(matrix[r][c]);
    rows.push_back(row);
  }
  write_json(dir / "sweep.json", {{"results", results}, {"p_values", rows}});
  for (const auto& p : pooled)
    log::info("lambda " + std::to_string(p.lambda) + ": mean " + std::to_string(p.mean) + " max " +
              std::to_string(p.max) + " min " + std::to_string(p.min));
}

void tsne_cmd(const RunConfig& cfg) {
  if (cfg.tsne.input.empty()) throw ConfigError("tsne needs --input");
  const fs::path dir = prepare_run(cfg);
  auto rows = read_embeddings(cfg.tsne.input);
  auto result = project_embeddings(rows, cfg.tsne.params);
  const fs::path out = cfg.tsne.output.empty() ? dir / "tsne.csv" : fs::path(cfg.tsne.output);
  write_embeddings(out, rows, false);
  Jsonl metrics(dir / "metrics.jsonl");
  for (std::size_t i = 0; i < result.kl.size(); ++i) metrics.write({{"iteration", i + 1}, {"kl", result.kl[i]}});
  log::info("projected " + std::to_string(rows.size()) + " rows to " + out.string() + ", final KL " +
            std::to_string(result.kl.empty() ? 0.0 : result.kl.back()));
}

void eval_cmd(const RunConfig& cfg) {
  if (cfg.checkpoint.empty()) throw ConfigError("eval needs --checkpoint");
  const fs::path ck = checkpoint_dir(cfg.checkpoint);
  const auto ckpt = load_checkpoint(ck);
  if (!ckpt.meta.contains("config") || !ckpt.meta.contains("kind"))
    throw DataError(ck.string() + ": checkpoint carries no run configuration");
  const json& saved = ckpt.meta["config"];
  RunConfig trained = apply_patch(profile_defaults(saved.value("profile", "desk")), saved);
  if (!cfg.data.dir.empty()) trained.data.dir = cfg.data.dir;

  const fs::path dir = prepare_run(cfg);
  const auto vocab = Vocab::load(ck / "vocab.txt");
  const std::size_t epoch = ckpt.meta.value("epochs", std::size_t{0});
  Jsonl metrics(dir / "metrics.jsonl");
  const std::string kind = ckpt.meta["kind"];
  if (kind == "multitask") {
    const auto splits = load_splits(trained.data, trained.data.n_examples);
    HeadConfig heads = trained.heads;
    heads.baseline = parse_train_mode(trained.train.mode) == TrainMode::baseline;
    MultitaskModel model(trained.encoder, heads, vocab, trained.seed);
    restore(model.params(), ckpt);
    const auto train = evaluate(model, splits.sst_train, splits.para_train, splits.sts_train);
    const auto dev = evaluate(model, splits.sst_dev, splits.para_dev, splits.sts_dev);
    record_metrics(metrics, epoch, "train", train);
    record_metrics(metrics, epoch, "dev", dev);
    log::info("train " + fmt(train) + " | dev " + fmt(dev));
  } else if (kind == "gan") {
    const Task task = gan_task(trained);
    auto splits = load_splits(trained.data, trained.data.gan_n_examples);
    GanModel model(trained.encoder, trained.gan.model, vocab, task, trained.seed);
    restore(model.params(), ckpt);
    const auto dev = labeled_only(task_dev(splits, task));
    std::vector<int> preds, truth;
    for (std::size_t i = 0; i < dev.size(); i += 64) {
      std::vector<Example> part(dev.begin() + static_cast<long>(i),
                                dev.begin() + static_cast<long>(std::min(dev.size(), i + 64)));
      auto p = model.predict(part);
      preds.insert(preds.end(), p.begin(), p.end());
    }
    for (const auto& e : dev) truth.push_back(static_cast<int>(*e.label));
    const double acc = accuracy(preds, truth);
    metrics.write({{"epoch", epoch}, {"task", trained.gan.task}, {"split", "dev"}, {"metric", "accuracy"}, {"value", acc}});
    log::info("dev accuracy " + std::to_string(acc));
  } else {
    throw DataError(ck.string() + ": unknown checkpoint kind '" + kind + "'");
  }
}

}  // namespace mtb::cli
