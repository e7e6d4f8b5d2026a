#include "run_config.hpp"

#include <cstdlib>
#include <fstream>

#include "mtb/error.hpp"
#include "mtb/multitask.hpp"

namespace mtb::cli {

using nlohmann::json;

RunConfig profile_defaults(const std::string& profile) {
  RunConfig c;
  c.profile = profile;
  c.encoder.dropout_p = 0.1;
  if (profile == "desk") {
    c.gan.model.lr = 1e-3;  // 5e-5 barely moves a from-scratch toy encoder in 5 epochs
    return c;
  }
  if (profile != "paper") throw ConfigError("unknown profile '" + profile + "' (expected desk or paper)");
  // BERT-base shapes with the reported fine-tuning hyperparameters.
  c.encoder.hidden = 768;
  c.encoder.layers = 12;
  c.encoder.heads = 12;
  c.encoder.ff_dim = 3072;
  c.encoder.max_seq_len = 128;
  c.heads.shared_dim = 768;
  c.heads.dense_dim = 768;
  c.encoder.dropout_p = 0.5;
  c.heads.dropout_p = 0.5;
  c.train.lr = 1e-5;
  c.train.weight_decay = 1e-3;
  c.train.batch_size = 112;
  c.train.epochs = 15;
  c.gan.model.lr = 5e-5;
  c.gan.model.noise_dim = 100;
  c.gan.model.hidden_dim = 768;
  c.gan.model.epochs = 5;
  c.gan.batch_size = 112;
  c.data.para_train_limit = 10000;
  c.data.para_dev_limit = 2000;
  return c;
}

json to_json(const RunConfig& c) {
  return {
      {"command", c.command},
      {"profile", c.profile},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"checkpoint", c.checkpoint},
      {"encoder",
       {{"hidden", c.encoder.hidden},
        {"layers", c.encoder.layers},
        {"heads", c.encoder.heads},
        {"ff_dim", c.encoder.ff_dim},
        {"max_seq_len", c.encoder.max_seq_len},
        {"dropout", c.encoder.dropout_p}}},
      {"heads",
       {{"shared_dim", c.heads.shared_dim},
        {"dense_dim", c.heads.dense_dim},
        {"dropout", c.heads.dropout_p},
        {"sts_mode", to_string(c.heads.sts_mode)}}},
      {"train",
       {{"mode", c.train.mode},
        {"lr", c.train.lr},
        {"weight_decay", c.train.weight_decay},
        {"batch_size", c.train.batch_size},
        {"epochs", c.train.epochs},
        {"halve_paraphrase", c.train.halve_paraphrase}}},
      {"gan",
       {{"task", c.gan.task},
        {"noise_dim", c.gan.model.noise_dim},
        {"hidden_depth", c.gan.model.hidden_depth},
        {"hidden_dim", c.gan.model.hidden_dim},
        {"lr", c.gan.model.lr},
        {"conditional", c.gan.model.conditional},
        {"epochs", c.gan.model.epochs},
        {"dropout", c.gan.model.dropout_p},
        {"lambda", c.gan.lambda},
        {"freeze_encoder", c.gan.freeze_encoder},
        {"init_encoder", c.gan.init_encoder},
        {"batch_size", c.gan.batch_size},
        {"samples", c.gan.samples}}},
      {"sweep", {{"lambdas", c.sweep.lambdas}, {"jobs", c.sweep.jobs}, {"seeds", c.sweep.seeds}}},
      {"tsne",
       {{"input", c.tsne.input},
        {"output", c.tsne.output},
        {"perplexity", c.tsne.params.perplexity},
        {"iterations", c.tsne.params.iterations},
        {"learning_rate", c.tsne.params.learning_rate},
        {"exaggeration", c.tsne.params.exaggeration},
        {"exaggeration_iters", c.tsne.params.exaggeration_iters},
        {"seed", c.tsne.params.seed}}},
      {"data",
       {{"dir", c.data.dir},
        {"n_examples", c.data.n_examples},
        {"n_dev", c.data.n_dev},
        {"gan_n_examples", c.data.gan_n_examples},
        {"seed", c.data.seed},
        {"vocab_size", c.data.vocab_size},
        {"para_train_limit", c.data.para_train_limit},
        {"para_dev_limit", c.data.para_dev_limit}}},
  };
}

namespace {

void check_keys(const json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError("config: '" + (path.empty() ? "<root>" : path) + "' must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string full = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("config: unknown key '" + full + "'");
    const auto& b = base.at(key);
    if (b.is_object()) {
      check_keys(b, value, full);
    } else if (b.is_number() != value.is_number() || b.is_string() != value.is_string() ||
               b.is_boolean() != value.is_boolean() || b.is_array() != value.is_array()) {
      throw ConfigError("config: '" + full + "' has the wrong type (expected " + std::string(b.type_name()) + ")");
    } else if (b.is_number_unsigned() && !(value.is_number_unsigned() || (value.is_number_integer() && value.get<std::int64_t>() >= 0))) {
      throw ConfigError("config: '" + full + "' must be a non-negative integer");
    }
  }
}

template <typename T>
void get(const json& j, const char* key, T& out) {
  out = j.at(key).get<T>();
}

}  // namespace

RunConfig apply_patch(const RunConfig& base, const json& patch) {
  json merged = to_json(base);
  check_keys(merged, patch, "");
  merged.merge_patch(patch);
  RunConfig c;
  try {
    get(merged, "command", c.command);
    get(merged, "profile", c.profile);
    get(merged, "seed", c.seed);
    get(merged, "output_dir", c.output_dir);
    get(merged, "checkpoint", c.checkpoint);
    const auto& e = merged.at("encoder");
    get(e, "hidden", c.encoder.hidden);
    get(e, "layers", c.encoder.layers);
    get(e, "heads", c.encoder.heads);
    get(e, "ff_dim", c.encoder.ff_dim);
    get(e, "max_seq_len", c.encoder.max_seq_len);
    get(e, "dropout", c.encoder.dropout_p);
    const auto& h = merged.at("heads");
    get(h, "shared_dim", c.heads.shared_dim);
    get(h, "dense_dim", c.heads.dense_dim);
    get(h, "dropout", c.heads.dropout_p);
    c.heads.sts_mode = parse_sts_mode(h.at("sts_mode").get<std::string>());
    const auto& t = merged.at("train");
    get(t, "mode", c.train.mode);
    get(t, "lr", c.train.lr);
    get(t, "weight_decay", c.train.weight_decay);
    get(t, "batch_size", c.train.batch_size);
    get(t, "epochs", c.train.epochs);
    get(t, "halve_paraphrase", c.train.halve_paraphrase);
    const auto& g = merged.at("gan");
    get(g, "task", c.gan.task);
    get(g, "noise_dim", c.gan.model.noise_dim);
    get(g, "hidden_depth", c.gan.model.hidden_depth);
    get(g, "hidden_dim", c.gan.model.hidden_dim);
    get(g, "lr", c.gan.model.lr);
    get(g, "conditional", c.gan.model.conditional);
    get(g, "epochs", c.gan.model.epochs);
    get(g, "dropout", c.gan.model.dropout_p);
    get(g, "lambda", c.gan.lambda);
    get(g, "freeze_encoder", c.gan.freeze_encoder);
    get(g, "init_encoder", c.gan.init_encoder);
    get(g, "batch_size", c.gan.batch_size);
    get(g, "samples", c.gan.samples);
    const auto& s = merged.at("sweep");
    get(s, "lambdas", c.sweep.lambdas);
    get(s, "jobs", c.sweep.jobs);
    get(s, "seeds", c.sweep.seeds);
    const auto& ts = merged.at("tsne");
    get(ts, "input", c.tsne.input);
    get(ts, "output", c.tsne.output);
    get(ts, "perplexity", c.tsne.params.perplexity);
    get(ts, "iterations", c.tsne.params.iterations);
    get(ts, "learning_rate", c.tsne.params.learning_rate);
    get(ts, "exaggeration", c.tsne.params.exaggeration);
    get(ts, "exaggeration_iters", c.tsne.params.exaggeration_iters);
    get(ts, "seed", c.tsne.params.seed);
    c.tsne.params.momentum_switch = c.tsne.params.exaggeration_iters;
    const auto& d = merged.at("data");
    get(d, "dir", c.data.dir);
    get(d, "n_examples", c.data.n_examples);
    get(d, "n_dev", c.data.n_dev);
    get(d, "gan_n_examples", c.data.gan_n_examples);
    get(d, "seed", c.data.seed);
    get(d, "vocab_size", c.data.vocab_size);
    get(d, "para_train_limit", c.data.para_train_limit);
    get(d, "para_dev_limit", c.data.para_dev_limit);
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
  c.gan.model.k = c.gan.task == "para" ? 2 : 5;
  return c;
}

void RunConfig::validate() const {
  EncoderConfig enc = encoder;
  enc.vocab_size = 8;  // filled from the corpus later
  enc.validate();
  HeadConfig hc = heads;
  hc.hidden = encoder.hidden;
  hc.validate();
  parse_train_mode(train.mode);
  if (!(train.lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (train.weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
  if (train.batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (train.epochs == 0) throw ConfigError("train.epochs must be >= 1");
  if (gan.task != "sst" && gan.task != "para") throw ConfigError("gan.task must be sst or para");
  gan.model.validate();
  if (!(gan.lambda >= 0.0 && gan.lambda <= 1.0)) throw ConfigError("gan.lambda must lie in [0, 1]");
  if (gan.batch_size == 0) throw ConfigError("gan.batch_size must be >= 1");
  if (gan.samples < 2) throw ConfigError("gan.samples must be >= 2");
  if (sweep.seeds == 0) throw ConfigError("sweep.seeds must be >= 1");
  if (sweep.jobs == 0) throw ConfigError("sweep.jobs must be >= 1");
  if (data.n_examples == 0 || data.gan_n_examples == 0) throw ConfigError("data sizes must be >= 1");
  if (data.vocab_size < 4) throw ConfigError("data.vocab_size must be >= 4");
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open config file " + path.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

RunConfig resolve(const std::filesystem::path& config_file, const json& cli_patch) {
  json file = config_file.empty() ? json::object() : read_json_file(config_file);
  std::string profile = "desk";
  if (file.is_object() && file.contains("profile") && file["profile"].is_string()) profile = file["profile"];
  if (cli_patch.contains("profile")) profile = cli_patch["profile"];
  RunConfig c = apply_patch(profile_defaults(profile), file);
  c = apply_patch(c, cli_patch);
  c.validate();
  return c;
}

std::filesystem::path run_directory(const RunConfig& cfg) {
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  const char* root = std::getenv("MTB_OUTPUT_ROOT");
  return std::filesystem::path(root && *root ? root : "runs") / cfg.command;
}

}  // namespace mtb::cli
