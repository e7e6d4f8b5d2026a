#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "commands.hpp"
#include "mtb/error.hpp"
#include "mtb/log.hpp"

using nlohmann::json;
using namespace mtb;

namespace {

// Records a flag into the JSON patch only when it was actually given, so that
// unset flags never mask config-file values.
template <typename T>
CLI::Option* patch_opt(CLI::App& app, json& patch, const std::string& flags, const std::string& pointer,
                       const std::string& help) {
  return app.add_option_function<T>(
      flags, [&patch, pointer](const T& v) { patch[json::json_pointer(pointer)] = v; }, help);
}

CLI::Option* patch_flag(CLI::App& app, json& patch, const std::string& flags, const std::string& pointer, bool value,
                        const std::string& help) {
  return app.add_flag_function(
      flags, [&patch, pointer, value](std::int64_t) { patch[json::json_pointer(pointer)] = value; }, help);
}

log::Level parse_level(const std::string& s) {
  static const std::map<std::string, log::Level> levels{{"debug", log::Level::debug},
                                                        {"info", log::Level::info},
                                                        {"warning", log::Level::warning},
                                                        {"error", log::Level::error},
                                                        {"off", log::Level::off}};
  auto it = levels.find(s);
  if (it == levels.end()) throw ConfigError("unknown log level '" + s + "'");
  return it->second;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multitask sentence encoder, gradient surgery and semi-supervised GAN experiments"};
  app.require_subcommand(1);
  app.fallthrough();

  json patch = json::object();
  std::string config_file;
  std::string log_level = "info";
  app.add_option("-c,--config", config_file, "JSON config file; flags override its values")->check(CLI::ExistingFile);
  app.add_option("--log-level", log_level, "debug|info|warning|error|off");
  patch_opt<std::string>(app, patch, "--profile", "/profile", "desk | paper");
  patch_opt<std::string>(app, patch, "-o,--out,--output-dir", "/output_dir",
                         "run directory (default $MTB_OUTPUT_ROOT/<command>)");
  patch_opt<std::string>(app, patch, "--data-dir", "/data/dir", "directory of <task>_{train,dev}.tsv files");

  auto* gen = app.add_subcommand("gen-data", "write a synthetic corpus");
  patch_opt<std::size_t>(*gen, patch, "--n-examples", "/data/n_examples", "train examples per task");
  patch_opt<std::size_t>(*gen, patch, "--n-dev", "/data/n_dev", "dev examples per task");
  patch_opt<std::size_t>(*gen, patch, "--vocab-size", "/data/vocab_size", "filler vocabulary size");
  patch_opt<std::uint64_t>(*gen, patch, "--seed", "/data/seed", "corpus seed");

  auto* mt = app.add_subcommand("train-multitask", "train the shared encoder and three heads");
  patch_opt<std::string>(*mt, patch, "--mode", "/train/mode", "baseline | naive-sum | pcgrad-paired");
  patch_opt<std::size_t>(*mt, patch, "--epochs", "/train/epochs", "training epochs");
  patch_opt<double>(*mt, patch, "--lr", "/train/lr", "Adam learning rate");
  patch_opt<double>(*mt, patch, "--weight-decay", "/train/weight_decay", "decoupled weight decay");
  patch_opt<std::size_t>(*mt, patch, "--batch-size", "/train/batch_size", "per-task batch size");
  patch_opt<std::string>(*mt, patch, "--sts-mode", "/heads/sts_mode", "similarity head variant");
  patch_flag(*mt, patch, "--halve-paraphrase", "/train/halve_paraphrase", true, "scale paraphrase loss by 0.5");
  patch_opt<std::size_t>(*mt, patch, "--n-examples", "/data/n_examples", "synthetic train examples per task");

  auto add_gan_flags = [&](CLI::App& sub) {
    patch_opt<std::string>(sub, patch, "--task", "/gan/task", "sst | para");
    patch_flag(sub, patch, "--conditional", "/gan/conditional", true, "label-conditioned generator (default)");
    patch_flag(sub, patch, "--unconditional", "/gan/conditional", false, "noise-only generator");
    patch_opt<std::size_t>(sub, patch, "--hidden-depth", "/gan/hidden_depth", "hidden layers in G and D");
    patch_opt<std::size_t>(sub, patch, "--epochs", "/gan/epochs", "GAN epochs");
    patch_opt<double>(sub, patch, "--lr", "/gan/lr", "Adam learning rate for G and D");
    patch_flag(sub, patch, "--freeze-encoder", "/gan/freeze_encoder", true, "keep encoder weights fixed");
    patch_opt<std::size_t>(sub, patch, "--n-examples", "/data/gan_n_examples", "synthetic train examples");
  };

  auto* gan = app.add_subcommand("train-gan", "semi-supervised GAN on one classification task");
  add_gan_flags(*gan);
  patch_opt<double>(*gan, patch, "--lambda", "/gan/lambda", "fraction of training labels removed");
  patch_opt<std::string>(*gan, patch, "--init-encoder", "/gan/init_encoder", "run directory of a multitask checkpoint");
  patch_opt<std::size_t>(*gan, patch, "--samples", "/gan/samples", "rows per source in embeddings.csv");

  auto* sweep = app.add_subcommand("sweep", "label-masking sensitivity sweep");
  add_gan_flags(*sweep);
  patch_opt<std::vector<double>>(*sweep, patch, "--lambdas", "/sweep/lambdas", "ascending masking fractions")
      ->delimiter(',');
  patch_opt<std::size_t>(*sweep, patch, "--jobs", "/sweep/jobs", "concurrent lambda runs");
  patch_opt<std::size_t>(*sweep, patch, "--seeds", "/sweep/seeds", "replicates per lambda");

  auto* tsne = app.add_subcommand("tsne", "2-D projection of an embedding dump");
  patch_opt<std::string>(*tsne, patch, "--input", "/tsne/input", "embedding CSV")->check(CLI::ExistingFile);
  patch_opt<std::string>(*tsne, patch, "--output", "/tsne/output", "output CSV (default <run dir>/tsne.csv)");
  patch_opt<double>(*tsne, patch, "--perplexity", "/tsne/perplexity", "target perplexity");
  patch_opt<std::size_t>(*tsne, patch, "--iterations", "/tsne/iterations", "gradient steps");

  auto* ev = app.add_subcommand("eval", "metrics from a saved checkpoint");
  patch_opt<std::string>(*ev, patch, "--checkpoint", "/checkpoint", "run or checkpoint directory");

  // Registered last so that gen-data's own --seed takes precedence there.
  patch_opt<std::uint64_t>(app, patch, "--seed", "/seed", "run seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    log::set_level(parse_level(log_level));
    CLI::App* sub = app.get_subcommands().front();
    patch["command"] = sub->get_name();
    auto cfg = cli::resolve(config_file, patch);
    const std::string& cmd = cfg.command;
    if (cmd == "gen-data") cli::gen_data(cfg);
    else if (cmd == "train-multitask") cli::train_multitask_cmd(cfg);
    else if (cmd == "train-gan") cli::train_gan_cmd(cfg);
    else if (cmd == "sweep") cli::sweep_cmd(cfg);
    else if (cmd == "tsne") cli::tsne_cmd(cfg);
    else cli::eval_cmd(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
