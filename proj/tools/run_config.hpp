#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mtb/analysis.hpp"
#include "mtb/encoder.hpp"
#include "mtb/gan.hpp"
#include "mtb/heads.hpp"

namespace mtb::cli {

struct DataSection {
  std::string dir;  // TSV corpus directory; empty = synthetic corpus generated in memory
  std::size_t n_examples = 500;
  std::size_t n_dev = 100;
  std::size_t gan_n_examples = 4000;  // synthetic train size for the GAN commands
  std::uint64_t seed = 0;
  std::size_t vocab_size = 60;
  std::size_t para_train_limit = 0;  // 0 = no truncation
  std::size_t para_dev_limit = 0;
};

struct TrainSection {
  std::string mode = "pcgrad-paired";
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::size_t batch_size = 16;
  std::size_t epochs = 150;
  bool halve_paraphrase = false;
};

struct GanSection {
  std::string task = "sst";
  GanConfig model;  // k is derived from the task
  double lambda = 0.0;
  bool freeze_encoder = false;
  std::string init_encoder;  // run directory of a multitask checkpoint
  std::size_t batch_size = 16;
  std::size_t samples = 300;  // generated rows in the embedding dump
};

struct SweepSection {
  std::vector<double> lambdas{0.0, 0.5, 0.9};
  std::size_t jobs = 1;
  std::size_t seeds = 1;
};

struct TsneSection {
  std::string input;
  std::string output;  // empty = <run dir>/tsne.csv
  TsneConfig params;
};

struct RunConfig {
  std::string command;
  std::string profile = "desk";
  std::uint64_t seed = 0;
  std::string output_dir;
  EncoderConfig encoder;
  HeadConfig heads;
  TrainSection train;
  GanSection gan;
  SweepSection sweep;
  TsneSection tsne;
  DataSection data;
  std::string checkpoint;  // eval: run directory to load

  void validate() const;
};

/// Built-in defaults: "desk" (H=32, L=2, batch 16, lr 1e-3) or "paper".
RunConfig profile_defaults(const std::string& profile);

nlohmann::json to_json(const RunConfig& cfg);
/// Overlays `patch` on `base`. Unknown keys and wrong value types raise
/// ConfigError naming the offending key.
RunConfig apply_patch(const RunConfig& base, const nlohmann::json& patch);

/// profile defaults <- config file <- CLI patch. The profile comes from the
/// CLI patch, then the file, then "desk".
RunConfig resolve(const std::filesystem::path& config_file, const nlohmann::json& cli_patch);

nlohmann::json read_json_file(const std::filesystem::path& path);

/// output_dir if set, else $MTB_OUTPUT_ROOT (default "runs") / command.
std::filesystem::path run_directory(const RunConfig& cfg);

}  // namespace mtb::cli
