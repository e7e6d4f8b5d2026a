#pragma once

#include "run_config.hpp"

namespace mtb::cli {

// Each command writes config.json into its run directory before doing any work.
void gen_data(const RunConfig& cfg);
void train_multitask_cmd(const RunConfig& cfg);
void train_gan_cmd(const RunConfig& cfg);
void sweep_cmd(const RunConfig& cfg);
void tsne_cmd(const RunConfig& cfg);
void eval_cmd(const RunConfig& cfg);

}  // namespace mtb::cli
