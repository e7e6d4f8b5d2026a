#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mtb/params.hpp"
#include "mtb/rng.hpp"

namespace mtb {

/// Offsets of each parameter inside a flattened gradient vector.
struct GradLayout {
  struct Slot {
    std::string name;
    std::size_t offset = 0;
    std::size_t length = 0;
  };
  std::vector<Slot> slots;
  std::size_t total = 0;

  /// Layout over every parameter of `store` whose group is in `groups`.
  static std::shared_ptr<const GradLayout> over(const ParamStore& store, const std::vector<std::string>& groups);
};

/// One task's gradient over the shared parameters, flattened.
struct GradientSet {
  std::string task;
  std::vector<double> flat;
  std::shared_ptr<const GradLayout> layout;

  /// Snapshot of the current .grad buffers (missing buffers read as zero).
  static GradientSet collect(const std::string& task, const ParamStore& store,
                             std::shared_ptr<const GradLayout> layout);
};

double dot(const std::vector<double>& a, const std::vector<double>& b);

/// PCGrad: for each task i, visit the other tasks in a random order and, when
/// g_i . g_j < 0, remove the component of g_i along the original g_j. Zero
/// norm partners are skipped with a warning. Inputs are not modified.
std::vector<GradientSet> pcgrad_project(const std::vector<GradientSet>& grads, Rng& rng);

enum class CombineMode { naive_sum, pcgrad_paired };

CombineMode parse_combine_mode(const std::string& s);

/// Shared-parameter gradient for one step.
///   naive_sum:      g_sst + g_para + g_sts
///   pcgrad_paired:  sum(pcgrad([g_sst, g_para])) + sum(pcgrad([g_sts, g_para]))
/// With halve_paraphrase the paraphrase gradient enters each pair at half weight.
std::vector<double> combine_shared(const GradientSet& sst, const GradientSet& para, const GradientSet& sts,
                                   CombineMode mode, bool halve_paraphrase, Rng& rng);

/// Accumulates sum(pcgrad(pair)) into `acc`.
void accumulate_pair(const GradientSet& first, const GradientSet& second, std::vector<double>& acc, Rng& rng);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamState {
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };
  std::size_t step = 0;
  std::map<std::string, Moments> moments;
};

struct ParamGrad {
  std::string name;
  Tensor param;
  std::vector<double> grad;
};

/// Bias-corrected Adam with decoupled weight decay:
///   theta <- theta - lr*wd*theta, then theta <- theta - lr * mhat / (sqrt(vhat) + eps).
/// Throws NumericError naming the parameter, before touching any value, if a
/// gradient is non-finite.
void adam_update(std::vector<ParamGrad>& items, AdamState& state, const AdamConfig& cfg);

/// adam_update over every parameter in `groups`, reading the current .grad
/// buffers (missing buffers count as zero).
void adam_step(ParamStore& store, const std::vector<std::string>& groups, AdamState& state, const AdamConfig& cfg);

/// One optimisation step of the multitask model: backward each task loss
/// separately, combine the shared-parameter gradients (`shared_groups`),
/// give head-exclusive parameters their own task's raw gradient, then apply a
/// single Adam update.
struct PairedStepOptions {
  CombineMode mode = CombineMode::pcgrad_paired;
  bool halve_paraphrase = false;
  std::vector<std::string> shared_groups{"shared"};
};

struct StepLosses {
  Tensor sst, para, sts;
};

void paired_step(ParamStore& store, const StepLosses& losses, AdamState& state, const AdamConfig& cfg,
                 const PairedStepOptions& opts, Rng& rng);

}  // namespace mtb
