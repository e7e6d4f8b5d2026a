#include "mtb/surgery.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mtb/error.hpp"
#include "mtb/log.hpp"

namespace mtb {

std::shared_ptr<const GradLayout> GradLayout::over(const ParamStore& store, const std::vector<std::string>& groups) {
  auto layout = std::make_shared<GradLayout>();
  for (const auto& e : store.entries()) {
    if (std::find(groups.begin(), groups.end(), e.group) == groups.end()) continue;
    layout->slots.push_back({e.name, layout->total, e.tensor.numel()});
    layout->total += e.tensor.numel();
  }
  return layout;
}

GradientSet GradientSet::collect(const std::string& task, const ParamStore& store,
                                 std::shared_ptr<const GradLayout> layout) {
  GradientSet g{task, std::vector<double>(layout->total, 0.0), layout};
  for (const auto& slot : layout->slots) {
    auto grad = store.get(slot.name).grad();
    if (!grad.empty()) std::copy(grad.begin(), grad.end(), g.flat.begin() + static_cast<long>(slot.offset));
  }
  return g;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

std::vector<GradientSet> pcgrad_project(const std::vector<GradientSet>& grads, Rng& rng) {
  if (grads.size() < 2) throw ContractError("pcgrad_project: need at least two gradient sets");
  for (const auto& g : grads) {
    if (g.flat.size() != grads[0].flat.size() || (g.layout && grads[0].layout && g.layout != grads[0].layout &&
                                                   g.layout->total != grads[0].layout->total)) {
      throw ContractError("pcgrad_project: gradient layouts differ");
    }
  }
  std::vector<double> sq_norms(grads.size());
  for (std::size_t j = 0; j < grads.size(); ++j) sq_norms[j] = dot(grads[j].flat, grads[j].flat);

  std::vector<GradientSet> out = grads;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < grads.size(); ++j)
      if (j != i) order.push_back(j);
    shuffle(order, rng);
    auto& gi = out[i].flat;
    for (std::size_t j : order) {
      if (sq_norms[j] == 0.0) {
        log::warning("pcgrad: zero gradient for task '" + grads[j].task + "', skipping projection");
        continue;
      }
      const double d = dot(gi, grads[j].flat);
      if (d < 0.0) {
        const double c = d / sq_norms[j];
        const auto& gj = grads[j].flat;
        for (std::size_t p = 0; p < gi.size(); ++p) gi[p] -= c * gj[p];
      }
    }
  }
  return out;
}

CombineMode parse_combine_mode(const std::string& s) {
  if (s == "naive-sum" || s == "naive_sum") return CombineMode::naive_sum;
  if (s == "pcgrad-paired" || s == "pcgrad_paired") return CombineMode::pcgrad_paired;
  throw ConfigError("unknown combine mode '" + s + "'");
}

void accumulate_pair(const GradientSet& first, const GradientSet& second, std::vector<double>& acc, Rng& rng) {
  auto projected = pcgrad_project({first, second}, rng);
  for (const auto& g : projected)
    for (std::size_t p = 0; p < acc.size(); ++p) acc[p] += g.flat[p];
}

std::vector<double> combine_shared(const GradientSet& sst, const GradientSet& para, const GradientSet& sts,
                                   CombineMode mode, bool halve_paraphrase, Rng& rng) {
  const std::size_t n = sst.flat.size();
  if (para.flat.size() != n || sts.flat.size() != n) throw ContractError("combine_shared: gradient sizes differ");
  std::vector<double> acc(n, 0.0);
  if (mode == CombineMode::naive_sum) {
    for (std::size_t p = 0; p < n; ++p) acc[p] = sst.flat[p] + para.flat[p] + sts.flat[p];
    return acc;
  }
  GradientSet p = para;
  if (halve_paraphrase) {
    for (auto& v : p.flat) v *= 0.5;
  }
  accumulate_pair(sst, p, acc, rng);
  accumulate_pair(sts, p, acc, rng);
  return acc;
}

void adam_update(std::vector<ParamGrad>& items, AdamState& state, const AdamConfig& cfg) {
  for (const auto& it : items) {
    if (it.grad.size() != it.param.numel()) {
      throw ContractError("adam_update: gradient size mismatch for " + it.name);
    }
    for (std::size_t i = 0; i < it.grad.size(); ++i) {
      if (!std::isfinite(it.grad[i])) {
        throw NumericError("adam_update: non-finite gradient in parameter '" + it.name + "' at index " +
                           std::to_string(i) + " (value " + std::to_string(it.grad[i]) + ")");
      }
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& it : items) {
    auto& mom = state.moments[it.name];
    if (mom.m.size() != it.grad.size()) {
      mom.m.assign(it.grad.size(), 0.0);
      mom.v.assign(it.grad.size(), 0.0);
    }
    auto theta = it.param.mutable_values();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = it.grad[i];
      mom.m[i] = cfg.beta1 * mom.m[i] + (1.0 - cfg.beta1) * g;
      mom.v[i] = cfg.beta2 * mom.v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = mom.m[i] / bc1;
      const double vhat = mom.v[i] / bc2;
      theta[i] -= cfg.lr * cfg.weight_decay * theta[i];
      theta[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

void adam_step(ParamStore& store, const std::vector<std::string>& groups, AdamState& state, const AdamConfig& cfg) {
  std::vector<ParamGrad> items;
  for (const auto& e : store.entries()) {
    if (std::find(groups.begin(), groups.end(), e.group) == groups.end()) continue;
    auto g = e.tensor.grad();
    items.push_back({e.name, e.tensor, g.empty() ? std::vector<double>(e.tensor.numel(), 0.0)
                                                 : std::vector<double>(g.begin(), g.end())});
  }
  adam_update(items, state, cfg);
}

void paired_step(ParamStore& store, const StepLosses& losses, AdamState& state, const AdamConfig& cfg,
                 const PairedStepOptions& opts, Rng& rng) {
  if (!losses.sst.defined() || !losses.para.defined() || !losses.sts.defined()) {
    throw ContractError("paired_step: all three task losses are required");
  }
  auto layout = GradLayout::over(store, opts.shared_groups);
  auto& entries = store.entries();
  std::vector<double> head_grads(store.total_size(), 0.0);

  auto run_task = [&](const std::string& task, const Tensor& loss) {
    store.zero_grad();
    loss.backward();
    std::size_t off = 0;
    for (const auto& e : entries) {
      auto g = e.tensor.grad();
      const bool shared = std::find(opts.shared_groups.begin(), opts.shared_groups.end(), e.group) !=
                          opts.shared_groups.end();
      if (!shared && !g.empty()) {
        for (std::size_t i = 0; i < g.size(); ++i) head_grads[off + i] += g[i];
      }
      off += e.tensor.numel();
    }
    return GradientSet::collect(task, store, layout);
  };
  const auto g_sst = run_task("sst", losses.sst);
  const auto g_para = run_task("para", losses.para);
  const auto g_sts = run_task("sts", losses.sts);
  store.zero_grad();

  const auto shared = combine_shared(g_sst, g_para, g_sts, opts.mode, opts.halve_paraphrase, rng);

  std::vector<ParamGrad> items;
  items.reserve(entries.size());
  std::size_t off = 0;
  std::size_t slot = 0;
  for (const auto& e : entries) {
    ParamGrad pg{e.name, e.tensor, {}};
    if (slot < layout->slots.size() && layout->slots[slot].name == e.name) {
      const auto& s = layout->slots[slot++];
      pg.grad.assign(shared.begin() + static_cast<long>(s.offset), shared.begin() + static_cast<long>(s.offset + s.length));
    } else {
      pg.grad.assign(head_grads.begin() + static_cast<long>(off),
                     head_grads.begin() + static_cast<long>(off + e.tensor.numel()));
    }
    off += e.tensor.numel();
    items.push_back(std::move(pg));
  }
  adam_update(items, state, cfg);
}

}  // namespace mtb
