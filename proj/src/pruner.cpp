#include "lichw/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "lichw/error.hpp"

namespace lichw {

std::vector<double> filter_l2_norms(const LayerSpec& layer) {
  if (!layer.is_conv_like()) {
    throw LayerKindError("filter norms need a conv or deconv layer, got " + std::string(to_string(layer.kind)));
  }
  const std::size_t per_filter = layer.in_channels * layer.kernel * layer.kernel;
  std::vector<double> norms(layer.out_channels);
  for (std::size_t f = 0; f < layer.out_channels; ++f) {
    double s = 0.0;
    for (std::size_t k = 0; k < per_filter; ++k) {
      const double w = layer.weights[f * per_filter + k];
      s += w * w;
    }
    norms[f] = std::sqrt(s);
  }
  return norms;
}

void PruneSchedule::validate() const {
  if (!(per_iteration_fraction >= 0.0 && per_iteration_fraction <= 1.0)) {
    throw ParameterError("per-iteration fraction must lie in [0, 1]");
  }
  if (static_cast<double>(iterations) * per_iteration_fraction > 1.0 + 1e-12) {
    throw ParameterError("schedule removes more than every filter");
  }
}

PruneTracking PruneTracking::start(const ModelSpec& model) {
  PruneTracking t;
  for (const auto& l : model.layers) {
    const std::size_t n = l.is_conv_like() ? l.out_channels : 0;
    t.original_filters.push_back(n);
    std::vector<std::size_t> ids(n);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    t.filter_ids.push_back(std::move(ids));
  }
  return t;
}

std::vector<bool> prunable_layers(const ModelSpec& model, const PruneOptions& options) {
  std::vector<bool> out(model.layers.size(), false);
  const bool hyper = model.role == ModelRole::hyper_encoder || model.role == ModelRole::hyper_decoder ||
                     model.role == ModelRole::entropy_params;
  if (hyper && !options.prune_hyperprior) return out;
  std::size_t last = model.layers.size();
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (model.layers[i].is_conv_like()) {
      out[i] = true;
      last = i;
    }
  }
  if (last < out.size()) out[last] = false;
  return out;
}

namespace {

// keep[c] says whether channel c survives.
void drop_output_channels(LayerSpec& l, const std::vector<bool>& keep) {
  const std::size_t per_filter = l.in_channels * l.kernel * l.kernel;
  std::vector<float> w;
  std::vector<float> b;
  for (std::size_t f = 0; f < l.out_channels; ++f) {
    if (!keep[f]) continue;
    w.insert(w.end(), l.weights.begin() + static_cast<std::ptrdiff_t>(f * per_filter),
             l.weights.begin() + static_cast<std::ptrdiff_t>((f + 1) * per_filter));
    b.push_back(l.bias[f]);
  }
  l.weights = std::move(w);
  l.bias = std::move(b);
  l.out_channels = l.bias.size();
}

void drop_input_channels(LayerSpec& l, const std::vector<bool>& keep) {
  const std::size_t kk = l.kernel * l.kernel;
  std::vector<float> w;
  for (std::size_t f = 0; f < l.out_channels; ++f) {
    for (std::size_t c = 0; c < l.in_channels; ++c) {
      if (!keep[c]) continue;
      const auto base = l.weights.begin() + static_cast<std::ptrdiff_t>((f * l.in_channels + c) * kk);
      w.insert(w.end(), base, base + static_cast<std::ptrdiff_t>(kk));
    }
  }
  l.weights = std::move(w);
  l.in_channels = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), true));
}

void drop_gdn_channels(LayerSpec& l, const std::vector<bool>& keep) {
  GdnParams& p = *l.gdn;
  const std::size_t c = p.channels();
  GdnParams q{{}, {}, p.alpha};
  for (std::size_t i = 0; i < c; ++i) {
    if (!keep[i]) continue;
    q.beta.push_back(p.beta[i]);
    for (std::size_t j = 0; j < c; ++j) {
      if (keep[j]) q.gamma.push_back(p.gamma_at(i, j));
    }
  }
  p = std::move(q);
  l.in_channels = l.out_channels = p.channels();
}

// Deletes the channels from every layer after `producer` up to and including the next conv-like layer.
void propagate(ModelSpec& m, std::size_t producer, const std::vector<bool>& keep) {
  for (std::size_t j = producer + 1; j < m.layers.size(); ++j) {
    LayerSpec& l = m.layers[j];
    if (l.is_conv_like()) {
      drop_input_channels(l, keep);
      return;
    }
    if (l.is_gdn_like()) {
      drop_gdn_channels(l, keep);
    } else {
      l.in_channels = l.out_channels = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), true));
    }
  }
}

FlopsReport model_flops(const ModelSpec& m, const PruneOptions& o) {
  if (m.layers.empty()) return {};
  return flops_of(m, Dims{1, m.layers.front().in_channels, o.input_height, o.input_width});
}

}  // namespace

PruneResult prune_step(const ModelSpec& model, double fraction_of_original, const PruneOptions& options,
                       PruneTracking tracking, std::size_t iteration) {
  model.validate();
  if (!(fraction_of_original >= 0.0 && fraction_of_original <= 1.0)) {
    throw ParameterError("prune fraction must lie in [0, 1]");
  }
  if (tracking.original_filters.empty() && !model.layers.empty()) tracking = PruneTracking::start(model);
  if (tracking.original_filters.size() != model.layers.size() || tracking.filter_ids.size() != model.layers.size()) {
    throw ParameterError("prune tracking does not match the model's layer count");
  }
  const std::vector<bool> prunable = prunable_layers(model, options);
  const FlopsReport before = model_flops(model, options);

  // Rank every layer on the unmodified model first.
  std::vector<std::vector<bool>> keeps(model.layers.size());
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (!prunable[i]) continue;
    const LayerSpec& l = model.layers[i];
    const auto k = static_cast<std::size_t>(
        std::floor(fraction_of_original * static_cast<double>(tracking.original_filters[i]) + 1e-9));
    if (k == 0) continue;
    if (k >= l.out_channels) {
      throw PruneError("pruning " + std::to_string(k) + " filters would empty layer " + std::to_string(i) +
                       " (" + std::to_string(l.out_channels) + " left)");
    }
    const std::vector<double> norms = filter_l2_norms(l);
    std::vector<std::size_t> order(norms.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return norms[a] < norms[b]; });
    keeps[i].assign(l.out_channels, true);
    for (std::size_t r = 0; r < k; ++r) keeps[i][order[r]] = false;
  }

  PruneResult result{model, {}, tracking};
  std::vector<PruneRecord> pending;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (keeps[i].empty()) continue;
    PruneRecord rec;
    rec.layer = i;
    rec.iteration = iteration;
    rec.filters_before = result.model.layers[i].out_channels;
    std::vector<std::size_t> ids;
    for (std::size_t f = 0; f < keeps[i].size(); ++f) {
      (keeps[i][f] ? ids : rec.removed_ids).push_back(result.tracking.filter_ids[i][f]);
    }
    std::sort(rec.removed_ids.begin(), rec.removed_ids.end());
    result.tracking.filter_ids[i] = std::move(ids);
    drop_output_channels(result.model.layers[i], keeps[i]);
    propagate(result.model, i, keeps[i]);
    rec.filters_after = result.model.layers[i].out_channels;
    pending.push_back(std::move(rec));
  }
  result.model.validate();

  const FlopsReport after = model_flops(result.model, options);
  for (auto& rec : pending) {
    rec.flops_before = before.per_layer[rec.layer];
    rec.flops_after = after.per_layer[rec.layer];
  }
  PruneReport& rep = result.report;
  rep.records = std::move(pending);
  rep.params_before = model.parameter_count();
  rep.params_after = result.model.parameter_count();
  rep.flops_before = before.total;
  rep.flops_after = after.total;
  std::size_t original = 0;
  std::size_t remaining = 0;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (!prunable[i]) continue;
    original += result.tracking.original_filters[i];
    remaining += result.tracking.filter_ids[i].size();
  }
  rep.cumulative_ratio = original == 0 ? 0.0 : static_cast<double>(original - remaining) / static_cast<double>(original);
  rep.linear_flops_estimate = (1.0 - rep.cumulative_ratio) * static_cast<double>(before.total);
  return result;
}

PruneResult iterative_prune(const ModelSpec& model, const PruneSchedule& schedule, const FinetuneHook& hook,
                            const PruneOptions& options) {
  schedule.validate();
  PruneResult acc{model, {}, PruneTracking::start(model)};
  const FlopsReport original = model_flops(model, options);
  acc.report.params_before = acc.report.params_after = model.parameter_count();
  acc.report.flops_before = acc.report.flops_after = original.total;
  acc.report.linear_flops_estimate = static_cast<double>(original.total);
  for (std::size_t it = 0; it < schedule.iterations; ++it) {
    PruneResult step = prune_step(acc.model, schedule.per_iteration_fraction, options, acc.tracking, it);
    acc.model = std::move(step.model);
    acc.tracking = std::move(step.tracking);
    for (auto& r : step.report.records) acc.report.records.push_back(std::move(r));
    acc.report.params_after = step.report.params_after;
    acc.report.flops_after = step.report.flops_after;
    acc.report.cumulative_ratio = step.report.cumulative_ratio;
    acc.report.linear_flops_estimate = (1.0 - step.report.cumulative_ratio) * static_cast<double>(original.total);
    if (hook) {
      hook(acc.model, it);
      acc.model.validate();
    }
  }
  return acc;
}

std::string PruneReport::to_json() const {
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : records) {
    recs.push_back({{"layer", r.layer},
                    {"iteration", r.iteration},
                    {"removed_ids", r.removed_ids},
                    {"filters_before", r.filters_before},
                    {"filters_after", r.filters_after},
                    {"flops_before", r.flops_before},
                    {"flops_after", r.flops_after}});
  }
  nlohmann::json j = {{"records", std::move(recs)},
                      {"params_before", params_before},
                      {"params_after", params_after},
                      {"flops_before", flops_before},
                      {"flops_after", flops_after},
                      {"linear_flops_estimate", std::round(linear_flops_estimate)},
                      {"cumulative_ratio", std::round(cumulative_ratio * 1e6) / 1e6}};
  return j.dump(2) + "\n";
}

std::string PruneReport::to_csv() const {
  std::string out = "layer,iteration,removed_count,flops_before,flops_after\n";
  for (const auto& r : records) {
    out += std::to_string(r.layer) + "," + std::to_string(r.iteration) + "," + std::to_string(r.removed_ids.size()) +
           "," + std::to_string(r.flops_before) + "," + std::to_string(r.flops_after) + "\n";
  }
  return out;
}

}  // namespace lichw
