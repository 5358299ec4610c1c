// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#include "lkda/explain.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "lkda/errors.hpp"
#include "lkda/parallel.hpp"
#include "lkda/random.hpp"

namespace lkda::explain {

std::vector<std::uint32_t> ImportanceRanking::top(std::size_t k) const {
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < std::min(k, entries.size()); ++i) out.push_back(entries[i].first);
  return out;
}

ImportanceRanking rank_from_trace(const model::ForwardTrace& trace, std::size_t context_node) {
  ImportanceRanking r;
  const auto& last = trace.alpha.back();
  const double heads = static_cast<double>(last.size());
  for (std::size_t j = 0; j < trace.num_nodes; ++j) {
    if (j == context_node) continue;
    double s = 0.0;
    for (const auto& head : last) s += head[j * trace.num_nodes + context_node];
    r.entries.emplace_back(static_cast<std::uint32_t>(j), s / heads);
  }
  std::stable_sort(r.entries.begin(), r.entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return r;
}

namespace {

void rank_batch(const model::FusionModelParams& params,
                std::span<const synth::McqInstance* const> batch,
                std::vector<ImportanceRanking>* out) {
  model::ForwardOptions opt;
  opt.want_trace = true;
  const auto f = model::forward(params, batch, opt);
  for (std::size_t i = 0; i < batch.size(); ++i)
    for (std::size_t c = 0; c < f.choices; ++c)
      out[i].push_back(rank_from_trace(f.traces[i * f.choices + c], batch[i]->subgraphs[c].context_node()));
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::vector<ImportanceRanking> attention_importance(const model::FusionModelParams& params,
                                                    const synth::McqInstance& instance) {
  model::check_instance(params.config, instance);
  std::vector<ImportanceRanking> out;
  const synth::McqInstance* p = &instance;
  rank_batch(params, {&p, 1}, &out);
  return out;
}

std::vector<std::vector<ImportanceRanking>> attention_importance(
    const model::FusionModelParams& params, std::span<const synth::McqInstance> instances,
    std::size_t threads) {
  std::vector<std::vector<ImportanceRanking>> out(instances.size());
  parallel_chunks(instances.size(), 32, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<const synth::McqInstance*> batch;
    for (std::size_t i = begin; i < end; ++i) batch.push_back(&instances[i]);
    rank_batch(params, batch, out.data() + begin);
  });
  return out;
}

std::string_view to_string(Policy p) {
  switch (p) {
    case Policy::original: return "original";
    case Policy::random: return "random";
    case Policy::top: return "top";
  }
  return "top";
}

Policy parse_policy(std::string_view name) {
  if (name == "original") return Policy::original;
  if (name == "random") return Policy::random;
  if (name == "top") return Policy::top;
  throw InputError("unknown policy '" + std::string(name) + "'");
}

std::vector<double> default_sparsity_grid() { return {0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0}; }

std::size_t masked_count(double s, std::size_t maskable) {
  const double want = std::ceil(s * static_cast<double>(maskable) - 1e-9);
  return std::min(maskable, static_cast<std::size_t>(std::max(0.0, want)));
}

model::ChoiceMasks build_masks(const synth::McqInstance& instance,
                               std::span<const ImportanceRanking> rankings, Policy policy, double s,
                               std::uint64_t seed, std::size_t instance_index, std::size_t grid_index) {
  model::ChoiceMasks masks(instance.num_choices());
  for (std::size_t c = 0; c < instance.num_choices(); ++c) {
    const auto& g = instance.subgraphs[c];
    const std::size_t ctx = g.context_node();
    const std::size_t maskable = g.num_nodes - 1;
    const std::size_t k = masked_count(s, maskable);
    if (policy == Policy::random) {
      Rng rng(derive_seed(seed, {instance_index, c, grid_index}));
      for (std::size_t pick : rng.sample(maskable, k))
        masks[c].push_back(static_cast<std::uint32_t>(pick < ctx ? pick : pick + 1));
    } else {
      if (rankings.size() != instance.num_choices())
        throw ContractError("missing importance ranking for a choice");
      masks[c] = rankings[c].top(k);
    }
    for (auto r : masks[c])
      if (r == ctx) throw ContractError("masking selected the context node");
  }
  return masks;
}

FidelitySparsityCurve sweep(const model::FusionModelParams& params,
                            std::span<const synth::McqInstance> instances, Policy policy,
                            std::span<const double> grid, const SweepOptions& options) {
  if (grid.empty() || grid.front() != 0.0)
    throw ContractError("sparsity grid must start at 0");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0 && grid[i] <= 1.0)) throw ContractError("sparsity outside [0,1]");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw ContractError("sparsity grid is not strictly increasing");
  }
  if (instances.empty()) throw ContractError("sweep over an empty split");
  for (const auto& inst : instances) model::check_instance(params.config, inst);

  std::vector<std::vector<ImportanceRanking>> rankings;
  if (policy != Policy::random) rankings = attention_importance(params, instances, options.threads);

  FidelitySparsityCurve curve;
  curve.policy = policy;
  curve.seed = options.seed;
  curve.corpus_id = options.corpus_id;
  curve.model_id = options.model_id;
  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    std::vector<char> hit(instances.size(), 0);
    parallel_chunks(instances.size(), 32, options.threads, [&](std::size_t begin, std::size_t end) {
      std::vector<const synth::McqInstance*> batch;
      std::vector<model::ChoiceMasks> masks;
      for (std::size_t i = begin; i < end; ++i) {
        batch.push_back(&instances[i]);
        const std::span<const ImportanceRanking> r =
            rankings.empty() ? std::span<const ImportanceRanking>{} : std::span(rankings[i]);
        masks.push_back(build_masks(instances[i], r, policy, grid[gi], options.seed, i, gi));
      }
      model::ForwardOptions opt;
      opt.masks = masks;
      const auto f = model::forward(params, batch, opt);
      for (std::size_t i = begin; i < end; ++i) {
        const auto d = model::ChoiceDistribution::from_scores(
            f.scores.values().subspan((i - begin) * f.choices, f.choices));
        hit[i] = d.predicted_index == instances[i].gold_index;
      }
    });
    const auto correct = static_cast<double>(std::count(hit.begin(), hit.end(), 1));
    curve.points.push_back({grid[gi], correct / static_cast<double>(instances.size())});
  }
  return curve;
}

std::optional<double> recovery_score(const ImportanceRanking& ranking,
                                     std::span<const std::uint32_t> planted_path, std::size_t k) {
  if (k == 0) throw ContractError("recovery_score needs k >= 1");
  if (planted_path.empty()) return std::nullopt;
  std::size_t hits = 0;
  for (auto node : ranking.top(k))
    hits += std::find(planted_path.begin(), planted_path.end(), node) != planted_path.end();
  return static_cast<double>(hits) / static_cast<double>(std::min(k, planted_path.size()));
}

RecoveryBaseline random_recovery(std::size_t maskable, std::size_t path, std::size_t k) {
  if (path == 0 || maskable == 0 || path > maskable)
    throw ContractError("random_recovery needs 0 < path <= maskable");
  const double m = static_cast<double>(maskable);
  const double p = static_cast<double>(path);
  const double draws = static_cast<double>(std::min(k, maskable));
  const double denom = static_cast<double>(std::min(k, path));
  const double frac = p / m;
  const double mean = draws * frac;
  const double var = maskable > 1 ? draws * frac * (1.0 - frac) * (m - draws) / (m - 1.0) : 0.0;
  return {mean / denom, var / (denom * denom)};
}

double auc_drop(const FidelitySparsityCurve& curve) {
  const auto& pts = curve.points;
  if (pts.size() < 2) throw ContractError("auc_drop needs at least two points");
  const double base = pts.front().accuracy;
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double d0 = base - pts[i - 1].accuracy;
    const double d1 = base - pts[i].accuracy;
    area += 0.5 * (d0 + d1) * (pts[i].sparsity - pts[i - 1].sparsity);
  }
  return area;
}

std::string curve_csv(std::span<const FidelitySparsityCurve> curves) {
  std::string out = "policy,sparsity,accuracy,seed,model_id\n";
  for (const auto& c : curves) {
    if (c.model_id.find_first_of(",\n\"") != std::string::npos)
      throw InputError("model_id may not contain commas, quotes or newlines");
    for (const auto& p : c.points) {
      out += std::string(to_string(c.policy)) + ',' + format_double(p.sparsity) + ',' +
             format_double(p.accuracy) + ',' + std::to_string(c.seed) + ',' + c.model_id + '\n';
    }
  }
  return out;
}

std::vector<FidelitySparsityCurve> parse_curve_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::vector<FidelitySparsityCurve> curves;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line != "policy,sparsity,accuracy,seed,model_id") throw ParseError("unexpected curve header", 1);
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    if (cells.size() != 5) throw ParseError("expected 5 columns", lineno);
    try {
      const Policy policy = parse_policy(cells[0]);
      const double s = std::stod(cells[1]);
      const double acc = std::stod(cells[2]);
      const std::uint64_t seed = std::stoull(cells[3]);
      if (curves.empty() || curves.back().policy != policy || curves.back().seed != seed ||
          curves.back().model_id != cells[4] || s <= curves.back().points.back().sparsity) {
        curves.push_back({policy, {}, seed, {}, cells[4]});
      }
      curves.back().points.push_back({s, acc});
    } catch (const std::logic_error& e) {
      throw ParseError(std::string("bad curve row: ") + e.what(), lineno);
    }
  }
  return curves;
}

FidelitySparsityCurve average_curves(std::span<const FidelitySparsityCurve> curves) {
  if (curves.empty()) throw ContractError("no curves to average");
  FidelitySparsityCurve avg = curves.front();
  for (const auto& c : curves.subspan(1)) {
    if (c.policy != avg.policy || c.points.size() != avg.points.size())
      throw ContractError("curves differ in policy or grid");
    for (std::size_t i = 0; i < c.points.size(); ++i) {
      if (c.points[i].sparsity != avg.points[i].sparsity) throw ContractError("curves differ in grid");
      avg.points[i].accuracy += c.points[i].accuracy;
    }
  }
  for (auto& p : avg.points) p.accuracy /= static_cast<double>(curves.size());
  return avg;
}

}  // namespace lkda::explain
