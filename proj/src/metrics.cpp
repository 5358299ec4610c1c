// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#include "lkda/metrics.hpp"

#include <cmath>
#include <json.hpp>

#include "lkda/errors.hpp"
#include "lkda/parallel.hpp"

namespace lkda::metrics {

namespace {

void require_records(std::span<const EvalRecord> records, const char* what) {
  if (records.empty()) throw ContractError(std::string(what) + " of an empty record set");
}

void check_distribution(std::span<const double> p, const char* name) {
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw InputError(std::string(name) + " has a negative or non-finite entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-6)
    throw InputError(std::string(name) + " sums to " + std::to_string(total));
}

double kl_to_mix(std::span<const double> p, std::span<const double> mix) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) acc += p[i] * std::log(p[i] / mix[i]);
  return acc;
}

}  // namespace

double jsd(std::span<const double> p, std::span<const double> q, double lambda) {
  if (p.size() != q.size())
    throw InputError("jsd: lengths " + std::to_string(p.size()) + " and " + std::to_string(q.size()));
  if (p.empty()) throw InputError("jsd: empty distributions");
  if (!(lambda > 0.0 && lambda < 1.0)) throw InputError("jsd: lambda must lie in (0,1)");
  check_distribution(p, "p");
  check_distribution(q, "q");
  std::vector<double> mix(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) mix[i] = lambda * p[i] + (1.0 - lambda) * q[i];
  const double v = lambda * kl_to_mix(p, mix) + (1.0 - lambda) * kl_to_mix(q, mix);
  return v < 0.0 ? 0.0 : v;
}

double fidelity_fkg(std::span<const EvalRecord> records) {
  require_records(records, "fidelity");
  std::size_t agree = 0;
  for (const auto& r : records) agree += r.full.predicted_index == r.detached.predicted_index;
  return static_cast<double>(agree) / static_cast<double>(records.size());
}

double consistency_clk(std::span<const EvalRecord> records, double lambda) {
  require_records(records, "consistency");
  double total = 0.0;
  for (const auto& r : records) total += jsd(r.full.probabilities, r.detached.probabilities, lambda);
  return total / static_cast<double>(records.size());
}

double sparsity(std::size_t masked_rows, std::size_t total_nodes) {
  if (masked_rows > total_nodes)
    throw ContractError("sparsity: " + std::to_string(masked_rows) + " masked of " +
                        std::to_string(total_nodes));
  if (total_nodes == 0) return 0.0;
  return static_cast<double>(masked_rows) / static_cast<double>(total_nodes);
}

double delta_acc(double acc_original, double acc_perturbed) { return acc_original - acc_perturbed; }

double accuracy_full(std::span<const EvalRecord> records) {
  require_records(records, "accuracy");
  std::size_t hit = 0;
  for (const auto& r : records) hit += r.full.predicted_index == r.gold_index;
  return static_cast<double>(hit) / static_cast<double>(records.size());
}

double accuracy_detached(std::span<const EvalRecord> records) {
  require_records(records, "accuracy");
  std::size_t hit = 0;
  for (const auto& r : records) hit += r.detached.predicted_index == r.gold_index;
  return static_cast<double>(hit) / static_cast<double>(records.size());
}

MetricReport make_report(std::span<const EvalRecord> records, double lambda) {
  MetricReport m;
  m.accuracy_full = accuracy_full(records);
  m.accuracy_detached = accuracy_detached(records);
  m.f_kg = fidelity_fkg(records);
  m.c_lk = consistency_clk(records, lambda);
  m.n = records.size();
  return m;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["accuracy_full"] = accuracy_full;
  j["accuracy_detached"] = accuracy_detached;
  j["f_kg"] = f_kg;
  j["c_lk"] = c_lk;
  j["N"] = n;
  return j.dump(2) + "\n";
}

MetricReport MetricReport::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    MetricReport m;
    j.at("accuracy_full").get_to(m.accuracy_full);
    j.at("accuracy_detached").get_to(m.accuracy_detached);
    j.at("f_kg").get_to(m.f_kg);
    j.at("c_lk").get_to(m.c_lk);
    j.at("N").get_to(m.n);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("metric report: ") + e.what(), 0);
  }
}

std::vector<EvalRecord> evaluate(const model::FusionModelParams& params,
                                 std::span<const synth::McqInstance> instances, std::size_t threads,
                                 std::size_t batch_size) {
  std::vector<EvalRecord> records(instances.size());
  parallel_chunks(instances.size(), batch_size, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<const synth::McqInstance*> batch;
    for (std::size_t i = begin; i < end; ++i) batch.push_back(&instances[i]);
    model::ForwardOptions full, det;
    det.detached = true;
    const auto sf = model::forward(params, batch, full);
    const auto sd = model::forward(params, batch, det);
    const std::size_t c = sf.choices;
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t b = i - begin;
      records[i].gold_index = instances[i].gold_index;
      records[i].full = model::ChoiceDistribution::from_scores(sf.scores.values().subspan(b * c, c));
      records[i].detached = model::ChoiceDistribution::from_scores(sd.scores.values().subspan(b * c, c));
    }
  });
  return records;
}

}  // namespace lkda::metrics
