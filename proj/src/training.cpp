// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#include "lkda/training.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "lkda/errors.hpp"
#include "lkda/metrics.hpp"

namespace lkda::train {

using ad::Tensor;

std::string_view to_string(Mode mode) { return mode == Mode::lkda ? "lkda" : "baseline_ce"; }

Mode parse_mode(std::string_view name) {
  if (name == "lkda") return Mode::lkda;
  if (name == "baseline_ce") return Mode::baseline_ce;
  throw ConfigError("unknown training mode '" + std::string(name) + "' (baseline_ce, lkda)");
}

std::string_view to_string(StopGradient s) {
  switch (s) {
    case StopGradient::none: return "none";
    case StopGradient::full: return "full";
    case StopGradient::detached: return "detached";
  }
  return "none";
}

StopGradient parse_stop_gradient(std::string_view name) {
  if (name == "none") return StopGradient::none;
  if (name == "full") return StopGradient::full;
  if (name == "detached") return StopGradient::detached;
  throw ConfigError("unknown stop_gradient '" + std::string(name) + "' (none, full, detached)");
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(lr_text > 0.0) || !(lr_graph > 0.0)) throw ConfigError("learning rates must be > 0");
  if (!(lambda_align >= 0.0)) throw ConfigError("lambda_align must be >= 0");
  if (!(jsd_lambda > 0.0 && jsd_lambda < 1.0)) throw ConfigError("jsd_lambda must lie in (0,1)");
  if (!(grad_clip_norm > 0.0)) throw ConfigError("grad_clip_norm must be > 0");
  if (eval_every == 0) throw ConfigError("eval_every must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("Adam moment coefficients must lie in [0,1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be > 0");
}

// ---------------------------------------------------------------------------
// Losses

Tensor ce_loss(const Tensor& scores, std::span<const std::size_t> gold) {
  if (gold.size() != scores.rows())
    throw ContractError("ce_loss: " + std::to_string(gold.size()) + " labels for " +
                        std::to_string(scores.rows()) + " rows");
  std::vector<double> pick(scores.size(), 0.0);
  for (std::size_t r = 0; r < gold.size(); ++r) {
    if (gold[r] >= scores.cols())
      throw ContractError("ce_loss: gold index " + std::to_string(gold[r]) + " with " +
                          std::to_string(scores.cols()) + " choices");
    pick[r * scores.cols() + gold[r]] = 1.0;
  }
  Tensor picked = ad::sum(ad::mul(ad::log_softmax_rows(scores), Tensor::from(scores.shape(), std::move(pick))));
  return ad::scale(picked, -1.0 / static_cast<double>(scores.rows()));
}

Tensor jsd_loss(const Tensor& scores_p, const Tensor& scores_q, double lambda) {
  if (!(scores_p.shape() == scores_q.shape()))
    throw DimensionError("jsd_loss: " + scores_p.shape().str() + " vs " + scores_q.shape().str());
  Tensor lp = ad::log_softmax_rows(scores_p);
  Tensor lq = ad::log_softmax_rows(scores_q);
  Tensor la = ad::logaddexp(ad::add_scalar(lp, std::log(lambda)), ad::add_scalar(lq, std::log1p(-lambda)));
  Tensor kp = ad::sum(ad::mul(ad::exp(lp), ad::sub(lp, la)));
  Tensor kq = ad::sum(ad::mul(ad::exp(lq), ad::sub(lq, la)));
  const double inv = 1.0 / static_cast<double>(scores_p.rows());
  return ad::add(ad::scale(kp, lambda * inv), ad::scale(kq, (1.0 - lambda) * inv));
}

LossParts lkda_loss(const model::FusionModelParams& params,
                    std::span<const synth::McqInstance* const> batch, double lambda_align,
                    double jsd_lambda, StopGradient stop, Rng* dropout_rng) {
  if (!(lambda_align >= 0.0)) throw ContractError("lambda_align must be >= 0");
  model::ForwardOptions full_opt;
  full_opt.dropout_rng = dropout_rng;
  const auto full = model::forward(params, batch, full_opt);
  std::vector<std::size_t> gold;
  for (const auto* inst : batch) gold.push_back(inst->gold_index);
  LossParts parts;
  parts.full_scores = full.scores;
  Tensor ce = ce_loss(full.scores, gold);
  parts.ce = ce.item();
  if (lambda_align == 0.0) {
    parts.total = ce;
    return parts;
  }
  model::ForwardOptions det_opt;
  det_opt.detached = true;
  det_opt.dropout_rng = dropout_rng;
  const auto det = model::forward(params, batch, det_opt);
  const Tensor sp = stop == StopGradient::full ? ad::detach(full.scores) : full.scores;
  const Tensor sq = stop == StopGradient::detached ? ad::detach(det.scores) : det.scores;
  Tensor align = jsd_loss(sp, sq, jsd_lambda);
  parts.align = align.item();
  parts.total = ad::add(ce, ad::scale(align, lambda_align));
  return parts;
}

double clip_grad_norm(const model::FusionModelParams& params, double max_norm) {
  double sq = 0.0;
  auto named = params.named();
  for (const auto& p : named)
    for (double g : p.tensor.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double f = max_norm / (norm + 1e-12);
    for (auto& p : named) {
      Tensor t = p.tensor;
      for (double& g : t.mutable_grad()) g *= f;
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(const model::FusionModelParams& params, const TrainConfig& config)
    : lr_text_(config.lr_text),
      lr_graph_(config.lr_graph),
      b1_(config.beta1),
      b2_(config.beta2),
      eps_(config.adam_eps) {
  for (const auto& p : params.named())
    slots_.push_back({std::vector<double>(p.tensor.size(), 0.0), std::vector<double>(p.tensor.size(), 0.0)});
}

void Adam::step(const model::FusionModelParams& params) {
  auto named = params.named();
  if (named.size() != slots_.size()) throw ContractError("optimizer state does not match parameters");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < named.size(); ++i) {
    Tensor t = named[i].tensor;
    const double lr = named[i].group == model::ParamGroup::text ? lr_text_ : lr_graph_;
    auto w = t.mutable_values();
    auto g = t.grad();
    auto& s = slots_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      s.m[k] = b1_ * s.m[k] + (1.0 - b1_) * g[k];
      s.v[k] = b2_ * s.v[k] + (1.0 - b2_) * g[k] * g[k];
      w[k] -= lr * (s.m[k] / c1) / (std::sqrt(s.v[k] / c2) + eps_);
    }
  }
}

// ---------------------------------------------------------------------------
// Training loop

std::string train_log_csv(const TrainLog& log) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,ce_loss,align_loss,train_acc,dev_acc,dev_fkg,dev_clk\n";
  auto cell = [&](double v) {
    if (std::isnan(v))
      out << "nan";
    else
      out << v;
  };
  for (const auto& e : log) {
    out << e.epoch << ',';
    cell(e.ce_loss);
    out << ',';
    cell(e.align_loss);
    out << ',';
    cell(e.train_acc);
    out << ',';
    cell(e.dev_acc);
    out << ',';
    cell(e.dev_fkg);
    out << ',';
    cell(e.dev_clk);
    out << '\n';
  }
  return out.str();
}

namespace {

constexpr std::uint64_t kShuffleTag = 0x73687566ULL;
constexpr std::uint64_t kDropoutTag = 0x64726f70ULL;

void run_epochs(const TrainConfig& config, std::span<const synth::McqInstance> train_split,
                std::span<const synth::McqInstance> dev_split, TrainState& st, const TrainHooks& hooks) {
  const double lambda = config.effective_lambda();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const std::size_t n = train_split.size();
  for (std::size_t epoch = st.epochs_done + 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(config.seed, {kShuffleTag, epoch}));
    shuffle_rng.shuffle(order);

    double ce_sum = 0.0, align_sum = 0.0;
    std::size_t correct = 0;
    std::vector<const synth::McqInstance*> batch;
    for (std::size_t start = 0, b = 0; start < n; start += config.batch_size, ++b) {
      batch.clear();
      for (std::size_t i = start; i < std::min(n, start + config.batch_size); ++i)
        batch.push_back(&train_split[order[i]]);
      Rng drop_rng(derive_seed(config.seed, {kDropoutTag, epoch, b}));
      st.params.zero_grad();
      ad::Tape tape;
      LossParts parts;
      {
        ad::Recording rec(tape);
        parts = lkda_loss(st.params, batch, lambda, config.jsd_lambda, config.stop_gradient,
                          st.params.config.dropout > 0.0 ? &drop_rng : nullptr);
      }
      const double total = parts.total.item();
      if (!std::isfinite(total))
        throw DivergenceError("non-finite loss " + std::to_string(total) + " at epoch " +
                                  std::to_string(epoch) + ", batch " + std::to_string(b),
                              epoch, b);
      tape.backward(parts.total);
      clip_grad_norm(st.params, config.grad_clip_norm);
      st.optimizer.step(st.params);

      const std::size_t c = parts.full_scores.cols();
      auto sv = parts.full_scores.values();
      for (std::size_t r = 0; r < batch.size(); ++r) {
        const auto d = model::ChoiceDistribution::from_scores(sv.subspan(r * c, c));
        correct += d.predicted_index == batch[r]->gold_index;
      }
      ce_sum += parts.ce * static_cast<double>(batch.size());
      align_sum += parts.align * static_cast<double>(batch.size());
    }

    EpochLog e;
    e.epoch = epoch;
    e.ce_loss = n ? ce_sum / static_cast<double>(n) : 0.0;
    e.align_loss = n ? align_sum / static_cast<double>(n) : 0.0;
    e.train_acc = n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
    e.dev_acc = e.dev_fkg = e.dev_clk = nan;
    const bool eval_now = epoch % config.eval_every == 0 || epoch == config.epochs;
    if (eval_now && !dev_split.empty()) {
      const auto records = metrics::evaluate(st.params, dev_split, config.threads);
      const auto report = metrics::make_report(records, config.jsd_lambda);
      e.dev_acc = report.accuracy_full;
      e.dev_fkg = report.f_kg;
      e.dev_clk = report.c_lk;
      if (e.dev_acc >= st.best_dev_acc) {
        st.best_dev_acc = e.dev_acc;
        st.best_epoch = epoch;
        st.best = st.params.clone();
      }
    } else if (dev_split.empty()) {
      st.best = st.params.clone();
      st.best_epoch = epoch;
    }
    st.log.push_back(e);
    st.epochs_done = epoch;
    if (hooks.on_epoch && !hooks.on_epoch(st)) break;
  }
}

TrainResult finish(TrainState st) {
  TrainResult r;
  r.best = st.best.clone();
  r.best_epoch = st.best_epoch;
  r.log = st.log;
  r.state = std::move(st);
  return r;
}

}  // namespace

TrainResult train(const TrainConfig& config, std::span<const synth::McqInstance> train_split,
                  std::span<const synth::McqInstance> dev_split, const model::FusionModelParams& params,
                  const TrainHooks& hooks) {
  config.validate();
  for (const auto& inst : train_split) model::check_instance(params.config, inst);
  for (const auto& inst : dev_split) model::check_instance(params.config, inst);
  TrainState st;
  st.params = params;
  st.optimizer = Adam(params, config);
  st.best = params.clone();
  run_epochs(config, train_split, dev_split, st, hooks);
  return finish(std::move(st));
}

TrainResult resume(const TrainConfig& config, std::span<const synth::McqInstance> train_split,
                   std::span<const synth::McqInstance> dev_split, TrainState state,
                   const TrainHooks& hooks) {
  config.validate();
  if (state.optimizer.slots().size() != state.params.named().size())
    throw ContractError("optimizer state does not match parameters");
  // Learning rates and moment coefficients come from the config; moments and
  // step count from the state.
  Adam fresh(state.params, config);
  fresh.slots() = std::move(state.optimizer.slots());
  fresh.set_steps(state.optimizer.steps());
  state.optimizer = std::move(fresh);
  run_epochs(config, train_split, dev_split, state, hooks);
  return finish(std::move(state));
}

}  // namespace lkda::train
