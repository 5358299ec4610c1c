// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lkda/model.hpp"
#include "lkda/tensor.hpp"

namespace lkda::train {

enum class Mode : std::uint8_t { baseline_ce, lkda };
std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view name);

/// Which branch of the alignment term is cut from the gradient.
enum class StopGradient : std::uint8_t { none, full, detached };
std::string_view to_string(StopGradient s);
StopGradient parse_stop_gradient(std::string_view name);

struct TrainConfig {
  Mode mode = Mode::lkda;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double lr_text = 3e-3;
  double lr_graph = 3e-3;
  double lambda_align = 1.0;
  double jsd_lambda = 0.5;
  double grad_clip_norm = 1.0;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  StopGradient stop_gradient = StopGradient::none;
  std::size_t threads = 1;

  void validate() const;
  /// lambda_align with baseline_ce forced to 0.
  double effective_lambda() const { return mode == Mode::lkda ? lambda_align : 0.0; }
  bool operator==(const TrainConfig&) const = default;
};

/// Mean cross-entropy of rows x choices scores against gold indices.
ad::Tensor ce_loss(const ad::Tensor& scores, std::span<const std::size_t> gold);

/// Mean over rows of the weighted Jensen-Shannon divergence between the
/// row-softmaxes of two score matrices, computed in log space.
ad::Tensor jsd_loss(const ad::Tensor& scores_p, const ad::Tensor& scores_q, double lambda = 0.5);

struct LossParts {
  ad::Tensor total;
  double ce = 0.0;
  double align = 0.0;
  ad::Tensor full_scores;
};

/// ce(full) + lambda_align * jsd(full, detached). With lambda_align == 0 the
/// detached pass is skipped and total is the cross-entropy tensor itself.
LossParts lkda_loss(const model::FusionModelParams& params,
                    std::span<const synth::McqInstance* const> batch, double lambda_align,
                    double jsd_lambda = 0.5, StopGradient stop = StopGradient::none,
                    Rng* dropout_rng = nullptr);

/// Rescales all parameter grads so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(const model::FusionModelParams& params, double max_norm);

class Adam {
 public:
  struct Slot {
    std::vector<double> m;
    std::vector<double> v;
  };

  Adam() = default;
  Adam(const model::FusionModelParams& params, const TrainConfig& config);

  void step(const model::FusionModelParams& params);
  std::uint64_t steps() const { return t_; }

  std::vector<Slot>& slots() { return slots_; }
  const std::vector<Slot>& slots() const { return slots_; }
  void set_steps(std::uint64_t t) { t_ = t; }

 private:
  double lr_text_ = 0.0, lr_graph_ = 0.0, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
  std::uint64_t t_ = 0;
  std::vector<Slot> slots_;  // parallel to params.named()
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double ce_loss = 0.0;
  double align_loss = 0.0;
  double train_acc = 0.0;
  double dev_acc = 0.0;  // NaN when the epoch was not evaluated
  double dev_fkg = 0.0;
  double dev_clk = 0.0;
  bool operator==(const EpochLog&) const = default;
};

using TrainLog = std::vector<EpochLog>;

/// Columns: epoch, ce_loss, align_loss, train_acc, dev_acc, dev_fkg, dev_clk.
std::string train_log_csv(const TrainLog& log);

/// Everything needed to continue a run exactly where it stopped.
struct TrainState {
  model::FusionModelParams params;
  Adam optimizer;
  std::size_t epochs_done = 0;
  TrainLog log;
  model::FusionModelParams best;
  double best_dev_acc = -1.0;
  std::size_t best_epoch = 0;
};

struct TrainResult {
  model::FusionModelParams best;  // best dev accuracy, later epoch on ties
  std::size_t best_epoch = 0;
  TrainLog log;
  TrainState state;
};

struct TrainHooks {
  /// Called after each completed epoch; returning false stops training.
  std::function<bool(const TrainState&)> on_epoch;
};

/// Trains `params` in place. Throws DivergenceError on a non-finite loss.
TrainResult train(const TrainConfig& config, std::span<const synth::McqInstance> train_split,
                  std::span<const synth::McqInstance> dev_split, const model::FusionModelParams& params,
                  const TrainHooks& hooks = {});

/// Continues from a saved state up to config.epochs.
TrainResult resume(const TrainConfig& config, std::span<const synth::McqInstance> train_split,
                   std::span<const synth::McqInstance> dev_split, TrainState state,
                   const TrainHooks& hooks = {});

// ---------------------------------------------------------------------------
// Checkpoints: JSON document
//   {"format":"lkda-checkpoint","version":1,"model_config":{..},
//    "params":{name:{"shape":[r,c],"values":[..]}}, "train_state":{..}?}

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  model::FusionModelParams params;
  std::optional<TrainConfig> train_config;
  std::optional<TrainState> state;
};

void save_checkpoint(const std::filesystem::path& path, const model::FusionModelParams& params,
                     const std::optional<TrainConfig>& config = std::nullopt,
                     const TrainState* state = nullptr);

/// Throws LoadError or VersionError; nothing is returned on failure.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Also rejects a checkpoint whose model config differs from `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const model::ModelConfig& expected);

}  // namespace lkda::train
