// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <json.hpp>

#include "lkda/synth.hpp"

namespace lkda::synth {

// Field names are part of the on-disk formats.
void to_json(nlohmann::json& j, const GenConfig& c);
/// Missing fields keep their defaults; unknown fields are ignored.
void from_json(const nlohmann::json& j, GenConfig& c);

void to_json(nlohmann::json& j, const McqInstance& inst);
void from_json(const nlohmann::json& j, McqInstance& inst);

}  // namespace lkda::synth

#include "lkda/model.hpp"
#include "lkda/training.hpp"

namespace lkda::model {
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
}  // namespace lkda::model

namespace lkda::train {
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
}  // namespace lkda::train
