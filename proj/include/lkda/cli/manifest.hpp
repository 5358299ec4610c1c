// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace lkda::cli {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);
/// Hash of a corpus directory: FNV-1a over train, dev and test files in order.
std::string corpus_hash(const std::filesystem::path& dir);
std::string file_hash(const std::filesystem::path& path);

struct RunManifest {
  std::string command;
  nlohmann::ordered_json config;
  std::uint64_t seed = 0;
  std::string corpus_hash;
  std::vector<std::string> checkpoints;  // relative to the run directory or absolute
  std::string tool_version = std::string(kToolVersion);
  std::string started;
  std::string finished;
  std::vector<std::string> outputs;  // relative to the run directory
  nlohmann::ordered_json results = nlohmann::ordered_json::object();
};

/// UTC ISO-8601; honours SOURCE_DATE_EPOCH.
std::string timestamp_now();

/// Writes dir/manifest.json through a temporary file and rename. Every output
/// must already exist; the inventory records each file's hash.
void write_manifest(const std::filesystem::path& dir, const RunManifest& manifest);
RunManifest read_manifest(const std::filesystem::path& dir);

/// Writes `content` to path via a temporary sibling and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

}  // namespace lkda::cli
