// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#include "lkda/cli/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include "lkda/errors.hpp"
#include "lkda/synth.hpp"

namespace lkda::cli {

namespace fs = std::filesystem;

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string file_hash(const fs::path& path) { return hex64(fnv1a64(read_file(path))); }

std::string corpus_hash(const fs::path& dir) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto s : {synth::Split::train, synth::Split::dev, synth::Split::test})
    h = fnv1a64(read_file(synth::split_path(dir, s)), h);
  return hex64(h);
}

std::string timestamp_now() {
  std::time_t t;
  if (const char* fixed = std::getenv("SOURCE_DATE_EPOCH"))
    t = static_cast<std::time_t>(std::strtoll(fixed, nullptr, 10));
  else
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_manifest(const fs::path& dir, const RunManifest& m) {
  nlohmann::ordered_json inventory = nlohmann::ordered_json::array();
  for (const auto& rel : m.outputs) {
    const fs::path p = dir / rel;
    if (!fs::exists(p)) throw std::runtime_error("manifest output " + p.string() + " does not exist");
    inventory.push_back({{"path", rel}, {"bytes", fs::file_size(p)}, {"fnv1a64", file_hash(p)}});
  }
  for (const auto& ck : m.checkpoints) {
    const fs::path p = fs::path(ck).is_absolute() ? fs::path(ck) : dir / ck;
    if (!fs::exists(p)) throw std::runtime_error("manifest checkpoint " + p.string() + " does not exist");
  }
  nlohmann::ordered_json j;
  j["command"] = m.command;
  j["tool_version"] = m.tool_version;
  j["seed"] = m.seed;
  j["corpus_hash"] = m.corpus_hash;
  j["checkpoints"] = m.checkpoints;
  j["started"] = m.started;
  j["finished"] = m.finished;
  j["config"] = m.config;
  j["results"] = m.results;
  j["outputs"] = std::move(inventory);
  write_file_atomic(dir / "manifest.json", j.dump(2) + "\n");
}

RunManifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  if (!fs::exists(path)) throw LoadError("no manifest in " + dir.string());
  try {
    const auto j = nlohmann::ordered_json::parse(read_file(path));
    RunManifest m;
    j.at("command").get_to(m.command);
    j.at("tool_version").get_to(m.tool_version);
    j.at("seed").get_to(m.seed);
    j.at("corpus_hash").get_to(m.corpus_hash);
    j.at("checkpoints").get_to(m.checkpoints);
    j.at("started").get_to(m.started);
    j.at("finished").get_to(m.finished);
    m.config = j.at("config");
    m.results = j.at("results");
    for (const auto& o : j.at("outputs")) m.outputs.push_back(o.at("path").get<std::string>());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("malformed manifest " + path.string() + ": " + e.what());
  }
}

}  // namespace lkda::cli
