// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <chrono>
#include <filesystem>
#include <json.hpp>
#include <map>
#include <sstream>

#include "lkda/cli/commands.hpp"
#include "lkda/cli/config.hpp"
#include "lkda/cli/manifest.hpp"
#include "lkda/errors.hpp"

namespace lkda::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result lkda(std::vector<std::string> args) {
  std::vector<const char*> argv{"lkda"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::istringstream in(read_file(p));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

constexpr const char* kSmoke = R"(# smoke profile
gen.n_train = 96
gen.n_dev = 32
gen.n_test = 40
gen.min_nodes = 6
gen.max_nodes = 12
model.d_model = 8
model.d_graph = 8
model.gnn_layers = 2
train.epochs = 2
train.batch_size = 16
train.seed = 3
sweep.grid = 0, 0.2, 0.5, 1
sweep.seeds = 1, 2
)";

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ::setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
    root_ = new fs::path(fs::temp_directory_path() / ("lkda_cli_" + std::to_string(::getpid())));
    fs::remove_all(*root_);
    fs::create_directories(*root_);
    write_file_atomic(*root_ / "smoke.cfg", kSmoke);
    ASSERT_EQ(lkda({"gen", "--config", cfg(), "--out", path("corpus")}).code, 0);
  }
  static void TearDownTestSuite() {
    fs::remove_all(*root_);
    delete root_;
  }
  static std::string path(const std::string& rel) { return (*root_ / rel).string(); }
  static std::string cfg() { return path("smoke.cfg"); }
  // The smoke profile with the keys set in `extra` replaced.
  static std::string with_cfg(const std::string& name, const std::string& extra) {
    std::istringstream base(kSmoke), over(extra);
    std::string text, line;
    std::vector<std::string> keys;
    while (std::getline(over, line)) keys.push_back(line.substr(0, line.find('=')));
    while (std::getline(base, line)) {
      bool replaced = false;
      for (const auto& k : keys) replaced |= line.rfind(k, 0) == 0;
      if (!replaced) text += line + "\n";
    }
    write_file_atomic(*root_ / name, text + extra);
    return path(name);
  }
  static fs::path* root_;
};
fs::path* CliTest::root_ = nullptr;

TEST(Config, ParsesDocumentedGrammar) {
  const auto c = parse_config("# c\n\ngen.n_train = 10\ntrain.mode=baseline_ce  # trailing\nsweep.grid = 0, 0.5, 1\n");
  EXPECT_EQ(c.gen.n_train, 10u);
  EXPECT_EQ(c.train.mode, train::Mode::baseline_ce);
  EXPECT_EQ(c.sweep.grid, (std::vector<double>{0, 0.5, 1}));
  EXPECT_EQ(parse_config(format_config(c)), c);
  EXPECT_EQ(c.model.vocab_size, c.gen.vocab_size);
}

TEST(Config, RejectsUnknownDuplicateAndBadValues) {
  auto expect_key = [](const std::string& text, const std::string& key) {
    try {
      parse_config(text);
      FAIL() << "accepted: " << text;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(key), std::string::npos) << e.what();
    }
  };
  expect_key("gen.n_trian = 5\n", "gen.n_trian");
  expect_key("gen.n_train = 5\ngen.n_train = 6\n", "gen.n_train");
  expect_key("train.lr_text = fast\n", "train.lr_text");
  expect_key("model.vocab_size = 10\n", "model.vocab_size");
  try {
    parse_config("gen.seed = 1\nthis line has no equals\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST_F(CliTest, GenWritesConfiguredSplitsAndStableHash) {
  const fs::path dir = path("corpus");
  auto corpus = synth::load_corpus(dir);
  EXPECT_EQ(corpus.train.size(), 96u);
  EXPECT_EQ(corpus.dev.size(), 32u);
  EXPECT_EQ(corpus.test.size(), 40u);
  ASSERT_EQ(lkda({"gen", "--config", cfg(), "--out", path("corpus2")}).code, 0);
  const auto m1 = read_manifest(dir);
  const auto m2 = read_manifest(*root_ / "corpus2");
  EXPECT_EQ(m1.corpus_hash, m2.corpus_hash);
  EXPECT_EQ(m1.corpus_hash, corpus_hash(dir));
  EXPECT_EQ(read_file(dir / "train.jsonl"), read_file(*root_ / "corpus2" / "train.jsonl"));
  ASSERT_EQ(lkda({"gen", "--config", cfg(), "--seed", "7", "--out", path("corpus3")}).code, 0);
  EXPECT_NE(read_manifest(*root_ / "corpus3").corpus_hash, m1.corpus_hash);
}

TEST_F(CliTest, GenDefaultCounts) {
  ASSERT_EQ(lkda({"gen", "--out", path("default")}).code, 0);
  const auto c = synth::load_corpus(*root_ / "default");
  EXPECT_EQ(c.train.size(), 2000u);
  EXPECT_EQ(c.dev.size(), 400u);
  EXPECT_EQ(c.test.size(), 400u);
}

TEST_F(CliTest, BadKeyFailsWithoutOutput) {
  const auto bad = with_cfg("bad.cfg", "gen.colour = red\n");
  const auto r = lkda({"gen", "--config", bad, "--out", path("never")});
  EXPECT_EQ(r.code, kUsage);
  EXPECT_NE(r.err.find("gen.colour"), std::string::npos);
  EXPECT_FALSE(fs::exists(*root_ / "never"));
}

TEST_F(CliTest, TrainSmokeProfileIsFastAndComplete) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = lkda({"train", "--config", cfg(), "--corpus", path("corpus"), "--out", path("t1"), "--quiet"});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_LT(secs, 60.0);
  EXPECT_NE(r.out.find("final dev accuracy"), std::string::npos);
  for (auto f : {"checkpoint.json", "state.json", "manifest.json", "logs/train_log.csv"})
    EXPECT_TRUE(fs::exists(*root_ / "t1" / f)) << f;
  EXPECT_EQ(read_csv(*root_ / "t1" / "logs" / "train_log.csv").size(), 3u);
  const auto m = read_manifest(*root_ / "t1");
  EXPECT_EQ(m.command, "train");
  EXPECT_EQ(m.corpus_hash, corpus_hash(*root_ / "corpus"));
  EXPECT_EQ(m.started, "2023-11-14T22:13:20Z");

  ASSERT_EQ(lkda({"train", "--config", cfg(), "--corpus", path("corpus"), "--out", path("t2"), "--quiet"}).code, 0);
  for (auto f : {"checkpoint.json", "state.json", "logs/train_log.csv"})
    EXPECT_EQ(read_file(*root_ / "t1" / f), read_file(*root_ / "t2" / f)) << f;
}

TEST_F(CliTest, BaselineEqualsZeroLambdaLkda) {
  const auto zero = with_cfg("zero.cfg", "train.lambda_align = 0\n");
  ASSERT_EQ(lkda({"train", "--config", cfg(), "--corpus", path("corpus"), "--mode", "baseline_ce", "--out",
                  path("b0"), "--quiet"}).code, 0);
  ASSERT_EQ(lkda({"train", "--config", zero, "--corpus", path("corpus"), "--mode", "lkda", "--out", path("l0"),
                  "--quiet"}).code, 0);
  EXPECT_EQ(read_file(*root_ / "b0" / "logs" / "train_log.csv"), read_file(*root_ / "l0" / "logs" / "train_log.csv"));
}

TEST_F(CliTest, ResumeReproducesUninterruptedRun) {
  const auto three = with_cfg("three.cfg", "train.epochs = 3\n");
  const auto one = with_cfg("one.cfg", "train.epochs = 1\n");
  ASSERT_EQ(lkda({"train", "--config", three, "--corpus", path("corpus"), "--out", path("r3"), "--quiet"}).code, 0);
  ASSERT_EQ(lkda({"train", "--config", one, "--corpus", path("corpus"), "--out", path("r1"), "--quiet"}).code, 0);
  const auto r = lkda({"train", "--config", three, "--corpus", path("corpus"), "--resume",
                       path("r1/state.json"), "--out", path("r13"), "--quiet"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_file(*root_ / "r3" / "logs" / "train_log.csv"), read_file(*root_ / "r13" / "logs" / "train_log.csv"));
  EXPECT_EQ(read_file(*root_ / "r3" / "checkpoint.json"), read_file(*root_ / "r13" / "checkpoint.json"));
}

class CliTrained : public CliTest {
 protected:
  static void SetUpTestSuite() {
    CliTest::SetUpTestSuite();
    ASSERT_EQ(lkda({"train", "--config", cfg(), "--corpus", path("corpus"), "--mode", "baseline_ce", "--out",
                    path("base"), "--quiet"}).code, 0);
    ASSERT_EQ(lkda({"train", "--config", cfg(), "--corpus", path("corpus"), "--mode", "lkda", "--out",
                    path("lk"), "--quiet"}).code, 0);
  }
};

TEST_F(CliTrained, EvalIsDeterministicAndRecountable) {
  const auto a = lkda({"eval", "--checkpoint", path("lk/checkpoint.json"), "--corpus", path("corpus"), "--split",
                       "test", "--out", path("ev")});
  const auto b = lkda({"eval", "--checkpoint", path("lk/checkpoint.json"), "--corpus", path("corpus"), "--split",
                       "test"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(read_file(*root_ / "ev" / "metrics.json"), a.out);
  const auto j = json::parse(a.out);
  for (auto key : {"accuracy_full", "accuracy_detached", "f_kg"}) {
    EXPECT_GE(j.at(key).get<double>(), 0.0);
    EXPECT_LE(j.at(key).get<double>(), 1.0);
  }
  EXPECT_GE(j.at("c_lk").get<double>(), 0.0);
  EXPECT_LE(j.at("c_lk").get<double>(), std::log(2.0));
  EXPECT_EQ(j.at("N").get<std::size_t>(), 40u);

  const auto rows = read_csv(*root_ / "ev" / "logs" / "predictions.csv");
  ASSERT_EQ(rows.size(), 41u);
  double agree = 0, correct = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    agree += rows[i][2] == rows[i][3];
    correct += rows[i][1] == rows[i][2];
  }
  EXPECT_EQ(j.at("f_kg").get<double>(), agree / 40.0);
  EXPECT_EQ(j.at("accuracy_full").get<double>(), correct / 40.0);
}

TEST_F(CliTrained, MissingCheckpointIsDataError) {
  const auto r = lkda({"eval", "--checkpoint", path("nope.json"), "--corpus", path("corpus")});
  EXPECT_EQ(r.code, kData);
}

TEST_F(CliTrained, SweepOutputs) {
  const auto r = lkda({"sweep", "--config", cfg(), "--baseline", path("base/checkpoint.json"), "--lkda",
                       path("lk/checkpoint.json"), "--corpus", path("corpus"), "--out", path("sw")});
  ASSERT_EQ(r.code, 0) << r.err;
  const fs::path d = *root_ / "sw";
  const auto all = read_csv(d / "logs" / "curves.csv");
  EXPECT_EQ(all.size() - 1, 4u * 3u * 2u);
  EXPECT_EQ(all[0], (std::vector<std::string>{"policy", "sparsity", "accuracy", "seed", "model_id"}));
  EXPECT_EQ(read_csv(d / "logs" / "curve_seed1.csv").size() - 1, 12u);

  std::map<std::pair<std::string, std::string>, std::vector<double>> acc;
  for (std::size_t i = 1; i < all.size(); ++i) acc[{all[i][0], all[i][1]}].push_back(std::stod(all[i][2]));
  const auto mean = read_csv(d / "logs" / "curve_mean.csv");
  ASSERT_EQ(mean.size() - 1, 12u);
  for (std::size_t i = 1; i < mean.size(); ++i) {
    const auto& v = acc.at({mean[i][0], mean[i][1]});
    double s = 0.0;
    for (double x : v) s += x;
    EXPECT_NEAR(std::stod(mean[i][2]), s / static_cast<double>(v.size()), 1e-12);
  }

  boost::property_tree::ptree tree;
  boost::property_tree::read_xml((d / "plots" / "fidelity_sparsity.svg").string(), tree);
  std::size_t paths = 0;
  std::function<void(const boost::property_tree::ptree&)> walk = [&](const auto& node) {
    for (const auto& [name, child] : node) {
      if (name == "path") ++paths;
      walk(child);
    }
  };
  walk(tree.get_child("svg"));
  EXPECT_EQ(paths, 3u);

  const auto summary = json::parse(read_file(d / "logs" / "summary.json"));
  EXPECT_TRUE(summary.at("auc_drop").contains("top"));
  EXPECT_TRUE(summary.at("recovery").contains("lkda"));

  const auto again = lkda({"sweep", "--config", cfg(), "--baseline", path("base/checkpoint.json"), "--lkda",
                           path("lk/checkpoint.json"), "--corpus", path("corpus"), "--out", path("sw2")});
  ASSERT_EQ(again.code, 0);
  for (auto f : {"logs/curves.csv", "logs/curve_mean.csv", "logs/summary.json", "plots/fidelity_sparsity.svg"})
    EXPECT_EQ(read_file(d / f), read_file(*root_ / "sw2" / f)) << f;
}

TEST_F(CliTrained, SweepRejectsMismatchedCorpus) {
  const auto other = with_cfg("other.cfg", "gen.d_node = 16\n");
  ASSERT_EQ(lkda({"gen", "--config", other, "--out", path("corpus16")}).code, 0);
  const auto r = lkda({"sweep", "--config", cfg(), "--baseline", path("base/checkpoint.json"), "--lkda",
                       path("lk/checkpoint.json"), "--corpus", path("corpus16"), "--out", path("swbad")});
  EXPECT_EQ(r.code, kData);
}

TEST_F(CliTrained, ReportTabulatesDeltas) {
  const auto r = lkda({"report", path("base"), path("lk"), "--out", path("rep")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = read_csv(*root_ / "rep" / "report.csv");
  ASSERT_EQ(rows.size(), 3u);
  const auto& hdr = rows[0];
  auto col = [&](const std::string& name) {
    return static_cast<std::size_t>(std::find(hdr.begin(), hdr.end(), name) - hdr.begin());
  };
  const auto base_log = read_csv(*root_ / "base" / "logs" / "train_log.csv");
  EXPECT_EQ(rows[1][col("mode")], "baseline_ce");
  EXPECT_EQ(rows[2][col("mode")], "lkda");
  for (auto [m, d] : {std::pair{"f_kg", "delta_f_kg"}, {"accuracy", "delta_accuracy"}, {"c_lk", "delta_c_lk"}})
    EXPECT_NEAR(std::stod(rows[2][col(d)]), std::stod(rows[2][col(m)]) - std::stod(rows[1][col(m)]), 1e-15) << d;
}

TEST_F(CliTrained, ReportErrors) {
  EXPECT_NE(lkda({"report"}).code, kOk);
  const auto missing = lkda({"report", path("nowhere"), path("also_nowhere")});
  EXPECT_EQ(missing.code, kData);
  const auto partial = lkda({"report", path("nowhere"), path("lk")});
  EXPECT_EQ(partial.code, kOk);
  EXPECT_NE(partial.err.find("warning"), std::string::npos);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(lkda({}).code, kUsage);
  EXPECT_EQ(lkda({"frobnicate"}).code, kUsage);
  EXPECT_EQ(lkda({"train", "--corpus", path("corpus"), "--mode", "sgd"}).code, kUsage);
  EXPECT_EQ(lkda({"train", "--corpus", path("no_corpus"), "--out", path("x")}).code, kData);
  const auto wild = with_cfg("wild.cfg", "train.lr_text = 1e300\ntrain.lr_graph = 1e300\n");
  const auto r = lkda({"train", "--config", wild, "--corpus", path("corpus"), "--out", path("div"), "--quiet"});
  EXPECT_EQ(r.code, kDivergence) << r.err;
  EXPECT_NE(r.err.find("epoch"), std::string::npos);
  EXPECT_EQ(lkda({"--help"}).code, kOk);
}

}  // namespace
}  // namespace lkda::cli
