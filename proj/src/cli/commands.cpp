// Copyright 2026 The lkda Authors
// SPDX-License-Identifier: Apache-2.0

#include "lkda/cli/commands.hpp"

#include <CLI11.hpp>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "lkda/cli/manifest.hpp"
#include "lkda/cli/svg.hpp"
#include "lkda/errors.hpp"
#include "lkda/explain.hpp"
#include "lkda/metrics.hpp"
#include "lkda/synth.hpp"
#include "lkda/training.hpp"

namespace lkda::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

fs::path require_out(const GlobalOptions& g, const char* command) {
  if (!g.out) throw ConfigError(std::string(command) + " needs --out");
  return *g.out;
}

ordered_json config_json(const RunConfig& c) {
  ordered_json j = ordered_json::object();
  std::istringstream in(format_config(c));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    j[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return j;
}

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(digits) << v;
  return o.str();
}

model::ModelConfig model_config_for(const RunConfig& rc, const synth::GenConfig& corpus) {
  model::ModelConfig m = rc.model;
  m.vocab_size = corpus.vocab_size;
  m.n_relations = corpus.relation_count;
  m.d_node = corpus.d_node;
  m.validate();
  return m;
}

void check_fits(const model::ModelConfig& m, const synth::GenConfig& corpus, const fs::path& ck) {
  if (m.vocab_size != corpus.vocab_size || m.n_relations != corpus.relation_count ||
      m.d_node != corpus.d_node)
    throw LoadError("checkpoint " + ck.string() + " (vocab " + std::to_string(m.vocab_size) + ", relations " +
                    std::to_string(m.n_relations) + ", d_node " + std::to_string(m.d_node) +
                    ") does not fit the corpus (vocab " + std::to_string(corpus.vocab_size) + ", relations " +
                    std::to_string(corpus.relation_count) + ", d_node " + std::to_string(corpus.d_node) + ")");
}

struct TimedManifest {
  RunManifest m;
  explicit TimedManifest(std::string command) {
    m.command = std::move(command);
    m.started = timestamp_now();
  }
  void write(const fs::path& dir) {
    m.finished = timestamp_now();
    write_manifest(dir, m);
  }
};

}  // namespace

RunConfig resolve_config(const GlobalOptions& g) {
  RunConfig rc = g.config ? load_config(*g.config) : RunConfig{};
  if (g.seed) {
    rc.gen.seed = *g.seed;
    rc.train.seed = *g.seed;
  }
  rc.train.threads = g.threads;
  rc.validate();
  return rc;
}

// ---------------------------------------------------------------------------

void cmd_gen(const GlobalOptions& g, std::ostream& out) {
  const RunConfig rc = resolve_config(g);
  const fs::path dir = require_out(g, "gen");
  TimedManifest tm("gen");
  const synth::Corpus corpus = synth::generate_corpus(rc.gen);
  synth::save_corpus(dir, corpus);
  tm.m.config = config_json(rc);
  tm.m.seed = rc.gen.seed;
  tm.m.corpus_hash = corpus_hash(dir);
  tm.m.outputs = {"train.jsonl", "dev.jsonl", "test.jsonl"};
  tm.m.results = {{"n_train", corpus.train.size()}, {"n_dev", corpus.dev.size()}, {"n_test", corpus.test.size()}};
  tm.write(dir);
  out << "corpus " << tm.m.corpus_hash << ": " << corpus.train.size() << " train, " << corpus.dev.size()
      << " dev, " << corpus.test.size() << " test -> " << dir.string() << "\n";
}

void cmd_train(const GlobalOptions& g, const TrainArgs& args, std::ostream& out) {
  RunConfig rc = resolve_config(g);
  if (args.mode) rc.train.mode = *args.mode;
  const fs::path dir = require_out(g, "train");
  TimedManifest tm("train");
  const synth::Corpus corpus = synth::load_corpus(args.corpus);
  const model::ModelConfig mc = model_config_for(rc, corpus.config);

  train::TrainHooks hooks;
  hooks.on_epoch = [&](const train::TrainState& st) {
    if (!g.quiet) {
      const auto& e = st.log.back();
      out << "epoch " << e.epoch << "  ce " << fixed(e.ce_loss) << "  align " << fixed(e.align_loss)
          << "  train_acc " << fixed(e.train_acc) << "  dev_acc " << fixed(e.dev_acc) << "  dev_fkg "
          << fixed(e.dev_fkg) << "  dev_clk " << fixed(e.dev_clk) << "\n";
      out.flush();
    }
    return true;
  };

  train::TrainResult result;
  if (args.resume) {
    auto ck = train::load_checkpoint(*args.resume, mc);
    if (!ck.state) throw LoadError(args.resume->string() + " holds no training state");
    result = train::resume(rc.train, corpus.train, corpus.dev, std::move(*ck.state), hooks);
  } else {
    model::FusionModelParams params = args.warm_start
                                          ? train::load_checkpoint(*args.warm_start, mc).params
                                          : model::FusionModelParams::init(mc, rc.train.seed);
    result = train::train(rc.train, corpus.train, corpus.dev, params, hooks);
  }

  fs::create_directories(dir / "logs");
  train::save_checkpoint(dir / "checkpoint.json", result.best, rc.train);
  train::save_checkpoint(dir / "state.json", result.state.params, rc.train, &result.state);
  write_file_atomic(dir / "logs" / "train_log.csv", train::train_log_csv(result.log));

  const auto records = metrics::evaluate(result.best, corpus.dev, rc.train.threads);
  const auto report = metrics::make_report(records, rc.train.jsd_lambda);

  tm.m.config = config_json(rc);
  tm.m.seed = rc.train.seed;
  tm.m.corpus_hash = corpus_hash(args.corpus);
  tm.m.checkpoints = {"checkpoint.json", "state.json"};
  tm.m.outputs = {"checkpoint.json", "state.json", "logs/train_log.csv"};
  tm.m.results = {{"mode", train::to_string(rc.train.mode)},
                  {"best_epoch", result.best_epoch},
                  {"epochs_run", result.log.size()},
                  {"split", "dev"},
                  {"accuracy", report.accuracy_full},
                  {"accuracy_detached", report.accuracy_detached},
                  {"f_kg", report.f_kg},
                  {"c_lk", report.c_lk},
                  {"n", report.n}};
  if (args.resume) tm.m.results["resumed_from"] = args.resume->string();
  if (args.warm_start) tm.m.results["warm_start"] = args.warm_start->string();
  tm.write(dir);
  out << "final dev accuracy " << fixed(report.accuracy_full) << "  f_kg " << fixed(report.f_kg) << "  c_lk "
      << fixed(report.c_lk) << "  (best epoch " << result.best_epoch << ")\n";
}

void cmd_eval(const GlobalOptions& g, const EvalArgs& args, std::ostream& out) {
  if (!fs::exists(args.checkpoint)) throw LoadError("checkpoint " + args.checkpoint.string() + " not found");
  TimedManifest tm("eval");
  const auto ck = train::load_checkpoint(args.checkpoint);
  const auto split = synth::parse_split(args.split);
  const auto file = synth::load_split(synth::split_path(args.corpus, split));
  check_fits(ck.params.config, file.config, args.checkpoint);
  const auto records = metrics::evaluate(ck.params, file.instances, g.threads);
  const double lambda = ck.train_config ? ck.train_config->jsd_lambda : 0.5;
  const auto report = metrics::make_report(records, lambda);
  const std::string json = report.to_json();
  out << json;
  if (!g.out) return;

  const fs::path dir = *g.out;
  std::ostringstream pred;
  pred << "index,gold,full_pred,detached_pred";
  const std::size_t c = records.empty() ? 0 : records.front().full.probabilities.size();
  for (std::size_t i = 0; i < c; ++i) pred << ",full_p" << i;
  for (std::size_t i = 0; i < c; ++i) pred << ",detached_p" << i;
  pred << "\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    pred << i << ',' << r.gold_index << ',' << r.full.predicted_index << ',' << r.detached.predicted_index;
    for (double p : r.full.probabilities) pred << ',' << fmt(p);
    for (double p : r.detached.probabilities) pred << ',' << fmt(p);
    pred << "\n";
  }
  write_file_atomic(dir / "metrics.json", json);
  write_file_atomic(dir / "logs" / "predictions.csv", pred.str());
  tm.m.config = ordered_json::object();
  if (ck.train_config) {
    tm.m.config["train.mode"] = std::string(train::to_string(ck.train_config->mode));
    tm.m.seed = ck.train_config->seed;
  }
  tm.m.config["split"] = args.split;
  tm.m.corpus_hash = corpus_hash(args.corpus);
  tm.m.checkpoints = {fs::absolute(args.checkpoint).string()};
  tm.m.outputs = {"metrics.json", "logs/predictions.csv"};
  tm.m.results = {{"mode", ck.train_config ? std::string(train::to_string(ck.train_config->mode)) : "unknown"},
                  {"split", args.split},
                  {"accuracy", report.accuracy_full},
                  {"accuracy_detached", report.accuracy_detached},
                  {"f_kg", report.f_kg},
                  {"c_lk", report.c_lk},
                  {"n", report.n}};
  tm.write(dir);
}

void cmd_sweep(const GlobalOptions& g, const SweepArgs& args, std::ostream& out) {
  const RunConfig rc = resolve_config(g);
  const fs::path dir = require_out(g, "sweep");
  TimedManifest tm("sweep");
  const std::string split_name = args.split.value_or(rc.sweep.split);
  const auto split = synth::parse_split(split_name);
  std::vector<std::uint64_t> seeds = args.seeds.empty() ? rc.sweep.seeds : args.seeds;
  if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
  if (!fs::exists(args.baseline)) throw LoadError("checkpoint " + args.baseline.string() + " not found");
  if (!fs::exists(args.lkda)) throw LoadError("checkpoint " + args.lkda.string() + " not found");
  const auto base = train::load_checkpoint(args.baseline);
  const auto lkda = train::load_checkpoint(args.lkda);
  const auto file = synth::load_split(synth::split_path(args.corpus, split));
  check_fits(base.params.config, file.config, args.baseline);
  check_fits(lkda.params.config, file.config, args.lkda);
  const auto& inst = file.instances;

  const std::string base_id = "baseline-" + file_hash(args.baseline).substr(0, 8);
  const std::string lkda_id = "lkda-" + file_hash(args.lkda).substr(0, 8);
  const std::string cid = corpus_hash(args.corpus);
  const auto& grid = rc.sweep.grid;

  auto run = [&](const model::FusionModelParams& p, explain::Policy policy, std::uint64_t seed,
                 const std::string& id) {
    explain::SweepOptions o;
    o.seed = seed;
    o.threads = g.threads;
    o.corpus_id = cid;
    o.model_id = id;
    return explain::sweep(p, inst, policy, grid, o);
  };

  fs::create_directories(dir / "logs");
  fs::create_directories(dir / "plots");
  std::vector<explain::FidelitySparsityCurve> all;
  std::vector<std::string> outputs;
  // Original and top curves do not depend on the seed.
  const auto original = run(base.params, explain::Policy::original, 0, base_id);
  const auto top = run(lkda.params, explain::Policy::top, 0, lkda_id);
  std::vector<explain::FidelitySparsityCurve> originals, randoms, tops;
  for (std::uint64_t seed : seeds) {
    auto o = original, t = top;
    o.seed = t.seed = seed;
    auto r = run(lkda.params, explain::Policy::random, seed, lkda_id);
    std::vector<explain::FidelitySparsityCurve> per{o, r, t};
    const std::string name = "logs/curve_seed" + std::to_string(seed) + ".csv";
    write_file_atomic(dir / name, explain::curve_csv(per));
    outputs.push_back(name);
    originals.push_back(o);
    randoms.push_back(r);
    tops.push_back(t);
    all.insert(all.end(), per.begin(), per.end());
  }
  write_file_atomic(dir / "logs/curves.csv", explain::curve_csv(all));
  std::vector<explain::FidelitySparsityCurve> mean{explain::average_curves(originals),
                                                   explain::average_curves(randoms),
                                                   explain::average_curves(tops)};
  for (auto& m : mean) m.seed = 0;
  write_file_atomic(dir / "logs/curve_mean.csv", explain::curve_csv(mean));

  std::vector<Series> series;
  for (const auto& m : mean) {
    Series s{std::string(explain::to_string(m.policy)), {}};
    for (const auto& p : m.points) s.points.emplace_back(p.sparsity, p.accuracy);
    series.push_back(std::move(s));
  }
  PlotSpec spec;
  spec.title = "Fidelity vs sparsity (" + split_name + ", " + std::to_string(seeds.size()) + " seeds)";
  spec.x_label = "sparsity";
  spec.y_label = "accuracy";
  write_file_atomic(dir / "plots/fidelity_sparsity.svg", render_line_plot(spec, series));

  // Planted-path recovery at k = |path| on the gold choice.
  auto recovery = [&](const model::FusionModelParams& p) {
    const auto rankings = explain::attention_importance(p, inst, g.threads);
    double model_sum = 0.0, random_sum = 0.0, var_sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < inst.size(); ++i) {
      const auto& path = inst[i].planted_path[inst[i].gold_index];
      if (path.empty()) continue;
      const auto score = explain::recovery_score(rankings[i][inst[i].gold_index], path, path.size());
      const auto rb = explain::random_recovery(inst[i].subgraphs[inst[i].gold_index].num_nodes - 1,
                                               path.size(), path.size());
      model_sum += *score;
      random_sum += rb.mean;
      var_sum += rb.variance;
      ++n;
    }
    ordered_json j;
    const double dn = n ? static_cast<double>(n) : 1.0;
    const double sigma = std::sqrt(var_sum) / dn;
    j["instances"] = n;
    j["mean"] = model_sum / dn;
    j["random_mean"] = random_sum / dn;
    j["random_sigma"] = sigma;
    j["z"] = sigma > 0 ? (model_sum - random_sum) / dn / sigma : 0.0;
    return j;
  };

  ordered_json summary;
  summary["split"] = split_name;
  summary["seeds"] = seeds;
  summary["grid"] = grid;
  for (const auto& m : mean) {
    const std::string name(explain::to_string(m.policy));
    summary["auc_drop"][name] = explain::auc_drop(m);
    summary["accuracy_at_full_sparsity"][name] = m.points.back().accuracy;
    summary["accuracy_unmasked"][name] = m.points.front().accuracy;
  }
  summary["recovery"]["lkda"] = recovery(lkda.params);
  summary["recovery"]["baseline"] = recovery(base.params);
  write_file_atomic(dir / "logs/summary.json", summary.dump(2) + "\n");

  outputs.insert(outputs.end(), {"logs/curves.csv", "logs/curve_mean.csv", "logs/summary.json",
                                 "plots/fidelity_sparsity.svg"});
  tm.m.config = config_json(rc);
  tm.m.seed = seeds.front();
  tm.m.corpus_hash = cid;
  tm.m.checkpoints = {fs::absolute(args.baseline).string(), fs::absolute(args.lkda).string()};
  tm.m.outputs = outputs;
  tm.m.results = summary;
  tm.write(dir);

  out << "policy     auc_drop  acc@0   acc@1\n";
  for (const auto& m : mean)
    out << std::left << std::setw(10) << explain::to_string(m.policy) << " " << fixed(explain::auc_drop(m))
        << "    " << fixed(m.points.front().accuracy, 3) << "   " << fixed(m.points.back().accuracy, 3) << "\n";
  out << "recovery@|path| lkda " << fixed(summary["recovery"]["lkda"]["mean"].get<double>()) << "  baseline "
      << fixed(summary["recovery"]["baseline"]["mean"].get<double>()) << "  random "
      << fixed(summary["recovery"]["lkda"]["random_mean"].get<double>()) << "\n";
}

void cmd_report(const GlobalOptions& g, const std::vector<fs::path>& runs, std::ostream& out,
                std::ostream& err) {
  if (runs.empty()) throw ConfigError("report needs at least one run directory");
  struct Row {
    std::string run, command, mode, split;
    double acc, fkg, clk;
  };
  std::vector<Row> rows;
  for (const auto& dir : runs) {
    RunManifest m;
    try {
      m = read_manifest(dir);
    } catch (const LoadError& e) {
      err << "warning: skipping " << dir.string() << ": " << e.what() << "\n";
      continue;
    }
    if (m.command != "train" && m.command != "eval") {
      err << "warning: skipping " << dir.string() << ": '" << m.command << "' runs carry no metrics\n";
      continue;
    }
    const auto& r = m.results;
    rows.push_back({dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string(),
                    m.command, r.value("mode", std::string("unknown")), r.value("split", std::string("dev")),
                    r.at("accuracy").get<double>(), r.at("f_kg").get<double>(), r.at("c_lk").get<double>()});
  }
  if (rows.empty()) throw LoadError("no run directory had a usable manifest");

  const Row* base = nullptr;
  for (const auto& r : rows)
    if (r.mode == "baseline_ce") {
      base = &r;
      break;
    }
  std::ostringstream csv;
  csv << "run,command,mode,split,accuracy,f_kg,c_lk,delta_accuracy,delta_f_kg,delta_c_lk\n";
  out << std::left << std::setw(24) << "run" << std::setw(13) << "mode" << std::setw(6) << "split" << std::right
      << std::setw(10) << "accuracy" << std::setw(9) << "f_kg" << std::setw(9) << "c_lk" << std::setw(10)
      << "d_acc" << std::setw(9) << "d_fkg" << std::setw(9) << "d_clk" << "\n";
  auto signed_fixed = [](double v) { return (v >= 0 ? "+" : "") + fixed(v); };
  for (const auto& r : rows) {
    csv << r.run << ',' << r.command << ',' << r.mode << ',' << r.split << ',' << fmt(r.acc) << ','
        << fmt(r.fkg) << ',' << fmt(r.clk);
    out << std::left << std::setw(24) << r.run << std::setw(13) << r.mode << std::setw(6) << r.split
        << std::right << std::setw(10) << fixed(r.acc) << std::setw(9) << fixed(r.fkg) << std::setw(9)
        << fixed(r.clk);
    if (base) {
      const double da = r.acc - base->acc, df = r.fkg - base->fkg, dc = r.clk - base->clk;
      csv << ',' << fmt(da) << ',' << fmt(df) << ',' << fmt(dc) << "\n";
      out << std::setw(10) << signed_fixed(da) << std::setw(9) << signed_fixed(df) << std::setw(9)
          << signed_fixed(dc) << "\n";
    } else {
      csv << ",,,\n";
      out << "\n";
    }
  }
  if (g.out) write_file_atomic(*g.out / "report.csv", csv.str());
}

// ---------------------------------------------------------------------------

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fused text and knowledge-graph QA: training, fidelity metrics and explanation sweeps", "lkda"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  std::string config_path, out_path;
  std::uint64_t seed = 0;
  auto* config_opt = app.add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "override gen.seed and train.seed");
  auto* out_opt = app.add_option("--out", out_path, "output / run directory");
  app.add_option("--threads", g.threads, "worker threads for evaluation and sweeps")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", g.quiet, "no per-epoch progress");

  auto* gen = app.add_subcommand("gen", "generate a synthetic corpus");

  TrainArgs targs;
  std::string mode, resume, warm;
  auto* trn = app.add_subcommand("train", "train a model on a corpus");
  trn->add_option("--corpus", targs.corpus, "corpus directory")->required();
  trn->add_option("--mode", mode, "baseline_ce or lkda")->check(CLI::IsMember({"baseline_ce", "lkda"}));
  trn->add_option("--resume", resume, "continue from a state.json");
  trn->add_option("--warm-start", warm, "initialise from a checkpoint");

  EvalArgs eargs;
  auto* evl = app.add_subcommand("eval", "full and detached metrics of a checkpoint");
  evl->add_option("--checkpoint", eargs.checkpoint, "checkpoint file")->required();
  evl->add_option("--corpus", eargs.corpus, "corpus directory")->required();
  evl->add_option("--split", eargs.split, "train, dev or test")->check(CLI::IsMember({"train", "dev", "test"}));

  SweepArgs sargs;
  std::string sweep_split;
  auto* swp = app.add_subcommand("sweep", "fidelity-sparsity curves for a baseline and an LKDA model");
  swp->add_option("--baseline", sargs.baseline, "baseline_ce checkpoint")->required();
  swp->add_option("--lkda", sargs.lkda, "lkda checkpoint")->required();
  swp->add_option("--corpus", sargs.corpus, "corpus directory")->required();
  swp->add_option("--split", sweep_split, "split to sweep")->check(CLI::IsMember({"train", "dev", "test"}));
  swp->add_option("--seeds", sargs.seeds, "random-policy seeds")->delimiter(',');

  std::vector<std::string> run_dirs;
  auto* rep = app.add_subcommand("report", "tabulate train/eval runs");
  rep->add_option("runs", run_dirs, "run directories");

  try {
    std::vector<std::string> args;
    for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::Error& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  if (*config_opt) g.config = config_path;
  if (*seed_opt) g.seed = seed;
  if (*out_opt) g.out = out_path;

  try {
    if (*gen) {
      cmd_gen(g, out);
    } else if (*trn) {
      if (!mode.empty()) targs.mode = train::parse_mode(mode);
      if (!resume.empty()) targs.resume = resume;
      if (!warm.empty()) targs.warm_start = warm;
      cmd_train(g, targs, out);
    } else if (*evl) {
      cmd_eval(g, eargs, out);
    } else if (*swp) {
      if (!sweep_split.empty()) sargs.split = sweep_split;
      cmd_sweep(g, sargs, out);
    } else if (*rep) {
      std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
      cmd_report(g, dirs, out, err);
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DivergenceError& e) {
    err << "error: training diverged: " << e.what() << "\n";
    return kDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}

}  // namespace lkda::cli
