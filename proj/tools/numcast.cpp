// numcast: command-line driver for corpus generation, adaptive pre-training,
// Pareto training, evaluation and trading simulation.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "numcast/digest.hpp"
#include "numcast/errors.hpp"
#include "numcast/pipeline.hpp"

namespace fs = std::filesystem;
using namespace numcast;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kInternal = 1, kUsage = 2, kValidation = 3, kNumeric = 4, kIo = 5 };

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed for " + path);
}

// Records one command's inputs, config and artifacts in <out>/manifest.json,
// keeping entries written by other commands.
void update_manifest(const std::string& out_dir, const std::string& command,
                     const pipeline::RunConfig& config, const std::vector<std::string>& inputs,
                     const std::vector<std::string>& artifacts) {
  const std::string path = out_dir + "/manifest.json";
  json manifest = json::object();
  if (fs::exists(path)) {
    try {
      manifest = json::parse(read_file(path));
    } catch (const json::exception&) {
      manifest = json::object();
    }
  }
  auto entry_list = [](const std::vector<std::string>& paths) {
    json list = json::array();
    for (const auto& p : paths) {
      list.push_back({{"path", p}, {"git_sha1", git_blob_sha1(read_file(p))}});
    }
    return list;
  };
  json entry;
  entry["config_hash"] = config.hash();
  entry["config"] = config.to_map();
  entry["inputs"] = entry_list(inputs);
  entry["artifacts"] = entry_list(artifacts);
  manifest["schema"] = "numcast-manifest";
  manifest["version"] = 1;
  manifest["commands"][command] = entry;
  write_text(path, manifest.dump(2) + "\n");
}

struct CommonOptions {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string corpus;
  std::string out;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "key=value config file");
    cmd->add_option("--corpus", corpus, "corpus file (overrides config)");
    cmd->add_option("--out", out, "output directory (overrides config)");
    cmd->add_option("--seed", seed, "random seed (overrides config)");
    cmd->add_option("--set", overrides, "extra key=value override, repeatable");
  }

  pipeline::RunConfig resolve() const {
    pipeline::RunConfig c;
    if (!config_file.empty()) pipeline::apply_config_file(c, config_file);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!corpus.empty()) c.corpus = corpus;
    if (!out.empty()) c.out = out;
    if (seed) c.seed = *seed;
    c.validate();
    return c;
  }
};

std::vector<data::CallRecord> load_corpus_checked(const pipeline::RunConfig& c) {
  if (c.corpus.empty()) throw ConfigError("no corpus given (--corpus or corpus=)");
  auto loaded = data::load_corpus(c.corpus);
  for (const auto& r : loaded.rejected) {
    std::cerr << "warning: rejected record " << r.id << " (line " << r.line << "): " << r.reason
              << "\n";
  }
  return std::move(loaded.records);
}

std::string model_path(const std::string& dir, std::size_t horizon) {
  return dir + "/model_h" + std::to_string(horizon) + ".ckpt";
}

const std::vector<data::CallRecord>& pick_split(const data::Split& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "valid") return s.valid;
  if (name == "test") return s.test;
  throw ConfigError("--split must be train, valid or test");
}

// ---------------------------------------------------------------------------

int cmd_gen_data(std::uint64_t seed, std::size_t calls, const std::string& out,
                 const data::EffectSizes& effects) {
  data::SyntheticConfig cfg;
  cfg.seed = seed;
  cfg.calls = calls;
  cfg.effects = effects;
  const auto corpus = data::generate_synthetic(cfg);
  data::save_corpus(out, corpus);
  pipeline::write_summary(std::cout, pipeline::summarize_corpus(corpus));
  return kOk;
}

int cmd_pretrain(const pipeline::RunConfig& c, const std::string& task) {
  const auto split = data::split_chronological(load_corpus_checked(c));
  ensure_dir(c.out);
  std::ostringstream report;
  std::vector<std::string> inputs{c.corpus};
  std::string artifact;
  if (task == "ncc") {
    const auto stage = pipeline::pretrain_ncc(c, split.train);
    artifact = c.out + "/pretrain_ncc.ckpt";
    save_checkpoint_file(artifact, stage.checkpoint);
    report << "task=ncc\n";
    report << "instances=" << stage.after.instances << "\n";
    report << "LRAP_untrained=" << stage.before.lrap << "\n";
    report << "LRAP=" << stage.after.lrap << "\n";
    auto auc = [](const std::optional<double>& v) { return v ? std::to_string(*v) : "absent"; };
    report << "ROC_AUC_untrained=" << auc(stage.before.roc_auc) << "\n";
    report << "ROC_AUC=" << auc(stage.after.roc_auc) << "\n";
  } else {
    const std::string ncc_path = c.out + "/pretrain_ncc.ckpt";
    if (!fs::exists(ncc_path)) {
      throw IoError("missing category-stage checkpoint " + ncc_path +
                    "; run `pretrain --task ncc` first");
    }
    const auto stage = pipeline::pretrain_mc(c, split.train, load_checkpoint_file(ncc_path));
    inputs.push_back(ncc_path);
    artifact = c.out + "/pretrain_mc.ckpt";
    save_checkpoint_file(artifact, stage.checkpoint);
    report << "task=mc\n";
    for (const char* k : {"monetary", "temporal", "percentage", "all"}) {
      report << "accuracy." << k << "=" << stage.accuracy.at(k) << "\n";
    }
  }
  const std::string report_path = c.out + "/pretrain_" + task + "_report.txt";
  write_text(report_path, report.str());
  std::cout << report.str();
  update_manifest(c.out, "pretrain_" + task, c, inputs, {artifact, report_path});
  return kOk;
}

int cmd_train(const pipeline::RunConfig& c) {
  const auto split = data::split_chronological(load_corpus_checked(c));
  ensure_dir(c.out);
  std::vector<std::string> inputs{c.corpus};
  std::optional<Checkpoint> pretrained;
  if (c.pretrain) {
    const std::string p = c.pretrained_path();
    if (!fs::exists(p)) {
      throw IoError("missing pre-trained checkpoint " + p +
                    "; run `pretrain --task ncc` and `--task mc`, or pass --no-pretrain");
    }
    pretrained = load_checkpoint_file(p);
    inputs.push_back(p);
  }
  std::vector<std::string> artifacts;
  std::ostringstream summary;
  for (std::size_t h : c.horizons) {
    const auto m = pipeline::train_horizon(c, split, pretrained ? &*pretrained : nullptr, h);
    const std::string ckpt = model_path(c.out, h);
    save_checkpoint_file(ckpt, m.checkpoint);
    const std::string traj = c.out + "/trajectory_h" + std::to_string(h) + ".jsonl";
    {
      std::ofstream t(traj);
      if (!t) throw IoError("cannot write " + traj);
      pareto::write_trajectory(t, m.trajectory);
    }
    artifacts.push_back(ckpt);
    artifacts.push_back(traj);
    for (const auto& s : m.subproblems) {
      summary << "horizon=" << h << " k=" << s.k << " initial_feasible=" << s.initial_feasible
              << " feasible=" << s.feasible << " L1=" << s.losses[0] << " L2=" << s.losses[1]
              << " valid_return_MSE=" << s.valid_return_mse << " termination=" << s.termination
              << (s.k == m.selected_k ? " selected" : "") << "\n";
    }
  }
  const std::string summary_path = c.out + "/train_report.txt";
  write_text(summary_path, summary.str());
  artifacts.push_back(summary_path);
  std::cout << summary.str();
  update_manifest(c.out, "train", c, inputs, artifacts);
  return kOk;
}

int cmd_evaluate(const pipeline::RunConfig& c, const std::string& model_dir,
                 const std::string& split_name) {
  const auto split = data::split_chronological(load_corpus_checked(c));
  const auto& records = pick_split(split, split_name);
  std::vector<pipeline::HorizonMetrics> rows;
  std::vector<std::string> inputs{c.corpus};
  for (std::size_t h : data::kHorizons) {
    const std::string path = model_path(model_dir, h);
    if (!fs::exists(path)) {
      std::cerr << "warning: no model for horizon " << h << " (" << path << "); omitted\n";
      continue;
    }
    const auto predictor = pipeline::Predictor::from_checkpoint(load_checkpoint_file(path));
    rows.push_back(pipeline::score(h, records, predictor.predict(records)));
    inputs.push_back(path);
  }
  if (rows.empty()) throw IoError("no model checkpoints found under " + model_dir);
  std::ostringstream report;
  pipeline::write_report(report, rows);
  ensure_dir(c.out);
  const std::string report_path = c.out + "/evaluate_" + split_name + ".txt";
  write_text(report_path, report.str());
  std::cout << report.str();
  update_manifest(c.out, "evaluate_" + split_name, c, inputs, {report_path});
  return kOk;
}

int cmd_simulate(const pipeline::RunConfig& c, const std::string& model_dir,
                 const std::string& strategy_name, std::size_t tau, std::uint64_t seed,
                 const std::string& split_name) {
  const auto strategy = trading::parse_strategy(strategy_name);
  const auto split = data::split_chronological(load_corpus_checked(c));
  const auto& records = pick_split(split, split_name);
  std::vector<std::string> inputs{c.corpus};
  trading::TradeLedger ledger;
  if (strategy == trading::Strategy::kModel) {
    const std::size_t h = tau;
    const std::string path = model_path(model_dir, data::kHorizons[data::horizon_index(h)]);
    if (!fs::exists(path)) throw IoError("no model checkpoint " + path);
    const auto predictor = pipeline::Predictor::from_checkpoint(load_checkpoint_file(path));
    ledger = pipeline::simulate_model(predictor, records, tau);
    inputs.push_back(path);
  } else {
    std::vector<trading::MarketEvent> events;
    for (const auto& r : records) events.push_back(data::market_event(r));
    ledger = trading::baseline(strategy, events, tau, seed);
  }
  ensure_dir(c.out);
  const std::string name = trading::strategy_name(strategy);
  const std::string ledger_path = c.out + "/ledger_" + name + ".jsonl";
  {
    std::ofstream l(ledger_path);
    if (!l) throw IoError("cannot write " + ledger_path);
    trading::write_ledger(l, ledger);
  }
  std::ostringstream summary;
  trading::write_summary(summary, ledger);
  const std::string summary_path = c.out + "/simulate_" + name + ".txt";
  write_text(summary_path, summary.str());
  std::cout << "Strategy: " << name << "\n" << summary.str();
  update_manifest(c.out, "simulate_" + name, c, inputs, {ledger_path, summary_path});
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"numcast: numeral-aware multi-task forecasting on earnings-call corpora"};
  app.require_subcommand(1);

  std::uint64_t gen_seed = 0;
  std::size_t gen_calls = 200;
  std::string gen_out;
  data::EffectSizes effects;
  auto* gen = app.add_subcommand("gen-data", "write a planted-signal synthetic corpus");
  gen->add_option("--seed", gen_seed, "generator seed")->required();
  gen->add_option("--calls", gen_calls, "number of calls");
  gen->add_option("--out", gen_out, "corpus file to write")->required();
  gen->add_option("--text-effect", effects.text, "tone effect size")->check(CLI::NonNegativeNumber);
  gen->add_option("--numeral-effect", effects.numeral, "growth numeral effect size")
      ->check(CLI::NonNegativeNumber);
  gen->add_option("--audio-effect", effects.audio, "audio effect size")->check(CLI::NonNegativeNumber);

  CommonOptions pre_opts;
  std::string task;
  auto* pre = app.add_subcommand("pretrain", "numeral-aware pre-training of the token encoder");
  pre_opts.attach(pre);
  pre->add_option("--task", task, "ncc or mc")->required()->check(CLI::IsMember({"ncc", "mc"}));

  CommonOptions train_opts;
  bool no_pareto = false, no_pretrain = false, text_only = false;
  auto* train = app.add_subcommand("train", "Pareto multi-task training per horizon");
  train_opts.attach(train);
  train->add_flag("--no-pareto", no_pareto, "fixed equal task weights");
  train->add_flag("--no-pretrain", no_pretrain, "skip the pre-trained token encoder");
  train->add_flag("--text-only", text_only, "zero the audio pathway");

  CommonOptions eval_opts;
  std::string eval_model, eval_split = "test";
  auto* evaluate = app.add_subcommand("evaluate", "movement and volatility metrics per horizon");
  eval_opts.attach(evaluate);
  evaluate->add_option("--model", eval_model, "directory holding model_h<n>.ckpt")->required();
  evaluate->add_option("--split", eval_split, "train, valid or test")
      ->check(CLI::IsMember({"train", "valid", "test"}));

  CommonOptions sim_opts;
  std::string sim_model, sim_strategy = "model", sim_split = "test";
  std::size_t tau = trading::kDefaultHoldingDays;
  std::uint64_t sim_seed = 0;
  auto* simulate = app.add_subcommand("simulate", "single-share trading simulation");
  sim_opts.attach(simulate);
  simulate->add_option("--model", sim_model, "directory holding model_h<n>.ckpt");
  simulate->add_option("--strategy", sim_strategy, "model, buy-all, short-all or random")
      ->check(CLI::IsMember({"model", "buy-all", "short-all", "random"}));
  simulate->add_option("--tau", tau, "holding days");
  simulate->add_option("--split", sim_split, "train, valid or test")
      ->check(CLI::IsMember({"train", "valid", "test"}));
  simulate->add_option("--strategy-seed", sim_seed, "seed for the random strategy");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_gen_data(gen_seed, gen_calls, gen_out, effects);
    if (*pre) return cmd_pretrain(pre_opts.resolve(), task);
    if (*train) {
      auto c = train_opts.resolve();
      if (no_pareto) c.pareto = false;
      if (no_pretrain) c.pretrain = false;
      if (text_only) c.text_only = true;
      return cmd_train(c);
    }
    if (*evaluate) return cmd_evaluate(eval_opts.resolve(), eval_model, eval_split);
    if (*simulate) {
      auto c = sim_opts.resolve();
      if (sim_strategy == "model" && sim_model.empty()) {
        throw ConfigError("--strategy model needs --model");
      }
      return cmd_simulate(c, sim_model.empty() ? c.out : sim_model, sim_strategy, tau,
                          sim_opts.seed ? *sim_opts.seed : sim_seed, sim_split);
    }
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kValidation;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInternal;
  }
  return kUsage;
}
