#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "ncre/checkpoint.hpp"
#include "ncre/config.hpp"
#include "ncre/data.hpp"
#include "ncre/errors.hpp"
#include "ncre/metrics.hpp"
#include "ncre/pipeline.hpp"

namespace ncre::cli {

namespace fs = std::filesystem;

namespace {

std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open " + p.string() + " for writing");
  f << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error("cannot read " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// Holds --key value strings for every RunConfig field.
struct ConfigFlags {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  std::string config_path;
  bool synth = false;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "key=value config file; flags override it");
    for (const auto& [key, _] : config_values(RunConfig{})) {
      if (key == "synth") continue;
      options[key] = app.add_option(flag_name(key), values[key]);
    }
    options["synth"] = app.add_flag("--synth", synth, "generate a synthetic dataset");
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_path.empty()) {
      if (!fs::exists(config_path)) throw ConfigError("config file not found: " + config_path);
      cfg = load_config(config_path);
    }
    for (const auto& [key, opt] : options) {
      if (opt->count() == 0) continue;
      if (key == "synth") {
        cfg.synth = synth;
      } else {
        set_config_value(cfg, key, values.at(key));
      }
    }
    cfg.validate();
    return cfg;
  }
};

struct LoadedData {
  std::vector<LabeledSentence> rows;
  LabelTable labels;
};

LoadedData load_run_data(const RunConfig& cfg) {
  LoadedData d;
  if (cfg.synth) {
    SynthConfig sc = cfg.synth_cfg;
    sc.seed = cfg.pipeline.seed;
    d.rows = synth_generate(sc);
    d.labels = synth_label_table(sc.num_classes);
    return d;
  }
  if (cfg.data_path.empty()) throw ConfigError("no data: pass --data <tsv> or --synth");
  if (!fs::exists(cfg.data_path)) throw ConfigError("data file not found: " + cfg.data_path);
  if (!cfg.labels_path.empty() && !fs::exists(cfg.labels_path)) {
    throw ConfigError("label file not found: " + cfg.labels_path);
  }
  d.labels = cfg.labels_path.empty() ? LabelTable::default_predicates()
                                     : LabelTable::from_file(cfg.labels_path);
  d.rows = load_tsv(cfg.data_path, d.labels);
  if (d.rows.empty()) throw EmptyInputError("data file has no rows: " + cfg.data_path);
  return d;
}

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  LoadedData d = load_run_data(cfg);
  DatasetSplit split = split_equal(d.rows, cfg.pipeline.seed);
  const PreparedData prepared = prepare_data(split, d.labels, cfg.tokenizer);

  const fs::path out_dir = cfg.out_dir;
  fs::create_directories(out_dir / "data");
  write_tsv(out_dir / "data" / "train.tsv", split.train, d.labels);
  write_tsv(out_dir / "data" / "eval.tsv", split.eval, d.labels);
  write_tsv(out_dir / "data" / "test.tsv", split.test, d.labels);
  write_text(out_dir / "labels.txt", d.labels.serialize());
  write_text(out_dir / "config.txt", to_kv(cfg));

  try {
    EvalReport report;
    if (cfg.pipeline.mode == TrainMode::kStaged) {
      PipelineResult r = run_pipeline(prepared, cfg, out_dir);
      for (int k : r.reused) out << "stage" << k << ": reused cached artifacts\n";
      report = r.report;
    } else {
      report = run_joint(prepared, cfg, false, out_dir).report;
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", report.macro.f1);
    out << "macro_f1\t" << buf << "\n";
    out << "report\t" << (out_dir / "report.tsv").string() << "\n";
  } catch (const CollapseError& e) {
    const fs::path diag = out_dir / "collapse.txt";
    char buf[128];
    std::snprintf(buf, sizeof(buf), "effective_rank=%.17g\ndegenerate_rows=%zu\n",
                  e.effective_rank(), e.degenerate_rows());
    write_text(diag, std::string("message=") + e.what() + "\n" + buf);
    err << "collapse abort: " << e.what() << "\ndiagnostics: " << diag.string() << "\n";
    return kCollapseAbort;
  }
  return kOk;
}

/// Config snapshot stored next to a stage checkpoint.
RunConfig config_near(const fs::path& checkpoint) {
  const fs::path p = checkpoint.parent_path() / "config.txt";
  if (!fs::exists(p)) throw CheckpointError("no config.txt next to " + checkpoint.string());
  return from_kv(read_text(p));
}

LabelTable labels_near(const fs::path& checkpoint, const std::string& explicit_path) {
  if (!explicit_path.empty()) {
    if (!fs::exists(explicit_path)) throw ConfigError("label file not found: " + explicit_path);
    return LabelTable::from_file(explicit_path);
  }
  const fs::path dir = checkpoint.parent_path();
  for (const fs::path& p : {dir / "labels.txt", dir.parent_path() / "labels.txt"}) {
    if (fs::exists(p)) return LabelTable::from_file(p);
  }
  return LabelTable::default_predicates();
}

std::vector<Parameter> load_checkpoint_file(const std::string& path) {
  if (path.empty()) throw ConfigError("--checkpoint is required");
  if (!fs::exists(path)) throw CheckpointError("checkpoint not found: " + path);
  return read_checkpoint(path);
}

TokenizedSet load_eval_set(const std::string& data_path, const LabelTable& labels,
                           const TokenizerConfig& tok) {
  if (data_path.empty()) throw ConfigError("--data is required");
  if (!fs::exists(data_path)) throw ConfigError("data file not found: " + data_path);
  const auto rows = load_tsv(data_path, labels);
  if (rows.empty()) throw EmptyInputError("data file has no rows: " + data_path);
  return tokenize_all(rows, tok);
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path,
             const std::string& labels_path, const std::string& out_path, std::ostream& out) {
  const auto ckpt = load_checkpoint_file(ckpt_path);
  const RunConfig cfg = config_near(ckpt_path);
  ClassifierModel model = restore_classifier(ckpt, cfg);
  const LabelTable labels = labels_near(ckpt_path, labels_path);
  if (labels.size() != model.classifier.out_dim()) {
    throw DimensionError("label table has " + std::to_string(labels.size()) +
                         " classes, checkpoint has " +
                         std::to_string(model.classifier.out_dim()));
  }
  const TokenizedSet set = load_eval_set(data_path, labels, cfg.tokenizer);
  const EvalReport report = evaluate(model, set, labels);
  if (out_path.empty()) {
    out << format_report(report);
  } else {
    emit_report(report, out_path);
  }
  return kOk;
}

bool has_prefix(const std::vector<Parameter>& ckpt, const std::string& prefix) {
  return std::any_of(ckpt.begin(), ckpt.end(),
                     [&](const Parameter& p) { return p.name.rfind(prefix, 0) == 0; });
}

int cmd_diagnose(const std::string& ckpt_path, const std::string& data_path,
                 const std::string& labels_path, std::ostream& out) {
  const auto ckpt = load_checkpoint_file(ckpt_path);
  RunConfig cfg = config_near(ckpt_path);
  const LabelTable labels = labels_near(ckpt_path, labels_path);
  const TokenizedSet set = load_eval_set(data_path, labels, cfg.tokenizer);

  Tensor reps;
  std::string source;
  if (has_prefix(ckpt, "online.projector.")) {
    cfg.byol.tap = RepresentationTap::kProjector;
    NetworkPair pair = restore_pair(ckpt, cfg);
    reps = represent_all(pair, set.tokens);
    source = "online.projector";
  } else if (has_prefix(ckpt, "encoder.")) {
    FineTuneModel m = build_finetune_model(cfg, labels.size());
    restore_parameters(ckpt, m.encoder.parameters());
    Graph g(Graph::kNoGrad);
    reps = g.value(m.encoder.forward(g, set.tokens));
    source = "encoder";
  } else {
    throw CheckpointError("checkpoint holds neither an encoder nor a projector");
  }
  if (reps.rows() < 2) throw EmptyInputError("diagnostics need at least 2 samples");
  const DiagnosticsSnapshot d = diagnose(reps);
  char buf[64];
  out << "source\t" << source << "\n";
  out << "samples\t" << reps.rows() << "\n";
  std::snprintf(buf, sizeof(buf), "%.6f", d.anisotropy);
  out << "anisotropy\t" << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%.6f", d.effective_rank);
  out << "effective_rank\t" << buf << "\n";
  out << "collapsed\t" << (d.collapsed ? "yes" : "no") << "\n";
  out << "singular_values";
  for (std::size_t i = 0; i < std::min<std::size_t>(10, d.singular_values.size()); ++i) {
    std::snprintf(buf, sizeof(buf), "\t%.6g", d.singular_values[i]);
    out << buf;
  }
  out << "\n";
  return kOk;
}

int cmd_synth(const RunConfig& cfg, const std::string& path, const std::string& labels_out,
              std::ostream& out) {
  if (path.empty()) throw ConfigError("synth needs --output <tsv>");
  SynthConfig sc = cfg.synth_cfg;
  sc.seed = cfg.pipeline.seed;
  const auto rows = synth_generate(sc);
  const LabelTable labels = synth_label_table(sc.num_classes);
  write_tsv(path, rows, labels);
  if (!labels_out.empty()) write_text(labels_out, labels.serialize());
  out << "wrote " << rows.size() << " rows to " << path << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"non-contrastive relation extraction"};
  app.require_subcommand(1);

  ConfigFlags train_flags;
  auto* train = app.add_subcommand("train", "run the training pipeline");
  train_flags.attach(*train);

  std::string ckpt, data, labels, report_out;
  auto* eval = app.add_subcommand("eval", "evaluate a stage-3 checkpoint on a TSV");
  eval->add_option("--checkpoint", ckpt)->required();
  eval->add_option("--data", data)->required();
  eval->add_option("--labels", labels);
  eval->add_option("--out", report_out, "report path; stdout if omitted");

  auto* diag = app.add_subcommand("diagnose", "representation diagnostics for a checkpoint");
  diag->add_option("--checkpoint", ckpt)->required();
  diag->add_option("--data", data)->required();
  diag->add_option("--labels", labels);

  ConfigFlags synth_flags;
  std::string synth_path, synth_labels;
  auto* synth = app.add_subcommand("synth", "write a synthetic TSV");
  synth_flags.attach(*synth);
  synth->add_option("--output", synth_path)->required();
  synth->add_option("--labels-out", synth_labels);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsageError;
  }

  try {
    if (*train) return cmd_train(train_flags.resolve(), out, err);
    if (*eval) return cmd_eval(ckpt, data, labels, report_out, out);
    if (*diag) return cmd_diagnose(ckpt, data, labels, out);
    if (*synth) return cmd_synth(synth_flags.resolve(), synth_path, synth_labels, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsageError;
  } catch (const CollapseError& e) {
    err << "collapse abort: " << e.what() << "\n";
    return kCollapseAbort;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kCheckpointError;
  } catch (const ParseError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const LabelError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const EmptyInputError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const EmptyPairingError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const DimensionError& e) {
    err << "dimension error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsageError;
}

}  // namespace ncre::cli
