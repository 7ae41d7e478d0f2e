#include "ncre/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "ncre/checkpoint.hpp"
#include "ncre/errors.hpp"
#include "ncre/losses.hpp"
#include "ncre/optim.hpp"
#include "ncre/pairing.hpp"
#include "ncre/rng.hpp"

namespace ncre {

namespace fs = std::filesystem;

TokenizedSet tokenize_all(const std::vector<LabeledSentence>& rows, const TokenizerConfig& cfg) {
  TokenizedSet out;
  out.tokens.reserve(rows.size());
  out.labels.reserve(rows.size());
  for (const LabeledSentence& r : rows) {
    TokenIds ids = tokenize(r.text, cfg);
    if (ids.empty()) throw EmptyInputError("sentence has no tokens: '" + r.text + "'");
    out.tokens.push_back(std::move(ids));
    out.labels.push_back(r.predicate);
  }
  return out;
}

PreparedData prepare_data(const DatasetSplit& split, const LabelTable& labels,
                          const TokenizerConfig& cfg) {
  PreparedData d;
  d.train = tokenize_all(split.train, cfg);
  d.eval = tokenize_all(split.eval, cfg);
  d.test = tokenize_all(split.test, cfg);
  d.labels = labels;
  for (const auto* rows : {&split.train, &split.eval, &split.test}) {
    for (const LabeledSentence& r : *rows) {
      if (r.predicate >= labels.size()) {
        throw DimensionError("sample label " + std::to_string(r.predicate) +
                             " outside a label table of " + std::to_string(labels.size()));
      }
    }
  }
  const std::string text = format_tsv(split.train, labels) + "\x1e" +
                           format_tsv(split.eval, labels) + "\x1e" + format_tsv(split.test, labels);
  d.fingerprint = fnv1a(text);
  return d;
}

std::string format_history(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,mean_loss,anisotropy,effective_rank\n";
  char buf[160];
  for (const EpochRecord& r : history) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", r.epoch, r.mean_loss, r.anisotropy,
                  r.effective_rank);
    out += buf;
  }
  return out;
}

std::vector<EpochRecord> parse_history(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::size_t lineno = 0;
  std::vector<EpochRecord> out;
  while (std::getline(in, line)) {
    if (++lineno == 1) continue;
    EpochRecord r;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf", &r.epoch, &r.mean_loss, &r.anisotropy,
                    &r.effective_rank) != 4) {
      throw ParseError(lineno, "malformed history row");
    }
    out.push_back(r);
  }
  return out;
}

namespace {

std::vector<Parameter> snapshot(const std::vector<const Parameter*>& params) {
  std::vector<Parameter> out;
  out.reserve(params.size());
  for (const Parameter* p : params) {
    Parameter q{p->name, Tensor(p->tensor.shape(), std::vector<double>(p->tensor.data().begin(),
                                                                        p->tensor.data().end())),
                p->frozen};
    out.push_back(std::move(q));
  }
  return out;
}

std::vector<const Parameter*> refs(const std::vector<Parameter>& params) {
  std::vector<const Parameter*> out;
  for (const Parameter& p : params) out.push_back(&p);
  return out;
}

template <typename T>
std::vector<T> pick(const std::vector<T>& v, const std::vector<std::size_t>& idx,
                    std::size_t begin, std::size_t end) {
  std::vector<T> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) out.push_back(v[idx[i]]);
  return out;
}

Tensor encode_all(Encoder& enc, const std::vector<TokenIds>& samples, std::size_t chunk = 256) {
  const std::size_t d = enc.output_dim();
  Tensor out({samples.size(), d});
  for (std::size_t start = 0; start < samples.size(); start += chunk) {
    const std::size_t end = std::min(samples.size(), start + chunk);
    std::vector<TokenIds> part(samples.begin() + static_cast<std::ptrdiff_t>(start),
                               samples.begin() + static_cast<std::ptrdiff_t>(end));
    Graph g(Graph::kNoGrad);
    const Tensor& r = g.value(enc.forward(g, part));
    std::copy(r.data().begin(), r.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(start * d));
  }
  return out;
}

DiagnosticsSnapshot safe_diagnose(const Tensor& reps) {
  if (reps.rows() < 2) return {};
  try {
    return diagnose(reps);
  } catch (const DegenerateVectorError&) {
    DiagnosticsSnapshot d;
    const Spectrum s = spectrum(reps);
    d.anisotropy = 1.0;
    d.effective_rank = s.effective_rank;
    d.singular_values = s.singular_values;
    d.collapsed = true;
    return d;
  }
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  rng.shuffle(idx);
  return idx;
}

Tensor rows_of(const Tensor& m, const std::vector<std::size_t>& idx, std::size_t begin,
               std::size_t end) {
  const std::size_t d = m.cols();
  Tensor out({end - begin, d});
  for (std::size_t i = begin; i < end; ++i)
    for (std::size_t j = 0; j < d; ++j) out.at(i - begin, j) = m.at(idx[i], j);
  return out;
}

ParameterRefs concat(ParameterRefs a, const ParameterRefs& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

[[noreturn]] void rethrow_collapse(const DegenerateVectorError& e, const Tensor& reps) {
  double rank = 1.0;
  if (reps.rows() >= 2) rank = spectrum(reps).effective_rank;
  throw CollapseError(e.what(), rank, 0);
}

}  // namespace

FineTuneModel build_finetune_model(const RunConfig& cfg, std::size_t num_classes) {
  Rng rng(derive_seed(cfg.pipeline.seed, kStage1SeedTag));
  FineTuneModel m;
  m.encoder = Encoder(cfg.encoder, cfg.tokenizer.vocab_size, rng, "encoder");
  m.head = Linear("stage1_head", m.encoder.output_dim(), num_classes, rng);
  return m;
}

NetworkPair build_pair(const RunConfig& cfg) {
  Rng rng(derive_seed(cfg.pipeline.seed, kStage1SeedTag));
  Encoder enc(cfg.encoder, cfg.tokenizer.vocab_size, rng, "encoder");
  return NetworkPair::init(enc, cfg.byol, derive_seed(cfg.pipeline.seed, kStage2SeedTag));
}

NetworkPair restore_pair(const std::vector<Parameter>& checkpoint, const RunConfig& cfg) {
  NetworkPair pair = build_pair(cfg);
  restore_parameters(checkpoint, pair.all_parameters());
  return pair;
}

ClassifierModel restore_classifier(const std::vector<Parameter>& checkpoint,
                                   const RunConfig& cfg) {
  const Parameter* w = nullptr;
  for (const Parameter& p : checkpoint) {
    if (p.name == "classifier.weight") w = &p;
  }
  if (!w || w->tensor.ndim() != 2) throw CheckpointError("checkpoint has no classifier layer");
  ClassifierModel model{restore_pair(checkpoint, cfg), {}};
  Rng rng(derive_seed(cfg.pipeline.seed, kStage3SeedTag));
  model.classifier =
      Linear("classifier", model.pair.representation_dim(), w->tensor.cols(), rng);
  restore_parameters(checkpoint, model.classifier.parameters());
  return model;
}

EvalReport evaluate(ClassifierModel& model, const TokenizedSet& set, const LabelTable& labels) {
  const std::size_t k = model.classifier.out_dim();
  if (labels.size() != k) {
    throw DimensionError("label table has " + std::to_string(labels.size()) +
                         " classes but the classifier predicts " + std::to_string(k));
  }
  if (set.size() == 0) throw EmptyInputError("evaluation set is empty");
  const Tensor feats = represent_all(model.pair, set.tokens);
  Graph g(Graph::kNoGrad);
  const Tensor& logits = g.value(model.classifier.forward(g, g.constant(feats)));
  ConfusionMatrix cm(k);
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.labels[i] >= k) throw DimensionError("sample label outside the classifier's classes");
    cm.add(set.labels[i], predict(logits.data().subspan(i * k, k)));
  }
  return make_report(cm, labels.names());
}

StageArtifacts stage1_finetune(const PreparedData& data, const RunConfig& cfg) {
  cfg.validate();
  const std::size_t k = data.labels.size();
  if (data.train.size() == 0) throw EmptyInputError("training split is empty");
  FineTuneModel m = build_finetune_model(cfg, k);
  m.encoder.freeze_all_but_last();
  const ParameterRefs params = concat(m.encoder.parameters(), m.head.parameters());
  OptimizerState opt{cfg.pipeline.stage1_lr, cfg.pipeline.momentum, {}, 0};
  Rng order_rng(derive_seed(cfg.pipeline.seed, 10 + kStage1SeedTag));
  const std::size_t bs = cfg.pipeline.batch_size;

  StageArtifacts out;
  out.stage = 1;
  for (std::size_t epoch = 1; epoch <= cfg.pipeline.stage1_epochs; ++epoch) {
    const auto idx = shuffled_indices(data.train.size(), order_rng);
    double total = 0.0;
    for (std::size_t start = 0; start < idx.size(); start += bs) {
      const std::size_t end = std::min(idx.size(), start + bs);
      const auto x = pick(data.train.tokens, idx, start, end);
      const auto y = pick(data.train.labels, idx, start, end);
      Graph g;
      Var logits = g.activation(m.head.forward(g, m.encoder.forward(g, x)), cfg.encoder.activation);
      Var loss = cross_entropy_logits(g, logits, y);
      total += g.scalar(loss) * static_cast<double>(end - start);
      g.backward(loss);
      sgd_step(params, opt);
    }
    const DiagnosticsSnapshot diag = safe_diagnose(encode_all(m.encoder, data.eval.tokens));
    out.history.push_back({epoch, total / static_cast<double>(idx.size()), diag.anisotropy,
                           diag.effective_rank});
    out.diagnostics = diag;
  }
  out.checkpoint = snapshot(ncre::as_const(params));
  return out;
}

StageArtifacts stage2_noncontrastive(const StageArtifacts& stage1, const PreparedData& data,
                                     const RunConfig& cfg, const PairStepHook& hook) {
  cfg.validate();
  FineTuneModel m = build_finetune_model(cfg, data.labels.size());
  restore_parameters(stage1.checkpoint, m.encoder.parameters());
  m.encoder.freeze_all();
  NetworkPair pair =
      NetworkPair::init(m.encoder, cfg.byol, derive_seed(cfg.pipeline.seed, kStage2SeedTag));
  OptimizerState opt{cfg.byol.learning_rate, cfg.pipeline.momentum, {}, 0};

  StageArtifacts out;
  out.stage = 2;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.byol.epochs; ++epoch) {
    const auto batches =
        build_pair_batches(data.train.labels, cfg.pipeline.batch_size,
                           derive_seed(cfg.pipeline.seed, kPairEpochSeedTag + epoch));
    double total = 0.0;
    std::size_t count = 0;
    for (const PairBatch& b : batches) {
      total += train_step(pair, b, data.train.tokens, opt) * static_cast<double>(b.size());
      count += b.size();
      if (hook) hook(pair, ++step);
    }
    const DiagnosticsSnapshot diag = safe_diagnose(represent_all(pair, data.eval.tokens));
    out.history.push_back({epoch, total / static_cast<double>(count), diag.anisotropy,
                           diag.effective_rank});
    out.diagnostics = diag;
  }
  out.checkpoint = snapshot(ncre::as_const(pair.all_parameters()));
  return out;
}

ClassifierStage stage3_classify(const StageArtifacts& stage2, const PreparedData& data,
                                const RunConfig& cfg) {
  cfg.validate();
  const std::size_t k = data.labels.size();
  if (data.train.size() == 0) throw EmptyInputError("training split is empty");
  ClassifierModel model{restore_pair(stage2.checkpoint, cfg), {}};
  model.pair.freeze_all();
  const Tensor feats = represent_all(model.pair, data.train.tokens);
  Rng init_rng(derive_seed(cfg.pipeline.seed, kStage3SeedTag));
  model.classifier = Linear("classifier", model.pair.representation_dim(), k, init_rng);
  const ParameterRefs params = model.classifier.parameters();
  OptimizerState opt{cfg.pipeline.stage3_lr, cfg.pipeline.momentum, {}, 0};
  Rng order_rng(derive_seed(cfg.pipeline.seed, 10 + kStage3SeedTag));
  const std::size_t bs = cfg.pipeline.batch_size;

  ClassifierStage out;
  out.artifacts.stage = 3;
  const DiagnosticsSnapshot diag = safe_diagnose(feats);
  for (std::size_t epoch = 1; epoch <= cfg.pipeline.stage3_epochs; ++epoch) {
    const auto idx = shuffled_indices(data.train.size(), order_rng);
    double total = 0.0;
    for (std::size_t start = 0; start < idx.size(); start += bs) {
      const std::size_t end = std::min(idx.size(), start + bs);
      const auto y = pick(data.train.labels, idx, start, end);
      Graph g;
      Var logits = model.classifier.forward(g, g.constant(rows_of(feats, idx, start, end)));
      Var loss = cross_entropy_logits(g, logits, y);
      total += g.scalar(loss) * static_cast<double>(end - start);
      g.backward(loss);
      sgd_step(params, opt);
    }
    out.artifacts.history.push_back({epoch, total / static_cast<double>(idx.size()),
                                     diag.anisotropy, diag.effective_rank});
  }
  out.artifacts.diagnostics = diag;
  std::vector<const Parameter*> all = ncre::as_const(model.pair.all_parameters());
  for (const Parameter* p : model.classifier.parameters()) all.push_back(p);
  out.artifacts.checkpoint = snapshot(all);
  out.report = evaluate(model, data.test, data.labels);
  return out;
}

std::string stage_snapshot(const RunConfig& cfg, int stage, std::uint64_t fingerprint) {
  static const std::vector<std::set<std::string>> keys = {
      {"seed", "batch_size", "stage1_epochs", "stage1_lr", "momentum", "vocab_size", "lowercase",
       "embed_dim", "num_layers", "hidden_dim", "pooling", "activation"},
      {"stage2_epochs", "stage2_lr", "delta", "projector_hidden", "projector_out",
       "predictor_hidden", "byol_activation", "stop_gradient", "use_predictor"},
      {"stage3_epochs", "stage3_lr", "tap"},
  };
  std::set<std::string> wanted;
  for (int s = 0; s < stage && s < 3; ++s) wanted.insert(keys[s].begin(), keys[s].end());
  char fp[40];
  std::snprintf(fp, sizeof(fp), "%016llx", static_cast<unsigned long long>(fingerprint));
  std::string out = "# stage=" + std::to_string(stage) + "\n# data_fingerprint=" + fp + "\n";
  std::istringstream in(to_kv(cfg));
  std::string line;
  while (std::getline(in, line)) {
    if (wanted.count(line.substr(0, line.find('=')))) out += line + "\n";
  }
  return out;
}

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open " + p.string() + " for writing");
  f << text;
  if (!f) throw Error("failed writing " + p.string());
}

std::optional<StageArtifacts> try_load_stage(const fs::path& dir, int stage,
                                             const std::string& snap) {
  const fs::path ckpt = dir / "checkpoint.bin", hist = dir / "history.csv", conf = dir / "config.txt";
  if (!fs::exists(ckpt) || !fs::exists(hist) || !fs::exists(conf)) return std::nullopt;
  if (read_file(conf) != snap) return std::nullopt;
  StageArtifacts a;
  a.stage = stage;
  a.checkpoint = read_checkpoint(ckpt);
  a.history = parse_history(read_file(hist));
  if (!a.history.empty()) {
    a.diagnostics.anisotropy = a.history.back().anisotropy;
    a.diagnostics.effective_rank = a.history.back().effective_rank;
  }
  return a;
}

void save_stage(const fs::path& dir, const StageArtifacts& a, const std::string& snap) {
  fs::create_directories(dir);
  write_checkpoint(dir / "checkpoint.bin", refs(a.checkpoint));
  write_file(dir / "history.csv", format_history(a.history));
  write_file(dir / "config.txt", snap);
}

}  // namespace

PipelineResult run_pipeline(const PreparedData& data, const RunConfig& cfg,
                            const std::optional<fs::path>& out_dir) {
  if (cfg.pipeline.mode != TrainMode::kStaged) throw ConfigError("run_pipeline needs mode=staged");
  cfg.validate();
  PipelineResult r;

  auto stage = [&](int k, auto&& compute) -> StageArtifacts {
    if (!out_dir) return compute();
    const fs::path dir = *out_dir / ("stage" + std::to_string(k));
    const std::string snap = stage_snapshot(cfg, k, data.fingerprint);
    if (auto loaded = try_load_stage(dir, k, snap)) {
      r.reused.push_back(k);
      return std::move(*loaded);
    }
    // Anything downstream was built from a different predecessor.
    for (int later = k; later <= 3; ++later) {
      fs::remove_all(*out_dir / ("stage" + std::to_string(later)));
    }
    StageArtifacts a = compute();
    save_stage(dir, a, snap);
    return a;
  };

  r.stage1 = stage(1, [&] { return stage1_finetune(data, cfg); });
  r.stage2 = stage(2, [&] { return stage2_noncontrastive(r.stage1, data, cfg); });
  std::optional<EvalReport> fresh_report;
  r.stage3 = stage(3, [&] {
    ClassifierStage s3 = stage3_classify(r.stage2, data, cfg);
    fresh_report = s3.report;
    return s3.artifacts;
  });
  if (fresh_report) {
    r.report = *fresh_report;
  } else {
    ClassifierModel model = restore_classifier(r.stage3.checkpoint, cfg);
    r.report = evaluate(model, data.test, data.labels);
  }
  if (out_dir) {
    const fs::path s3 = *out_dir / "stage3";
    write_file(s3 / "labels.txt", data.labels.serialize());
    emit_report(r.report, s3 / "report.tsv");
    emit_report(r.report, *out_dir / "report.tsv");
  }
  return r;
}

JointResult run_joint(const PreparedData& data, const RunConfig& cfg, bool classification_only,
                      const std::optional<fs::path>& out_dir) {
  cfg.validate();
  const std::size_t k = data.labels.size();
  FineTuneModel m = build_finetune_model(cfg, k);
  m.encoder.freeze_all_but_last();
  ClassifierModel model{
      NetworkPair::init(m.encoder, cfg.byol, derive_seed(cfg.pipeline.seed, kStage2SeedTag)), {}};
  NetworkPair& pair = model.pair;
  Rng init_rng(derive_seed(cfg.pipeline.seed, kStage3SeedTag));
  model.classifier = Linear("classifier", pair.representation_dim(), k, init_rng);

  ParameterRefs params;
  if (classification_only) {
    params = pair.online.encoder.parameters();
    if (cfg.byol.tap == RepresentationTap::kProjector) {
      params = concat(params, pair.online.projector.parameters());
    }
  } else {
    params = pair.trainable_parameters();
  }
  params = concat(params, model.classifier.parameters());
  OptimizerState opt{cfg.pipeline.joint_lr, cfg.pipeline.momentum, {}, 0};

  JointResult out;
  out.artifacts.stage = 0;
  for (std::size_t epoch = 1; epoch <= cfg.pipeline.joint_epochs; ++epoch) {
    const auto batches =
        build_pair_batches(data.train.labels, cfg.pipeline.batch_size,
                           derive_seed(cfg.pipeline.seed, kPairEpochSeedTag + epoch));
    double total = 0.0;
    std::size_t count = 0;
    for (const PairBatch& b : batches) {
      std::vector<TokenIds> xa, xb;
      for (std::size_t i = 0; i < b.size(); ++i) {
        xa.push_back(data.train.tokens[b.batch_a[i]]);
        xb.push_back(data.train.tokens[b.batch_b[i]]);
      }
      Graph g;
      Var loss;
      try {
        Var logits = model.classifier.forward(g, pair.represent(g, xa));
        Var cls = cross_entropy_logits(g, logits, b.labels);
        loss = classification_only ? cls : total_loss(g, cls, byol_loss(g, pair, xa, xb),
                                                       cfg.pipeline.lambda);
      } catch (const DegenerateVectorError& e) {
        rethrow_collapse(e, represent_all(pair, xa));
      }
      total += g.scalar(loss) * static_cast<double>(b.size());
      count += b.size();
      g.backward(loss);
      sgd_step(params, opt);
      ema_update(pair);
    }
    const DiagnosticsSnapshot diag = safe_diagnose(represent_all(pair, data.eval.tokens));
    out.artifacts.history.push_back({epoch, total / static_cast<double>(count), diag.anisotropy,
                                     diag.effective_rank});
    out.artifacts.diagnostics = diag;
  }
  std::vector<const Parameter*> all = ncre::as_const(pair.all_parameters());
  for (const Parameter* p : model.classifier.parameters()) all.push_back(p);
  out.artifacts.checkpoint = snapshot(all);
  out.report = evaluate(model, data.test, data.labels);
  if (out_dir) {
    const fs::path dir = *out_dir / "joint";
    save_stage(dir, out.artifacts, "# stage=joint\n" + to_kv(cfg));
    write_file(dir / "labels.txt", data.labels.serialize());
    emit_report(out.report, dir / "report.tsv");
    emit_report(out.report, *out_dir / "report.tsv");
  }
  return out;
}

}  // namespace ncre
