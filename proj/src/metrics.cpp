#include "ncre/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ncre/errors.hpp"
#include "ncre/rng.hpp"

namespace ncre {

std::size_t predict(std::span<const double> logits) {
  if (logits.empty()) throw EmptyInputError("predict on empty logits");
  std::size_t best = 0;
  for (std::size_t j = 1; j < logits.size(); ++j) {
    if (logits[j] > logits[best]) best = j;
  }
  return best;
}

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : k_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes == 0) throw ContractError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted) {
  if (truth >= k_ || predicted >= k_) {
    throw DimensionError("class id outside confusion matrix of size " + std::to_string(k_));
  }
  ++counts_[truth * k_ + predicted];
  ++total_;
}

double f1_score(double precision, double recall) {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

std::vector<ClassMetrics> per_class_prf(const ConfusionMatrix& cm,
                                        const std::vector<std::string>& names) {
  const std::size_t k = cm.num_classes();
  if (names.size() != k) {
    throw DimensionError("label table has " + std::to_string(names.size()) +
                         " names for a confusion matrix of " + std::to_string(k) + " classes");
  }
  std::vector<ClassMetrics> rows(k);
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t tp = cm.at(c, c), predicted = 0, actual = 0;
    for (std::size_t o = 0; o < k; ++o) {
      predicted += cm.at(o, c);
      actual += cm.at(c, o);
    }
    ClassMetrics& r = rows[c];
    r.name = names[c];
    r.support = actual;
    if (predicted > 0) r.precision = static_cast<double>(tp) / static_cast<double>(predicted);
    if (actual > 0) r.recall = static_cast<double>(tp) / static_cast<double>(actual);
    r.flagged = predicted == 0 || actual == 0;
    r.f1 = f1_score(r.precision, r.recall);
  }
  return rows;
}

MacroAverage macro_average(std::span<const ClassMetrics> rows) {
  if (rows.empty()) throw ContractError("macro average over zero classes");
  const bool any_support =
      std::any_of(rows.begin(), rows.end(), [](const ClassMetrics& r) { return r.support > 0; });
  MacroAverage m;
  std::size_t n = 0;
  for (const ClassMetrics& r : rows) {
    if (any_support && r.support == 0) continue;
    m.precision += r.precision;
    m.recall += r.recall;
    m.f1 += r.f1;
    ++n;
  }
  m.precision /= static_cast<double>(n);
  m.recall /= static_cast<double>(n);
  m.f1 /= static_cast<double>(n);
  return m;
}

EvalReport make_report(const ConfusionMatrix& cm, const std::vector<std::string>& names) {
  EvalReport report;
  report.rows = per_class_prf(cm, names);
  report.macro = macro_average(report.rows);
  return report;
}

std::string format_report(const EvalReport& report) {
  std::ostringstream out;
  out << "predicate\tprecision\trecall\tf1\tsupport\n";
  char buf[128];
  std::size_t total = 0;
  for (const ClassMetrics& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "\t%.3f\t%.3f\t%.3f\t%zu\n", r.precision, r.recall, r.f1,
                  r.support);
    out << r.name << buf;
    total += r.support;
  }
  std::snprintf(buf, sizeof(buf), "average\t%.3f\t%.3f\t%.3f\t%zu\n", report.macro.precision,
                report.macro.recall, report.macro.f1, total);
  out << buf;
  return out.str();
}

void emit_report(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open report file " + path.string());
  f << format_report(report);
  if (!f) throw Error("failed writing report file " + path.string());
}

EvalReport parse_report(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  EvalReport report;
  bool saw_average = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line != "predicate\tprecision\trecall\tf1\tsupport") throw ParseError(1, "bad report header");
      continue;
    }
    std::istringstream fields(line);
    std::string name, p, r, f, s;
    if (!std::getline(fields, name, '\t') || !std::getline(fields, p, '\t') ||
        !std::getline(fields, r, '\t') || !std::getline(fields, f, '\t') ||
        !std::getline(fields, s, '\t')) {
      throw ParseError(lineno, "expected 5 tab-separated fields");
    }
    try {
      if (name == "average") {
        report.macro = {std::stod(p), std::stod(r), std::stod(f)};
        saw_average = true;
      } else {
        report.rows.push_back({name, std::stod(p), std::stod(r), std::stod(f),
                               static_cast<std::size_t>(std::stoull(s)), false});
      }
    } catch (const std::logic_error&) {
      throw ParseError(lineno, "non-numeric metric value");
    }
  }
  if (!saw_average) throw ParseError(lineno, "report has no average row");
  return report;
}

namespace {

std::vector<double> row_norms(const Tensor& reps) {
  const std::size_t n = reps.rows(), d = reps.cols();
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += reps.at(i, j) * reps.at(i, j);
    norms[i] = std::sqrt(s);
    if (!(norms[i] > 1e-12)) {
      throw DegenerateVectorError("representation " + std::to_string(i) + " has zero norm");
    }
  }
  return norms;
}

double cosine(const Tensor& reps, const std::vector<double>& norms, std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < reps.cols(); ++c) s += reps.at(i, c) * reps.at(j, c);
  return std::clamp(s / (norms[i] * norms[j]), -1.0, 1.0);
}

constexpr std::size_t kExactLimit = 512;
constexpr std::size_t kSampledPairs = 10000;

template <typename Accept>
double mean_pair_cosine(const Tensor& reps, std::uint64_t seed, Accept accept) {
  const std::size_t n = reps.rows();
  if (n < 2) throw ContractError("anisotropy needs at least two representations");
  const std::vector<double> norms = row_norms(reps);
  double total = 0.0;
  std::size_t count = 0;
  if (n <= kExactLimit) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!accept(i, j)) continue;
        total += cosine(reps, norms, i, j);
        ++count;
      }
  } else {
    Rng rng(seed);
    std::size_t attempts = 0;
    while (count < kSampledPairs && attempts < 100 * kSampledPairs) {
      ++attempts;
      const std::size_t i = rng.below(n), j = rng.below(n);
      if (i == j || !accept(i, j)) continue;
      total += cosine(reps, norms, i, j);
      ++count;
    }
  }
  if (count == 0) throw ContractError("no eligible pairs for anisotropy");
  return total / static_cast<double>(count);
}

}  // namespace

double anisotropy(const Tensor& reps, std::uint64_t seed) {
  return mean_pair_cosine(reps, seed, [](std::size_t, std::size_t) { return true; });
}

double cross_class_anisotropy(const Tensor& reps, std::span<const std::size_t> labels,
                              std::uint64_t seed) {
  if (labels.size() != reps.rows()) {
    throw DimensionError("cross_class_anisotropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(reps.rows()) + " rows");
  }
  return mean_pair_cosine(reps, seed,
                          [&](std::size_t i, std::size_t j) { return labels[i] != labels[j]; });
}

Spectrum spectrum(const Tensor& reps) {
  const std::size_t n = reps.rows(), d = reps.cols();
  if (n < 2) throw ContractError("effective rank needs at least two rows");
  Eigen::MatrixXd x(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) x(i, j) = reps.at(i, j);
  const double scale = x.norm();
  x.rowwise() -= x.colwise().mean();

  Spectrum out;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(x);
  const Eigen::VectorXd sv = svd.singularValues();
  const double tol = 1e-10 * scale;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    out.singular_values.push_back(sv(i));
    if (sv(i) > tol) sum += sv(i);
  }
  if (!(sum > 0.0)) {
    out.collapsed = true;
    out.effective_rank = 1.0;
    return out;
  }
  double entropy = 0.0;
  for (double s : out.singular_values) {
    if (s <= tol) continue;
    const double p = s / sum;
    entropy -= p * std::log(p);
  }
  out.effective_rank = std::exp(entropy);
  return out;
}

double effective_rank(const Tensor& reps) { return spectrum(reps).effective_rank; }

DiagnosticsSnapshot diagnose(const Tensor& reps) {
  const Spectrum s = spectrum(reps);
  return DiagnosticsSnapshot{anisotropy(reps), s.effective_rank, s.singular_values, s.collapsed};
}

}  // namespace ncre
