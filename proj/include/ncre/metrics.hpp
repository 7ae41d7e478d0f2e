#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ncre/tensor.hpp"

namespace ncre {

/// Argmax; ties go to the lowest index.
std::size_t predict(std::span<const double> logits);

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  void add(std::size_t truth, std::size_t predicted);
  std::size_t at(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * k_ + predicted];
  }
  std::size_t num_classes() const { return k_; }
  std::size_t total() const { return total_; }

 private:
  std::size_t k_;
  std::vector<std::size_t> counts_;
  std::size_t total_ = 0;
};

struct ClassMetrics {
  std::string name;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
  /// Some metric had a zero denominator and was scored 0.
  bool flagged = false;
};

struct MacroAverage {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct EvalReport {
  std::vector<ClassMetrics> rows;
  MacroAverage macro;
};

std::vector<ClassMetrics> per_class_prf(const ConfusionMatrix& cm,
                                        const std::vector<std::string>& names);
/// F1 as the harmonic mean of precision and recall; 0 when both are 0.
double f1_score(double precision, double recall);
/// Unweighted mean over rows with non-zero support (over all rows if none has
/// support). Throws ContractError on an empty list.
MacroAverage macro_average(std::span<const ClassMetrics> rows);
EvalReport make_report(const ConfusionMatrix& cm, const std::vector<std::string>& names);

/// Report TSV: header "predicate precision recall f1 support", one row per
/// class in label order, then an "average" row with the total support.
/// Metric values are printed with 3 decimals.
std::string format_report(const EvalReport& report);
void emit_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport parse_report(const std::string& text);

inline constexpr std::uint64_t kDiagnosticsSeed = 0x5eed;

// Representation diagnostics. Representations are the rows of an n x d
// matrix.

/// Mean cosine similarity over unordered distinct pairs; exact up to 512
/// rows, otherwise over 10000 uniformly drawn pairs from a seeded stream.
double anisotropy(const Tensor& reps, std::uint64_t seed = kDiagnosticsSeed);
/// Mean cosine similarity over pairs whose labels differ, with the same
/// exact/sampled rule applied to the number of rows.
double cross_class_anisotropy(const Tensor& reps, std::span<const std::size_t> labels,
                              std::uint64_t seed = kDiagnosticsSeed);

struct Spectrum {
  /// Singular values of the row-centred matrix, descending.
  std::vector<double> singular_values;
  /// exp(entropy) of the normalised singular values.
  double effective_rank = 1.0;
  /// The centred matrix is zero: every row is the same point.
  bool collapsed = false;
};

/// Singular values at or below 1e-10 * ||reps||_F are treated as zero.
Spectrum spectrum(const Tensor& reps);
double effective_rank(const Tensor& reps);

struct DiagnosticsSnapshot {
  double anisotropy = 0.0;
  double effective_rank = 1.0;
  std::vector<double> singular_values;
  bool collapsed = false;
};

DiagnosticsSnapshot diagnose(const Tensor& reps);

}  // namespace ncre
