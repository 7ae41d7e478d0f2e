#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace ncre {

struct LabeledSentence {
  std::string text;
  std::size_t predicate = 0;

  bool operator==(const LabeledSentence&) const = default;
};

/// Ordered predicate names; position is the label id.
class LabelTable {
 public:
  LabelTable() = default;
  explicit LabelTable(std::vector<std::string> names);

  /// The 28 relation predicates used for the biomedical benchmark, in report
  /// order.
  static LabelTable default_predicates();
  /// One name per line; blank lines are ignored.
  static LabelTable from_file(const std::filesystem::path& path);

  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t id) const { return names_.at(id); }
  const std::vector<std::string>& names() const { return names_; }
  std::optional<std::size_t> find(const std::string& name) const;

  std::string serialize() const;

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Rows "sentence<TAB>predicate" separated by LF, no header.
std::vector<LabeledSentence> parse_tsv(const std::string& text, const LabelTable& labels);
std::vector<LabeledSentence> load_tsv(const std::filesystem::path& path, const LabelTable& labels);
std::string format_tsv(std::span<const LabeledSentence> rows, const LabelTable& labels);
void write_tsv(const std::filesystem::path& path, std::span<const LabeledSentence> rows,
               const LabelTable& labels);

struct DatasetSplit {
  std::vector<LabeledSentence> train;
  std::vector<LabeledSentence> eval;
  std::vector<LabeledSentence> test;
};

/// Seeded shuffle, then contiguous thirds. The remainder of n / 3 goes to
/// train first, then eval.
DatasetSplit split_equal(std::vector<LabeledSentence> data, std::uint64_t seed);

struct SynthConfig {
  std::size_t num_classes = 8;
  std::size_t per_class = 200;
  std::size_t vocab_per_class = 20;
  /// Fraction of each class vocabulary drawn from a pool shared by all classes.
  double overlap = 0.3;
  std::uint64_t seed = 7;
};

/// Class-major list of per_class sentences per class, each 5-12 tokens drawn
/// uniformly from its class vocabulary.
std::vector<LabeledSentence> synth_generate(const SynthConfig& cfg);
/// First num_classes default predicate names, or "class_<i>" past 28.
LabelTable synth_label_table(std::size_t num_classes);

/// Vocabulary of one synthetic class, class-specific words first.
std::vector<std::string> synth_class_vocabulary(const SynthConfig& cfg, std::size_t cls);

}  // namespace ncre
