#include "ncre/data.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ncre/errors.hpp"
#include "ncre/rng.hpp"

namespace ncre {

LabelTable::LabelTable(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw ConfigError("label table is empty");
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].empty()) throw ConfigError("label table has an empty name");
    if (!index_.emplace(names_[i], i).second) {
      throw ConfigError("duplicate label '" + names_[i] + "'");
    }
  }
}

LabelTable LabelTable::default_predicates() {
  return LabelTable({"complicates",      "inhibits_than",   "stimulates",
                     "augments",         "compared_with",   "higher_than",
                     "associated_with",  "causes",          "affects",
                     "disrupts",         "occurs_in",       "neg_affects",
                     "produces",         "manifestation_of", "process_of",
                     "interacts_with",   "precedes",        "method_of",
                     "neg_interacts_with", "diagnoses",     "treats",
                     "uses",             "administered_to", "prevents",
                     "part_of",          "location_of",     "isa",
                     "coexists_with"});
}

LabelTable LabelTable::from_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open label table " + path.string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) names.push_back(line);
  }
  return LabelTable(std::move(names));
}

std::optional<std::size_t> LabelTable::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string LabelTable::serialize() const {
  std::string out;
  for (const std::string& n : names_) out += n + "\n";
  return out;
}

namespace {

bool blank(const std::string& s) {
  return s.find_first_not_of(" \t\r\n\f\v") == std::string::npos;
}

}  // namespace

std::vector<LabeledSentence> parse_tsv(const std::string& text, const LabelTable& labels) {
  std::vector<LabeledSentence> rows;
  std::vector<std::size_t> unknown_lines;
  std::string unknown_names;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    ++lineno;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw ParseError(lineno, "expected exactly two tab-separated columns");
    }
    std::string sentence = line.substr(0, tab);
    const std::string predicate = line.substr(tab + 1);
    if (blank(sentence)) throw ParseError(lineno, "empty sentence");
    const auto id = labels.find(predicate);
    if (!id) {
      unknown_lines.push_back(lineno);
      if (unknown_names.size() < 512) {
        unknown_names += (unknown_names.empty() ? "" : ", ") + ("line " + std::to_string(lineno) +
                                                               " '" + predicate + "'");
      }
      continue;
    }
    rows.push_back({std::move(sentence), *id});
  }
  if (!unknown_lines.empty()) {
    throw LabelError(unknown_lines, "unknown predicate(s): " + unknown_names);
  }
  return rows;
}

std::vector<LabeledSentence> load_tsv(const std::filesystem::path& path, const LabelTable& labels) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open data file " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_tsv(ss.str(), labels);
}

std::string format_tsv(std::span<const LabeledSentence> rows, const LabelTable& labels) {
  std::string out;
  for (const LabeledSentence& r : rows) out += r.text + "\t" + labels.name(r.predicate) + "\n";
  return out;
}

void write_tsv(const std::filesystem::path& path, std::span<const LabeledSentence> rows,
               const LabelTable& labels) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f << format_tsv(rows, labels);
  if (!f) throw Error("failed writing " + path.string());
}

DatasetSplit split_equal(std::vector<LabeledSentence> data, std::uint64_t seed) {
  const std::size_t n = data.size();
  if (n < 3) throw ContractError("split_equal needs at least 3 samples, got " + std::to_string(n));
  Rng rng(seed);
  rng.shuffle(data);
  const std::size_t base = n / 3, rem = n % 3;
  const std::size_t n_train = base + (rem > 0 ? 1 : 0);
  const std::size_t n_eval = base + (rem > 1 ? 1 : 0);
  DatasetSplit s;
  auto it = std::make_move_iterator(data.begin());
  s.train.assign(it, it + static_cast<std::ptrdiff_t>(n_train));
  s.eval.assign(it + static_cast<std::ptrdiff_t>(n_train),
                it + static_cast<std::ptrdiff_t>(n_train + n_eval));
  s.test.assign(it + static_cast<std::ptrdiff_t>(n_train + n_eval), std::make_move_iterator(data.end()));
  return s;
}

namespace {

std::size_t shared_count(const SynthConfig& cfg) {
  return static_cast<std::size_t>(std::llround(cfg.overlap * static_cast<double>(cfg.vocab_per_class)));
}

}  // namespace

std::vector<std::string> synth_class_vocabulary(const SynthConfig& cfg, std::size_t cls) {
  const std::size_t shared = shared_count(cfg);
  std::vector<std::string> vocab;
  for (std::size_t j = shared; j < cfg.vocab_per_class; ++j) {
    vocab.push_back("c" + std::to_string(cls) + "w" + std::to_string(j));
  }
  std::vector<std::size_t> pool(cfg.vocab_per_class);
  std::iota(pool.begin(), pool.end(), 0);
  Rng rng(derive_seed(cfg.seed, 1000 + cls));
  rng.shuffle(pool);
  for (std::size_t j = 0; j < shared; ++j) vocab.push_back("g" + std::to_string(pool[j]));
  return vocab;
}

std::vector<LabeledSentence> synth_generate(const SynthConfig& cfg) {
  if (cfg.num_classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
  if (cfg.per_class < 2) throw ConfigError("synthetic data needs at least 2 samples per class");
  if (cfg.vocab_per_class < 1) throw ConfigError("vocab_per_class must be positive");
  if (!(cfg.overlap >= 0.0 && cfg.overlap <= 1.0)) {
    throw ConfigError("overlap must lie in [0, 1]");
  }
  std::vector<LabeledSentence> out;
  out.reserve(cfg.num_classes * cfg.per_class);
  Rng rng(derive_seed(cfg.seed, 0));
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    const std::vector<std::string> vocab = synth_class_vocabulary(cfg, c);
    for (std::size_t i = 0; i < cfg.per_class; ++i) {
      const std::size_t len = 5 + rng.below(8);
      std::string text;
      for (std::size_t t = 0; t < len; ++t) {
        if (t) text += ' ';
        text += vocab[rng.below(vocab.size())];
      }
      out.push_back({std::move(text), c});
    }
  }
  return out;
}

LabelTable synth_label_table(std::size_t num_classes) {
  const LabelTable defaults = LabelTable::default_predicates();
  std::vector<std::string> names;
  for (std::size_t c = 0; c < num_classes; ++c) {
    names.push_back(c < defaults.size() ? defaults.name(c) : "class_" + std::to_string(c));
  }
  return LabelTable(std::move(names));
}

}  // namespace ncre
