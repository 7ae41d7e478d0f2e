#include "ncre/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "ncre/errors.hpp"

namespace ncre {

namespace {

constexpr char kMagic[8] = {'N', 'C', 'R', 'E', 'C', 'K', 'P', 'T'};

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>(u & 0xff));
    u = static_cast<U>(u >> 8);
  }
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<std::make_unsigned_t<T>>(
               static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }

  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const std::vector<const Parameter*>& params) {
  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    put_le<std::uint8_t>(out, p->frozen ? 1 : 0);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->tensor.ndim()));
    for (std::size_t d : p->tensor.shape()) put_le<std::uint64_t>(out, d);
    for (double v : p->tensor.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

std::vector<Parameter> decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.get_bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) +
                          " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const auto count = r.get<std::uint32_t>();
  std::vector<Parameter> params;
  params.reserve(count);
  for (std::uint32_t e = 0; e < count; ++e) {
    Parameter p;
    p.name = r.get_bytes(r.get<std::uint32_t>());
    const auto frozen = r.get<std::uint8_t>();
    if (frozen > 1) throw CheckpointError("bad frozen flag for '" + p.name + "'");
    p.frozen = frozen == 1;
    Shape shape(r.get<std::uint32_t>());
    for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = std::bit_cast<double>(r.get<std::uint64_t>());
    p.tensor = Tensor(std::move(shape), std::move(data));
    params.push_back(std::move(p));
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint entries");
  return params;
}

void write_checkpoint(const std::filesystem::path& path,
                      const std::vector<const Parameter*>& params) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_checkpoint(params);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("failed writing " + path.string());
}

std::vector<Parameter> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return decode_checkpoint(ss.str());
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

void restore_parameters(const std::vector<Parameter>& saved, const ParameterRefs& targets) {
  std::map<std::string, const Parameter*> by_name;
  for (const Parameter& p : saved) by_name[p.name] = &p;
  for (Parameter* t : targets) {
    auto it = by_name.find(t->name);
    if (it == by_name.end()) throw CheckpointError("checkpoint lacks parameter '" + t->name + "'");
    if (it->second->tensor.shape() != t->tensor.shape()) {
      throw DimensionError("parameter '" + t->name + "': checkpoint shape " +
                           shape_str(it->second->tensor.shape()) + " vs model " +
                           shape_str(t->tensor.shape()));
    }
    t->tensor = it->second->tensor;
    t->tensor.clear_grad();
    t->frozen = it->second->frozen;
  }
}

std::vector<Parameter> strip_prefix(const std::vector<Parameter>& saved,
                                    const std::string& prefix) {
  std::vector<Parameter> out;
  for (const Parameter& p : saved) {
    if (p.name.rfind(prefix, 0) == 0) {
      Parameter q = p;
      q.name = p.name.substr(prefix.size());
      out.push_back(std::move(q));
    }
  }
  return out;
}

}  // namespace ncre
