#include "ptp/params.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

#include "ptp/errors.hpp"

namespace ptp {

void ParamStore::add(const std::string& name, NumArray value) {
  if (contains(name)) throw ContractError("ParamStore: duplicate parameter '" + name + "'");
  Entry e;
  e.first_moment = NumArray(value.rows(), value.cols());
  e.second_moment = NumArray(value.rows(), value.cols());
  e.value = std::move(value);
  entries_.emplace(name, std::move(e));
}

void ParamStore::add_uniform(const std::string& name, std::size_t rows, std::size_t cols,
                             Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(rows, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  NumArray v(rows, cols);
  for (auto& x : v.data()) x = dist(rng);
  add(name, std::move(v));
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("ParamStore: unknown parameter '" + name + "'");
  return it->second;
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("ParamStore: unknown parameter '" + name + "'");
  return it->second;
}

const NumArray& ParamStore::value(const std::string& name) const { return entry(name).value; }

void ParamStore::set(const std::string& name, NumArray value) {
  Entry& e = entry(name);
  if (!e.value.same_shape(value)) {
    throw DimensionError("ParamStore: shape of '" + name + "' is immutable");
  }
  e.value = std::move(value);
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [k, _] : entries_) out.push_back(k);
  return out;
}

bool ParamStore::trainable(const std::string& name) const {
  if (trainable_.empty()) return true;
  for (const auto& p : trainable_) {
    if (name.compare(0, p.size(), p) == 0) return true;
  }
  return false;
}

bool ParamStore::same_values(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (const auto& [name, e] : entries_) {
    auto it = other.entries_.find(name);
    if (it == other.entries_.end() || !(it->second.value == e.value)) return false;
  }
  return true;
}

void sgd_adam_step(ParamStore& params, const GradientMap& grads, const AdamConfig& config) {
  for (const auto& [name, g] : grads) {
    if (!g.all_finite()) {
      throw NumericError("adam: non-finite gradient for parameter '" + name + "'");
    }
  }
  for (const auto& [name, g] : grads) {
    if (!params.trainable(name)) continue;
    auto& e = params.entry(name);
    if (!e.value.same_shape(g)) throw DimensionError("adam: gradient shape mismatch for '" + name + "'");
    e.steps += 1;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(e.steps));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(e.steps));
    for (std::size_t i = 0; i < g.size(); ++i) {
      double& m = e.first_moment[i];
      double& v = e.second_moment[i];
      m = config.beta1 * m + (1.0 - config.beta1) * g[i];
      v = config.beta2 * v + (1.0 - config.beta2) * g[i] * g[i];
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      e.value[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon);
    }
  }
}

namespace {

constexpr char kMagic[] = {'P', 'T', 'P', 'C', 'K', 'P', 'T'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError("checkpoint: truncated at byte " + std::to_string(pos_));
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ParamStore& params, const std::string& metadata) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(metadata.size()));
  out.insert(out.end(), metadata.begin(), metadata.end());
  put_le<std::uint64_t>(out, params.size());
  for (const auto& [name, e] : params.entries()) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    const auto shape = e.value.shape();
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) put_le<std::uint64_t>(out, d);
    for (double v : e.value.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(sizeof(kMagic)) != std::string(std::begin(kMagic), std::end(kMagic))) {
    throw DataError("checkpoint: bad magic");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.metadata = r.str(r.get<std::uint32_t>());
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t k = 0; k < count; ++k) {
    std::string name = r.str(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    if (rank != 2) throw DataError("checkpoint: '" + name + "' has rank " + std::to_string(rank));
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    std::vector<double> data(rows * cols);
    for (auto& v : data) v = std::bit_cast<double>(r.get<std::uint64_t>());
    ck.params.add(name, NumArray(rows, cols, std::move(data)));
  }
  if (!r.done()) throw DataError("checkpoint: trailing bytes");
  return ck;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                      const std::string& metadata) {
  const auto bytes = encode_checkpoint(params, metadata);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

std::uint64_t fnv1a64(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (auto b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace ptp
