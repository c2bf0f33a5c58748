#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ptp/tensor.hpp"

namespace ptp {

using Rng = std::mt19937_64;
using GradientMap = std::map<std::string, NumArray>;

// Named parameters plus Adam moment accumulators. Shapes are fixed at creation.
class ParamStore {
 public:
  struct Entry {
    NumArray value;
    NumArray first_moment;
    NumArray second_moment;
    std::uint64_t steps = 0;
  };

  // Throws ContractError if the name already exists.
  void add(const std::string& name, NumArray value);
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init; fan_in = rows.
  void add_uniform(const std::string& name, std::size_t rows, std::size_t cols, Rng& rng);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const NumArray& value(const std::string& name) const;
  // Replaces values; the shape must match the existing one.
  void set(const std::string& name, NumArray value);
  const Entry& entry(const std::string& name) const;
  Entry& entry(const std::string& name);

  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  // Parameters outside the trainable prefixes are read as constants by the tape.
  // An empty list means everything trains.
  void set_trainable_prefixes(std::vector<std::string> prefixes) { trainable_ = std::move(prefixes); }
  bool trainable(const std::string& name) const;

  // Values only; optimizer state is not compared.
  bool same_values(const ParamStore& other) const;

 private:
  std::map<std::string, Entry> entries_;
  std::vector<std::string> trainable_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One Adam update for every parameter present in `grads` that is trainable.
// Throws NumericError naming the parameter if a gradient is not finite.
void sgd_adam_step(ParamStore& params, const GradientMap& grads, const AdamConfig& config);

// Binary checkpoint: "PTPCKPT" magic, u32 version, u32-length metadata text,
// u64 entry count, then per entry u32-length name, u32 rank, u64 dims, and
// little-endian IEEE-754 doubles.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ParamStore params;
  std::string metadata;
};

std::vector<std::uint8_t> encode_checkpoint(const ParamStore& params, const std::string& metadata);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void write_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                      const std::string& metadata = {});
Checkpoint read_checkpoint(const std::filesystem::path& path);

std::uint64_t fnv1a64(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace ptp
