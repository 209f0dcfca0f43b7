#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace grace {

// Fixed item vectors for the covered item set. Every stored vector has unit
// L2 norm.
class PretrainedStore {
 public:
  PretrainedStore() = default;
  explicit PretrainedStore(std::size_t dim) : dim_(dim) {}

  // Normalizes `v` before storing. Throws DataError on a zero vector or a
  // dimension mismatch.
  void insert(std::uint64_t item_id, std::vector<double> v);

  std::optional<std::span<const double>> lookup(std::uint64_t item_id) const;
  bool contains(std::uint64_t item_id) const { return vectors_.contains(item_id); }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }
  const std::map<std::uint64_t, std::vector<double>>& entries() const {
    return vectors_;
  }

  // Tab-separated, one item per line: item_id, then dim() floats.
  void save(const std::filesystem::path& path) const;
  static PretrainedStore load(const std::filesystem::path& path);

  bool operator==(const PretrainedStore&) const = default;

 private:
  std::size_t dim_ = 0;
  std::map<std::uint64_t, std::vector<double>> vectors_;
};

}  // namespace grace
