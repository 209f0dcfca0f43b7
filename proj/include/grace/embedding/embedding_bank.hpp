#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "grace/autodiff/checkpoint.hpp"
#include "grace/autodiff/graph.hpp"
#include "grace/embedding/pretrained_store.hpp"

namespace grace {

struct EmbeddingConfig {
  std::size_t hash_vocab = 10'000;
  std::size_t hash_dim = 16;
  std::size_t attr_dim = 8;  // brand, shop and category tables
  std::size_t user_dim = 8;
  std::size_t query_dim = 8;
  std::size_t n_brands = 1;
  std::size_t n_shops = 1;
  std::size_t n_categories = 1;
  std::size_t n_users = 1;
  std::size_t n_queries = 1;
};

struct ItemFeatures {
  std::uint64_t item_id = 0;
  std::uint32_t brand = 0;
  std::uint32_t shop = 0;
  std::uint32_t category = 0;
};

// What occupies the id segment of the fused item vector.
enum class IdSegment {
  kHashed,      // hashed-ID table row (trainable)
  kPretrained,  // frozen pretrained vector, zeros for uncovered items
  kNone,        // segment dropped; attributes only
};

// Width of the id segment plus the three attribute widths.
std::size_t fused_item_dim(const EmbeddingConfig& config, IdSegment segment,
                           std::size_t pretrained_dim = 0);

// Hashed-ID table, attribute tables and user/query tables.
class EmbeddingBank {
 public:
  EmbeddingBank(const EmbeddingConfig& config, std::uint64_t seed);

  const EmbeddingConfig& config() const { return config_; }

  std::size_t fused_dim(IdSegment segment, std::size_t pretrained_dim = 0) const;

  // phi(x) for each item: [id segment | brand | shop | category], one row per
  // item. `store` is required for IdSegment::kPretrained.
  NodeId fuse_items(Graph& g, std::span<const ItemFeatures> items,
                    IdSegment segment = IdSegment::kHashed,
                    const PretrainedStore* store = nullptr);

  NodeId lookup_users(Graph& g, std::span<const std::uint32_t> users);
  NodeId lookup_queries(Graph& g, std::span<const std::uint32_t> queries);

  // Graph-free single-item version of fuse_items (hashed id segment).
  Tensor fuse_item(const ItemFeatures& item) const;

  Parameter& hash_table() { return hash_; }
  Parameter& brand_table() { return brand_; }
  Parameter& shop_table() { return shop_; }
  Parameter& category_table() { return category_; }
  Parameter& user_table() { return user_; }
  Parameter& query_table() { return query_; }

  std::vector<Parameter*> parameters();
  std::vector<NamedTensor> named_tensors() const;
  // Replaces table values from a checkpoint; shapes must match.
  void load(std::span<const NamedTensor> tensors);

 private:
  void check_attrs(const ItemFeatures& item) const;

  EmbeddingConfig config_;
  Parameter hash_;
  Parameter brand_;
  Parameter shop_;
  Parameter category_;
  Parameter user_;
  Parameter query_;
};

}  // namespace grace
