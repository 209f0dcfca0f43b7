#include "grace/embedding/embedding_bank.hpp"

#include <string>

#include "grace/autodiff/init.hpp"
#include "grace/embedding/hash.hpp"
#include "grace/error.hpp"
#include "grace/rng.hpp"

namespace grace {
namespace {

Parameter make_table(std::string name, std::size_t rows, std::size_t cols,
                     Rng& rng) {
  if (rows == 0 || cols == 0) {
    throw ShapeError("embedding table " + name + " must have non-zero shape");
  }
  Parameter p(std::move(name), Tensor(rows, cols));
  xavier_uniform(p.value, rng);
  return p;
}

std::vector<std::size_t> checked_rows(std::span<const std::uint32_t> ids,
                                      std::size_t vocab, const char* what) {
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  for (std::size_t r : rows) {
    if (r >= vocab) {
      throw DataError(std::string(what) + " id " + std::to_string(r) +
                      " outside vocabulary of " + std::to_string(vocab));
    }
  }
  return rows;
}

}  // namespace

EmbeddingBank::EmbeddingBank(const EmbeddingConfig& config, std::uint64_t seed)
    : config_(config) {
  Rng rng(seed);
  hash_ = make_table("emb.item_hash", config.hash_vocab, config.hash_dim, rng);
  brand_ = make_table("emb.brand", config.n_brands, config.attr_dim, rng);
  shop_ = make_table("emb.shop", config.n_shops, config.attr_dim, rng);
  category_ = make_table("emb.category", config.n_categories, config.attr_dim, rng);
  user_ = make_table("emb.user", config.n_users, config.user_dim, rng);
  query_ = make_table("emb.query", config.n_queries, config.query_dim, rng);
}

std::size_t fused_item_dim(const EmbeddingConfig& config, IdSegment segment,
                           std::size_t pretrained_dim) {
  std::size_t id_dim = 0;
  switch (segment) {
    case IdSegment::kHashed: id_dim = config.hash_dim; break;
    case IdSegment::kPretrained: id_dim = pretrained_dim; break;
    case IdSegment::kNone: id_dim = 0; break;
  }
  return id_dim + 3 * config.attr_dim;
}

std::size_t EmbeddingBank::fused_dim(IdSegment segment,
                                     std::size_t pretrained_dim) const {
  return fused_item_dim(config_, segment, pretrained_dim);
}

void EmbeddingBank::check_attrs(const ItemFeatures& item) const {
  auto check = [&](std::uint32_t id, std::size_t vocab, const char* what) {
    if (id >= vocab) {
      throw DataError(std::string(what) + " id " + std::to_string(id) +
                      " of item " + std::to_string(item.item_id) +
                      " outside vocabulary of " + std::to_string(vocab));
    }
  };
  check(item.brand, config_.n_brands, "brand");
  check(item.shop, config_.n_shops, "shop");
  check(item.category, config_.n_categories, "category");
}

NodeId EmbeddingBank::fuse_items(Graph& g, std::span<const ItemFeatures> items,
                                 IdSegment segment,
                                 const PretrainedStore* store) {
  std::vector<std::size_t> hash_rows, brand_rows, shop_rows, cat_rows;
  hash_rows.reserve(items.size());
  for (const ItemFeatures& it : items) {
    check_attrs(it);
    hash_rows.push_back(hash_item_id(it.item_id, config_.hash_vocab));
    brand_rows.push_back(it.brand);
    shop_rows.push_back(it.shop);
    cat_rows.push_back(it.category);
  }

  std::vector<NodeId> parts;
  switch (segment) {
    case IdSegment::kHashed:
      parts.push_back(g.gather_rows(g.parameter(hash_), std::move(hash_rows)));
      break;
    case IdSegment::kPretrained: {
      if (store == nullptr) {
        throw ShapeError("fuse_items: pretrained id segment needs a store");
      }
      Tensor frozen(items.size(), store->dim());
      for (std::size_t r = 0; r < items.size(); ++r) {
        if (auto v = store->lookup(items[r].item_id)) {
          std::copy(v->begin(), v->end(), frozen.row(r).begin());
        }
      }
      parts.push_back(g.constant(std::move(frozen)));
      break;
    }
    case IdSegment::kNone:
      break;
  }
  parts.push_back(g.gather_rows(g.parameter(brand_), std::move(brand_rows)));
  parts.push_back(g.gather_rows(g.parameter(shop_), std::move(shop_rows)));
  parts.push_back(g.gather_rows(g.parameter(category_), std::move(cat_rows)));
  return g.concat_cols(parts);
}

NodeId EmbeddingBank::lookup_users(Graph& g, std::span<const std::uint32_t> users) {
  return g.gather_rows(g.parameter(user_), checked_rows(users, config_.n_users, "user"));
}

NodeId EmbeddingBank::lookup_queries(Graph& g,
                                     std::span<const std::uint32_t> queries) {
  return g.gather_rows(g.parameter(query_),
                       checked_rows(queries, config_.n_queries, "query"));
}

Tensor EmbeddingBank::fuse_item(const ItemFeatures& item) const {
  check_attrs(item);
  const std::size_t bucket = hash_item_id(item.item_id, config_.hash_vocab);
  const Tensor* parts[] = {&hash_.value, &brand_.value, &shop_.value, &category_.value};
  const std::size_t rows[] = {bucket, item.brand, item.shop, item.category};
  Tensor out(1, fused_dim(IdSegment::kHashed));
  std::size_t c = 0;
  for (int i = 0; i < 4; ++i) {
    for (double v : parts[i]->row(rows[i])) out(0, c++) = v;
  }
  return out;
}

std::vector<Parameter*> EmbeddingBank::parameters() {
  return {&hash_, &brand_, &shop_, &category_, &user_, &query_};
}

std::vector<NamedTensor> EmbeddingBank::named_tensors() const {
  return {{hash_.name, hash_.value},   {brand_.name, brand_.value},
          {shop_.name, shop_.value},   {category_.name, category_.value},
          {user_.name, user_.value},   {query_.name, query_.value}};
}

void EmbeddingBank::load(std::span<const NamedTensor> tensors) {
  const auto params = parameters();
  load_named(params, tensors);
}

}  // namespace grace
