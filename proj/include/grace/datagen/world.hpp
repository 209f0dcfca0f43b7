#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "grace/datagen/records.hpp"
#include "grace/embedding/pretrained_store.hpp"
#include "grace/rng.hpp"

namespace grace {

struct WorldConfig {
  std::size_t n_users = 200;
  std::size_t n_items = 5'000;
  std::size_t n_queries = 500;
  std::size_t n_categories = 20;
  std::size_t n_brands = 200;
  std::size_t n_shops = 300;
  std::size_t latent_dim = 8;
  double zipf_s = 1.0;

  // Item latent = category centroid + brand/shop offsets + item noise.
  double brand_weight = 0.8;
  double shop_weight = 0.3;
  double item_noise = 0.6;
  double query_noise = 0.5;

  // relevance = query_weight <q, z> + user_weight <u, z> + quality_weight * quality
  double query_weight = 2.0;
  double user_weight = 1.0;
  double quality_weight = 0.3;

  double teacher_weight_sd = 0.3;
  double teacher_noise = 0.1;

  // Sessions.
  std::size_t candidates = 100;      // M
  std::size_t displayed = 10;        // D
  std::size_t random_negatives = 5;  // R
  double in_category_fraction = 0.7;

  // Feedback model.
  double click_scale = 1.0;
  double click_bias = -1.0;
  double position_bias = 0.7;  // logit penalty per ln(position)
  double order_scale = 1.0;
  double order_bias = -1.0;

  // Throws ConfigError on invalid sizes.
  void validate() const;

  bool operator==(const WorldConfig&) const = default;
};

struct WorldItem {
  std::uint64_t item_id = 0;
  std::uint32_t brand = 0;
  std::uint32_t shop = 0;
  std::uint32_t category = 0;
  std::size_t popularity_rank = 0;  // 0 = most popular
  double quality = 0.0;
  std::vector<double> latent;

  ItemFeatures features() const { return {item_id, brand, shop, category}; }

  bool operator==(const WorldItem&) const = default;
};

struct WorldQuery {
  std::uint32_t category = 0;
  std::vector<double> latent;

  bool operator==(const WorldQuery&) const = default;
};

// Synthetic marketplace. Item ids are 0..n_items-1 and index `items`.
struct World {
  WorldConfig config;
  std::uint64_t seed = 0;
  std::vector<WorldItem> items;
  std::vector<WorldQuery> queries;
  std::vector<std::vector<double>> users;
  std::vector<std::uint32_t> brand_category;  // category owning each brand
  std::vector<double> teacher_weights;        // latent_dim + 1 (quality)
  std::vector<double> popularity;             // normalised weight per item
  std::vector<double> popularity_cdf;
  std::vector<std::vector<std::uint64_t>> items_by_category;

  // Draws an item id with probability proportional to its popularity.
  std::uint64_t sample_popular(Rng& rng) const;

  // Latent relevance of an item for (user, query); drives clicks.
  double relevance(std::uint32_t user, std::uint32_t query,
                   std::uint64_t item) const;
  // Noise-free teacher score.
  double teacher_score(std::uint32_t user, std::uint32_t query,
                       std::uint64_t item) const;

  bool operator==(const World&) const = default;
};

World generate_world(const WorldConfig& config, std::uint64_t seed);

// Positions 1..M (descending noisy teacher score, ties by item id) aligned
// with `candidates`. Throws ShapeError on empty or duplicate candidates. The
// noisy scores are written to `scores` when given.
std::vector<int> teacher_rank(const World& world, std::uint32_t user,
                              std::uint32_t query,
                              std::span<const std::uint64_t> candidates,
                              Rng& rng, std::vector<double>* scores = nullptr);

// Score-only variant used by tests: positions from explicit scores.
std::vector<int> rank_by_scores(std::span<const double> scores,
                                std::span<const std::uint64_t> ids);

struct SessionLog {
  std::uint64_t session_id = 0;
  std::uint32_t user = 0;
  std::uint32_t query = 0;
  std::vector<std::uint64_t> candidates;  // sampled order
  std::vector<int> positions;             // teacher position per candidate
  std::vector<double> scores;             // noisy teacher score per candidate
  std::size_t displayed = 0;              // prefix of the teacher order shown
};

// One session: M candidates ranked by the teacher, the top D displayed with
// sampled click/order feedback, the rest logged as undisplayed, plus R random
// negatives from outside the candidate set. Records are ordered by rank
// position, random negatives last.
std::pair<SessionLog, Dataset> sample_session(const World& world,
                                              std::uint64_t session_id,
                                              Rng& rng);

// Sessions 0..n_sessions-1 with per-session seeds derived from `seed`, so
// the result does not depend on `threads`.
Dataset generate_dataset(const World& world, std::size_t n_sessions,
                         std::uint64_t seed, unsigned threads = 1);

// Pretrained vectors for the ceil(coverage * n_items) most popular items:
// unit-normalised (latent + gaussian noise).
PretrainedStore make_pretrained_fixture(const World& world, double coverage,
                                        double noise_sd, std::uint64_t seed);

}  // namespace grace
