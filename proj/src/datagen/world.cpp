#include "grace/datagen/world.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <thread>
#include <unordered_set>
#include <utility>

#include "grace/autodiff/ops.hpp"
#include "grace/error.hpp"

namespace grace {
namespace {

constexpr std::uint64_t kWorldStream = 0x574f524c44ULL;    // "WORLD"
constexpr std::uint64_t kSessionStream = 0x53455353ULL;    // "SESS"
constexpr std::uint64_t kFixtureStream = 0x464958ULL;      // "FIX"

std::vector<double> gaussian_vector(Rng& rng, std::size_t dim, double sd) {
  std::vector<double> v(dim);
  for (double& x : v) x = rng.normal(0.0, sd);
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

void WorldConfig::validate() const {
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) throw ConfigError(std::string("world: ") + what + " must be >= 1");
  };
  positive(n_users, "n_users");
  positive(n_items, "n_items");
  positive(n_queries, "n_queries");
  positive(n_brands, "n_brands");
  positive(n_shops, "n_shops");
  positive(latent_dim, "latent_dim");
  positive(candidates, "candidates");
  if (n_categories < 2) throw ConfigError("world: n_categories must be >= 2");
  if (n_brands < n_categories) {
    throw ConfigError("world: n_brands must be >= n_categories");
  }
  if (displayed > candidates) {
    throw ConfigError("world: displayed must not exceed candidates");
  }
  if (n_items < 2 * (candidates + random_negatives)) {
    throw ConfigError("world: n_items must be at least 2 * (candidates + random_negatives)");
  }
  if (!(zipf_s >= 0.0)) throw ConfigError("world: zipf_s must be >= 0");
  if (!(in_category_fraction >= 0.0 && in_category_fraction <= 1.0)) {
    throw ConfigError("world: in_category_fraction must be in [0, 1]");
  }
}

World generate_world(const WorldConfig& config, std::uint64_t seed) {
  config.validate();
  World w;
  w.config = config;
  w.seed = seed;
  Rng rng(derive_seed(seed, kWorldStream));

  const std::size_t L = config.latent_dim;
  const double sd = 1.0 / std::sqrt(static_cast<double>(L));

  std::vector<std::vector<double>> centroids(config.n_categories);
  for (auto& c : centroids) c = gaussian_vector(rng, L, sd);

  std::vector<std::vector<double>> brand_offsets(config.n_brands);
  w.brand_category.resize(config.n_brands);
  for (std::size_t b = 0; b < config.n_brands; ++b) {
    w.brand_category[b] = static_cast<std::uint32_t>(b % config.n_categories);
    brand_offsets[b] = gaussian_vector(rng, L, sd);
  }
  std::vector<std::vector<double>> shop_offsets(config.n_shops);
  for (auto& s : shop_offsets) s = gaussian_vector(rng, L, sd);

  const double norm = std::sqrt(1.0 + config.brand_weight * config.brand_weight +
                                config.shop_weight * config.shop_weight +
                                config.item_noise * config.item_noise);
  w.items.resize(config.n_items);
  w.items_by_category.resize(config.n_categories);
  for (std::size_t i = 0; i < config.n_items; ++i) {
    WorldItem& it = w.items[i];
    it.item_id = i;
    it.brand = static_cast<std::uint32_t>(rng.uniform_index(config.n_brands));
    it.shop = static_cast<std::uint32_t>(rng.uniform_index(config.n_shops));
    it.category = w.brand_category[it.brand];
    it.quality = rng.normal();
    it.latent.resize(L);
    for (std::size_t d = 0; d < L; ++d) {
      it.latent[d] = (centroids[it.category][d] +
                      config.brand_weight * brand_offsets[it.brand][d] +
                      config.shop_weight * shop_offsets[it.shop][d] +
                      config.item_noise * rng.normal(0.0, sd)) /
                     norm;
    }
    w.items_by_category[it.category].push_back(i);
  }

  // Popularity ranks are a random permutation so that item ids carry no
  // popularity information.
  std::vector<std::size_t> perm(config.n_items);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = perm.size(); i > 1; --i) {
    std::swap(perm[i - 1], perm[rng.uniform_index(i)]);
  }
  w.popularity.resize(config.n_items);
  double total = 0.0;
  for (std::size_t r = 0; r < config.n_items; ++r) {
    w.items[perm[r]].popularity_rank = r;
    w.popularity[perm[r]] = std::pow(static_cast<double>(r + 1), -config.zipf_s);
    total += w.popularity[perm[r]];
  }
  w.popularity_cdf.resize(config.n_items);
  double acc = 0.0;
  for (std::size_t i = 0; i < config.n_items; ++i) {
    w.popularity[i] /= total;
    acc += w.popularity[i];
    w.popularity_cdf[i] = acc;
  }
  w.popularity_cdf.back() = 1.0;

  const double qnorm = std::sqrt(1.0 + config.query_noise * config.query_noise);
  w.queries.resize(config.n_queries);
  for (WorldQuery& q : w.queries) {
    q.category = static_cast<std::uint32_t>(rng.uniform_index(config.n_categories));
    q.latent.resize(L);
    for (std::size_t d = 0; d < L; ++d) {
      q.latent[d] =
          (centroids[q.category][d] + config.query_noise * rng.normal(0.0, sd)) / qnorm;
    }
  }

  w.users.resize(config.n_users);
  for (auto& u : w.users) u = gaussian_vector(rng, L, sd);

  w.teacher_weights.resize(L + 1);
  for (double& t : w.teacher_weights) t = 1.0 + config.teacher_weight_sd * rng.normal();
  return w;
}

std::uint64_t World::sample_popular(Rng& rng) const {
  const double u = rng.uniform();
  const auto it = std::upper_bound(popularity_cdf.begin(), popularity_cdf.end(), u);
  return static_cast<std::uint64_t>(
      std::min<std::ptrdiff_t>(it - popularity_cdf.begin(),
                               static_cast<std::ptrdiff_t>(popularity_cdf.size()) - 1));
}

double World::relevance(std::uint32_t user, std::uint32_t query,
                        std::uint64_t item) const {
  const WorldItem& it = items[item];
  return config.query_weight * dot(queries[query].latent, it.latent) +
         config.user_weight * dot(users[user], it.latent) +
         config.quality_weight * it.quality;
}

double World::teacher_score(std::uint32_t user, std::uint32_t query,
                            std::uint64_t item) const {
  const WorldItem& it = items[item];
  const auto& q = queries[query].latent;
  const auto& u = users[user];
  double s = 0.0;
  for (std::size_t d = 0; d < it.latent.size(); ++d) {
    s += teacher_weights[d] *
         (config.query_weight * q[d] + config.user_weight * u[d]) * it.latent[d];
  }
  return s + teacher_weights.back() * config.quality_weight * it.quality;
}

std::vector<int> rank_by_scores(std::span<const double> scores,
                                std::span<const std::uint64_t> ids) {
  if (scores.size() != ids.size()) throw ShapeError("rank_by_scores: size mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  });
  std::vector<int> pos(scores.size());
  for (std::size_t r = 0; r < order.size(); ++r) pos[order[r]] = static_cast<int>(r + 1);
  return pos;
}

std::vector<int> teacher_rank(const World& world, std::uint32_t user,
                              std::uint32_t query,
                              std::span<const std::uint64_t> candidates,
                              Rng& rng, std::vector<double>* scores_out) {
  if (candidates.empty()) throw ShapeError("teacher_rank: no candidates");
  std::unordered_set<std::uint64_t> seen;
  for (std::uint64_t c : candidates) {
    if (c >= world.items.size()) {
      throw ShapeError("teacher_rank: unknown item " + std::to_string(c));
    }
    if (!seen.insert(c).second) {
      throw ShapeError("teacher_rank: duplicate candidate " + std::to_string(c));
    }
  }
  std::vector<double> scores(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    scores[i] = world.teacher_score(user, query, candidates[i]) +
                world.config.teacher_noise * rng.normal();
  }
  std::vector<int> pos = rank_by_scores(scores, candidates);
  if (scores_out != nullptr) *scores_out = std::move(scores);
  return pos;
}

std::pair<SessionLog, Dataset> sample_session(const World& world,
                                              std::uint64_t session_id,
                                              Rng& rng) {
  const WorldConfig& cfg = world.config;
  SessionLog log;
  log.session_id = session_id;
  log.user = static_cast<std::uint32_t>(rng.uniform_index(cfg.n_users));
  log.query = static_cast<std::uint32_t>(rng.uniform_index(cfg.n_queries));

  // In-category candidates: popularity-weighted sampling without replacement
  // (largest log(u)/w keys).
  const auto& pool = world.items_by_category[world.queries[log.query].category];
  const std::size_t want_in = std::min<std::size_t>(
      pool.size(),
      static_cast<std::size_t>(std::lround(cfg.in_category_fraction * cfg.candidates)));
  std::vector<std::pair<double, std::uint64_t>> keys;
  keys.reserve(pool.size());
  for (std::uint64_t id : pool) {
    keys.emplace_back(std::log(rng.uniform_open()) / world.popularity[id], id);
  }
  std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(want_in),
                    keys.end(), [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return a.second < b.second;
                    });
  std::unordered_set<std::uint64_t> chosen;
  for (std::size_t i = 0; i < want_in; ++i) {
    log.candidates.push_back(keys[i].second);
    chosen.insert(keys[i].second);
  }
  while (log.candidates.size() < cfg.candidates) {
    const std::uint64_t id = world.sample_popular(rng);
    if (chosen.insert(id).second) log.candidates.push_back(id);
  }

  log.positions = teacher_rank(world, log.user, log.query, log.candidates, rng, &log.scores);
  log.displayed = cfg.displayed;

  std::vector<std::size_t> by_pos(log.candidates.size());
  for (std::size_t i = 0; i < by_pos.size(); ++i) {
    by_pos[static_cast<std::size_t>(log.positions[i] - 1)] = i;
  }

  Dataset records;
  records.reserve(cfg.candidates + cfg.random_negatives);
  auto make = [&](std::uint64_t item) {
    const WorldItem& it = world.items[item];
    ImpressionRecord r;
    r.session_id = session_id;
    r.query_id = log.query;
    r.user_id = log.user;
    r.item_id = item;
    r.brand = it.brand;
    r.shop = it.shop;
    r.category = it.category;
    return r;
  };
  for (std::size_t p = 0; p < by_pos.size(); ++p) {
    const std::uint64_t item = log.candidates[by_pos[p]];
    ImpressionRecord r = make(item);
    const int pos = static_cast<int>(p + 1);
    r.rank_pos = pos;
    r.teacher_score = log.scores[by_pos[p]];
    if (p < cfg.displayed) {
      r.source = Source::kDisplayed;
      const double rel = world.relevance(log.user, log.query, item);
      const double click_logit = cfg.click_scale * rel + cfg.click_bias -
                                 cfg.position_bias * std::log(static_cast<double>(pos));
      r.click = rng.bernoulli(ops::sigmoid(click_logit)) ? 1 : 0;
      const double order_p = ops::sigmoid(cfg.order_scale * rel + cfg.order_bias);
      const bool ordered = rng.bernoulli(order_p);
      r.order = r.click == 1 && ordered ? 1 : 0;
    } else {
      r.source = Source::kUndisplayed;
    }
    records.push_back(r);
  }

  std::size_t negatives = 0;
  while (negatives < cfg.random_negatives) {
    const std::uint64_t id = rng.uniform_index(cfg.n_items);
    if (!chosen.insert(id).second) continue;
    ImpressionRecord r = make(id);
    r.source = Source::kRandomNegative;
    records.push_back(r);
    ++negatives;
  }
  return {std::move(log), std::move(records)};
}

Dataset generate_dataset(const World& world, std::size_t n_sessions,
                         std::uint64_t seed, unsigned threads) {
  threads = std::max(1u, threads);
  std::vector<Dataset> per_session(n_sessions);
  auto work = [&](unsigned shard) {
    for (std::size_t s = shard; s < n_sessions; s += threads) {
      Rng rng(derive_seed(seed, kSessionStream, s));
      per_session[s] = sample_session(world, s, rng).second;
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& t : pool) t.join();
  }
  Dataset out;
  std::size_t total = 0;
  for (const auto& d : per_session) total += d.size();
  out.reserve(total);
  for (auto& d : per_session) out.insert(out.end(), d.begin(), d.end());
  return out;
}

PretrainedStore make_pretrained_fixture(const World& world, double coverage,
                                        double noise_sd, std::uint64_t seed) {
  if (!(coverage > 0.0 && coverage <= 1.0)) {
    throw ConfigError("fixture: coverage must be in (0, 1]");
  }
  const std::size_t n = world.items.size();
  const auto covered = static_cast<std::size_t>(
      std::ceil(coverage * static_cast<double>(n) - 1e-9));
  PretrainedStore store(world.config.latent_dim);
  Rng rng(derive_seed(seed, kFixtureStream));
  std::vector<const WorldItem*> by_rank(n);
  for (const WorldItem& it : world.items) by_rank[it.popularity_rank] = &it;
  for (std::size_t r = 0; r < covered; ++r) {
    std::vector<double> v = by_rank[r]->latent;
    for (double& x : v) x += noise_sd == 0.0 ? 0.0 : rng.normal(0.0, noise_sd);
    store.insert(by_rank[r]->item_id, std::move(v));
  }
  return store;
}

}  // namespace grace
