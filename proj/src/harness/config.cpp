#include "grace/harness/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "grace/embedding/hash.hpp"
#include "grace/error.hpp"
#include "grace/rng.hpp"

namespace grace {

namespace {

constexpr std::uint64_t kWorldStream = 1;
constexpr std::uint64_t kDatasetStream = 2;
constexpr std::uint64_t kFixtureStream = 3;

template <class E>
struct EnumNames {
  std::vector<std::pair<E, std::string>> names;

  std::string name(E v) const {
    for (const auto& [e, n] : names) {
      if (e == v) return n;
    }
    return "?";
  }
  std::optional<E> parse(const std::string& s) const {
    for (const auto& [e, n] : names) {
      if (n == s) return e;
    }
    return std::nullopt;
  }
  std::string choices() const {
    std::string out;
    for (const auto& [_, n] : names) out += (out.empty() ? "" : "|") + n;
    return out;
  }
};

const EnumNames<InfoNceVariant> kVariants{{{InfoNceVariant::kStandard, "standard"},
                                           {InfoNceVariant::kLiteral, "literal"}}};
const EnumNames<NegativeScope> kScopes{{{NegativeScope::kInBatchAll, "in_batch_all"},
                                        {NegativeScope::kCrossCategoryOnly, "cross_category_only"}}};
const EnumNames<AnchorPositive> kAnchors{{{AnchorPositive::kClick, "click"},
                                          {AnchorPositive::kOrder, "order"},
                                          {AnchorPositive::kClickOrOrder, "click_or_order"},
                                          {AnchorPositive::kAll, "all"}}};
const EnumNames<DistillTarget> kDistillTargets{{{DistillTarget::kTeacherScore, "teacher_score"},
                                               {DistillTarget::kPosition, "position"}}};
const EnumNames<RankHeads> kRankHeads{{{RankHeads::kSingle, "single"},
                                       {RankHeads::kPerK, "per_k"}}};
const EnumNames<IdSegment> kSegments{{{IdSegment::kHashed, "hashed"},
                                      {IdSegment::kPretrained, "pretrained"},
                                      {IdSegment::kNone, "none"}}};

// Reads known keys of one JSON object and rejects whatever is left over.
class Reader {
 public:
  Reader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + "expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    const auto it = find(key);
    if (!it) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_unsigned_v<T>) {
        // Signed integers arrive from programmatic documents; negatives are rejected.
        if (!it->is_number_unsigned() &&
            (!it->is_number_integer() || it->template get<std::int64_t>() < 0)) {
          throw ConfigError("");
        }
      } else if constexpr (std::is_arithmetic_v<T>) {
        if (!it->is_number()) throw ConfigError("");
      }
      out = it->template get<T>();
    } catch (const std::exception&) {
      throw ConfigError("config key '" + dotted(key) + "' has the wrong type");
    }
  }

  template <class E>
  void get_enum(const char* key, E& out, const EnumNames<E>& names) {
    const auto it = find(key);
    if (!it) return;
    const auto v = it->is_string() ? names.parse(it->get<std::string>()) : std::nullopt;
    if (!v) {
      throw ConfigError("config key '" + dotted(key) + "' must be one of " + names.choices());
    }
    out = *v;
  }

  void get_ablation(const char* key, Ablation& out) {
    const auto it = find(key);
    if (!it) return;
    const auto v = it->is_string() ? parse_ablation(it->get<std::string>()) : std::nullopt;
    if (!v) throw ConfigError("config key '" + dotted(key) + "' is not a known ablation: " + it->dump());
    out = *v;
  }

  void get_ablations(const char* key, std::vector<Ablation>& out) {
    const auto it = find(key);
    if (!it) return;
    if (!it->is_array()) throw ConfigError("config key '" + dotted(key) + "' must be a list");
    out.clear();
    for (const auto& e : *it) {
      const auto v = e.is_string() ? parse_ablation(e.get<std::string>()) : std::nullopt;
      if (!v) throw ConfigError("config key '" + dotted(key) + "' lists an unknown ablation: " + e.dump());
      out.push_back(*v);
    }
  }

  Reader child(const char* key) {
    const auto it = find(key);
    static const nlohmann::json kEmpty = nlohmann::json::object();
    return Reader(it ? *it : kEmpty, dotted(key));
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + dotted(key.c_str()) + "'");
    }
  }

 private:
  const nlohmann::json* find(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string dotted(const char* key) const {
    return path_.empty() ? std::string(key) : path_ + "." + key;
  }
  std::string where() const { return path_.empty() ? "config: " : "config key '" + path_ + "': "; }

  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_world(Reader r, WorldConfig& w) {
  r.get("n_users", w.n_users);
  r.get("n_items", w.n_items);
  r.get("n_queries", w.n_queries);
  r.get("n_categories", w.n_categories);
  r.get("n_brands", w.n_brands);
  r.get("n_shops", w.n_shops);
  r.get("latent_dim", w.latent_dim);
  r.get("zipf_s", w.zipf_s);
  r.get("brand_weight", w.brand_weight);
  r.get("shop_weight", w.shop_weight);
  r.get("item_noise", w.item_noise);
  r.get("query_noise", w.query_noise);
  r.get("query_weight", w.query_weight);
  r.get("user_weight", w.user_weight);
  r.get("quality_weight", w.quality_weight);
  r.get("teacher_weight_sd", w.teacher_weight_sd);
  r.get("teacher_noise", w.teacher_noise);
  r.get("candidates", w.candidates);
  r.get("displayed", w.displayed);
  r.get("random_negatives", w.random_negatives);
  r.get("in_category_fraction", w.in_category_fraction);
  r.get("click_scale", w.click_scale);
  r.get("click_bias", w.click_bias);
  r.get("position_bias", w.position_bias);
  r.get("order_scale", w.order_scale);
  r.get("order_bias", w.order_bias);
  r.finish();
}

nlohmann::ordered_json world_json(const WorldConfig& w) {
  return {{"n_users", w.n_users},
          {"n_items", w.n_items},
          {"n_queries", w.n_queries},
          {"n_categories", w.n_categories},
          {"n_brands", w.n_brands},
          {"n_shops", w.n_shops},
          {"latent_dim", w.latent_dim},
          {"zipf_s", w.zipf_s},
          {"brand_weight", w.brand_weight},
          {"shop_weight", w.shop_weight},
          {"item_noise", w.item_noise},
          {"query_noise", w.query_noise},
          {"query_weight", w.query_weight},
          {"user_weight", w.user_weight},
          {"quality_weight", w.quality_weight},
          {"teacher_weight_sd", w.teacher_weight_sd},
          {"teacher_noise", w.teacher_noise},
          {"candidates", w.candidates},
          {"displayed", w.displayed},
          {"random_negatives", w.random_negatives},
          {"in_category_fraction", w.in_category_fraction},
          {"click_scale", w.click_scale},
          {"click_bias", w.click_bias},
          {"position_bias", w.position_bias},
          {"order_scale", w.order_scale},
          {"order_bias", w.order_bias}};
}

void read_loss(Reader r, LossSpec& l) {
  r.get("k_list", l.k_list);
  r.get("k_weights", l.k_weights);
  r.get("lambda1", l.lambda1);
  r.get("lambda2", l.lambda2);
  r.get("tau", l.tau);
  r.get_enum("infonce_variant", l.infonce_variant, kVariants);
  r.get_enum("negative_scope", l.negative_scope, kScopes);
  r.get_enum("anchor_positive", l.anchor_positive, kAnchors);
  r.get("normalize_phi", l.normalize_phi);
  r.get_enum("distill_target", l.distill_target, kDistillTargets);
  r.finish();
}

nlohmann::ordered_json loss_json(const LossSpec& l) {
  return {{"k_list", l.k_list},
          {"k_weights", l.k_weights},
          {"lambda1", l.lambda1},
          {"lambda2", l.lambda2},
          {"tau", l.tau},
          {"infonce_variant", kVariants.name(l.infonce_variant)},
          {"negative_scope", kScopes.name(l.negative_scope)},
          {"anchor_positive", kAnchors.name(l.anchor_positive)},
          {"normalize_phi", l.normalize_phi},
          {"distill_target", kDistillTargets.name(l.distill_target)}};
}

void read_metrics(Reader r, MetricConfig& m) {
  r.get("recall_k", m.recall_k);
  std::string headline(score_kind_name(m.headline));
  r.get("headline", headline);
  const auto kind = parse_score_kind(headline);
  if (!kind) throw ConfigError("config key 'metrics.headline' must be one of ctr_cvr|ctr|rank");
  m.headline = *kind;
  r.get("auc_include_random_negatives", m.auc_include_random_negatives);
  r.get("head_fraction", m.head_fraction);
  r.finish();
}

nlohmann::ordered_json metrics_json(const MetricConfig& m) {
  return {{"recall_k", m.recall_k},
          {"headline", score_kind_name(m.headline)},
          {"auc_include_random_negatives", m.auc_include_random_negatives},
          {"head_fraction", m.head_fraction}};
}

void read_embedding(Reader r, EmbeddingConfig& e) {
  r.get("hash_vocab", e.hash_vocab);
  r.get("hash_dim", e.hash_dim);
  r.get("attr_dim", e.attr_dim);
  r.get("user_dim", e.user_dim);
  r.get("query_dim", e.query_dim);
  r.finish();
}

nlohmann::ordered_json embedding_json(const EmbeddingConfig& e) {
  return {{"hash_vocab", e.hash_vocab},
          {"hash_dim", e.hash_dim},
          {"attr_dim", e.attr_dim},
          {"user_dim", e.user_dim},
          {"query_dim", e.query_dim}};
}

void read_model(Reader r, PLEConfig& p) {
  r.get("n_shared_experts", p.n_shared_experts);
  r.get("n_task_experts", p.n_task_experts);
  r.get("expert_hidden", p.expert_hidden);
  r.get("n_extraction_layers", p.n_extraction_layers);
  r.get("tower_hidden", p.tower_hidden);
  r.get_enum("rank_heads", p.rank_heads, kRankHeads);
  r.finish();
}

nlohmann::ordered_json model_json(const PLEConfig& p) {
  return {{"n_shared_experts", p.n_shared_experts},
          {"n_task_experts", p.n_task_experts},
          {"expert_hidden", p.expert_hidden},
          {"n_extraction_layers", p.n_extraction_layers},
          {"tower_hidden", p.tower_hidden},
          {"rank_heads", kRankHeads.name(p.rank_heads)}};
}

}  // namespace

void ExperimentConfig::validate() const {
  world.validate();
  if (sessions == 0) throw ConfigError("sessions must be >= 1");
  if (!(fixture.coverage > 0.0 && fixture.coverage <= 1.0)) {
    throw ConfigError("fixture.coverage must lie in (0, 1]");
  }
  if (!(fixture.noise_sd >= 0.0) || !std::isfinite(fixture.noise_sd)) {
    throw ConfigError("fixture.noise_sd must be finite and >= 0");
  }
  train.validate();
  const auto& e = train.embedding;
  if (e.hash_vocab == 0 || e.hash_dim == 0 || e.attr_dim == 0 || e.user_dim == 0 ||
      e.query_dim == 0) {
    throw ConfigError("train.embedding sizes must be >= 1");
  }
  if (ablate_variants.empty()) throw ConfigError("ablate.variants must not be empty");
}

std::uint64_t ExperimentConfig::world_seed() const { return derive_seed(seed, kWorldStream); }
std::uint64_t ExperimentConfig::dataset_seed() const { return derive_seed(seed, kDatasetStream); }
std::uint64_t ExperimentConfig::fixture_seed() const { return derive_seed(seed, kFixtureStream); }

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  Reader r(j, "");
  r.get("seed", c.seed);
  read_world(r.child("world"), c.world);
  r.get("sessions", c.sessions);
  {
    Reader f = r.child("fixture");
    f.get("coverage", c.fixture.coverage);
    f.get("noise_sd", c.fixture.noise_sd);
    f.finish();
  }
  {
    Reader t = r.child("train");
    t.get("batch_size", c.train.batch_size);
    t.get("lr", c.train.lr);
    t.get("epochs", c.train.epochs);
    t.get_ablation("ablation", c.train.ablation);
    t.get("eval_every", c.train.eval_every);
    t.get("holdout_divisor", c.train.holdout_divisor);
    t.get("threads", c.train.threads);
    read_embedding(t.child("embedding"), c.train.embedding);
    read_model(t.child("model"), c.train.ple);
    t.finish();
  }
  read_loss(r.child("loss"), c.train.loss);
  read_metrics(r.child("metrics"), c.train.metrics);
  {
    Reader a = r.child("ablate");
    a.get("seeds", c.ablate_seeds);
    a.get_ablations("variants", c.ablate_variants);
    a.finish();
  }
  r.finish();
  c.train.seed = c.seed;
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

nlohmann::ordered_json config_to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["world"] = world_json(c.world);
  j["sessions"] = c.sessions;
  j["fixture"] = {{"coverage", c.fixture.coverage}, {"noise_sd", c.fixture.noise_sd}};
  nlohmann::ordered_json t;
  t["batch_size"] = c.train.batch_size;
  t["lr"] = c.train.lr;
  t["epochs"] = c.train.epochs;
  t["ablation"] = ablation_name(c.train.ablation);
  t["eval_every"] = c.train.eval_every;
  t["holdout_divisor"] = c.train.holdout_divisor;
  t["threads"] = c.train.threads;
  t["embedding"] = embedding_json(c.train.embedding);
  t["model"] = model_json(c.train.ple);
  j["train"] = std::move(t);
  j["loss"] = loss_json(c.train.loss);
  j["metrics"] = metrics_json(c.train.metrics);
  nlohmann::ordered_json variants = nlohmann::ordered_json::array();
  for (Ablation a : c.ablate_variants) variants.push_back(ablation_name(a));
  j["ablate"] = {{"seeds", c.ablate_seeds}, {"variants", std::move(variants)}};
  return j;
}

nlohmann::ordered_json data_section(const ExperimentConfig& c) {
  const auto full = config_to_json(c);
  nlohmann::ordered_json j;
  for (const char* key : {"seed", "world", "sessions", "fixture"}) j[key] = full.at(key);
  return j;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t hash_bytes(std::string_view bytes) {
  return fnv1a64({reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()});
}

std::string config_hash(const ExperimentConfig& c) {
  return hex64(hash_bytes(config_to_json(c).dump()));
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::uint64_t h = kFnvOffsetBasis;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto n = static_cast<std::size_t>(in.gcount());
    h = fnv1a64({reinterpret_cast<const std::uint8_t*>(buf.data()), n}, h);
  }
  return hex64(h);
}

std::string first_difference(const nlohmann::json& a, const nlohmann::json& b,
                             const std::string& prefix) {
  if (a.is_object() && b.is_object()) {
    for (const auto& [key, va] : a.items()) {
      const std::string path = prefix.empty() ? key : prefix + "." + key;
      const auto it = b.find(key);
      if (it == b.end()) return path;
      if (auto d = first_difference(va, *it, path); !d.empty()) return d;
    }
    for (const auto& [key, _] : b.items()) {
      if (!a.contains(key)) return prefix.empty() ? key : prefix + "." + key;
    }
    return {};
  }
  return a == b ? std::string() : (prefix.empty() ? std::string("<root>") : prefix);
}

nlohmann::ordered_json model_spec_to_json(const ModelSpec& m) {
  const auto& e = m.embedding;
  const auto& p = m.ple;
  nlohmann::ordered_json j;
  j["segment"] = kSegments.name(m.segment);
  j["embedding_seed"] = m.embedding_seed;
  j["embedding"] = {{"hash_vocab", e.hash_vocab}, {"hash_dim", e.hash_dim},
                    {"attr_dim", e.attr_dim},     {"user_dim", e.user_dim},
                    {"query_dim", e.query_dim},   {"n_brands", e.n_brands},
                    {"n_shops", e.n_shops},       {"n_categories", e.n_categories},
                    {"n_users", e.n_users},       {"n_queries", e.n_queries}};
  j["ple"] = {{"user_dim", p.user_dim},
              {"query_dim", p.query_dim},
              {"item_dim", p.item_dim},
              {"pretrained_dim", p.pretrained_dim},
              {"n_shared_experts", p.n_shared_experts},
              {"n_task_experts", p.n_task_experts},
              {"expert_hidden", p.expert_hidden},
              {"n_extraction_layers", p.n_extraction_layers},
              {"tower_hidden", p.tower_hidden},
              {"rank_heads", kRankHeads.name(p.rank_heads)},
              {"n_rank_outputs", p.n_rank_outputs},
              {"seed", p.seed}};
  return j;
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec m;
  try {
    Reader r(j, "model");
    r.get_enum("segment", m.segment, kSegments);
    r.get("embedding_seed", m.embedding_seed);
    {
      Reader e = r.child("embedding");
      auto& c = m.embedding;
      e.get("hash_vocab", c.hash_vocab);
      e.get("hash_dim", c.hash_dim);
      e.get("attr_dim", c.attr_dim);
      e.get("user_dim", c.user_dim);
      e.get("query_dim", c.query_dim);
      e.get("n_brands", c.n_brands);
      e.get("n_shops", c.n_shops);
      e.get("n_categories", c.n_categories);
      e.get("n_users", c.n_users);
      e.get("n_queries", c.n_queries);
      e.finish();
    }
    {
      Reader p = r.child("ple");
      auto& c = m.ple;
      p.get("user_dim", c.user_dim);
      p.get("query_dim", c.query_dim);
      p.get("item_dim", c.item_dim);
      p.get("pretrained_dim", c.pretrained_dim);
      p.get("n_shared_experts", c.n_shared_experts);
      p.get("n_task_experts", c.n_task_experts);
      p.get("expert_hidden", c.expert_hidden);
      p.get("n_extraction_layers", c.n_extraction_layers);
      p.get("tower_hidden", c.tower_hidden);
      p.get_enum("rank_heads", c.rank_heads, kRankHeads);
      p.get("n_rank_outputs", c.n_rank_outputs);
      p.get("seed", c.seed);
      p.finish();
    }
    r.finish();
  } catch (const ConfigError& e) {
    throw DataError(std::string("model spec: ") + e.what());
  }
  return m;
}

}  // namespace grace
