#include "grace/trainer/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <thread>

#include "grace/autodiff/adagrad.hpp"
#include "grace/autodiff/ops.hpp"
#include "grace/error.hpp"
#include "grace/rng.hpp"

namespace grace {

namespace {

constexpr std::uint64_t kModelStream = 0x6d6f64656cULL;
constexpr std::uint64_t kEmbeddingStream = 0x656d6265ULL;
constexpr std::uint64_t kShuffleStream = 0x73687566ULL;

constexpr std::array<std::pair<Ablation, std::string_view>, 7> kAblationNames = {{
    {Ablation::kFull, "full"},
    {Ablation::kNoConsistency, "no_consistency"},
    {Ablation::kNoGeneralization, "no_generalization"},
    {Ablation::kPretrainedIdOnly, "pretrained_id_only"},
    {Ablation::kNoHashId, "no_hash_id"},
    {Ablation::kFeedbackOnly, "feedback_only"},
    {Ablation::kDistillation, "distillation"},
}};

std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

bool is_positive(const ImpressionRecord& r, AnchorPositive rule) {
  switch (rule) {
    case AnchorPositive::kClick: return r.click == 1;
    case AnchorPositive::kOrder: return r.order == 1;
    case AnchorPositive::kClickOrOrder: return r.click == 1 || r.order == 1;
    case AnchorPositive::kAll: return true;
  }
  return false;
}

}  // namespace

std::string_view ablation_name(Ablation a) {
  for (const auto& [v, name] : kAblationNames) {
    if (v == a) return name;
  }
  return "?";
}

std::optional<Ablation> parse_ablation(std::string_view s) {
  for (const auto& [v, name] : kAblationNames) {
    if (name == s) {
#ifndef GRACE_WITH_DISTILLATION
      if (v == Ablation::kDistillation) return std::nullopt;
#endif
      return v;
    }
  }
  return std::nullopt;
}

std::vector<Ablation> all_ablations() {
  std::vector<Ablation> out;
  for (const auto& [v, _] : kAblationNames) {
#ifndef GRACE_WITH_DISTILLATION
    if (v == Ablation::kDistillation) continue;
#endif
    out.push_back(v);
  }
  return out;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (holdout_divisor < 2) throw ConfigError("holdout_divisor must be >= 2");
  if (threads == 0) throw ConfigError("threads must be >= 1");
#ifndef GRACE_WITH_DISTILLATION
  if (ablation == Ablation::kDistillation) {
    throw ConfigError("distillation baseline not built (GRACE_WITH_DISTILLATION=OFF)");
  }
#endif
  loss.validate();
  metrics.validate();
}

ResolvedRun resolve_run(const TrainConfig& config, std::span<const ImpressionRecord> dataset,
                        const PretrainedStore* fixture) {
  ResolvedRun run;
  run.loss = config.loss;
  switch (config.ablation) {
    case Ablation::kFull: break;
    case Ablation::kNoConsistency: run.loss.lambda1 = 0.0; break;
    case Ablation::kNoGeneralization: run.loss.lambda2 = 0.0; break;
    case Ablation::kPretrainedIdOnly:
      run.model.segment = IdSegment::kPretrained;
      run.loss.lambda2 = 0.0;
      break;
    case Ablation::kNoHashId: run.model.segment = IdSegment::kNone; break;
    case Ablation::kFeedbackOnly: run.objective = Objective::kFeedbackOnly; break;
    case Ablation::kDistillation: run.objective = Objective::kDistillation; break;
  }

  EmbeddingConfig& emb = run.model.embedding;
  emb = config.embedding;
  for (const auto& r : dataset) {
    emb.n_brands = std::max<std::size_t>(emb.n_brands, r.brand + std::size_t{1});
    emb.n_shops = std::max<std::size_t>(emb.n_shops, r.shop + std::size_t{1});
    emb.n_categories = std::max<std::size_t>(emb.n_categories, r.category + std::size_t{1});
    emb.n_users = std::max<std::size_t>(emb.n_users, r.user_id + std::size_t{1});
    emb.n_queries = std::max<std::size_t>(emb.n_queries, r.query_id + std::size_t{1});
  }

  const std::size_t psi_dim = fixture != nullptr ? fixture->dim() : 0;
  PLEConfig& ple = run.model.ple;
  ple = config.ple;
  ple.user_dim = emb.user_dim;
  ple.query_dim = emb.query_dim;
  ple.item_dim = fused_item_dim(emb, run.model.segment, psi_dim);
  ple.pretrained_dim = psi_dim;
  ple.n_rank_outputs = ple.rank_heads == RankHeads::kPerK ? run.loss.k_list.size() : 1;
  ple.seed = derive_seed(config.seed, kModelStream);
  run.model.embedding_seed = derive_seed(config.seed, kEmbeddingStream);
  return run;
}

GraceModel::GraceModel(const ModelSpec& spec, const PretrainedStore* store)
    : spec_(spec),
      store_(store),
      bank_(spec.embedding, spec.embedding_seed),
      ple_(spec.ple) {
  if (spec.segment == IdSegment::kPretrained && store == nullptr) {
    throw DataError("pretrained id segment requires a pretrained fixture");
  }
  if (spec.ple.pretrained_dim > 0 && store != nullptr &&
      store->dim() != spec.ple.pretrained_dim) {
    throw DataError("fixture dim " + std::to_string(store->dim()) +
                    " differs from model pretrained_dim " +
                    std::to_string(spec.ple.pretrained_dim));
  }
}

GraceModel::Forward GraceModel::forward(Graph& g,
                                        std::span<const ImpressionRecord* const> batch) {
  std::vector<std::uint32_t> users, queries;
  std::vector<ItemFeatures> items;
  users.reserve(batch.size());
  queries.reserve(batch.size());
  items.reserve(batch.size());
  for (const ImpressionRecord* r : batch) {
    users.push_back(r->user_id);
    queries.push_back(r->query_id);
    items.push_back(r->features());
  }
  if (std::any_of(users.begin(), users.end(),
                  [&](std::uint32_t u) { return u >= spec_.embedding.n_users; }) ||
      std::any_of(queries.begin(), queries.end(),
                  [&](std::uint32_t q) { return q >= spec_.embedding.n_queries; })) {
    throw DataError("user or query id outside the model's embedding tables");
  }
  Forward f;
  const NodeId u = bank_.lookup_users(g, users);
  const NodeId q = bank_.lookup_queries(g, queries);
  f.phi = bank_.fuse_items(g, items, spec_.segment, store_);
  f.out = ple_.forward(g, u, q, f.phi);
  return f;
}

std::vector<RecordScore> GraceModel::score(std::span<const ImpressionRecord> records,
                                           std::size_t batch_size, unsigned threads) {
  if (batch_size == 0) throw ShapeError("score: batch_size must be >= 1");
  std::vector<RecordScore> out(records.size());
  const std::size_t n_batches = (records.size() + batch_size - 1) / batch_size;
  auto run = [&](std::size_t worker, std::size_t n_workers) {
    std::vector<const ImpressionRecord*> batch;
    for (std::size_t b = worker; b < n_batches; b += n_workers) {
      const std::size_t begin = b * batch_size;
      const std::size_t end = std::min(records.size(), begin + batch_size);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&records[i]);
      Graph g;
      const Forward f = forward(g, batch);
      const Tensor& ctr = g.value(f.out.ctr_logit);
      const Tensor& cvr = g.value(f.out.cvr_logit);
      for (std::size_t i = begin; i < end; ++i) {
        const std::size_t r = i - begin;
        double rank = 0.0;
        for (NodeId head : f.out.rank_logits) rank += ops::sigmoid(g.value(head)(r, 0));
        out[i] = {ops::sigmoid(ctr(r, 0)), ops::sigmoid(cvr(r, 0)),
                  rank / static_cast<double>(f.out.rank_logits.size())};
      }
    }
  };
  const std::size_t n_workers = std::min<std::size_t>(std::max(threads, 1u), std::max<std::size_t>(n_batches, 1));
  if (n_workers <= 1) {
    run(0, 1);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          run(w, n_workers);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return out;
}

std::vector<Parameter*> GraceModel::parameters() {
  std::vector<Parameter*> params = bank_.parameters();
  for (Parameter* p : ple_.parameters()) params.push_back(p);
  return params;
}

std::vector<NamedTensor> GraceModel::named_tensors() const {
  std::vector<NamedTensor> out = bank_.named_tensors();
  for (auto& t : ple_.named_tensors()) out.push_back(std::move(t));
  return out;
}

void GraceModel::load(std::span<const NamedTensor> tensors) {
  bank_.load(tensors);
  ple_.load(tensors);
}

BatchLoss build_batch_loss(Graph& g, GraceModel& model,
                           std::span<const ImpressionRecord* const> batch,
                           const LossSpec& spec, Objective objective,
                           const PretrainedStore* store, LossWarnings* warnings) {
  if (batch.empty()) throw ShapeError("build_batch_loss: empty batch");
  const GraceModel::Forward f = model.forward(g, batch);
  const std::size_t n = batch.size();
  std::vector<int> clicks(n), orders(n);
  std::vector<std::uint8_t> include(n);
  std::vector<std::optional<int>> positions(n);
  bool any_feedback = false;
  for (std::size_t i = 0; i < n; ++i) {
    clicks[i] = batch[i]->click;
    orders[i] = batch[i]->order;
    include[i] = batch[i]->has_feedback() ? 1 : 0;
    positions[i] = batch[i]->rank_pos;
    any_feedback = any_feedback || include[i] != 0;
  }

  FeedbackLoss fb;
  if (any_feedback) {
    fb = feedback_loss(g, f.out.ctr_logit, f.out.cvr_logit, clicks, orders, include);
  } else {
    fb.ctr = g.constant(Tensor::scalar(0.0));
    fb.cvr = g.constant(Tensor::scalar(0.0));
    fb.feedback = g.constant(Tensor::scalar(0.0));
  }

  BatchLoss out;
  LossBreakdown& b = out.breakdown;
  b.ctr = g.value(fb.ctr).item();
  b.cvr = g.value(fb.cvr).item();
  b.feedback = g.value(fb.feedback).item();

  switch (objective) {
    case Objective::kFeedbackOnly:
      out.total = fb.feedback;
      break;
    case Objective::kGrace: {
      const RankLoss rank = rank_consistency_loss(g, f.out.rank_logits, positions, spec, warnings);
      NodeId cl;
      if (store != nullptr && model.spec().ple.pretrained_dim > 0) {
        std::vector<InfoNceItem> items(n);
        for (std::size_t i = 0; i < n; ++i) {
          items[i] = {batch[i]->item_id, batch[i]->category,
                      is_positive(*batch[i], spec.anchor_positive)};
        }
        cl = infonce_loss(g, model.ple().project(g, f.phi), items, *store, spec, warnings);
      } else {
        cl = g.constant(Tensor::scalar(0.0));
      }
      out.total = g.add(g.add(fb.feedback, g.scale(rank.rank, spec.lambda1)),
                        g.scale(cl, spec.lambda2));
      for (NodeId k : rank.per_k) b.per_k.push_back(g.value(k).item());
      b.rank = g.value(rank.rank).item();
      b.cl = g.value(cl).item();
      break;
    }
    case Objective::kDistillation: {
      std::vector<std::optional<double>> targets(n);
      for (std::size_t i = 0; i < n; ++i) {
        const ImpressionRecord& r = *batch[i];
        if (!r.rank_pos) continue;
        if (spec.distill_target == DistillTarget::kPosition) {
          targets[i] = position_distillation_target(*r.rank_pos);
        } else if (r.teacher_score) {
          targets[i] = ops::sigmoid(*r.teacher_score);
        }
      }
      const NodeId d = distillation_loss(g, f.out.rank_logits.front(), targets, warnings);
      out.total = g.add(fb.feedback, g.scale(d, spec.lambda1));
      b.distill = g.value(d).item();
      break;
    }
  }
  b.total = g.value(out.total).item();
  return out;
}

Split split_by_session(std::span<const ImpressionRecord> dataset, std::size_t divisor) {
  if (divisor == 0) throw ConfigError("holdout divisor must be >= 1");
  std::vector<std::uint64_t> ids;
  ids.reserve(dataset.size() / 64 + 1);
  for (const auto& r : dataset) ids.push_back(r.session_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  Split split;
  if (ids.empty()) return split;
  const std::size_t n_val = std::max<std::size_t>(1, ids.size() / divisor);
  // With a single session everything trains; validation stays empty.
  const std::uint64_t first_val =
      ids.size() > n_val ? ids[ids.size() - n_val] : std::numeric_limits<std::uint64_t>::max();
  for (const auto& r : dataset) {
    (r.session_id >= first_val ? split.validation : split.train).push_back(r);
  }
  return split;
}

EvalReport evaluate_model(GraceModel& model, std::span<const ImpressionRecord> records,
                          std::span<const ImpressionRecord> popularity_source,
                          const MetricConfig& metrics) {
  const auto scores = model.score(records, 1024, metrics.threads);
  return evaluate(records, scores, popularity_from_records(popularity_source), metrics);
}

std::string loss_curve_csv(std::span<const StepLog> steps, std::span<const int> k_list) {
  std::string out = "step,epoch,L_ctr,L_cvr";
  for (int k : k_list) out += ",L_k" + std::to_string(k);
  out += ",L_rank,L_cl,L_distill,L_total\n";
  for (const auto& s : steps) {
    out += std::to_string(s.step) + "," + std::to_string(s.epoch) + "," +
           shortest(s.loss.ctr) + "," + shortest(s.loss.cvr);
    for (std::size_t i = 0; i < k_list.size(); ++i) {
      out += "," + shortest(i < s.loss.per_k.size() ? s.loss.per_k[i] : 0.0);
    }
    out += "," + shortest(s.loss.rank) + "," + shortest(s.loss.cl) + "," +
           shortest(s.loss.distill) + "," + shortest(s.loss.total) + "\n";
  }
  return out;
}

RunArtifacts train(const TrainConfig& config, std::span<const ImpressionRecord> dataset,
                   const PretrainedStore* fixture, const std::filesystem::path& out_dir) {
  config.validate();
  if (dataset.empty()) throw DataError("training dataset is empty");
  const ResolvedRun run = resolve_run(config, dataset, fixture);
  const bool needs_fixture =
      run.model.segment == IdSegment::kPretrained ||
      (run.objective == Objective::kGrace && run.loss.lambda2 > 0.0);
  if (needs_fixture && fixture == nullptr) {
    throw DataError("variant '" + std::string(ablation_name(config.ablation)) +
                    "' needs a pretrained fixture");
  }
  const Split split = split_by_session(dataset, config.holdout_divisor);
  if (split.train.empty()) throw DataError("training split is empty");
  const std::span<const ImpressionRecord> eval_set =
      split.validation.empty() ? std::span<const ImpressionRecord>(split.train)
                               : std::span<const ImpressionRecord>(split.validation);

  GraceModel model(run.model, fixture);
  Adagrad opt(model.parameters(), config.lr);
  MetricConfig metrics = config.metrics;
  metrics.threads = config.threads;
  const Popularity popularity = popularity_from_records(dataset);

  RunArtifacts art;
  std::vector<const ImpressionRecord*> val_batch;
  for (std::size_t i = 0; i < std::min(config.batch_size, eval_set.size()); ++i) {
    val_batch.push_back(&eval_set[i]);
  }
  auto validation_loss = [&] {
    Graph g;
    return build_batch_loss(g, model, val_batch, run.loss, run.objective, fixture).breakdown.total;
  };
  auto eval_point = [&](std::size_t step, std::size_t epoch) {
    const auto scores = model.score(eval_set, 1024, config.threads);
    art.series.push_back({step, epoch, evaluate(eval_set, scores, popularity, metrics)});
  };

  art.validation_batch_loss.push_back(validation_loss());
  eval_point(0, 0);

  std::vector<const ImpressionRecord*> order(split.train.size());
  std::vector<const ImpressionRecord*> batch;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = &split.train[i];
    Rng rng(derive_seed(config.seed, kShuffleStream, epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.uniform_index(i)]);
    }
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      batch.assign(order.begin() + static_cast<std::ptrdiff_t>(begin),
                   order.begin() + static_cast<std::ptrdiff_t>(end));
      Graph g;
      const BatchLoss loss =
          build_batch_loss(g, model, batch, run.loss, run.objective, fixture, &art.warnings);
      if (!std::isfinite(loss.breakdown.total)) {
        throw std::runtime_error("non-finite loss at step " + std::to_string(step + 1));
      }
      g.accumulate_parameter_grads(g.backward(loss.total));
      opt.step();
      ++step;
      art.steps.push_back({step, epoch, loss.breakdown});
      if (config.eval_every > 0 && step % config.eval_every == 0) eval_point(step, epoch);
    }
    art.validation_batch_loss.push_back(validation_loss());
  }
  if (art.series.back().step != step) eval_point(step, config.epochs);
  art.final = art.series.back().report;
  art.parameters = model.named_tensors();

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    art.checkpoint = out_dir / "checkpoint.grck";
    art.loss_curve = out_dir / "loss_curve.csv";
    art.eval_series = out_dir / "eval_series.json";
    art.final_report = out_dir / "report.json";
    write_checkpoint(art.checkpoint, art.parameters);
    write_text(art.loss_curve, loss_curve_csv(art.steps, run.loss.k_list));
    nlohmann::ordered_json series = nlohmann::ordered_json::array();
    for (const auto& p : art.series) {
      series.push_back({{"step", p.step}, {"epoch", p.epoch}, {"report", report_to_json(p.report)}});
    }
    nlohmann::ordered_json series_doc;
    series_doc["validation_batch_loss"] = art.validation_batch_loss;
    series_doc["warnings"] = {{"no_positioned_records", art.warnings.no_positioned_records},
                              {"no_anchors", art.warnings.no_anchors}};
    series_doc["series"] = std::move(series);
    write_text(art.eval_series, series_doc.dump(2) + "\n");
    write_text(art.final_report, report_to_json(art.final).dump(2) + "\n");
    write_text(out_dir / "report.txt", render_report(art.final));
    write_text(out_dir / "report.csv", report_to_csv(art.final));
  }
  return art;
}

std::vector<std::pair<std::string, double>> summary_metrics(const EvalReport& r) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto v = [&](const std::optional<double>& x) { return x.value_or(nan); };
  std::vector<std::pair<std::string, double>> out = {
      {"auc_ctr", v(r.auc_ctr)},
      {"auc_cvr", v(r.auc_cvr)},
      {"head.auc_ctr", v(r.head.auc_ctr)},
      {"tail.auc_ctr", v(r.tail.auc_ctr)},
      {"tail.auc_cvr", v(r.tail.auc_cvr)},
  };
  for (std::size_t kind = 0; kind < kNumScoreKinds; ++kind) {
    const std::string name(score_kind_name(static_cast<ScoreKind>(kind)));
    for (std::size_t i = 0; i < r.recall_k.size(); ++i) {
      const auto& row = r.recall[kind];
      out.emplace_back("recall@" + std::to_string(r.recall_k[i]) + "." + name,
                       i < row.size() ? row[i] : nan);
    }
  }
  return out;
}

std::vector<VariantStats> summarize_runs(std::span<const AblationRun> runs,
                                         std::span<const Ablation> variants) {
  // metric values per (variant, seed) for successful runs
  std::map<std::pair<Ablation, std::uint64_t>, std::vector<std::pair<std::string, double>>> values;
  for (const auto& r : runs) {
    if (r.ok) values[{r.variant, r.seed}] = summary_metrics(r.report);
  }
  std::vector<VariantStats> out;
  for (Ablation v : variants) {
    VariantStats s;
    s.variant = v;
    std::vector<const AblationRun*> mine;
    for (const auto& r : runs) {
      if (r.variant != v) continue;
      ++s.runs;
      if (!r.ok) ++s.failures;
      else mine.push_back(&r);
    }
    if (mine.empty()) {
      out.push_back(std::move(s));
      continue;
    }
    const auto& names = values.at({v, mine.front()->seed});
    for (std::size_t m = 0; m < names.size(); ++m) {
      std::vector<double> xs;
      for (const AblationRun* r : mine) {
        const double x = values.at({v, r->seed})[m].second;
        if (!std::isnan(x)) xs.push_back(x);
      }
      const double nan = std::numeric_limits<double>::quiet_NaN();
      double mean = nan, sd = nan;
      if (!xs.empty()) {
        mean = pairwise_sum(xs) / static_cast<double>(xs.size());
        double ss = 0.0;
        for (double x : xs) ss += (x - mean) * (x - mean);
        sd = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
      }
      s.metrics.emplace_back(names[m].first, mean, sd);

      if (v == Ablation::kFull) continue;
      std::size_t wins = 0, compared = 0;
      for (const AblationRun* r : mine) {
        const auto full = values.find({Ablation::kFull, r->seed});
        if (full == values.end()) continue;
        const double a = full->second[m].second;
        const double b = values.at({v, r->seed})[m].second;
        if (std::isnan(a) || std::isnan(b)) continue;
        ++compared;
        if (a > b) ++wins;
      }
      if (compared > 0) s.full_wins.emplace_back(names[m].first, wins, compared);
    }
    out.push_back(std::move(s));
  }
  return out;
}

AblationTable run_ablation_suite(const TrainConfig& base,
                                 std::span<const ImpressionRecord> dataset,
                                 const PretrainedStore* fixture,
                                 std::span<const std::uint64_t> seeds,
                                 std::span<const Ablation> variants) {
  if (seeds.size() < 3) throw ConfigError("ablation suite needs at least 3 seeds");
  // A repeated variant would retrain identical runs.
  std::vector<Ablation> unique;
  for (Ablation v : variants) {
    if (std::find(unique.begin(), unique.end(), v) == unique.end()) unique.push_back(v);
  }
  AblationTable table;
  table.seeds.assign(seeds.begin(), seeds.end());
  for (std::uint64_t seed : seeds) {
    for (Ablation v : unique) {
      AblationRun run;
      run.variant = v;
      run.seed = seed;
      TrainConfig cfg = base;
      cfg.seed = seed;
      cfg.ablation = v;
      try {
        run.report = train(cfg, dataset, fixture).final;
        run.ok = true;
      } catch (const std::exception& e) {
        run.error = e.what();
      }
      table.runs.push_back(std::move(run));
    }
  }
  table.variants = summarize_runs(table.runs, unique);
  return table;
}

namespace {

nlohmann::ordered_json number_or_null(double x) {
  return std::isnan(x) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(x);
}

}  // namespace

nlohmann::ordered_json ablation_to_json(const AblationTable& t) {
  nlohmann::ordered_json j;
  j["seeds"] = t.seeds;
  nlohmann::ordered_json runs = nlohmann::ordered_json::array();
  for (const auto& r : t.runs) {
    nlohmann::ordered_json jr;
    jr["variant"] = ablation_name(r.variant);
    jr["seed"] = r.seed;
    jr["ok"] = r.ok;
    if (r.ok) jr["report"] = report_to_json(r.report);
    else jr["error"] = r.error;
    runs.push_back(std::move(jr));
  }
  j["runs"] = std::move(runs);
  nlohmann::ordered_json vars = nlohmann::ordered_json::array();
  for (const auto& s : t.variants) {
    nlohmann::ordered_json jv;
    jv["variant"] = ablation_name(s.variant);
    jv["runs"] = s.runs;
    jv["failures"] = s.failures;
    nlohmann::ordered_json m = nlohmann::ordered_json::object();
    for (const auto& [name, mean, sd] : s.metrics) {
      m[name] = {{"mean", number_or_null(mean)}, {"sd", number_or_null(sd)}};
    }
    jv["metrics"] = std::move(m);
    nlohmann::ordered_json w = nlohmann::ordered_json::object();
    for (const auto& [name, wins, compared] : s.full_wins) {
      w[name] = {{"full_wins", wins}, {"compared", compared}};
    }
    jv["full_wins"] = std::move(w);
    vars.push_back(std::move(jv));
  }
  j["variants"] = std::move(vars);
  return j;
}

std::string render_ablation(const AblationTable& t) {
  std::vector<std::string> columns = {"auc_ctr", "auc_cvr", "tail.auc_ctr"};
  std::string headline = "ctr_cvr";
  for (const auto& r : t.runs) {
    if (!r.ok) continue;
    headline = std::string(score_kind_name(r.report.headline));
    for (int k : r.report.recall_k) columns.push_back("recall@" + std::to_string(k) + "." + headline);
    break;
  }
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  std::string out = pad("variant", 20);
  for (const auto& c : columns) out += pad(c, 24);
  out += "\n";
  for (const auto& s : t.variants) {
    out += pad(std::string(ablation_name(s.variant)) +
                   (s.failures ? " (" + std::to_string(s.failures) + " failed)" : ""),
               20);
    for (const auto& c : columns) {
      std::string cell = "n/a";
      for (const auto& [name, mean, sd] : s.metrics) {
        if (name != c || std::isnan(mean)) continue;
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.4f +- %.4f", mean, sd);
        cell = buf;
        for (const auto& [wname, wins, compared] : s.full_wins) {
          if (wname == c) cell += " [" + std::to_string(wins) + "/" + std::to_string(compared) + "]";
        }
      }
      out += pad(cell, 24);
    }
    out += "\n";
  }
  out += "[w/n]: seeds where full beats the variant\n";
  return out;
}

}  // namespace grace
