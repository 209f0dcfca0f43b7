#include "grace/metrics/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <thread>

#include "grace/error.hpp"

namespace grace {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw ShapeError("auc: " + std::to_string(scores.size()) + " scores vs " +
                     std::to_string(labels.size()) + " labels");
  }
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) throw ShapeError("auc: NaN score");
    if (labels[i] != 0 && labels[i] != 1) throw ShapeError("auc: labels must be 0 or 1");
    n_pos += static_cast<std::size_t>(labels[i]);
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw MetricError("auc: undefined without both positive and negative labels");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of 1-based average ranks of the positives. Ranks are half-integers,
  // so the sum is exact for any realistic n.
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t group_pos = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      group_pos += static_cast<std::size_t>(labels[order[j]]);
      ++j;
    }
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    pos_rank_sum += avg_rank * static_cast<double>(group_pos);
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double u = pos_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

double recall_at_k(std::span<const double> scores,
                   std::span<const int> positions,
                   std::span<const std::uint64_t> item_ids, std::size_t k) {
  const std::size_t n = scores.size();
  if (positions.size() != n || item_ids.size() != n) {
    throw ShapeError("recall_at_k: scores, positions and item ids differ in length");
  }
  if (k == 0 || k > n) {
    throw MetricError("recall_at_k: k=" + std::to_string(k) +
                      " outside [1, " + std::to_string(n) + "]");
  }
  for (double s : scores) {
    if (std::isnan(s)) throw ShapeError("recall_at_k: NaN score");
  }

  std::vector<std::size_t> by_score(n);
  std::iota(by_score.begin(), by_score.end(), 0);
  std::vector<std::size_t> by_teacher = by_score;
  auto head = [&](std::vector<std::size_t>& idx, auto before) {
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k),
                      idx.end(), before);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
  };
  head(by_score, [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return item_ids[a] < item_ids[b];
  });
  head(by_teacher, [&](std::size_t a, std::size_t b) {
    if (positions[a] != positions[b]) return positions[a] < positions[b];
    return item_ids[a] < item_ids[b];
  });

  std::vector<std::size_t> common;
  std::set_intersection(by_score.begin(), by_score.end(), by_teacher.begin(),
                        by_teacher.end(), std::back_inserter(common));
  return static_cast<double>(common.size()) / static_cast<double>(k);
}

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

Popularity popularity_from_records(std::span<const ImpressionRecord> records) {
  std::unordered_map<std::uint64_t, std::size_t> counts;
  for (const auto& r : records) ++counts[r.item_id];
  Popularity pop;
  pop.count_order.reserve(counts.size());
  for (const auto& [item, _] : counts) pop.count_order.push_back(item);
  std::sort(pop.count_order.begin(), pop.count_order.end(),
            [&](std::uint64_t a, std::uint64_t b) {
              const std::size_t ca = counts.at(a), cb = counts.at(b);
              return ca != cb ? ca > cb : a < b;
            });
  pop.rank.reserve(pop.count_order.size());
  for (std::size_t i = 0; i < pop.count_order.size(); ++i) {
    pop.rank.emplace(pop.count_order[i], i);
  }
  return pop;
}

LongtailSlices slice_longtail(std::span<const ImpressionRecord> records,
                              const Popularity& popularity,
                              double head_fraction) {
  if (!(head_fraction > 0.0 && head_fraction < 1.0)) {
    throw ConfigError("head_fraction must lie in (0, 1)");
  }
  const auto n_items = static_cast<double>(popularity.count_order.size());
  const auto cutoff = static_cast<std::size_t>(std::ceil(head_fraction * n_items));
  LongtailSlices slices;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto it = popularity.rank.find(records[i].item_id);
    const bool head = it != popularity.rank.end() && it->second < cutoff;
    (head ? slices.head : slices.tail).push_back(i);
  }
  return slices;
}

std::string_view score_kind_name(ScoreKind k) {
  switch (k) {
    case ScoreKind::kCtrCvr: return "ctr_cvr";
    case ScoreKind::kCtr: return "ctr";
    case ScoreKind::kRank: return "rank";
  }
  return "?";
}

std::optional<ScoreKind> parse_score_kind(std::string_view s) {
  for (std::size_t i = 0; i < kNumScoreKinds; ++i) {
    if (score_kind_name(static_cast<ScoreKind>(i)) == s) return static_cast<ScoreKind>(i);
  }
  return std::nullopt;
}

double RecordScore::get(ScoreKind kind) const {
  switch (kind) {
    case ScoreKind::kCtrCvr: return ctr * cvr;
    case ScoreKind::kCtr: return ctr;
    case ScoreKind::kRank: return rank;
  }
  return 0.0;
}

void MetricConfig::validate() const {
  if (recall_k.empty()) throw ConfigError("metric recall_k must not be empty");
  for (int k : recall_k) {
    if (k < 1) throw ConfigError("metric recall_k values must be >= 1");
  }
  if (!(head_fraction > 0.0 && head_fraction < 1.0)) {
    throw ConfigError("metric head_fraction must lie in (0, 1)");
  }
  if (threads == 0) throw ConfigError("metric threads must be >= 1");
}

double EvalReport::headline_recall(int k) const {
  const auto it = std::find(recall_k.begin(), recall_k.end(), k);
  const auto& row = recall[static_cast<std::size_t>(headline)];
  if (it == recall_k.end() || row.empty()) {
    throw MetricError("report has no recall@" + std::to_string(k));
  }
  return row[static_cast<std::size_t>(it - recall_k.begin())];
}

namespace {

bool auc_eligible(const ImpressionRecord& r, const MetricConfig& config) {
  return r.source == Source::kDisplayed ||
         (config.auc_include_random_negatives && r.source == Source::kRandomNegative);
}

std::optional<double> try_auc(std::span<const double> scores, std::span<const int> labels) {
  try {
    return auc(scores, labels);
  } catch (const MetricError&) {
    return std::nullopt;
  }
}

// AUC of both tasks over the eligible subset of `indices`.
void fill_auc(std::span<const ImpressionRecord> records,
              std::span<const RecordScore> scores,
              std::span<const std::size_t> indices, const MetricConfig& config,
              std::size_t& count, std::optional<double>& auc_ctr,
              std::optional<double>& auc_cvr) {
  std::vector<double> ctr, cvr;
  std::vector<int> clicks, orders;
  for (std::size_t i : indices) {
    if (!auc_eligible(records[i], config)) continue;
    ctr.push_back(scores[i].ctr);
    cvr.push_back(scores[i].cvr);
    clicks.push_back(records[i].click);
    orders.push_back(records[i].order);
  }
  count = ctr.size();
  auc_ctr = try_auc(ctr, clicks);
  auc_cvr = try_auc(cvr, orders);
}

}  // namespace

EvalReport evaluate(std::span<const ImpressionRecord> records,
                    std::span<const RecordScore> scores,
                    const Popularity& popularity, const MetricConfig& config) {
  config.validate();
  if (records.size() != scores.size()) {
    throw ShapeError("evaluate: " + std::to_string(records.size()) + " records vs " +
                     std::to_string(scores.size()) + " scores");
  }
  EvalReport report;
  report.records = records.size();
  report.recall_k = config.recall_k;
  report.headline = config.headline;
  report.head_fraction = config.head_fraction;

  std::vector<std::size_t> all(records.size());
  std::iota(all.begin(), all.end(), 0);
  fill_auc(records, scores, all, config, report.auc_records, report.auc_ctr,
           report.auc_cvr);

  std::map<std::uint64_t, std::vector<std::size_t>> by_session;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].rank_pos) by_session[records[i].session_id].push_back(i);
  }
  std::vector<const std::vector<std::size_t>*> sessions;
  sessions.reserve(by_session.size());
  for (const auto& [_, idx] : by_session) sessions.push_back(&idx);
  report.sessions = sessions.size();

  const std::size_t nk = config.recall_k.size();
  const std::size_t width = kNumScoreKinds * nk;
  // per_session[s * width + kind * nk + i]
  std::vector<double> per_session(sessions.size() * width);
  auto run_shard = [&](std::size_t begin, std::size_t end) {
    std::vector<double> s;
    std::vector<int> pos;
    std::vector<std::uint64_t> ids;
    for (std::size_t si = begin; si < end; ++si) {
      const auto& idx = *sessions[si];
      pos.clear();
      ids.clear();
      for (std::size_t i : idx) {
        pos.push_back(*records[i].rank_pos);
        ids.push_back(records[i].item_id);
      }
      for (std::size_t kind = 0; kind < kNumScoreKinds; ++kind) {
        s.clear();
        for (std::size_t i : idx) s.push_back(scores[i].get(static_cast<ScoreKind>(kind)));
        for (std::size_t ki = 0; ki < nk; ++ki) {
          per_session[si * width + kind * nk + ki] =
              recall_at_k(s, pos, ids, static_cast<std::size_t>(config.recall_k[ki]));
        }
      }
    }
  };
  const std::size_t n_threads =
      std::min<std::size_t>(config.threads, std::max<std::size_t>(sessions.size(), 1));
  if (n_threads <= 1) {
    run_shard(0, sessions.size());
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(n_threads);
    const std::size_t chunk = (sessions.size() + n_threads - 1) / n_threads;
    for (std::size_t t = 0; t < n_threads; ++t) {
      const std::size_t b = std::min(sessions.size(), t * chunk);
      const std::size_t e = std::min(sessions.size(), b + chunk);
      pool.emplace_back([&, t, b, e] {
        try {
          run_shard(b, e);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& err : errors) {
      if (err) std::rethrow_exception(err);
    }
  }

  if (!sessions.empty()) {
    std::vector<double> column(sessions.size());
    for (std::size_t kind = 0; kind < kNumScoreKinds; ++kind) {
      auto& row = report.recall[kind];
      row.resize(nk);
      for (std::size_t ki = 0; ki < nk; ++ki) {
        for (std::size_t si = 0; si < sessions.size(); ++si) {
          column[si] = per_session[si * width + kind * nk + ki];
        }
        row[ki] = pairwise_sum(column) / static_cast<double>(sessions.size());
      }
    }
  }

  const LongtailSlices slices = slice_longtail(records, popularity, config.head_fraction);
  report.head.records = slices.head.size();
  report.tail.records = slices.tail.size();
  fill_auc(records, scores, slices.head, config, report.head.auc_records,
           report.head.auc_ctr, report.head.auc_cvr);
  fill_auc(records, scores, slices.tail, config, report.tail.auc_records,
           report.tail.auc_ctr, report.tail.auc_cvr);
  return report;
}

namespace {

nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::optional<double> optional_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

nlohmann::ordered_json slice_json(const SliceMetrics& s) {
  nlohmann::ordered_json j;
  j["records"] = s.records;
  j["auc_records"] = s.auc_records;
  j["auc_ctr"] = optional_json(s.auc_ctr);
  j["auc_cvr"] = optional_json(s.auc_cvr);
  return j;
}

SliceMetrics slice_from(const nlohmann::json& j) {
  SliceMetrics s;
  s.records = j.at("records").get<std::size_t>();
  s.auc_records = j.at("auc_records").get<std::size_t>();
  s.auc_ctr = optional_from(j.at("auc_ctr"));
  s.auc_cvr = optional_from(j.at("auc_cvr"));
  return s;
}

std::string fixed4(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace

nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["records"] = r.records;
  j["sessions"] = r.sessions;
  j["auc_records"] = r.auc_records;
  j["auc_ctr"] = optional_json(r.auc_ctr);
  j["auc_cvr"] = optional_json(r.auc_cvr);
  j["headline"] = score_kind_name(r.headline);
  j["recall_k"] = r.recall_k;
  nlohmann::ordered_json recall = nlohmann::ordered_json::object();
  for (std::size_t kind = 0; kind < kNumScoreKinds; ++kind) {
    recall[std::string(score_kind_name(static_cast<ScoreKind>(kind)))] = r.recall[kind];
  }
  j["recall"] = recall;
  j["longtail"] = {{"head_fraction", r.head_fraction},
                   {"head", slice_json(r.head)},
                   {"tail", slice_json(r.tail)}};
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.records = j.at("records").get<std::size_t>();
    r.sessions = j.at("sessions").get<std::size_t>();
    r.auc_records = j.at("auc_records").get<std::size_t>();
    r.auc_ctr = optional_from(j.at("auc_ctr"));
    r.auc_cvr = optional_from(j.at("auc_cvr"));
    const auto headline = parse_score_kind(j.at("headline").get<std::string>());
    if (!headline) throw DataError("report: unknown headline score kind");
    r.headline = *headline;
    r.recall_k = j.at("recall_k").get<std::vector<int>>();
    for (std::size_t kind = 0; kind < kNumScoreKinds; ++kind) {
      r.recall[kind] = j.at("recall")
                           .at(std::string(score_kind_name(static_cast<ScoreKind>(kind))))
                           .get<std::vector<double>>();
    }
    const auto& lt = j.at("longtail");
    r.head_fraction = lt.at("head_fraction").get<double>();
    r.head = slice_from(lt.at("head"));
    r.tail = slice_from(lt.at("tail"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report: ") + e.what());
  }
}

std::string render_report(const EvalReport& r) {
  std::string out;
  out += "records " + std::to_string(r.records) + ", sessions " +
         std::to_string(r.sessions) + ", auc records " +
         std::to_string(r.auc_records) + "\n";
  out += "AUC ctr " + fixed4(r.auc_ctr) + "  cvr " + fixed4(r.auc_cvr) + "\n\n";

  out += pad("score", 10);
  for (int k : r.recall_k) out += pad("R@" + std::to_string(k), 9);
  out += "\n";
  for (std::size_t kind = 0; kind < kNumScoreKinds; ++kind) {
    std::string name(score_kind_name(static_cast<ScoreKind>(kind)));
    if (static_cast<ScoreKind>(kind) == r.headline) name += "*";
    out += pad(name, 10);
    for (std::size_t i = 0; i < r.recall_k.size(); ++i) {
      const auto& row = r.recall[kind];
      out += pad(i < row.size() ? fixed4(row[i]) : "n/a", 9);
    }
    out += "\n";
  }

  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", r.head_fraction);
  out += "\nlong tail (head fraction " + std::string(buf) + ")\n";
  out += pad("slice", 8) + pad("records", 10) + pad("auc_rec", 10) +
         pad("auc_ctr", 9) + "auc_cvr\n";
  for (const auto& [name, s] : {std::pair{"head", &r.head}, std::pair{"tail", &r.tail}}) {
    out += pad(name, 8) + pad(std::to_string(s->records), 10) +
           pad(std::to_string(s->auc_records), 10) + pad(fixed4(s->auc_ctr), 9) +
           fixed4(s->auc_cvr) + "\n";
  }
  return out;
}

std::string report_to_csv(const EvalReport& r) {
  std::string out = "metric,value\n";
  auto row = [&](const std::string& name, const std::string& value) {
    out += name + "," + value + "\n";
  };
  auto opt = [](const std::optional<double>& v) { return v ? shortest(*v) : std::string(); };
  row("records", std::to_string(r.records));
  row("sessions", std::to_string(r.sessions));
  row("auc_records", std::to_string(r.auc_records));
  row("auc_ctr", opt(r.auc_ctr));
  row("auc_cvr", opt(r.auc_cvr));
  for (std::size_t kind = 0; kind < kNumScoreKinds; ++kind) {
    const std::string name(score_kind_name(static_cast<ScoreKind>(kind)));
    for (std::size_t i = 0; i < r.recall[kind].size() && i < r.recall_k.size(); ++i) {
      row("recall@" + std::to_string(r.recall_k[i]) + "." + name, shortest(r.recall[kind][i]));
    }
  }
  row("head_fraction", shortest(r.head_fraction));
  for (const auto& [name, s] : {std::pair{"head", &r.head}, std::pair{"tail", &r.tail}}) {
    const std::string p = std::string(name) + ".";
    row(p + "records", std::to_string(s->records));
    row(p + "auc_records", std::to_string(s->auc_records));
    row(p + "auc_ctr", opt(s->auc_ctr));
    row(p + "auc_cvr", opt(s->auc_cvr));
  }
  return out;
}

}  // namespace grace
