#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "grace/datagen/records.hpp"

namespace grace {

// Mann-Whitney AUC with average ranks for ties. Throws MetricError unless
// both classes are present, ShapeError on length mismatch or NaN scores.
double auc(std::span<const double> scores, std::span<const int> labels);

// |top-k by score ∩ top-k by teacher position| / k for one session. Score
// ties, and position ties, are broken by item id ascending. Throws
// MetricError when k is 0 or exceeds the session size.
double recall_at_k(std::span<const double> scores,
                   std::span<const int> positions,
                   std::span<const std::uint64_t> item_ids, std::size_t k);

// Summation over a fixed binary tree: the result depends only on the order
// of `values`, never on how callers sharded the work.
double pairwise_sum(std::span<const double> values);

// Item -> rank by number of logged records, 0 = most frequent; ties by item
// id ascending.
struct Popularity {
  std::unordered_map<std::uint64_t, std::size_t> rank;
  std::vector<std::uint64_t> count_order;  // item ids, most frequent first
};
Popularity popularity_from_records(std::span<const ImpressionRecord> records);

struct LongtailSlices {
  std::vector<std::size_t> head;  // indices into the record span
  std::vector<std::size_t> tail;
};

// Head items are the ceil(head_fraction * n_items) most popular; every other
// record (including items popularity has never seen) is tail. Throws
// ConfigError unless 0 < head_fraction < 1.
LongtailSlices slice_longtail(std::span<const ImpressionRecord> records,
                              const Popularity& popularity,
                              double head_fraction);

enum class ScoreKind : std::size_t { kCtrCvr = 0, kCtr = 1, kRank = 2 };
inline constexpr std::size_t kNumScoreKinds = 3;
std::string_view score_kind_name(ScoreKind k);
std::optional<ScoreKind> parse_score_kind(std::string_view s);

// Model outputs for one record.
struct RecordScore {
  double ctr = 0.0;   // probability
  double cvr = 0.0;   // probability
  double rank = 0.0;  // any score increasing in predicted rank relevance

  double get(ScoreKind kind) const;
};

struct MetricConfig {
  std::vector<int> recall_k = {3, 5, 10, 20, 50};
  ScoreKind headline = ScoreKind::kCtrCvr;
  bool auc_include_random_negatives = false;
  double head_fraction = 0.2;
  unsigned threads = 1;

  void validate() const;
};

struct SliceMetrics {
  std::size_t records = 0;
  std::size_t auc_records = 0;
  std::optional<double> auc_ctr;  // empty when undefined on the slice
  std::optional<double> auc_cvr;

  bool operator==(const SliceMetrics&) const = default;
};

struct EvalReport {
  std::size_t records = 0;
  std::size_t sessions = 0;  // sessions with positioned candidates
  std::size_t auc_records = 0;
  std::optional<double> auc_ctr;
  std::optional<double> auc_cvr;
  std::vector<int> recall_k;
  ScoreKind headline = ScoreKind::kCtrCvr;
  // recall[kind][i] is mean session recall@recall_k[i] under that score.
  std::array<std::vector<double>, kNumScoreKinds> recall;
  double head_fraction = 0.2;
  SliceMetrics head;
  SliceMetrics tail;

  double headline_recall(int k) const;

  bool operator==(const EvalReport&) const = default;
};

// `scores` is aligned with `records`. Recall is averaged over sessions in
// ascending session id; AUC uses displayed records (plus random negatives
// when configured). Popularity for slicing is supplied by the caller.
EvalReport evaluate(std::span<const ImpressionRecord> records,
                    std::span<const RecordScore> scores,
                    const Popularity& popularity, const MetricConfig& config);

nlohmann::ordered_json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);
std::string render_report(const EvalReport& report);
// One "metric,value" row per scalar.
std::string report_to_csv(const EvalReport& report);

}  // namespace grace
