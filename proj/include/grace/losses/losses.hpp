#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "grace/autodiff/graph.hpp"
#include "grace/embedding/pretrained_store.hpp"

namespace grace {

enum class InfoNceVariant {
  kStandard,  // positive pair in the denominator, self-similarity excluded
  kLiteral,   // denominator sums exp(<phi_i, phi_j>/tau) over every j, i included
};

enum class NegativeScope { kInBatchAll, kCrossCategoryOnly };

// Which records may act as InfoNCE anchors (besides being covered by the
// pretrained store).
enum class AnchorPositive { kClick, kOrder, kClickOrOrder, kAll };

// Soft target of the distillation baseline.
enum class DistillTarget {
  kTeacherScore,  // sigmoid of the logged teacher score
  kPosition,      // 1 / log2(1 + pos)
};

struct LossSpec {
  std::vector<int> k_list = {10, 30, 50, 100};
  std::vector<double> k_weights;  // empty: uniform 1/|K|
  double lambda1 = 0.1;
  double lambda2 = 0.1;
  double tau = 0.1;
  InfoNceVariant infonce_variant = InfoNceVariant::kStandard;
  NegativeScope negative_scope = NegativeScope::kCrossCategoryOnly;
  AnchorPositive anchor_positive = AnchorPositive::kClick;
  bool normalize_phi = true;  // L2-normalise projected phi before dot products
  DistillTarget distill_target = DistillTarget::kTeacherScore;

  // Throws ConfigError unless K is strictly increasing and positive, every
  // w_k > 0, tau > 0 and the lambdas are finite and >= 0.
  void validate() const;
  std::vector<double> weights() const;
};

struct LossBreakdown {
  double ctr = 0.0;
  double cvr = 0.0;
  double feedback = 0.0;
  std::vector<double> per_k;
  double rank = 0.0;
  double cl = 0.0;
  double distill = 0.0;
  double total = 0.0;
};

// Batches of a run that hit a degenerate case and were scored as zero.
struct LossWarnings {
  std::size_t no_positioned_records = 0;
  std::size_t no_anchors = 0;
};

// -[y log p + (1-y) log(1-p)]
double bce(double p, int y);
// Same loss from the logit, computed as softplus(z) - y z.
double bce_logit(double z, double y);

// 1 iff pos <= k. Throws ShapeError for pos < 1.
int topk_label(int pos, int k);

struct FeedbackLoss {
  NodeId ctr;
  NodeId cvr;
  NodeId feedback;  // ctr + cvr
};

// Mean BCE per task over the rows with include[i] set (all rows when
// include is empty). Throws ShapeError when no row is included.
FeedbackLoss feedback_loss(Graph& g, NodeId ctr_logit, NodeId cvr_logit,
                           std::span<const int> clicks,
                           std::span<const int> orders,
                           std::span<const std::uint8_t> include = {});

struct RankLoss {
  std::vector<NodeId> per_k;
  NodeId rank;
};

// L_k is the mean BCE of the rank head against topk_label(pos, k) over rows
// that carry a position; L_rank = sum_k w_k L_k. `rank_logits` holds either
// one shared head or one head per k.
RankLoss rank_consistency_loss(Graph& g, std::span<const NodeId> rank_logits,
                               std::span<const std::optional<int>> positions,
                               const LossSpec& spec,
                               LossWarnings* warnings = nullptr);

struct InfoNceItem {
  std::uint64_t item_id = 0;
  std::uint32_t category = 0;
  bool positive = false;  // eligible as anchor
};

// Contrastive alignment of projected item vectors `phi` (one row per batch
// item) to the pretrained vectors. Summed over anchors.
NodeId infonce_loss(Graph& g, NodeId phi, std::span<const InfoNceItem> items,
                    const PretrainedStore& store, const LossSpec& spec,
                    LossWarnings* warnings = nullptr);

// 1 / log2(1 + pos). Throws ShapeError for pos < 1.
double position_distillation_target(int pos);

// Mean soft-label BCE of the rank head over rows with a target in [0, 1].
// Throws ShapeError for a target outside [0, 1].
NodeId distillation_loss(Graph& g, NodeId rank_logit,
                         std::span<const std::optional<double>> targets,
                         LossWarnings* warnings = nullptr);

// L_total = L_feedback + lambda1 L_rank + lambda2 L_cl, evaluated in that
// order so the graph node and the breakdown agree bit for bit.
LossBreakdown total_loss(double ctr, double cvr, std::vector<double> per_k,
                         double rank, double cl, const LossSpec& spec);

}  // namespace grace
