#include "grace/losses/losses.hpp"

#include <cmath>
#include <string>

#include "grace/autodiff/ops.hpp"
#include "grace/error.hpp"

namespace grace {

void LossSpec::validate() const {
  if (k_list.empty()) throw ConfigError("loss: K must not be empty");
  for (std::size_t i = 0; i < k_list.size(); ++i) {
    if (k_list[i] < 1) throw ConfigError("loss: every k must be >= 1");
    if (i > 0 && k_list[i] <= k_list[i - 1]) {
      throw ConfigError("loss: K must be strictly increasing");
    }
  }
  if (!k_weights.empty()) {
    if (k_weights.size() != k_list.size()) {
      throw ConfigError("loss: need one weight per k");
    }
    for (double w : k_weights) {
      if (!(w > 0.0) || !std::isfinite(w)) throw ConfigError("loss: w_k must be > 0");
    }
  }
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("loss: tau must be > 0");
  if (!(lambda1 >= 0.0) || !std::isfinite(lambda1) || !(lambda2 >= 0.0) ||
      !std::isfinite(lambda2)) {
    throw ConfigError("loss: lambdas must be finite and >= 0");
  }
}

std::vector<double> LossSpec::weights() const {
  if (!k_weights.empty()) return k_weights;
  return std::vector<double>(k_list.size(), 1.0 / static_cast<double>(k_list.size()));
}

double bce(double p, int y) {
  return -(y * std::log(p) + (1 - y) * std::log(1.0 - p));
}

double bce_logit(double z, double y) { return ops::softplus(z) - y * z; }

int topk_label(int pos, int k) {
  if (pos < 1) throw ShapeError("topk_label: position must be >= 1, got " + std::to_string(pos));
  return pos <= k ? 1 : 0;
}

namespace {

Tensor column(std::span<const double> v) {
  return Tensor(v.size(), 1, std::vector<double>(v.begin(), v.end()));
}

void require_rows(const Graph& g, NodeId n, std::size_t rows, const char* what) {
  if (g.value(n).rows() != rows || g.value(n).cols() != 1) {
    throw ShapeError(std::string(what) + ": expected (" + std::to_string(rows) +
                     "x1) logits, got " + g.value(n).shape_string());
  }
}

// Mean of bce(logit, target) over rows with weight > 0.
NodeId masked_mean_bce(Graph& g, NodeId logit, std::span<const double> targets,
                       std::span<const std::uint8_t> include) {
  const std::size_t n = targets.size();
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) count += include.empty() || include[i];
  if (count == 0) throw ShapeError("loss: batch has no included rows");
  Tensor w(n, 1);
  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t i = 0; i < n; ++i) {
    if (include.empty() || include[i]) w[i] = inv;
  }
  return g.weighted_sum(g.bce_with_logits(logit, column(targets)), std::move(w));
}

}  // namespace

FeedbackLoss feedback_loss(Graph& g, NodeId ctr_logit, NodeId cvr_logit,
                           std::span<const int> clicks,
                           std::span<const int> orders,
                           std::span<const std::uint8_t> include) {
  const std::size_t n = clicks.size();
  if (n == 0) throw ShapeError("feedback_loss: empty batch");
  if (orders.size() != n || (!include.empty() && include.size() != n)) {
    throw ShapeError("feedback_loss: label vectors differ in length");
  }
  require_rows(g, ctr_logit, n, "feedback_loss");
  require_rows(g, cvr_logit, n, "feedback_loss");
  std::vector<double> yc(clicks.begin(), clicks.end());
  std::vector<double> yo(orders.begin(), orders.end());
  FeedbackLoss out{};
  out.ctr = masked_mean_bce(g, ctr_logit, yc, include);
  out.cvr = masked_mean_bce(g, cvr_logit, yo, include);
  out.feedback = g.add(out.ctr, out.cvr);
  return out;
}

RankLoss rank_consistency_loss(Graph& g, std::span<const NodeId> rank_logits,
                               std::span<const std::optional<int>> positions,
                               const LossSpec& spec, LossWarnings* warnings) {
  const std::size_t n = positions.size();
  const auto& ks = spec.k_list;
  if (rank_logits.size() != 1 && rank_logits.size() != ks.size()) {
    throw ShapeError("rank_consistency_loss: need 1 or |K| rank heads, got " +
                     std::to_string(rank_logits.size()));
  }
  for (NodeId z : rank_logits) require_rows(g, z, n, "rank_consistency_loss");

  std::vector<std::uint8_t> has_pos(n);
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    has_pos[i] = positions[i].has_value();
    count += has_pos[i];
    if (positions[i] && *positions[i] < 1) {
      throw ShapeError("rank_consistency_loss: position must be >= 1");
    }
  }

  RankLoss out{};
  if (count == 0) {
    if (warnings != nullptr) ++warnings->no_positioned_records;
    for (std::size_t k = 0; k < ks.size(); ++k) {
      out.per_k.push_back(g.constant(Tensor::scalar(0.0)));
    }
    out.rank = g.constant(Tensor::scalar(0.0));
    return out;
  }

  const auto w = spec.weights();
  std::vector<double> labels(n);
  for (std::size_t k = 0; k < ks.size(); ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = has_pos[i] ? topk_label(*positions[i], ks[k]) : 0.0;
    }
    const NodeId logit = rank_logits.size() == 1 ? rank_logits[0] : rank_logits[k];
    out.per_k.push_back(masked_mean_bce(g, logit, labels, has_pos));
    const NodeId term = g.scale(out.per_k.back(), w[k]);
    out.rank = k == 0 ? term : g.add(out.rank, term);
  }
  return out;
}

NodeId infonce_loss(Graph& g, NodeId phi, std::span<const InfoNceItem> items,
                    const PretrainedStore& store, const LossSpec& spec,
                    LossWarnings* warnings) {
  const Tensor& raw = g.value(phi);
  const std::size_t n = items.size();
  if (raw.rows() != n) {
    throw ShapeError("infonce_loss: " + std::to_string(n) + " items but phi is " +
                     raw.shape_string());
  }
  if (raw.cols() != store.dim()) {
    throw ShapeError("infonce_loss: phi width " + std::to_string(raw.cols()) +
                     " differs from pretrained dim " + std::to_string(store.dim()));
  }

  std::vector<std::size_t> anchors;
  for (std::size_t i = 0; i < n; ++i) {
    if (items[i].positive && store.contains(items[i].item_id)) anchors.push_back(i);
  }
  if (anchors.empty()) {
    if (warnings != nullptr) ++warnings->no_anchors;
    return g.constant(Tensor::scalar(0.0));
  }

  const std::size_t na = anchors.size();
  const NodeId phi_n = spec.normalize_phi ? g.l2_normalize_rows(phi) : phi;
  Tensor psi(na, store.dim());
  for (std::size_t a = 0; a < na; ++a) {
    const auto v = *store.lookup(items[anchors[a]].item_id);
    std::copy(v.begin(), v.end(), psi.row(a).begin());
  }
  const NodeId phi_a = g.gather_rows(phi_n, anchors);
  const NodeId pos = g.dot_rows(phi_a, g.constant(std::move(psi)));
  const NodeId sims = g.matmul(phi_a, g.transpose(phi_n));
  const double inv_tau = 1.0 / spec.tau;

  NodeId logits;
  Tensor mask;
  if (spec.infonce_variant == InfoNceVariant::kStandard) {
    logits = g.scale(g.concat_cols({pos, sims}), inv_tau);
    mask = Tensor(na, n + 1);
    for (std::size_t a = 0; a < na; ++a) {
      const std::size_t i = anchors[a];
      mask(a, 0) = 1.0;
      for (std::size_t j = 0; j < n; ++j) {
        const bool in_scope = spec.negative_scope == NegativeScope::kInBatchAll ||
                              items[j].category != items[i].category;
        if (j != i && in_scope) mask(a, j + 1) = 1.0;
      }
    }
  } else {
    logits = g.scale(sims, inv_tau);
    mask = Tensor(na, n, 1.0);
  }
  const NodeId lse = g.logsumexp_rows(logits, std::move(mask));
  return g.sum(g.sub(lse, g.scale(pos, inv_tau)));
}

double position_distillation_target(int pos) {
  if (pos < 1) throw ShapeError("position_distillation_target: position must be >= 1");
  return 1.0 / std::log2(1.0 + pos);
}

NodeId distillation_loss(Graph& g, NodeId rank_logit,
                         std::span<const std::optional<double>> targets,
                         LossWarnings* warnings) {
  const std::size_t n = targets.size();
  require_rows(g, rank_logit, n, "distillation_loss");
  std::vector<std::uint8_t> has_pos(n);
  std::vector<double> soft(n, 0.0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i]) {
      if (!(*targets[i] >= 0.0 && *targets[i] <= 1.0)) {
        throw ShapeError("distillation_loss: target outside [0, 1]");
      }
      has_pos[i] = 1;
      soft[i] = *targets[i];
      ++count;
    }
  }
  if (count == 0) {
    if (warnings != nullptr) ++warnings->no_positioned_records;
    return g.constant(Tensor::scalar(0.0));
  }
  return masked_mean_bce(g, rank_logit, soft, has_pos);
}

LossBreakdown total_loss(double ctr, double cvr, std::vector<double> per_k,
                         double rank, double cl, const LossSpec& spec) {
  LossBreakdown b;
  b.ctr = ctr;
  b.cvr = cvr;
  b.feedback = ctr + cvr;
  b.per_k = std::move(per_k);
  b.rank = rank;
  b.cl = cl;
  b.total = b.feedback + spec.lambda1 * rank + spec.lambda2 * cl;
  return b;
}

}  // namespace grace
