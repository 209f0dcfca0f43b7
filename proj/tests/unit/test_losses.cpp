#include <doctest.h>

#include <cmath>
#include <optional>

#include "fd_check.hpp"
#include "grace/error.hpp"
#include "grace/losses/losses.hpp"
#include "grace/rng.hpp"

using namespace grace;

namespace {

// Scalar-loop reference implementations, written from the loss definitions
// without sharing code with the library.

double ref_bce(double z, double y) {
  const double p = 1.0 / (1.0 + std::exp(-z));
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

double ref_mean_bce(const std::vector<double>& z, const std::vector<int>& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += ref_bce(z[i], y[i]);
  return s / static_cast<double>(z.size());
}

double ref_rank(const std::vector<double>& z, const std::vector<std::optional<int>>& pos,
                const std::vector<int>& ks, const std::vector<double>& w,
                std::vector<double>* per_k) {
  double total = 0.0;
  for (std::size_t k = 0; k < ks.size(); ++k) {
    double s = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (!pos[i]) continue;
      s += ref_bce(z[i], *pos[i] <= ks[k] ? 1.0 : 0.0);
      ++n;
    }
    const double lk = s / n;
    if (per_k) per_k->push_back(lk);
    total += w[k] * lk;
  }
  return total;
}

using Rows = std::vector<std::vector<double>>;

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> unit(std::vector<double> v) {
  const double n = std::sqrt(dot(v, v) + 1e-12);
  for (double& x : v) x /= n;
  return v;
}

double ref_infonce(Rows phi, const std::vector<InfoNceItem>& items,
                   const PretrainedStore& store, const LossSpec& spec) {
  if (spec.normalize_phi) {
    for (auto& r : phi) r = unit(r);
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto psi = store.lookup(items[i].item_id);
    if (!items[i].positive || !psi) continue;
    const std::vector<double> p(psi->begin(), psi->end());
    const double num = std::exp(dot(phi[i], p) / spec.tau);
    double den = 0.0;
    if (spec.infonce_variant == InfoNceVariant::kStandard) {
      den = num;
      for (std::size_t j = 0; j < items.size(); ++j) {
        if (j == i) continue;
        if (spec.negative_scope == NegativeScope::kCrossCategoryOnly &&
            items[j].category == items[i].category) {
          continue;
        }
        den += std::exp(dot(phi[i], phi[j]) / spec.tau);
      }
    } else {
      for (std::size_t j = 0; j < items.size(); ++j) {
        den += std::exp(dot(phi[i], phi[j]) / spec.tau);
      }
    }
    loss += -std::log(num / den);
  }
  return loss;
}

Tensor column(const std::vector<double>& v) { return Tensor(v.size(), 1, v); }

Tensor to_tensor(const Rows& rows) {
  Tensor t(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) t(r, c) = rows[r][c];
  }
  return t;
}

double infonce_value(const Rows& phi, const std::vector<InfoNceItem>& items,
                     const PretrainedStore& store, const LossSpec& spec,
                     LossWarnings* w = nullptr) {
  Graph g;
  return g.value(infonce_loss(g, g.constant(to_tensor(phi)), items, store, spec, w)).item();
}

}  // namespace

TEST_CASE("bce unit values") {
  CHECK(std::abs(bce(0.5, 1) - std::log(2.0)) <= 1e-9);
  CHECK(std::abs(bce(0.5, 0) - std::log(2.0)) <= 1e-9);
  CHECK(std::abs(bce(0.9, 1) - 0.1053605156578263) <= 1e-9);
  CHECK(std::abs(bce_logit(0.0, 1.0) - std::log(2.0)) <= 1e-12);
  for (double z : {-30.0, -2.5, 0.0, 1.0, 7.0, 40.0}) {
    for (int y : {0, 1}) {
      CHECK(bce_logit(z, y) >= 0.0);
      if (std::abs(z) < 20) CHECK(std::abs(bce_logit(z, y) - ref_bce(z, y)) <= 1e-12);
    }
  }
  CHECK(std::isfinite(bce_logit(-800.0, 1.0)));
  CHECK(bce_logit(-800.0, 1.0) == doctest::Approx(800.0));
}

TEST_CASE("topk_label truth table and monotonicity") {
  CHECK(topk_label(5, 10) == 1);
  CHECK(topk_label(10, 10) == 1);
  CHECK(topk_label(11, 10) == 0);
  CHECK_THROWS_AS(topk_label(0, 10), ShapeError);
  const std::vector<int> ks = {10, 30, 50, 100};
  for (int pos = 1; pos <= 200; ++pos) {
    for (std::size_t a = 0; a < ks.size(); ++a) {
      CHECK(topk_label(pos, ks[a]) == (pos <= ks[a] ? 1 : 0));
      for (std::size_t b = a; b < ks.size(); ++b) {
        CHECK(topk_label(pos, ks[a]) <= topk_label(pos, ks[b]));
      }
    }
  }
}

TEST_CASE("loss spec validation and default weights") {
  LossSpec s;
  CHECK(s.weights() == std::vector<double>(4, 0.25));
  CHECK(s.lambda1 == 0.1);
  CHECK(s.lambda2 == 0.1);
  CHECK(s.tau == 0.1);
  CHECK_NOTHROW(s.validate());
  s.k_list = {10, 10};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = LossSpec{};
  s.k_weights = {1, 1, 0, 1};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = LossSpec{};
  s.k_weights = {1, 1};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = LossSpec{};
  s.tau = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = LossSpec{};
  s.lambda2 = -0.1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("feedback loss examples") {
  Graph g;
  const NodeId z = g.constant(Tensor(3, 1, 0.0));
  const std::vector<int> clicks = {1, 0, 1}, orders = {0, 0, 1};
  const auto fb = feedback_loss(g, z, z, clicks, orders);
  CHECK(std::abs(g.value(fb.feedback).item() - 2.0 * std::log(2.0)) <= 1e-12);
  CHECK(g.value(fb.feedback).item() == g.value(fb.ctr).item() + g.value(fb.cvr).item());

  Graph h;
  const NodeId c1 = h.constant(Tensor::scalar(1.3)), v1 = h.constant(Tensor::scalar(-0.4));
  const std::vector<int> one = {1}, zero = {0};
  const auto single = feedback_loss(h, c1, v1, one, zero);
  CHECK(h.value(single.feedback).item() == doctest::Approx(bce_logit(1.3, 1) + bce_logit(-0.4, 0)).epsilon(1e-14));

  Graph e;
  const NodeId ez = e.constant(Tensor(0, 1));
  CHECK_THROWS_AS(feedback_loss(e, ez, ez, {}, {}), ShapeError);
  const NodeId two = e.constant(Tensor(2, 1));
  const std::uint8_t none[] = {0, 0};
  const std::vector<int> ys = {0, 1};
  CHECK_THROWS_AS(feedback_loss(e, two, two, ys, ys, none), ShapeError);
}

TEST_CASE("feedback loss matches the scalar oracle and honours the mask") {
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    Rng rng(derive_seed(3, trial));
    const std::size_t n = 1 + rng.uniform_index(64);
    std::vector<double> zc(n), zv(n);
    std::vector<int> yc(n), yv(n);
    std::vector<std::uint8_t> mask(n);
    for (std::size_t i = 0; i < n; ++i) {
      zc[i] = rng.uniform(-4, 4);
      zv[i] = rng.uniform(-4, 4);
      yc[i] = rng.bernoulli(0.3);
      yv[i] = yc[i] && rng.bernoulli(0.5);
      mask[i] = rng.bernoulli(0.8);
    }
    mask[0] = 1;
    Graph g;
    const auto fb = feedback_loss(g, g.constant(column(zc)), g.constant(column(zv)), yc, yv);
    CHECK(std::abs(g.value(fb.ctr).item() - ref_mean_bce(zc, yc)) < 1e-12);
    CHECK(std::abs(g.value(fb.cvr).item() - ref_mean_bce(zv, yv)) < 1e-12);

    std::vector<double> mzc, mzv;
    std::vector<int> myc, myv;
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask[i]) continue;
      mzc.push_back(zc[i]);
      mzv.push_back(zv[i]);
      myc.push_back(yc[i]);
      myv.push_back(yv[i]);
    }
    Graph h;
    const auto m = feedback_loss(h, h.constant(column(zc)), h.constant(column(zv)), yc, yv, mask);
    CHECK(std::abs(h.value(m.ctr).item() - ref_mean_bce(mzc, myc)) < 1e-12);
    CHECK(std::abs(h.value(m.cvr).item() - ref_mean_bce(mzv, myv)) < 1e-12);
    CHECK(h.value(m.ctr).item() >= 0.0);
  }
}

TEST_CASE("rank consistency examples") {
  LossSpec spec;
  spec.k_weights = {1.0, 2.0, 0.5, 0.5};
  const std::vector<std::optional<int>> pos = {1, 3, 10, std::nullopt};
  Graph g;
  const NodeId z = g.constant(Tensor(4, 1, 0.0));
  const NodeId heads[] = {z};
  const auto r = rank_consistency_loss(g, heads, pos, spec);
  for (NodeId k : r.per_k) CHECK(std::abs(g.value(k).item() - std::log(2.0)) <= 1e-12);
  CHECK(std::abs(g.value(r.rank).item() - 4.0 * std::log(2.0)) <= 1e-12);

  LossSpec one;
  one.k_list = {10};
  const std::vector<std::optional<int>> p11 = {11};
  Graph h;
  const NodeId z0 = h.constant(Tensor::scalar(0.0));
  const NodeId head0[] = {z0};
  const auto r11 = rank_consistency_loss(h, head0, p11, one);
  CHECK(std::abs(h.value(r11.rank).item() - std::log(2.0)) <= 1e-12);
  // Label 0: pushing the logit down must lower the loss.
  Graph h2;
  const NodeId zm = h2.constant(Tensor::scalar(-1.0));
  const NodeId headm[] = {zm};
  CHECK(h2.value(rank_consistency_loss(h2, headm, p11, one).rank).item() < std::log(2.0));
}

TEST_CASE("rank consistency with no positions warns and is zero") {
  LossSpec spec;
  LossWarnings w;
  const std::vector<std::optional<int>> pos = {std::nullopt, std::nullopt};
  Graph g;
  const NodeId z = g.constant(Tensor(2, 1, 3.0));
  const NodeId heads[] = {z};
  const auto r = rank_consistency_loss(g, heads, pos, spec, &w);
  CHECK(g.value(r.rank).item() == 0.0);
  CHECK(w.no_positioned_records == 1);
  const std::vector<std::optional<int>> bad = {0, 1};
  CHECK_THROWS_AS(rank_consistency_loss(g, heads, bad, spec), ShapeError);
}

TEST_CASE("rank consistency matches the scalar oracle") {
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    Rng rng(derive_seed(4, trial));
    const std::size_t n = 1 + rng.uniform_index(64);
    LossSpec spec;
    spec.k_weights = {rng.uniform(0.1, 1), rng.uniform(0.1, 1), rng.uniform(0.1, 1),
                      rng.uniform(0.1, 1)};
    std::vector<double> z(n);
    std::vector<std::optional<int>> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      z[i] = rng.uniform(-3, 3);
      if (i == 0 || rng.bernoulli(0.85)) pos[i] = 1 + static_cast<int>(rng.uniform_index(150));
    }
    Graph g;
    const NodeId zn = g.constant(column(z));
    const NodeId heads[] = {zn};
    const auto r = rank_consistency_loss(g, heads, pos, spec);
    std::vector<double> per_k;
    const double ref = ref_rank(z, pos, spec.k_list, spec.k_weights, &per_k);
    CHECK(std::abs(g.value(r.rank).item() - ref) < 1e-12);
    for (std::size_t k = 0; k < per_k.size(); ++k) {
      CHECK(std::abs(g.value(r.per_k[k]).item() - per_k[k]) < 1e-12);
      CHECK(g.value(r.per_k[k]).item() >= 0.0);
    }
  }
}

TEST_CASE("per-k heads pair head k with label k") {
  LossSpec spec;
  spec.k_list = {2, 5};
  const std::vector<std::optional<int>> pos = {1, 4, 7};
  const std::vector<double> z0 = {0.3, -1.0, 2.0}, z1 = {-0.5, 0.7, 1.1};
  Graph g;
  const NodeId heads[] = {g.constant(column(z0)), g.constant(column(z1))};
  const auto r = rank_consistency_loss(g, heads, pos, spec);
  const double l0 = (ref_bce(0.3, 1) + ref_bce(-1.0, 0) + ref_bce(2.0, 0)) / 3;
  const double l1 = (ref_bce(-0.5, 1) + ref_bce(0.7, 1) + ref_bce(1.1, 0)) / 3;
  CHECK(std::abs(g.value(r.per_k[0]).item() - l0) < 1e-12);
  CHECK(std::abs(g.value(r.per_k[1]).item() - l1) < 1e-12);
  const NodeId three[] = {heads[0], heads[1], heads[0]};
  CHECK_THROWS_AS(rank_consistency_loss(g, three, pos, spec), ShapeError);
}

TEST_CASE("infonce worked examples") {
  LossSpec spec;
  spec.negative_scope = NegativeScope::kInBatchAll;
  PretrainedStore store(2);
  store.insert(1, {1.0, 0.0});

  // Perfect alignment, no negatives.
  const std::vector<InfoNceItem> alone = {{1, 0, true}};
  CHECK(std::abs(infonce_value({{1.0, 0.0}}, alone, store, spec)) <= 1e-9);

  // phi orthogonal to psi, one negative orthogonal to phi, tau = 1.
  spec.tau = 1.0;
  store.insert(1, {0.0, 1.0});
  const std::vector<InfoNceItem> pair = {{1, 0, true}, {2, 1, false}};
  CHECK(std::abs(infonce_value({{1.0, 0.0}, {0.0, 1.0}}, pair, store, spec) - std::log(2.0)) <= 1e-9);
}

TEST_CASE("infonce anchors and scopes") {
  LossSpec spec;
  PretrainedStore store(2);
  store.insert(1, {1.0, 0.0});
  store.insert(2, {0.0, 1.0});
  LossWarnings w;
  // Positives outside the store and stored non-positives are not anchors.
  const std::vector<InfoNceItem> none = {{3, 0, true}, {1, 0, false}};
  CHECK(infonce_value({{1, 0}, {0, 1}}, none, store, spec, &w) == 0.0);
  CHECK(w.no_anchors == 1);

  // Same-category negatives are ignored under cross-category scope.
  const std::vector<InfoNceItem> same = {{1, 4, true}, {2, 4, false}};
  CHECK(std::abs(infonce_value({{1, 0}, {1, 0}}, same, store, spec)) <= 1e-9);
  spec.negative_scope = NegativeScope::kInBatchAll;
  // The negative matches the anchor exactly: -log(e^10 / (e^10 + e^10)).
  CHECK(std::abs(infonce_value({{1, 0}, {1, 0}}, same, store, spec) - std::log(2.0)) <= 1e-9);
}

TEST_CASE("infonce matches the scalar oracle for both variants") {
  for (std::uint64_t trial = 0; trial < 60; ++trial) {
    Rng rng(derive_seed(5, trial));
    const std::size_t n = 1 + rng.uniform_index(64);
    const std::size_t d = 2 + rng.uniform_index(5);
    PretrainedStore store(d);
    Rows phi(n, std::vector<double>(d));
    std::vector<InfoNceItem> items(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (double& v : phi[i]) v = rng.normal();
      items[i] = {rng.uniform_index(40), static_cast<std::uint32_t>(rng.uniform_index(4)),
                  rng.bernoulli(0.6)};
    }
    for (std::uint64_t id = 0; id < 40; ++id) {
      if (!rng.bernoulli(0.7)) continue;
      std::vector<double> v(d);
      for (double& x : v) x = rng.normal();
      store.insert(id, v);
    }
    for (auto variant : {InfoNceVariant::kStandard, InfoNceVariant::kLiteral}) {
      for (auto scope : {NegativeScope::kCrossCategoryOnly, NegativeScope::kInBatchAll}) {
        for (bool normalize : {true, false}) {
          LossSpec spec;
          spec.infonce_variant = variant;
          spec.negative_scope = scope;
          spec.normalize_phi = normalize;
          spec.tau = normalize ? 0.1 : 1.0;
          const double got = infonce_value(phi, items, store, spec);
          const double ref = ref_infonce(phi, items, store, spec);
          CHECK(std::abs(got - ref) <= 1e-10 * std::max(1.0, std::abs(ref)));
          if (variant == InfoNceVariant::kStandard) CHECK(got >= 0.0);
        }
      }
    }
  }
}

TEST_CASE("infonce gradient matches finite differences") {
  Rng rng(12);
  PretrainedStore store(3);
  for (std::uint64_t id = 0; id < 6; ++id) store.insert(id, {rng.normal(), rng.normal(), rng.normal()});
  Tensor init(6, 3);
  for (double& v : init.values()) v = rng.normal();
  Parameter phi("phi", init);
  const std::vector<InfoNceItem> items = {{0, 0, true}, {1, 1, false}, {2, 0, true},
                                          {3, 2, true}, {7, 1, true},  {4, 1, false}};
  for (auto variant : {InfoNceVariant::kStandard, InfoNceVariant::kLiteral}) {
    LossSpec spec;
    spec.infonce_variant = variant;
    Parameter* ps[] = {&phi};
    const auto r = test::fd_check(ps, [&](Graph& g) {
      return infonce_loss(g, g.parameter(phi), items, store, spec);
    });
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("distillation target and loss") {
  CHECK(position_distillation_target(1) == 1.0);
  CHECK(position_distillation_target(3) == 0.5);
  CHECK_THROWS_AS(position_distillation_target(0), ShapeError);
  const std::vector<std::optional<double>> t = {1.0, 0.25, std::nullopt};
  Graph g;
  const NodeId z = g.constant(column({0.2, -0.1, 5.0}));
  const double ref = (bce_logit(0.2, 1.0) + bce_logit(-0.1, 0.25)) / 2;
  CHECK(std::abs(g.value(distillation_loss(g, z, t)).item() - ref) < 1e-12);
  const std::vector<std::optional<double>> none(3);
  LossWarnings w;
  CHECK(g.value(distillation_loss(g, z, none, &w)).item() == 0.0);
  CHECK(w.no_positioned_records == 1);
  const std::vector<std::optional<double>> bad = {1.5, std::nullopt, std::nullopt};
  CHECK_THROWS_AS(distillation_loss(g, z, bad), ShapeError);
}

TEST_CASE("total loss examples") {
  LossSpec spec;
  CHECK(total_loss(0.4, 0.6, {}, 2.0, 3.0, spec).total == doctest::Approx(1.5).epsilon(1e-15));
  const auto b = total_loss(0.25, 0.75, {0.1}, 0.0, 0.0, spec);
  CHECK(b.total == b.feedback);
  CHECK(b.feedback == 1.0);
  spec.lambda1 = spec.lambda2 = 0.0;
  const auto z = total_loss(0.3, 0.2, {}, 123.0, 456.0, spec);
  CHECK(z.total == z.feedback);
  CHECK(z.feedback == 0.3 + 0.2);
}

TEST_CASE("duplicating every record leaves mean losses unchanged") {
  Rng rng(14);
  const std::size_t n = 17;
  std::vector<double> z(n);
  std::vector<int> y(n);
  std::vector<std::optional<int>> pos(n);
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = rng.uniform(-3, 3);
    y[i] = rng.bernoulli(0.4);
    if (rng.bernoulli(0.8)) pos[i] = 1 + static_cast<int>(rng.uniform_index(120));
  }
  pos[0] = 4;
  auto dup = [](auto v) {
    auto out = v;
    out.insert(out.end(), v.begin(), v.end());
    return out;
  };
  LossSpec spec;
  auto eval = [&](const std::vector<double>& zz, const std::vector<int>& yy,
                  const std::vector<std::optional<int>>& pp) {
    Graph g;
    const NodeId zn = g.constant(column(zz));
    const auto fb = feedback_loss(g, zn, zn, yy, yy);
    const NodeId heads[] = {zn};
    const auto rk = rank_consistency_loss(g, heads, pp, spec);
    return std::pair{g.value(fb.feedback).item(), g.value(rk.rank).item()};
  };
  const auto a = eval(z, y, pos);
  const auto b = eval(dup(z), dup(y), dup(pos));
  CHECK(std::abs(a.first - b.first) <= 1e-12);
  CHECK(std::abs(a.second - b.second) <= 1e-12);
}
