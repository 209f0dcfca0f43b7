#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fd_check.hpp"
#include "grace/autodiff/init.hpp"
#include "grace/error.hpp"
#include "grace/model/ple.hpp"
#include "grace/rng.hpp"

using namespace grace;

namespace {

PLEConfig small() {
  PLEConfig c;
  c.user_dim = 2;
  c.query_dim = 2;
  c.item_dim = 5;
  c.pretrained_dim = 3;
  c.n_shared_experts = 2;
  c.n_task_experts = 2;
  c.expert_hidden = {4, 3};
  c.n_extraction_layers = 2;
  c.tower_hidden = {4, 3};
  return c;
}

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c) {
  Tensor t(r, c);
  for (double& v : t.values()) v = rng.uniform(-1.5, 1.5);
  return t;
}

struct Inputs {
  Tensor user, query, item;
};

Inputs random_inputs(const PLEConfig& c, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return {random_tensor(rng, n, c.user_dim), random_tensor(rng, n, c.query_dim),
          random_tensor(rng, n, c.item_dim)};
}

struct Probs {
  Tensor ctr, cvr, rank;
};

Probs predict(PLEParams& p, const Inputs& in) {
  Graph g;
  const auto out = p.forward(g, g.constant(in.user), g.constant(in.query), g.constant(in.item));
  return {g.value(g.sigmoid(out.ctr_logit)), g.value(g.sigmoid(out.cvr_logit)),
          g.value(g.sigmoid(out.rank_logits.front()))};
}

Inputs rows_of(const Inputs& in, std::vector<std::size_t> rows) {
  return {ops::gather_rows(in.user, rows), ops::gather_rows(in.query, rows),
          ops::gather_rows(in.item, rows)};
}

}  // namespace

TEST_CASE("init is a pure function of the seed") {
  auto c = small();
  PLEParams a = init_params(c), b = init_params(c);
  CHECK(a.named_tensors() == b.named_tensors());
  c.seed = 2;
  PLEParams d = init_params(c);
  CHECK_FALSE(a.named_tensors() == d.named_tensors());
}

TEST_CASE("init weights lie inside the xavier bound and biases are zero") {
  PLEParams p = init_params(small());
  std::size_t weights = 0;
  for (const NamedTensor& nt : p.named_tensors()) {
    const double a = std::sqrt(6.0 / static_cast<double>(nt.tensor.rows() + nt.tensor.cols()));
    if (nt.name.ends_with(".b")) {
      CHECK(nt.tensor == Tensor(nt.tensor.rows(), nt.tensor.cols(), 0.0));
      continue;
    }
    ++weights;
    CHECK(xavier_bound(nt.tensor) == a);
    for (double v : nt.tensor.values()) {
      CHECK(v > -a);
      CHECK(v < a);
    }
  }
  CHECK(weights > 0);
}

TEST_CASE("config validation") {
  auto c = small();
  c.n_shared_experts = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small();
  c.expert_hidden.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small();
  c.n_rank_outputs = 4;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.rank_heads = RankHeads::kPerK;
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("zero towers give 0.5 on every task") {
  PLEParams p = init_params(small());
  for (Parameter* q : p.parameters()) {
    if (q->name.starts_with("ple.tower.")) q->value.fill(0.0);
  }
  const Probs out = predict(p, random_inputs(small(), 6, 1));
  for (const Tensor* t : {&out.ctr, &out.cvr, &out.rank}) {
    CHECK(*t == Tensor(6, 1, 0.5));
  }
}

TEST_CASE("outputs are strictly inside (0,1)") {
  PLEParams p = init_params(small());
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Probs out = predict(p, random_inputs(small(), 16, s));
    for (const Tensor* t : {&out.ctr, &out.cvr, &out.rank}) {
      for (double v : t->values()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
      }
    }
  }
}

TEST_CASE("input width mismatch is an error") {
  PLEParams p = init_params(small());
  Graph g;
  const NodeId u = g.constant(Tensor(2, 2)), q = g.constant(Tensor(2, 2));
  CHECK_THROWS_AS(p.forward(g, u, q, g.constant(Tensor(2, 4))), ShapeError);
}

TEST_CASE("gates are softmax rows over shared and owned experts only") {
  auto c = small();
  PLEParams p = init_params(c);
  CHECK(p.experts_per_layer() == 2 + 3 * 2);
  CHECK(p.gate_experts(Task::kCtr) == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(p.gate_experts(Task::kCvr) == std::vector<std::size_t>{0, 1, 4, 5});
  CHECK(p.gate_experts(Task::kRank) == std::vector<std::size_t>{0, 1, 6, 7});

  const Inputs in = random_inputs(c, 9, 4);
  Graph g;
  const auto out = p.forward(g, g.constant(in.user), g.constant(in.query), g.constant(in.item));
  for (NodeId gate : out.gates) {
    const Tensor& w = g.value(gate);
    CHECK(w.cols() == 4);
    for (std::size_t r = 0; r < w.rows(); ++r) {
      double s = 0.0;
      for (double v : w.row(r)) s += v;
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("a task's output ignores experts owned by other tasks") {
  auto c = small();
  c.n_extraction_layers = 1;
  PLEParams p = init_params(c);
  const Inputs in = random_inputs(c, 5, 6);
  Graph g;
  const auto out = p.forward(g, g.constant(in.user), g.constant(in.query), g.constant(in.item));
  const NodeId loss = g.sum(out.ctr_logit);
  g.accumulate_parameter_grads(g.backward(loss));
  std::size_t own_nonzero = 0;
  for (Parameter* q : p.parameters()) {
    const bool foreign = q->name.find(".expert.cvr") != std::string::npos ||
                         q->name.find(".expert.rank") != std::string::npos ||
                         q->name.find(".gate.cvr") != std::string::npos ||
                         q->name.find(".gate.rank") != std::string::npos;
    const bool any = std::any_of(q->grad.values().begin(), q->grad.values().end(),
                                 [](double v) { return v != 0.0; });
    if (foreign) CHECK_MESSAGE(!any, q->name);
    if (q->name.find(".expert.ctr") != std::string::npos && any) ++own_nonzero;
  }
  CHECK(own_nonzero > 0);
}

TEST_CASE("per-k rank heads") {
  auto c = small();
  c.rank_heads = RankHeads::kPerK;
  c.n_rank_outputs = 4;
  PLEParams p = init_params(c);
  const Inputs in = random_inputs(c, 3, 2);
  Graph g;
  const auto out = p.forward(g, g.constant(in.user), g.constant(in.query), g.constant(in.item));
  REQUIRE(out.rank_logits.size() == 4);
  for (NodeId r : out.rank_logits) CHECK(g.value(r).cols() == 1);
}

TEST_CASE("parameter gradients match finite differences") {
  auto c = small();
  PLEParams p = init_params(c);
  const Inputs in = random_inputs(c, 4, 8);
  Rng rng(2);
  Tensor targets(4, 1);
  for (double& v : targets.values()) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
  Tensor proj_w(4, 3);
  for (double& v : proj_w.values()) v = rng.uniform(-1, 1);
  const auto params = p.parameters();
  const auto r = test::fd_check(params, [&](Graph& g) {
    const NodeId item = g.constant(in.item);
    const auto out = p.forward(g, g.constant(in.user), g.constant(in.query), item);
    NodeId l = g.mean(g.bce_with_logits(out.ctr_logit, targets));
    l = g.add(l, g.mean(g.bce_with_logits(out.cvr_logit, targets)));
    l = g.add(l, g.mean(g.bce_with_logits(out.rank_logits.front(), targets)));
    return g.add(l, g.weighted_sum(p.project(g, item), proj_w));
  });
  CHECK(r.checked > 0);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("batching is row independent and order preserving") {
  auto c = small();
  PLEParams p = init_params(c);
  const Inputs in = random_inputs(c, 12, 10);
  const Probs all = predict(p, in);
  for (std::size_t i = 0; i < 12; ++i) {
    const Probs one = predict(p, rows_of(in, {i}));
    CHECK(one.ctr.item() == all.ctr(i, 0));
    CHECK(one.cvr.item() == all.cvr(i, 0));
    CHECK(one.rank.item() == all.rank(i, 0));
  }
  std::vector<std::size_t> perm = {5, 11, 0, 3, 3, 7, 1, 2, 10, 9, 8, 6, 4};
  const Probs permuted = predict(p, rows_of(in, perm));
  for (std::size_t i = 0; i < perm.size(); ++i) {
    CHECK(permuted.ctr(i, 0) == all.ctr(perm[i], 0));
    CHECK(permuted.rank(i, 0) == all.rank(perm[i], 0));
  }
}

TEST_CASE("checkpointed params reproduce scores") {
  auto c = small();
  PLEParams a = init_params(c);
  c.seed = 77;
  PLEParams b = init_params(c);
  const Inputs in = random_inputs(c, 7, 3);
  b.load(a.named_tensors());
  CHECK(predict(a, in).ctr == predict(b, in).ctr);
  CHECK(predict(a, in).rank == predict(b, in).rank);
  CHECK(predict(a, in).cvr == predict(a, in).cvr);
}
