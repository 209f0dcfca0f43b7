#include "grace/autodiff/graph.hpp"

#include <cmath>
#include <string>

#include "grace/error.hpp"

namespace grace {

NodeId Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

void Graph::check(NodeId id) const {
  if (id >= nodes_.size()) {
    throw ShapeError("graph: node " + std::to_string(id) + " does not exist");
  }
}

const Tensor& Graph::value(NodeId id) const {
  check(id);
  const Node& n = nodes_[id];
  return n.param != nullptr ? n.param->value : n.value;
}

NodeId Graph::constant(Tensor value) {
  Node n{.op = Op::kConstant};
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Graph::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
    return it->second;
  }
  Node n{.op = Op::kParameter};
  n.param = &p;
  const NodeId id = push(std::move(n));
  param_nodes_.emplace(&p, id);
  return id;
}

#define GRACE_UNARY(method, kind, kernel)                   \
  NodeId Graph::method(NodeId a) {                          \
    Node n{.op = Op::kind, .inputs = {a}};                  \
    n.value = ops::kernel(value(a));                        \
    return push(std::move(n));                              \
  }

#define GRACE_BINARY(method, kind, kernel)                  \
  NodeId Graph::method(NodeId a, NodeId b) {                \
    Node n{.op = Op::kind, .inputs = {a, b}};               \
    n.value = ops::kernel(value(a), value(b));              \
    return push(std::move(n));                              \
  }

GRACE_BINARY(matmul, kMatMul, matmul)
GRACE_BINARY(add, kAdd, add)
GRACE_BINARY(add_row, kAddRow, add_row)
GRACE_BINARY(sub, kSub, sub)
GRACE_BINARY(mul, kMul, mul)
GRACE_BINARY(dot_rows, kDotRows, dot_rows)
GRACE_BINARY(scale_rows, kScaleRows, scale_rows)
GRACE_UNARY(transpose, kTranspose, transpose)
GRACE_UNARY(relu, kRelu, relu)
GRACE_UNARY(sigmoid, kSigmoid, sigmoid)
GRACE_UNARY(softplus, kSoftplus, softplus)
GRACE_UNARY(log, kLog, log)
GRACE_UNARY(exp, kExp, exp)
GRACE_UNARY(softmax_rows, kSoftmaxRows, softmax_rows)
GRACE_UNARY(mean, kMean, mean)
GRACE_UNARY(sum, kSum, sum)
GRACE_UNARY(l2_normalize_rows, kL2NormalizeRows, l2_normalize_rows)

#undef GRACE_UNARY
#undef GRACE_BINARY

NodeId Graph::concat_cols(std::span<const NodeId> parts) {
  std::vector<const Tensor*> values;
  values.reserve(parts.size());
  for (NodeId p : parts) values.push_back(&value(p));
  Node n{.op = Op::kConcatCols, .inputs = {parts.begin(), parts.end()}};
  n.value = ops::concat_cols(values);
  return push(std::move(n));
}

NodeId Graph::slice_cols(NodeId a, std::size_t begin, std::size_t end) {
  Node n{.op = Op::kSliceCols, .inputs = {a}};
  n.value = ops::slice_cols(value(a), begin, end);
  n.begin = begin;
  return push(std::move(n));
}

NodeId Graph::logsumexp_rows(NodeId a, Tensor mask) {
  Node n{.op = Op::kLogSumExpRows, .inputs = {a}};
  n.value = ops::logsumexp_rows(value(a), mask);
  n.aux = std::move(mask);
  return push(std::move(n));
}

NodeId Graph::weighted_sum(NodeId a, Tensor weights) {
  Node n{.op = Op::kWeightedSum, .inputs = {a}};
  n.value = ops::weighted_sum(value(a), weights);
  n.aux = std::move(weights);
  return push(std::move(n));
}

NodeId Graph::scale(NodeId a, double s) {
  Node n{.op = Op::kScale, .inputs = {a}};
  n.value = ops::scale(value(a), s);
  n.scalar = s;
  return push(std::move(n));
}

NodeId Graph::gather_rows(NodeId a, std::vector<std::size_t> rows) {
  Node n{.op = Op::kGatherRows, .inputs = {a}};
  n.value = ops::gather_rows(value(a), rows);
  n.index = std::move(rows);
  return push(std::move(n));
}

NodeId Graph::bce_with_logits(NodeId logits, Tensor targets) {
  Node n{.op = Op::kBceWithLogits, .inputs = {logits}};
  n.value = ops::bce_with_logits(value(logits), targets);
  n.aux = std::move(targets);
  return push(std::move(n));
}

NodeId Graph::apply(Op kind, std::span<const NodeId> inputs, double scalar) {
  std::vector<const Tensor*> values;
  for (NodeId id : inputs) values.push_back(&value(id));
  Node n{.op = kind, .inputs = {inputs.begin(), inputs.end()}};
  n.value = forward_op(kind, values, scalar);
  n.scalar = scalar;
  return push(std::move(n));
}

namespace {

void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

}  // namespace

Gradients Graph::backward(NodeId loss) const {
  check(loss);
  if (value(loss).rows() != 1 || value(loss).cols() != 1) {
    throw ShapeError("backward: loss node must be 1x1, got " +
                     value(loss).shape_string());
  }

  std::vector<Tensor> adj(nodes_.size());
  auto grad_of = [&](NodeId id) -> Tensor& {
    if (adj[id].empty() && value(id).size() != 0) {
      adj[id] = Tensor(value(id).rows(), value(id).cols());
    }
    return adj[id];
  };
  grad_of(loss)[0] = 1.0;

  for (NodeId id = loss + 1; id-- > 0;) {
    if (adj[id].empty()) continue;
    const Node& n = nodes_[id];
    const Tensor& g = adj[id];
    const Tensor& y = n.value;

    switch (n.op) {
      case Op::kConstant:
      case Op::kParameter:
        break;

      case Op::kMatMul: {
        const Tensor& a = value(n.inputs[0]);
        const Tensor& b = value(n.inputs[1]);
        Tensor& da = grad_of(n.inputs[0]);
        Tensor& db = grad_of(n.inputs[1]);
        const Tensor bt = ops::transpose(b);
        ops::matmul_backward(a.values().data(), bt.values().data(), g.values().data(),
                             da.values().data(), db.values().data(), a.rows(),
                             a.cols(), b.cols());
        break;
      }

      case Op::kAdd:
        add_into(grad_of(n.inputs[0]), g);
        add_into(grad_of(n.inputs[1]), g);
        break;

      case Op::kAddRow: {
        add_into(grad_of(n.inputs[0]), g);
        Tensor& db = grad_of(n.inputs[1]);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          for (std::size_t c = 0; c < g.cols(); ++c) db(0, c) += g(r, c);
        }
        break;
      }

      case Op::kSub: {
        add_into(grad_of(n.inputs[0]), g);
        Tensor& db = grad_of(n.inputs[1]);
        for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
        break;
      }

      case Op::kMul: {
        const Tensor& a = value(n.inputs[0]);
        const Tensor& b = value(n.inputs[1]);
        Tensor& da = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * b[i];
        Tensor& db = grad_of(n.inputs[1]);
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * a[i];
        break;
      }

      case Op::kConcatCols: {
        std::size_t offset = 0;
        for (NodeId in : n.inputs) {
          const std::size_t w = value(in).cols();
          Tensor& d = grad_of(in);
          for (std::size_t r = 0; r < g.rows(); ++r) {
            for (std::size_t c = 0; c < w; ++c) d(r, c) += g(r, offset + c);
          }
          offset += w;
        }
        break;
      }

      case Op::kSliceCols: {
        Tensor& d = grad_of(n.inputs[0]);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          for (std::size_t c = 0; c < g.cols(); ++c) d(r, n.begin + c) += g(r, c);
        }
        break;
      }

      case Op::kTranspose: {
        Tensor& d = grad_of(n.inputs[0]);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          for (std::size_t c = 0; c < g.cols(); ++c) d(c, r) += g(r, c);
        }
        break;
      }

      case Op::kRelu: {
        const Tensor& x = value(n.inputs[0]);
        Tensor& d = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (x[i] > 0.0) d[i] += g[i];
        }
        break;
      }

      case Op::kSigmoid: {
        Tensor& d = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) {
          d[i] += g[i] * y[i] * (1.0 - y[i]);
        }
        break;
      }

      case Op::kSoftplus: {
        const Tensor& x = value(n.inputs[0]);
        Tensor& d = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) {
          d[i] += g[i] * ops::sigmoid(x[i]);
        }
        break;
      }

      case Op::kLog: {
        const Tensor& x = value(n.inputs[0]);
        Tensor& d = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] / x[i];
        break;
      }

      case Op::kExp: {
        Tensor& d = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * y[i];
        break;
      }

      case Op::kSoftmaxRows: {
        Tensor& d = grad_of(n.inputs[0]);
        for (std::size_t r = 0; r < y.rows(); ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
          for (std::size_t c = 0; c < y.cols(); ++c) {
            d(r, c) += y(r, c) * (g(r, c) - dot);
          }
        }
        break;
      }

      case Op::kLogSumExpRows: {
        const Tensor& x = value(n.inputs[0]);
        Tensor& d = grad_of(n.inputs[0]);
        for (std::size_t r = 0; r < x.rows(); ++r) {
          for (std::size_t c = 0; c < x.cols(); ++c) {
            if (n.aux(r, c) != 0.0) {
              d(r, c) += g(r, 0) * std::exp(x(r, c) - y(r, 0));
            }
          }
        }
        break;
      }

      case Op::kMean: {
        Tensor& d = grad_of(n.inputs[0]);
        const double s = g[0] / static_cast<double>(d.size());
        for (double& v : d.values()) v += s;
        break;
      }

      case Op::kSum: {
        Tensor& d = grad_of(n.inputs[0]);
        for (double& v : d.values()) v += g[0];
        break;
      }

      case Op::kWeightedSum: {
        Tensor& d = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[0] * n.aux[i];
        break;
      }

      case Op::kDotRows: {
        const Tensor& a = value(n.inputs[0]);
        const Tensor& b = value(n.inputs[1]);
        Tensor& da = grad_of(n.inputs[0]);
        Tensor& db = grad_of(n.inputs[1]);
        for (std::size_t r = 0; r < a.rows(); ++r) {
          const double gr = g(r, 0);
          for (std::size_t c = 0; c < a.cols(); ++c) {
            da(r, c) += gr * b(r, c);
            db(r, c) += gr * a(r, c);
          }
        }
        break;
      }

      case Op::kScale: {
        Tensor& d = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * n.scalar;
        break;
      }

      case Op::kScaleRows: {
        const Tensor& a = value(n.inputs[0]);
        const Tensor& v = value(n.inputs[1]);
        Tensor& da = grad_of(n.inputs[0]);
        Tensor& dv = grad_of(n.inputs[1]);
        for (std::size_t r = 0; r < a.rows(); ++r) {
          double acc = 0.0;
          for (std::size_t c = 0; c < a.cols(); ++c) {
            da(r, c) += g(r, c) * v(r, 0);
            acc += g(r, c) * a(r, c);
          }
          dv(r, 0) += acc;
        }
        break;
      }

      case Op::kGatherRows: {
        Tensor& d = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < n.index.size(); ++i) {
          auto dst = d.row(n.index[i]);
          const auto src = g.row(i);
          for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
        }
        break;
      }

      case Op::kL2NormalizeRows: {
        const Tensor& x = value(n.inputs[0]);
        Tensor& d = grad_of(n.inputs[0]);
        for (std::size_t r = 0; r < x.rows(); ++r) {
          double s = 0.0, dot = 0.0;
          for (std::size_t c = 0; c < x.cols(); ++c) {
            s += x(r, c) * x(r, c);
            dot += y(r, c) * g(r, c);
          }
          const double norm = std::sqrt(s + ops::kNormalizeEpsilon);
          for (std::size_t c = 0; c < x.cols(); ++c) {
            d(r, c) += (g(r, c) - y(r, c) * dot) / norm;
          }
        }
        break;
      }

      case Op::kBceWithLogits: {
        const Tensor& z = value(n.inputs[0]);
        Tensor& d = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) {
          d[i] += g[i] * (ops::sigmoid(z[i]) - n.aux[i]);
        }
        break;
      }
    }
  }

  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (adj[id].empty()) adj[id] = Tensor(value(id).rows(), value(id).cols());
  }
  return Gradients(std::move(adj));
}

void Graph::accumulate_parameter_grads(const Gradients& grads) const {
  for (const auto& [param, id] : param_nodes_) {
    add_into(param->grad, grads[id]);
  }
}

std::uint64_t Graph::relu_signature() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Node& n : nodes_) {
    if (n.op != Op::kRelu) continue;
    for (double v : value(n.inputs[0]).values()) {
      h ^= v > 0.0 ? 1u : 0u;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace grace
