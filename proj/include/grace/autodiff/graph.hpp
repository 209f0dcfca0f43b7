#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "grace/autodiff/ops.hpp"
#include "grace/autodiff/tensor.hpp"

namespace grace {

// Trainable tensor with its gradient accumulator.
struct Parameter {
  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)),
        grad(value.rows(), value.cols()) {}

  void zero_grad() { grad.fill(0.0); }

  std::string name;
  Tensor value;
  Tensor grad;
};

using NodeId = std::size_t;

// Adjoint of every node of a graph, indexed by NodeId.
class Gradients {
 public:
  explicit Gradients(std::vector<Tensor> by_node) : by_node_(std::move(by_node)) {}

  const Tensor& operator[](NodeId id) const { return by_node_.at(id); }
  std::size_t size() const { return by_node_.size(); }

 private:
  std::vector<Tensor> by_node_;
};

// Eager tape: every node is evaluated when it is added, so node ids are a
// topological order and backward is a single reverse sweep.
class Graph {
 public:
  NodeId constant(Tensor value);
  // Parameter leaves are deduplicated: adding the same Parameter twice
  // returns the same node. The graph reads p.value by reference, so p must
  // outlive the graph and must not change while it is in use.
  NodeId parameter(Parameter& p);

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId add_row(NodeId a, NodeId row);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId concat_cols(std::span<const NodeId> parts);
  NodeId concat_cols(std::initializer_list<NodeId> parts) {
    return concat_cols(std::span<const NodeId>(parts.begin(), parts.size()));
  }
  NodeId slice_cols(NodeId a, std::size_t begin, std::size_t end);
  NodeId transpose(NodeId a);
  NodeId relu(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId softplus(NodeId a);
  NodeId log(NodeId a);
  NodeId exp(NodeId a);
  NodeId softmax_rows(NodeId a);
  NodeId logsumexp_rows(NodeId a, Tensor mask);
  NodeId mean(NodeId a);
  NodeId sum(NodeId a);
  NodeId weighted_sum(NodeId a, Tensor weights);
  NodeId dot_rows(NodeId a, NodeId b);
  NodeId scale(NodeId a, double s);
  NodeId scale_rows(NodeId a, NodeId column);
  NodeId gather_rows(NodeId a, std::vector<std::size_t> rows);
  NodeId l2_normalize_rows(NodeId a);
  NodeId bce_with_logits(NodeId logits, Tensor targets);

  // Generic entry for the parameter-free kinds accepted by forward_op.
  NodeId apply(Op kind, std::span<const NodeId> inputs, double scalar = 1.0);

  const Tensor& value(NodeId id) const;
  Op op(NodeId id) const { return nodes_.at(id).op; }
  std::size_t size() const { return nodes_.size(); }

  // Reverse-mode sweep from a 1x1 node. Every node gets an adjoint tensor of
  // its own shape; nodes the loss does not depend on get zeros.
  Gradients backward(NodeId loss) const;

  // Adds the adjoint of every parameter leaf into Parameter::grad.
  void accumulate_parameter_grads(const Gradients& grads) const;

  // Hash of the sign pattern of every relu input. Finite-difference checks
  // use it to detect perturbations that cross a kink.
  std::uint64_t relu_signature() const;

 private:
  struct Node {
    Op op;
    std::vector<NodeId> inputs;
    Tensor value;
    Parameter* param = nullptr;
    Tensor aux;                      // mask / weights / targets
    std::vector<std::size_t> index;  // gather rows
    double scalar = 0.0;
    std::size_t begin = 0;           // slice range
  };

  NodeId push(Node node);
  void check(NodeId id) const;

  std::vector<Node> nodes_;
  std::unordered_map<Parameter*, NodeId> param_nodes_;
};

}  // namespace grace
