#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "grace/autodiff/checkpoint.hpp"
#include "grace/autodiff/graph.hpp"

namespace grace {

enum class Task : std::size_t { kCtr = 0, kCvr = 1, kRank = 2 };
inline constexpr std::size_t kNumTasks = 3;
std::string_view task_name(Task t);

enum class RankHeads { kSingle, kPerK };

struct PLEConfig {
  std::size_t user_dim = 8;
  std::size_t query_dim = 8;
  std::size_t item_dim = 40;       // width of phi(x)
  std::size_t pretrained_dim = 0;  // psi width; 0 disables the projection
  std::size_t n_shared_experts = 2;
  std::size_t n_task_experts = 1;  // per task
  std::vector<std::size_t> expert_hidden = {32};
  std::size_t n_extraction_layers = 1;
  std::vector<std::size_t> tower_hidden = {64, 32};
  RankHeads rank_heads = RankHeads::kSingle;
  std::size_t n_rank_outputs = 1;  // |K| under RankHeads::kPerK
  std::uint64_t seed = 1;

  std::size_t input_dim() const { return user_dim + query_dim + item_dim; }
  // Throws ConfigError on zero sizes or an inconsistent rank-head count.
  void validate() const;
};

struct PLEOutputs {
  NodeId ctr_logit;
  NodeId cvr_logit;
  std::vector<NodeId> rank_logits;  // one per rank head
  std::array<NodeId, kNumTasks> gates;  // final-layer gate weights per task
};

// Weights of a progressive-layered-extraction network: per layer a group of
// shared experts, a group of experts per task and a softmax gate per task
// (plus a shared gate on every layer but the last), followed by one MLP tower
// per task and an optional phi -> psi projection.
class PLEParams {
 public:
  explicit PLEParams(const PLEConfig& config);

  const PLEConfig& config() const { return config_; }

  PLEOutputs forward(Graph& g, NodeId user, NodeId query, NodeId item);
  // phi (n x item_dim) -> (n x pretrained_dim).
  NodeId project(Graph& g, NodeId item);

  std::size_t experts_per_layer() const {
    return config_.n_shared_experts + kNumTasks * config_.n_task_experts;
  }
  // Global expert indices (within a layer) mixed by the gate of `task`:
  // shared experts are [0, n_shared), task t owns the next n_task block.
  std::vector<std::size_t> gate_experts(Task task) const;

  std::vector<Parameter*> parameters();
  std::vector<NamedTensor> named_tensors() const;
  void load(std::span<const NamedTensor> tensors);
  Parameter* find(std::string_view name);

 private:
  struct Dense {
    std::size_t w;
    std::size_t b;
  };
  struct Layer {
    std::vector<std::vector<Dense>> experts;        // [expert][depth]
    std::array<Dense, kNumTasks> task_gates;
    bool has_shared_gate = false;
    Dense shared_gate{};
  };

  Dense add_dense(const std::string& name, std::size_t in, std::size_t out);
  NodeId apply_dense(Graph& g, const Dense& d, NodeId x);
  NodeId run_mlp(Graph& g, std::span<const Dense> layers, NodeId x,
                 bool relu_last);
  NodeId mix(Graph& g, NodeId gate, std::span<const NodeId> experts);

  PLEConfig config_;
  std::deque<Parameter> storage_;
  std::vector<Layer> layers_;
  std::array<std::vector<Dense>, kNumTasks> towers_;
  bool has_projection_ = false;
  std::size_t projection_ = 0;
};

PLEParams init_params(const PLEConfig& config);

}  // namespace grace
