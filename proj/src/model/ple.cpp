#include "grace/model/ple.hpp"

#include <algorithm>

#include "grace/autodiff/init.hpp"
#include "grace/error.hpp"
#include "grace/rng.hpp"

namespace grace {

std::string_view task_name(Task t) {
  switch (t) {
    case Task::kCtr: return "ctr";
    case Task::kCvr: return "cvr";
    case Task::kRank: return "rank";
  }
  return "?";
}

void PLEConfig::validate() const {
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) throw ConfigError(std::string("ple: ") + what + " must be >= 1");
  };
  positive(user_dim, "user_dim");
  positive(query_dim, "query_dim");
  positive(item_dim, "item_dim");
  positive(n_shared_experts, "n_shared_experts");
  positive(n_task_experts, "n_task_experts");
  positive(n_extraction_layers, "n_extraction_layers");
  positive(n_rank_outputs, "n_rank_outputs");
  if (expert_hidden.empty()) throw ConfigError("ple: expert_hidden is empty");
  for (std::size_t h : expert_hidden) positive(h, "expert hidden size");
  for (std::size_t h : tower_hidden) positive(h, "tower hidden size");
  if (rank_heads == RankHeads::kSingle && n_rank_outputs != 1) {
    throw ConfigError("ple: single rank head needs n_rank_outputs == 1");
  }
}

PLEParams::Dense PLEParams::add_dense(const std::string& name, std::size_t in,
                                      std::size_t out) {
  storage_.emplace_back(name + ".w", Tensor(in, out));
  const std::size_t w = storage_.size() - 1;
  storage_.emplace_back(name + ".b", Tensor(1, out));
  return {w, storage_.size() - 1};
}

PLEParams::PLEParams(const PLEConfig& config) : config_(config) {
  config_.validate();
  const std::size_t h = config_.expert_hidden.back();

  auto owner_name = [&](std::size_t e) {
    if (e < config_.n_shared_experts) return "shared" + std::to_string(e);
    const std::size_t k = e - config_.n_shared_experts;
    const auto t = static_cast<Task>(k / config_.n_task_experts);
    return std::string(task_name(t)) + std::to_string(k % config_.n_task_experts);
  };

  for (std::size_t l = 0; l < config_.n_extraction_layers; ++l) {
    const std::string prefix = "ple.l" + std::to_string(l);
    const std::size_t in = l == 0 ? config_.input_dim() : h;
    Layer layer;
    for (std::size_t e = 0; e < experts_per_layer(); ++e) {
      std::vector<Dense> mlp;
      std::size_t width = in;
      for (std::size_t d = 0; d < config_.expert_hidden.size(); ++d) {
        mlp.push_back(add_dense(prefix + ".expert." + owner_name(e) + ".d" +
                                    std::to_string(d),
                                width, config_.expert_hidden[d]));
        width = config_.expert_hidden[d];
      }
      layer.experts.push_back(std::move(mlp));
    }
    const std::size_t gate_width = config_.n_shared_experts + config_.n_task_experts;
    for (std::size_t t = 0; t < kNumTasks; ++t) {
      layer.task_gates[t] = add_dense(
          prefix + ".gate." + std::string(task_name(static_cast<Task>(t))), in,
          gate_width);
    }
    if (l + 1 < config_.n_extraction_layers) {
      layer.has_shared_gate = true;
      layer.shared_gate = add_dense(prefix + ".gate.shared", in, experts_per_layer());
    }
    layers_.push_back(std::move(layer));
  }

  for (std::size_t t = 0; t < kNumTasks; ++t) {
    const std::string prefix =
        "ple.tower." + std::string(task_name(static_cast<Task>(t)));
    std::size_t width = h;
    for (std::size_t d = 0; d < config_.tower_hidden.size(); ++d) {
      towers_[t].push_back(
          add_dense(prefix + ".d" + std::to_string(d), width, config_.tower_hidden[d]));
      width = config_.tower_hidden[d];
    }
    const std::size_t out =
        static_cast<Task>(t) == Task::kRank ? config_.n_rank_outputs : 1;
    towers_[t].push_back(add_dense(prefix + ".out", width, out));
  }

  if (config_.pretrained_dim > 0) {
    storage_.emplace_back("ple.proj.w",
                          Tensor(config_.item_dim, config_.pretrained_dim));
    projection_ = storage_.size() - 1;
    has_projection_ = true;
  }

  // Weights xavier-uniform in creation order, biases zero.
  Rng rng(config_.seed);
  for (Parameter& p : storage_) {
    if (p.name.ends_with(".w")) xavier_uniform(p.value, rng);
  }
}

NodeId PLEParams::apply_dense(Graph& g, const Dense& d, NodeId x) {
  return g.add_row(g.matmul(x, g.parameter(storage_[d.w])),
                   g.parameter(storage_[d.b]));
}

NodeId PLEParams::run_mlp(Graph& g, std::span<const Dense> layers, NodeId x,
                          bool relu_last) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = apply_dense(g, layers[i], x);
    if (relu_last || i + 1 < layers.size()) x = g.relu(x);
  }
  return x;
}

NodeId PLEParams::mix(Graph& g, NodeId gate, std::span<const NodeId> experts) {
  NodeId acc = 0;
  for (std::size_t e = 0; e < experts.size(); ++e) {
    const NodeId term = g.scale_rows(experts[e], g.slice_cols(gate, e, e + 1));
    acc = e == 0 ? term : g.add(acc, term);
  }
  return acc;
}

std::vector<std::size_t> PLEParams::gate_experts(Task task) const {
  std::vector<std::size_t> ids;
  for (std::size_t e = 0; e < config_.n_shared_experts; ++e) ids.push_back(e);
  const std::size_t first = config_.n_shared_experts +
                            static_cast<std::size_t>(task) * config_.n_task_experts;
  for (std::size_t e = 0; e < config_.n_task_experts; ++e) ids.push_back(first + e);
  return ids;
}

PLEOutputs PLEParams::forward(Graph& g, NodeId user, NodeId query, NodeId item) {
  const NodeId x = g.concat_cols({user, query, item});
  if (g.value(x).cols() != config_.input_dim()) {
    throw ShapeError("ple_forward: input width " +
                     std::to_string(g.value(x).cols()) + ", config expects " +
                     std::to_string(config_.input_dim()));
  }

  std::array<NodeId, kNumTasks> task_in;
  task_in.fill(x);
  NodeId shared_in = x;
  std::array<NodeId, kNumTasks> gates{};

  for (Layer& layer : layers_) {
    std::vector<NodeId> out(experts_per_layer());
    for (std::size_t e = 0; e < out.size(); ++e) {
      NodeId src = shared_in;
      if (e >= config_.n_shared_experts) {
        src = task_in[(e - config_.n_shared_experts) / config_.n_task_experts];
      }
      out[e] = run_mlp(g, layer.experts[e], src, /*relu_last=*/true);
    }

    std::array<NodeId, kNumTasks> next_task{};
    for (std::size_t t = 0; t < kNumTasks; ++t) {
      gates[t] = g.softmax_rows(apply_dense(g, layer.task_gates[t], task_in[t]));
      std::vector<NodeId> owned;
      for (std::size_t e : gate_experts(static_cast<Task>(t))) owned.push_back(out[e]);
      next_task[t] = mix(g, gates[t], owned);
    }
    if (layer.has_shared_gate) {
      const NodeId gs = g.softmax_rows(apply_dense(g, layer.shared_gate, shared_in));
      shared_in = mix(g, gs, out);
    }
    task_in = next_task;
  }

  PLEOutputs result{};
  result.gates = gates;
  result.ctr_logit = run_mlp(g, towers_[0], task_in[0], false);
  result.cvr_logit = run_mlp(g, towers_[1], task_in[1], false);
  const NodeId rank = run_mlp(g, towers_[2], task_in[2], false);
  if (config_.n_rank_outputs == 1) {
    result.rank_logits.push_back(rank);
  } else {
    for (std::size_t k = 0; k < config_.n_rank_outputs; ++k) {
      result.rank_logits.push_back(g.slice_cols(rank, k, k + 1));
    }
  }
  return result;
}

NodeId PLEParams::project(Graph& g, NodeId item) {
  if (!has_projection_) {
    throw ShapeError("ple: projection requested but pretrained_dim == 0");
  }
  return g.matmul(item, g.parameter(storage_[projection_]));
}

std::vector<Parameter*> PLEParams::parameters() {
  std::vector<Parameter*> out;
  out.reserve(storage_.size());
  for (Parameter& p : storage_) out.push_back(&p);
  return out;
}

std::vector<NamedTensor> PLEParams::named_tensors() const {
  std::vector<NamedTensor> out;
  out.reserve(storage_.size());
  for (const Parameter& p : storage_) out.push_back({p.name, p.value});
  return out;
}

void PLEParams::load(std::span<const NamedTensor> tensors) {
  const auto params = parameters();
  load_named(params, tensors);
}

Parameter* PLEParams::find(std::string_view name) {
  for (Parameter& p : storage_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

PLEParams init_params(const PLEConfig& config) { return PLEParams(config); }

}  // namespace grace
