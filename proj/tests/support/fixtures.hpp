#pragma once

// Small worlds and configs shared by the unit and acceptance tests.

#include <filesystem>
#include <random>
#include <string>

#include "grace/datagen/world.hpp"
#include "grace/trainer/trainer.hpp"

namespace grace::test {

inline WorldConfig tiny_world_config() {
  WorldConfig c;
  c.n_users = 20;
  c.n_items = 300;
  c.n_queries = 20;
  c.n_categories = 4;
  c.n_brands = 12;
  c.n_shops = 15;
  c.candidates = 20;
  c.displayed = 5;
  c.random_negatives = 3;
  return c;
}

// A network small enough that every parameter entry can be checked by
// finite differences.
inline TrainConfig tiny_train_config() {
  TrainConfig c;
  c.batch_size = 8;
  c.epochs = 1;
  c.embedding.hash_vocab = 32;
  c.embedding.hash_dim = 3;
  c.embedding.attr_dim = 2;
  c.embedding.user_dim = 2;
  c.embedding.query_dim = 2;
  c.ple.n_shared_experts = 2;
  c.ple.n_task_experts = 1;
  c.ple.expert_hidden = {4};
  c.ple.tower_hidden = {4, 3};
  c.metrics.recall_k = {1, 3, 5};
  c.loss.k_list = {2, 5, 10};
  return c;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("grace_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace grace::test
