#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "grace/datagen/world.hpp"
#include "grace/trainer/trainer.hpp"

namespace grace {

struct FixtureConfig {
  double coverage = 0.8;
  double noise_sd = 0.1;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;  // root of every random stream
  WorldConfig world;
  std::size_t sessions = 8'000;
  FixtureConfig fixture;
  TrainConfig train;  // train.seed mirrors seed
  std::vector<std::uint64_t> ablate_seeds = {1, 2, 3, 4, 5};
  std::vector<Ablation> ablate_variants = all_ablations();

  // Throws ConfigError describing the first invalid value.
  void validate() const;

  std::uint64_t world_seed() const;
  std::uint64_t dataset_seed() const;
  std::uint64_t fixture_seed() const;
};

// Every key must be known; absent keys keep their defaults. Throws
// ConfigError naming the offending dotted key.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

// Complete, canonical document: every key, fixed order.
nlohmann::ordered_json config_to_json(const ExperimentConfig& c);
// The part of the config that determines the generated data.
nlohmann::ordered_json data_section(const ExperimentConfig& c);

// FNV-1a 64 of the canonical dump, as 16 lowercase hex digits.
std::string config_hash(const ExperimentConfig& c);
std::string hex64(std::uint64_t v);
std::uint64_t hash_bytes(std::string_view bytes);
std::string file_hash(const std::filesystem::path& path);

// Dotted path of the first leaf where the two documents differ, or empty.
std::string first_difference(const nlohmann::json& a, const nlohmann::json& b,
                             const std::string& prefix = "");

nlohmann::ordered_json model_spec_to_json(const ModelSpec& m);
ModelSpec model_spec_from_json(const nlohmann::json& j);

}  // namespace grace
