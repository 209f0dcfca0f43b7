#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "grace/harness/config.hpp"

namespace grace {

// Refused invocation (bad flags, non-empty output directory without force).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kDatasetFile = "dataset.jsonl";
inline constexpr const char* kFixtureFile = "fixture.tsv";
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kModelFile = "model.json";
inline constexpr const char* kCheckpointFile = "checkpoint.grck";

// Exit status for an exception escaping a command: 1 usage or config,
// 2 data, 3 anything else.
int exit_code_for(const std::exception& e);

void cmd_generate(const ExperimentConfig& config, const std::filesystem::path& out,
                  bool force);

void cmd_train(const ExperimentConfig& config, const std::filesystem::path& data_dir,
               const std::filesystem::path& out, bool force);

struct EvalOptions {
  std::optional<ScoreKind> headline;
  std::optional<bool> include_random_negatives;
  std::optional<unsigned> threads;
};

// Rebuilds the model from model.json beside `checkpoint` and evaluates the
// validation split of the dataset in `data_dir` with the run's metric config.
void cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir,
              const EvalOptions& options, const std::filesystem::path& out, bool force);

void cmd_ablate(const ExperimentConfig& config, const std::filesystem::path& data_dir,
                const std::filesystem::path& out, bool force);

// Merges train/eval/ablate output directories into report.md and report.csv.
void cmd_report(const std::vector<std::filesystem::path>& runs,
                const std::filesystem::path& out, bool force);

nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace grace
