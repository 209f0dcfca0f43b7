#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "grace/datagen/records.hpp"
#include "grace/embedding/embedding_bank.hpp"
#include "grace/embedding/pretrained_store.hpp"
#include "grace/losses/losses.hpp"
#include "grace/metrics/metrics.hpp"
#include "grace/model/ple.hpp"

namespace grace {

enum class Ablation {
  kFull,
  kNoConsistency,      // lambda1 = 0
  kNoGeneralization,   // lambda2 = 0
  kPretrainedIdOnly,   // frozen psi replaces the hash segment; lambda2 = 0
  kNoHashId,           // hash segment dropped from phi
  kFeedbackOnly,       // L_feedback alone; rank and contrastive terms never built
  kDistillation,       // L_feedback + lambda1 * soft-score distillation
};

std::string_view ablation_name(Ablation a);
std::optional<Ablation> parse_ablation(std::string_view s);
// Every variant this build supports, in declaration order.
std::vector<Ablation> all_ablations();

enum class Objective { kGrace, kFeedbackOnly, kDistillation };

struct TrainConfig {
  std::size_t batch_size = 64;
  double lr = 0.05;
  std::size_t epochs = 1;
  std::uint64_t seed = 1;
  LossSpec loss;
  PLEConfig ple;
  EmbeddingConfig embedding;
  MetricConfig metrics;
  Ablation ablation = Ablation::kFull;
  std::size_t eval_every = 0;  // steps between evaluations; 0 = initial and final only
  std::size_t holdout_divisor = 16;  // last 1/holdout_divisor of sessions validate
  unsigned threads = 1;

  void validate() const;
};

// Everything needed to rebuild a model around a checkpoint.
struct ModelSpec {
  EmbeddingConfig embedding;
  PLEConfig ple;
  IdSegment segment = IdSegment::kHashed;
  std::uint64_t embedding_seed = 0;

};

// Loss terms and item representation implied by a config's ablation flag.
struct ResolvedRun {
  LossSpec loss;
  Objective objective = Objective::kGrace;
  ModelSpec model;
};

// Applies the ablation to the loss spec, sizes the embedding tables to cover
// every id in `dataset`, and derives model seeds from config.seed.
ResolvedRun resolve_run(const TrainConfig& config, std::span<const ImpressionRecord> dataset,
                        const PretrainedStore* fixture);

class GraceModel {
 public:
  // `store` must outlive the model when the spec uses the pretrained segment
  // or a projection.
  GraceModel(const ModelSpec& spec, const PretrainedStore* store);

  const ModelSpec& spec() const { return spec_; }

  struct Forward {
    PLEOutputs out;
    NodeId phi;  // fused item representation
  };
  Forward forward(Graph& g, std::span<const ImpressionRecord* const> batch);

  // Batched inference; rows are independent so results do not depend on
  // batch size or thread count.
  std::vector<RecordScore> score(std::span<const ImpressionRecord> records,
                                 std::size_t batch_size = 1024, unsigned threads = 1);

  std::vector<Parameter*> parameters();
  std::vector<NamedTensor> named_tensors() const;
  void load(std::span<const NamedTensor> tensors);

  EmbeddingBank& embeddings() { return bank_; }
  PLEParams& ple() { return ple_; }

 private:
  ModelSpec spec_;
  const PretrainedStore* store_;
  EmbeddingBank bank_;
  PLEParams ple_;
};

struct BatchLoss {
  NodeId total;
  LossBreakdown breakdown;
};

// Builds the objective for one batch. kGrace always builds the rank and
// contrastive terms, scaled by the lambdas, so lambda = 0 leaves them inert
// rather than absent. The contrastive term needs `store` and a projection.
BatchLoss build_batch_loss(Graph& g, GraceModel& model,
                           std::span<const ImpressionRecord* const> batch,
                           const LossSpec& spec, Objective objective,
                           const PretrainedStore* store,
                           LossWarnings* warnings = nullptr);

// Sessions in ascending id; the last max(1, n / divisor) are validation.
struct Split {
  Dataset train;
  Dataset validation;
};
Split split_by_session(std::span<const ImpressionRecord> dataset, std::size_t divisor);

struct EvalPoint {
  std::size_t step = 0;
  std::size_t epoch = 0;
  EvalReport report;
};

struct StepLog {
  std::size_t step = 0;
  std::size_t epoch = 0;
  LossBreakdown loss;
};

struct RunArtifacts {
  // Empty paths when train() was given no output directory.
  std::filesystem::path checkpoint;
  std::filesystem::path loss_curve;
  std::filesystem::path eval_series;
  std::filesystem::path final_report;

  std::vector<StepLog> steps;
  std::vector<EvalPoint> series;
  // L_total on the first validation batch, before training then per epoch.
  std::vector<double> validation_batch_loss;
  EvalReport final;
  LossWarnings warnings;
  std::vector<NamedTensor> parameters;
};

// Trains on the training split and evaluates on the validation split.
// Writes artifacts under out_dir when it is non-empty. Throws DataError
// before any step when the dataset is empty or the variant needs a fixture
// that is missing.
RunArtifacts train(const TrainConfig& config, std::span<const ImpressionRecord> dataset,
                   const PretrainedStore* fixture,
                   const std::filesystem::path& out_dir = {});

// Scores `records` with `model` and evaluates against popularity counted over
// `popularity_source`.
EvalReport evaluate_model(GraceModel& model, std::span<const ImpressionRecord> records,
                          std::span<const ImpressionRecord> popularity_source,
                          const MetricConfig& metrics);

std::string loss_curve_csv(std::span<const StepLog> steps, std::span<const int> k_list);

// Named scalar metrics of a report used in ablation tables.
std::vector<std::pair<std::string, double>> summary_metrics(const EvalReport& r);

struct AblationRun {
  Ablation variant = Ablation::kFull;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  EvalReport report;
};

struct VariantStats {
  Ablation variant = Ablation::kFull;
  std::size_t runs = 0;
  std::size_t failures = 0;
  // metric name -> (mean, sample sd), over successful runs
  std::vector<std::tuple<std::string, double, double>> metrics;
  // metric name -> seeds where full beat this variant, seeds compared
  std::vector<std::tuple<std::string, std::size_t, std::size_t>> full_wins;
};

struct AblationTable {
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRun> runs;
  std::vector<VariantStats> variants;
};

// Trains every variant for every seed (seed overrides base.seed and the
// model seeds derived from it). Repeated variants run once. Failed runs are
// recorded and skipped.
// Throws ConfigError with fewer than 3 seeds.
AblationTable run_ablation_suite(const TrainConfig& base,
                                 std::span<const ImpressionRecord> dataset,
                                 const PretrainedStore* fixture,
                                 std::span<const std::uint64_t> seeds,
                                 std::span<const Ablation> variants);

// Recomputes statistics from runs; exposed so merged reports reuse it.
std::vector<VariantStats> summarize_runs(std::span<const AblationRun> runs,
                                         std::span<const Ablation> variants);

nlohmann::ordered_json ablation_to_json(const AblationTable& t);
std::string render_ablation(const AblationTable& t);

}  // namespace grace
