#include "grace/harness/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "grace/autodiff/checkpoint.hpp"
#include "grace/datagen/dataset_io.hpp"
#include "grace/error.hpp"

namespace grace {

namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const ConfigError*>(&e)) return 1;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const MetricError*>(&e)) return 2;
  return 3;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  write_text(path, j.dump(2) + "\n");
}

bool same_dir(const fs::path& a, const fs::path& b) {
  std::error_code ec;
  return fs::exists(a) && fs::exists(b) && fs::equivalent(a, b, ec);
}

// Creates `out`, refusing a non-empty directory unless forced and any
// directory that is also an input.
void prepare_out(const fs::path& out, bool force, const std::vector<fs::path>& inputs) {
  if (out.empty()) throw UsageError("--out is required");
  for (const auto& in : inputs) {
    if (same_dir(out, in)) {
      throw UsageError("output directory " + out.string() + " is also an input");
    }
  }
  if (fs::exists(out)) {
    if (!fs::is_directory(out)) throw UsageError(out.string() + " is not a directory");
    if (!fs::is_empty(out) && !force) {
      throw UsageError("output directory " + out.string() +
                       " is not empty; pass --force to overwrite");
    }
  }
  fs::create_directories(out);
}

nlohmann::ordered_json manifest(const std::string& command, const ExperimentConfig* config,
                                const fs::path& out, const std::vector<std::string>& artifacts) {
  nlohmann::ordered_json m;
  m["command"] = command;
  if (config != nullptr) {
    m["seed"] = config->seed;
    m["config_hash"] = config_hash(*config);
    m["config"] = config_to_json(*config);
  }
  nlohmann::ordered_json a = nlohmann::ordered_json::object();
  for (const auto& name : artifacts) a[name] = file_hash(out / name);
  m["artifacts"] = std::move(a);
  return m;
}

void check_artifacts(const nlohmann::json& manifest, const fs::path& dir,
                     const std::vector<std::string>& names) {
  for (const auto& name : names) {
    const auto& arts = manifest.at("artifacts");
    if (!arts.contains(name)) throw DataError("manifest in " + dir.string() + " lacks " + name);
    if (file_hash(dir / name) != arts.at(name).get<std::string>()) {
      throw DataError(name + " in " + dir.string() + " does not match its manifest hash");
    }
  }
}

struct DataDir {
  ExperimentConfig config;  // as recorded by generate
  Dataset dataset;
  PretrainedStore fixture{1};
};

DataDir load_data_dir(const fs::path& dir, const ExperimentConfig* expect) {
  const nlohmann::json m = read_json(dir / kManifestFile);
  DataDir d;
  try {
    if (m.at("command").get<std::string>() != "generate") {
      throw DataError(dir.string() + " was not produced by generate");
    }
    d.config = config_from_json(m.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest in " + dir.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw DataError("manifest in " + dir.string() + ": " + e.what());
  }
  if (expect != nullptr) {
    const auto diff = first_difference(data_section(*expect), data_section(d.config));
    if (!diff.empty()) {
      throw DataError("config key '" + diff + "' differs from the manifest in " + dir.string());
    }
  }
  d.dataset = read_dataset(dir / kDatasetFile);
  d.fixture = PretrainedStore::load(dir / kFixtureFile);
  check_artifacts(m, dir, {kDatasetFile, kFixtureFile});
  return d;
}

void require_files(const fs::path& dir, const std::vector<std::string>& names) {
  for (const auto& n : names) {
    if (!fs::is_regular_file(dir / n)) {
      throw std::runtime_error("artifact " + (dir / n).string() + " missing after run");
    }
  }
}

}  // namespace

void cmd_generate(const ExperimentConfig& config, const fs::path& out, bool force) {
  config.validate();
  prepare_out(out, force, {});
  const World world = generate_world(config.world, config.world_seed());
  const Dataset dataset = generate_dataset(world, config.sessions, config.dataset_seed(),
                                           config.train.threads);
  const PretrainedStore fixture = make_pretrained_fixture(
      world, config.fixture.coverage, config.fixture.noise_sd, config.fixture_seed());
  write_dataset(dataset, out / kDatasetFile);
  fixture.save(out / kFixtureFile);
  write_json(out / kManifestFile, manifest("generate", &config, out, {kDatasetFile, kFixtureFile}));
}

void cmd_train(const ExperimentConfig& config, const fs::path& data_dir, const fs::path& out,
               bool force) {
  config.validate();
  const DataDir data = load_data_dir(data_dir, &config);
  prepare_out(out, force, {data_dir});
  const RunArtifacts art = train(config.train, data.dataset, &data.fixture, out);
  const ResolvedRun run = resolve_run(config.train, data.dataset, &data.fixture);
  write_json(out / kModelFile, model_spec_to_json(run.model));
  const std::vector<std::string> files = {kCheckpointFile, "loss_curve.csv", "eval_series.json",
                                          "report.json",   "report.txt",     "report.csv",
                                          kModelFile};
  require_files(out, files);
  auto m = manifest("train", &config, out, files);
  m["variant"] = ablation_name(config.train.ablation);
  m["data"] = {{"dir", data_dir.string()},
               {kDatasetFile, file_hash(data_dir / kDatasetFile)},
               {kFixtureFile, file_hash(data_dir / kFixtureFile)}};
  write_json(out / kManifestFile, m);
}

void cmd_eval(const fs::path& checkpoint, const fs::path& data_dir, const EvalOptions& options,
              const fs::path& out, bool force) {
  const fs::path run_dir = checkpoint.has_parent_path() ? checkpoint.parent_path() : fs::path(".");
  const nlohmann::json run_manifest = read_json(run_dir / kManifestFile);
  ExperimentConfig config;
  try {
    config = config_from_json(run_manifest.at("config"));
  } catch (const std::exception& e) {
    throw DataError("run manifest in " + run_dir.string() + ": " + e.what());
  }
  const ModelSpec spec = model_spec_from_json(read_json(run_dir / kModelFile));
  const DataDir data = load_data_dir(data_dir, &config);
  prepare_out(out, force, {data_dir, run_dir});

  GraceModel model(spec, &data.fixture);
  model.load(read_checkpoint(checkpoint));
  MetricConfig metrics = config.train.metrics;
  if (options.headline) metrics.headline = *options.headline;
  if (options.include_random_negatives) {
    metrics.auc_include_random_negatives = *options.include_random_negatives;
  }
  metrics.threads = options.threads.value_or(config.train.threads);
  const Split split = split_by_session(data.dataset, config.train.holdout_divisor);
  const auto& eval_set = split.validation.empty() ? split.train : split.validation;
  const EvalReport report = evaluate_model(model, eval_set, data.dataset, metrics);

  write_json(out / "report.json", report_to_json(report));
  write_text(out / "report.txt", render_report(report));
  write_text(out / "report.csv", report_to_csv(report));
  auto m = manifest("eval", &config, out, {"report.json", "report.txt", "report.csv"});
  m["variant"] = ablation_name(config.train.ablation);
  m["checkpoint"] = {{"path", checkpoint.string()}, {"hash", file_hash(checkpoint)}};
  write_json(out / kManifestFile, m);
}

void cmd_ablate(const ExperimentConfig& config, const fs::path& data_dir, const fs::path& out,
                bool force) {
  config.validate();
  const DataDir data = load_data_dir(data_dir, &config);
  prepare_out(out, force, {data_dir});
  const AblationTable table = run_ablation_suite(config.train, data.dataset, &data.fixture,
                                                 config.ablate_seeds, config.ablate_variants);
  write_json(out / "ablation.json", ablation_to_json(table));
  write_text(out / "ablation.txt", render_ablation(table));
  write_json(out / kManifestFile, manifest("ablate", &config, out, {"ablation.json", "ablation.txt"}));
}

namespace {

struct ReportRow {
  std::string run;
  std::string variant;
  std::size_t seeds = 1;
  std::string headline;
  std::map<std::string, double> metrics;  // summary_metrics names
};

std::string cell(const std::map<std::string, double>& m, const std::string& key) {
  const auto it = m.find(key);
  if (it == m.end() || std::isnan(it->second)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", it->second);
  return buf;
}

std::vector<ReportRow> rows_for(const fs::path& dir) {
  const nlohmann::json m = read_json(dir / kManifestFile);
  const std::string command = m.value("command", "");
  const std::string run = dir.filename().empty() ? dir.parent_path().filename().string()
                                                 : dir.filename().string();
  std::vector<ReportRow> rows;
  if (command == "train" || command == "eval") {
    ReportRow r;
    r.run = run;
    r.variant = m.value("variant", "full");
    const EvalReport rep = report_from_json(read_json(dir / "report.json"));
    r.headline = std::string(score_kind_name(rep.headline));
    for (const auto& [k, v] : summary_metrics(rep)) r.metrics[k] = v;
    rows.push_back(std::move(r));
  } else if (command == "ablate") {
    const nlohmann::json t = read_json(dir / "ablation.json");
    try {
      const std::string headline =
          t.at("runs").empty() || !t.at("runs")[0].contains("report")
              ? "ctr_cvr"
              : t.at("runs")[0].at("report").at("headline").get<std::string>();
      for (const auto& v : t.at("variants")) {
        ReportRow r;
        r.run = run;
        r.variant = v.at("variant").get<std::string>();
        r.seeds = v.at("runs").get<std::size_t>() - v.at("failures").get<std::size_t>();
        r.headline = headline;
        for (const auto& [name, stat] : v.at("metrics").items()) {
          const auto& mean = stat.at("mean");
          r.metrics[name] = mean.is_null() ? std::nan("") : mean.get<double>();
        }
        rows.push_back(std::move(r));
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError(dir.string() + "/ablation.json: " + e.what());
    }
  } else {
    throw DataError(dir.string() + " is not a train, eval or ablate output");
  }
  return rows;
}

}  // namespace

void cmd_report(const std::vector<fs::path>& runs, const fs::path& out, bool force) {
  if (runs.empty()) throw UsageError("report needs at least one run directory");
  std::vector<ReportRow> rows;
  for (const auto& dir : runs) {
    for (auto& r : rows_for(dir)) rows.push_back(std::move(r));
  }
  prepare_out(out, force, runs);

  // Recall columns: every k seen under each row's headline score.
  std::set<int> ks;
  for (const auto& r : rows) {
    for (const auto& [name, _] : r.metrics) {
      const std::string suffix = "." + r.headline;
      if (name.rfind("recall@", 0) == 0 && name.size() > suffix.size() &&
          name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
        ks.insert(std::stoi(name.substr(7)));
      }
    }
  }

  std::string md = "# Experiment report\n\n## Ablation\n\n";
  md += "| run | variant | seeds | AUC ctr | AUC cvr | head AUC ctr | tail AUC ctr |\n";
  md += "|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    md += "| " + r.run + " | " + r.variant + " | " + std::to_string(r.seeds) + " | " +
          cell(r.metrics, "auc_ctr") + " | " + cell(r.metrics, "auc_cvr") + " | " +
          cell(r.metrics, "head.auc_ctr") + " | " + cell(r.metrics, "tail.auc_ctr") + " |\n";
  }
  md += "\n## Consistency (Recall@k)\n\n| run | variant | score |";
  std::string rule = "|---|---|---|";
  for (int k : ks) {
    md += " R@" + std::to_string(k) + " |";
    rule += "---|";
  }
  md += "\n" + rule + "\n";
  for (const auto& r : rows) {
    md += "| " + r.run + " | " + r.variant + " | " + r.headline + " |";
    for (int k : ks) md += " " + cell(r.metrics, "recall@" + std::to_string(k) + "." + r.headline) + " |";
    md += "\n";
  }

  std::string csv = "run,variant,seeds,metric,value\n";
  for (const auto& r : rows) {
    for (const auto& [name, v] : r.metrics) {
      csv += r.run + "," + r.variant + "," + std::to_string(r.seeds) + "," + name + ",";
      if (!std::isnan(v)) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        csv += buf;
      }
      csv += "\n";
    }
  }
  write_text(out / "report.md", md);
  write_text(out / "report.csv", csv);
}

}  // namespace grace
