#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "prunelab/analysis.hpp"
#include "prunelab/datagen.hpp"
#include "prunelab/nn.hpp"
#include "prunelab/pie.hpp"
#include "prunelab/prediction_store.hpp"
#include "prunelab/pruning.hpp"

namespace prunelab::experiment {

inline constexpr const char* kVersion = "1.0.0";

struct ExperimentConfig {
  datagen::GeneratorConfig generator;
  std::vector<int> hidden_layers{128};
  nn::TrainConfig training;
  int runs = 10;
  pruning::SparsityGrid grid = pruning::SparsityGrid::standard();
  std::uint64_t seed = 1;  // base of the per-run training seeds
  int parallel = 1;
};

/// The desk-scale reference experiment: 12 geometric-frequency classes,
/// interleaved coupling blocks, a 64-128-12 MLP and ten runs over the
/// standard grid. `seed` drives both the generator and the training seeds.
ExperimentConfig reference_config(std::uint64_t seed);

nlohmann::json to_json(const datagen::GeneratorConfig& cfg);
datagen::GeneratorConfig generator_from_json(const nlohmann::json& j);
nlohmann::json to_json(const nn::TrainConfig& cfg);
nn::TrainConfig training_from_json(const nlohmann::json& j, nn::TrainConfig base = {});
nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Training seed of every run, derived from the experiment seed.
std::vector<std::uint64_t> run_seeds(std::uint64_t base, int runs);

/// D, hidden..., C.
std::vector<int> layer_sizes(const LabeledDataset& ds, const std::vector<int>& hidden);

struct PopulationResult {
  PredictionStore store;
  std::vector<std::optional<nn::MlpModel>> models;  // unpruned best snapshots; empty for failed runs
  std::vector<nn::TrainHistory> histories;
};

using Progress = std::function<void(const std::string&)>;

/// Trains every run, prunes each trained model one-shot at every grid ratio and
/// records test-split probabilities. Runs execute on `cfg.parallel` threads;
/// the result does not depend on the thread count. A diverged run is recorded
/// as failed in the store and the remaining runs continue.
PopulationResult run_population(const LabeledDataset& ds, const ExperimentConfig& cfg, const Progress& progress = {});

struct AnalysisResult {
  analysis::ApTensor ap;
  analysis::CurveSet curves;
  std::optional<analysis::OverallDrop> overall;
  std::optional<analysis::FrequencyCorrelations> train_frequency;
  std::optional<analysis::FrequencyCorrelations> test_frequency;
  std::vector<analysis::PairRecord> pairs;
  std::optional<analysis::PairRegression> regression;
  std::optional<nn::Histogram> histogram;
  std::vector<std::int64_t> test_counts;
  bool has_tail = false;
  std::vector<std::string> warnings;
};

/// Runs every population-level analysis. Steps whose preconditions fail are
/// skipped with a warning instead of aborting the rest.
AnalysisResult analyze_store(const PredictionStore& store, const std::vector<nn::MlpModel>& models);

/// Writes curves.csv, classes.csv, overall.csv, pairs.csv, regression.json,
/// frequency.json, histogram.csv (when models were given) and excluded.csv.
/// Returns the written file names.
std::vector<std::string> write_analysis(const AnalysisResult& result, const PredictionStore& store,
                                        const std::filesystem::path& out_dir);

/// Writes pies.csv and pie_characterization.json.
std::vector<std::string> write_pies(const pie::PieReport& report, const PredictionStore& store,
                                    const std::filesystem::path& out_dir);

/// Loads run_XXX.ckpt files from a directory, in run order.
std::vector<nn::MlpModel> load_models(const std::filesystem::path& dir);

/// manifest.json in an output directory. Every command merges its section and
/// its output files (with SHA-256 digests) into the same manifest.
class Manifest {
 public:
  static Manifest open(const std::filesystem::path& dir);
  void set(const std::string& section, nlohmann::json value);
  void record_outputs(const std::vector<std::string>& files);
  void write() const;
  const nlohmann::json& data() const { return data_; }

 private:
  std::filesystem::path dir_;
  nlohmann::json data_;
};

/// Fixed record of the artifact's convention choices, stored in manifests.
nlohmann::json design_decisions(const ExperimentConfig* cfg = nullptr);

/// file name -> SHA-256 for the listed files inside `dir`.
std::map<std::string, std::string> digest_files(const std::filesystem::path& dir, const std::vector<std::string>& files);

}  // namespace prunelab::experiment
