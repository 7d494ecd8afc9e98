// prunelab command line: generate -> run -> analyze / pies -> report.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "prunelab/datagen.hpp"
#include "prunelab/digest.hpp"
#include "prunelab/error.hpp"
#include "prunelab/experiment.hpp"
#include "prunelab/survey.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace prunelab;

namespace {

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }
void info(const std::string& msg) { std::cerr << msg << '\n'; }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string hash_json(const json& j) { return sha256_hex(j.dump()); }

struct GenerateOptions {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_generate(const GenerateOptions& opt) {
  datagen::GeneratorConfig cfg;
  if (!opt.config.empty()) {
    const json j = read_json(opt.config);
    json g = j.contains("generator") ? j.at("generator") : j;
    if (j.contains("reference_seed") && !j.contains("generator")) g = experiment::to_json(experiment::reference_config(j.at("reference_seed")).generator);
    if (opt.seed) g["seed"] = *opt.seed;
    cfg = experiment::generator_from_json(g);
  } else if (!opt.preset.empty()) {
    cfg = datagen::preset(opt.preset, opt.seed.value_or(1));
  } else {
    throw InvalidArgument("generate needs --config or --preset");
  }

  const auto gen = datagen::generate(cfg);
  fs::create_directories(opt.out);
  datagen::save_dataset(gen.dataset, fs::path(opt.out) / "dataset.csv");

  json checks = json::array();
  for (const auto& f : gen.frequency_checks) {
    checks.push_back({{"class", f.class_name}, {"target", f.target}, {"realized", f.realized}, {"within_tolerance", f.within_tolerance}});
    if (!f.within_tolerance) {
      warn("class '" + f.class_name + "' realized train frequency " + std::to_string(f.realized) + " is outside +-15% of target " +
           std::to_string(f.target));
    }
  }
  const auto train = datagen::realized_stats(gen.dataset, Split::train);
  double hi = 0.0, lo = 1.0;
  for (double f : train.frequency) {
    if (f > 0.0) {
      hi = std::max(hi, f);
      lo = std::min(lo, f);
    }
  }
  info("wrote " + (fs::path(opt.out) / "dataset.csv").string() + ": " + std::to_string(gen.dataset.size()) + " rows, " +
       std::to_string(gen.dataset.num_classes()) + " classes, head/tail train frequency ratio " + std::to_string(hi / lo));

  auto manifest = experiment::Manifest::open(opt.out);
  const json gj = experiment::to_json(cfg);
  manifest.set("generate", {{"config", gj}, {"config_hash", hash_json(gj)}, {"seed", cfg.seed}, {"frequency_checks", checks}});
  manifest.record_outputs({"dataset.csv"});
  manifest.write();
  return 0;
}

struct RunOptions {
  std::string dataset;
  std::string config;
  std::optional<int> runs;
  std::string grid;
  std::optional<int> parallel;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool store_csv = false;
};

int cmd_run(const RunOptions& opt) {
  experiment::ExperimentConfig cfg;
  if (!opt.config.empty()) cfg = experiment::config_from_json(read_json(opt.config));
  if (opt.runs) cfg.runs = *opt.runs;
  if (!opt.grid.empty()) cfg.grid = pruning::SparsityGrid::parse(opt.grid);
  if (opt.parallel) cfg.parallel = *opt.parallel;
  if (opt.seed) cfg.seed = *opt.seed;
  if (cfg.runs < 1 || cfg.parallel < 1) throw InvalidArgument("--runs and --parallel must be positive");

  const auto ds = datagen::load_dataset(opt.dataset);
  const fs::path out(opt.out);
  fs::create_directories(out / "models");
  const auto pop = experiment::run_population(ds, cfg, info);

  std::vector<std::string> files{"store.bin"};
  save_store(pop.store, out / "store.bin");
  if (opt.store_csv) {
    save_store_csv(pop.store, out / "store.csv");
    files.push_back("store.csv");
  }
  {
    std::ofstream hist(out / "training.csv", std::ios::binary);
    hist << "run,epoch,train_loss,val_auroc\n";
    for (std::size_t r = 0; r < pop.histories.size(); ++r) {
      const auto& h = pop.histories[r];
      for (std::size_t e = 0; e < h.train_loss.size(); ++e) hist << r << ',' << e + 1 << ',' << h.train_loss[e] << ',' << h.val_auroc[e] << '\n';
    }
    files.push_back("training.csv");
  }
  json failures = json::array();
  for (std::size_t r = 0; r < pop.models.size(); ++r) {
    if (!pop.models[r]) {
      failures.push_back({{"run", r}, {"message", pop.store.run_status[r].message}});
      continue;
    }
    char name[32];
    std::snprintf(name, sizeof(name), "models/run_%03zu.ckpt", r);
    nn::save_model(*pop.models[r], out / name);
    files.emplace_back(name);
  }

  auto manifest = experiment::Manifest::open(out);
  const json cj = experiment::to_json(cfg);
  manifest.set("run", {{"dataset", fs::absolute(opt.dataset).string()},
                       {"dataset_sha256", sha256_file(opt.dataset)},
                       {"config", cj},
                       {"config_hashes",
                        {{"training", hash_json({cj.at("training"), cj.at("model")})}, {"grid", hash_json(cfg.grid.ratios())}}},
                       {"seeds", experiment::run_seeds(cfg.seed, cfg.runs)},
                       {"failed_runs", failures}});
  manifest.set("design_decisions", experiment::design_decisions(&cfg));
  manifest.record_outputs(files);
  manifest.write();
  info("wrote " + (out / "store.bin").string());
  return 0;
}

int cmd_analyze(const std::string& store_path, const std::string& models_dir, const std::string& out_dir) {
  const auto store = load_store(store_path);
  const fs::path models = models_dir.empty() ? fs::path(store_path).parent_path() / "models" : fs::path(models_dir);
  const auto loaded = experiment::load_models(models);
  if (loaded.empty()) warn("no checkpoints found in '" + models.string() + "': histogram.csv not written");
  const auto result = experiment::analyze_store(store, loaded);
  for (const auto& w : result.warnings) warn(w);
  const auto files = experiment::write_analysis(result, store, out_dir);

  auto manifest = experiment::Manifest::open(out_dir);
  manifest.set("analyze", {{"store", fs::absolute(store_path).string()},
                           {"store_sha256", sha256_file(store_path)},
                           {"warnings", result.warnings}});
  manifest.set("design_decisions", experiment::design_decisions());
  manifest.record_outputs(files);
  manifest.write();
  if (result.overall && result.overall->first_significant_k) {
    info("first significant mean-AP drop at k = " + std::to_string(*result.overall->first_significant_k));
  } else {
    info("no significant mean-AP drop on the grid");
  }
  return 0;
}

int cmd_pies(const std::string& store_path, double k_sparse, double fraction, const std::string& out_dir) {
  const auto store = load_store(store_path);
  const auto report = pie::run_pie_analysis(store, 0.0, k_sparse, fraction);
  if (report.flags.uniform_tie) warn("all agreement values are identical; PIEs chosen by image index only");
  if (report.agreement.num_degenerate > 0) {
    warn(std::to_string(report.agreement.num_degenerate) + " images have a constant mean prediction vector (agreement set to 0)");
  }
  const auto files = experiment::write_pies(report, store, out_dir);
  auto manifest = experiment::Manifest::open(out_dir);
  manifest.set("pies", {{"store", fs::absolute(store_path).string()},
                        {"store_sha256", sha256_file(store_path)},
                        {"k_base", 0.0},
                        {"k_sparse", k_sparse},
                        {"fraction", fraction}});
  manifest.record_outputs(files);
  manifest.write();
  info("flagged " + std::to_string(report.flags.count) + " of " + std::to_string(report.flags.flags.size()) + " images");
  return 0;
}

int cmd_survey(const std::string& csv, const std::string& out) {
  const auto results = survey::analyze(survey::load_responses(csv));
  const auto text = survey::to_json(results);
  if (out.empty()) {
    std::cout << text;
  } else {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw IoError("cannot open '" + out + "' for writing");
    f << text;
  }
  return 0;
}

int cmd_report(const std::vector<std::string>& dirs, const std::string& out_dir) {
  const fs::path out(out_dir);
  fs::create_directories(out);
  std::vector<std::string> files;
  json sources = json::object();
  for (const auto& d : dirs) {
    if (!fs::is_directory(d)) throw IoError("'" + d + "' is not a directory");
    std::vector<fs::path> found;
    for (const auto& e : fs::directory_iterator(d)) {
      const auto ext = e.path().extension();
      if (e.is_regular_file() && (ext == ".csv" || ext == ".json") && e.path().filename() != "dataset.csv" &&
          e.path().filename() != "store.csv") {
        found.push_back(e.path());
      }
    }
    std::sort(found.begin(), found.end());
    for (const auto& p : found) {
      std::string name = p.filename().string();
      if (name == "manifest.json") name = fs::path(d).filename().string() + "_manifest.json";
      fs::copy_file(p, out / name, fs::copy_options::overwrite_existing);
      files.push_back(name);
      sources[name] = fs::absolute(p).string();
    }
  }
  auto manifest = experiment::Manifest::open(out);
  manifest.set("report", {{"sources", sources}});
  manifest.record_outputs(files);
  manifest.write();
  info("bundled " + std::to_string(files.size()) + " files into " + out.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prunelab: magnitude-pruning impact analysis for long-tailed multi-label classifiers"};
  app.require_subcommand(1);

  GenerateOptions gen;
  auto* generate = app.add_subcommand("generate", "Generate a synthetic long-tailed multi-label dataset");
  generate->add_option("--config", gen.config, "JSON config (a 'generator' object or the generator fields)");
  generate->add_option("--preset", gen.preset, "Preset name: reference, nih-lt-like, mimic-lt-like");
  generate->add_option("--seed", gen.seed, "Generator seed (overrides the config)");
  generate->add_option("--out", gen.out, "Output directory")->required();

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "Train the seed population and record pruned predictions");
  run_cmd->add_option("--dataset", run.dataset, "Dataset file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--config", run.config, "JSON experiment config");
  run_cmd->add_option("--runs", run.runs, "Number of seed runs");
  run_cmd->add_option("--grid", run.grid, "Sparsity grid, 'start:stop:step' or comma list");
  run_cmd->add_option("--parallel", run.parallel, "Concurrent seed runs");
  run_cmd->add_option("--seed", run.seed, "Base training seed");
  run_cmd->add_option("--out", run.out, "Output directory")->required();
  run_cmd->add_flag("--store-csv", run.store_csv, "Also write store.csv (long format, for debugging)");

  std::string store_path, models_dir, out_dir;
  auto* analyze = app.add_subcommand("analyze", "Forgettability curves, overall drop, FCD regression, histogram");
  analyze->add_option("--store", store_path, "Prediction store")->required()->check(CLI::ExistingFile);
  analyze->add_option("--models", models_dir, "Checkpoint directory (default: <store dir>/models)");
  analyze->add_option("--out", out_dir, "Output directory")->required();

  double k_sparse = 0.9, fraction = 0.05;
  auto* pies = app.add_subcommand("pies", "Pruning-identified exemplars");
  pies->add_option("--store", store_path, "Prediction store")->required()->check(CLI::ExistingFile);
  pies->add_option("--k-sparse", k_sparse, "Sparsity compared against the dense models")->capture_default_str();
  pies->add_option("--fraction", fraction, "Fraction of images flagged")->capture_default_str();
  pies->add_option("--out", out_dir, "Output directory")->required();

  std::string csv, out_file;
  auto* survey_cmd = app.add_subcommand("survey-analyze", "Kruskal-Wallis per question on group,question_id,score CSV");
  survey_cmd->add_option("--csv", csv, "Responses CSV")->required()->check(CLI::ExistingFile);
  survey_cmd->add_option("--out", out_file, "Output JSON (default: stdout)");

  std::vector<std::string> report_dirs;
  auto* report = app.add_subcommand("report", "Bundle analysis CSV/JSON outputs and manifests into one directory");
  report->add_option("--dir", report_dirs, "Directory with outputs (repeatable)")->required();
  report->add_option("--out", out_dir, "Bundle directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) return cmd_generate(gen);
    if (*run_cmd) return cmd_run(run);
    if (*analyze) return cmd_analyze(store_path, models_dir, out_dir);
    if (*pies) return cmd_pies(store_path, k_sparse, fraction, out_dir);
    if (*survey_cmd) return cmd_survey(csv, out_file);
    if (*report) return cmd_report(report_dirs, out_dir);
  } catch (const Error& e) {
    std::cerr << "error[" << e.code() << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error[E_INTERNAL]: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
