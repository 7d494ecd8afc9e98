#include "prunelab/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "prunelab/digest.hpp"
#include "prunelab/error.hpp"
#include "prunelab/rng.hpp"
#include "text_io.hpp"

namespace prunelab::experiment {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fmt(double v) { return detail::format_double(v); }

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json ratio_json(const pie::Ratio& r) {
  return {{"value", number_or_null(r.value)},
          {"infinite", r.infinite},
          {"undefined", r.undefined},
          {"pie_count", r.pie_count},
          {"non_pie_count", r.non_pie_count}};
}

json spearman_json(const std::optional<metrics::SpearmanResult>& s) {
  if (!s) return nullptr;
  return {{"rho", s->rho}, {"p_value", s->p_value}, {"small_sample", s->small_sample}};
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

template <typename T>
void read_if(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig reference_config(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.generator = datagen::preset("reference", seed);
  cfg.hidden_layers = {128};
  cfg.training.learning_rate = 1e-3;
  cfg.training.batch_size = 128;
  cfg.training.max_epochs = 100;
  cfg.training.patience = 15;
  cfg.training.prior_output_bias = true;
  cfg.runs = 10;
  cfg.grid = pruning::SparsityGrid::standard();
  cfg.seed = seed;
  return cfg;
}

json to_json(const datagen::GeneratorConfig& cfg) {
  json j;
  j["num_classes"] = cfg.num_classes;
  j["target_frequencies"] = cfg.target_frequencies;
  std::vector<std::vector<double>> k;
  for (Eigen::Index r = 0; r < cfg.cooccurrence_coupling.rows(); ++r) {
    k.emplace_back();
    for (Eigen::Index c = 0; c < cfg.cooccurrence_coupling.cols(); ++c) k.back().push_back(cfg.cooccurrence_coupling(r, c));
  }
  j["cooccurrence_coupling"] = k;
  j["latent_dim"] = cfg.latent_dim;
  j["feature_dim"] = cfg.feature_dim;
  j["n_train"] = cfg.n_train;
  j["n_val"] = cfg.n_val;
  j["n_test"] = cfg.n_test;
  j["noise_std"] = cfg.noise_std;
  j["seed"] = cfg.seed;
  j["include_no_finding"] = cfg.include_no_finding;
  j["class_names"] = cfg.class_names;
  return j;
}

datagen::GeneratorConfig generator_from_json(const json& j) {
  try {
    datagen::GeneratorConfig cfg;
    if (j.contains("preset")) cfg = datagen::preset(j.at("preset").get<std::string>(), j.value("seed", std::uint64_t{0}));
    read_if(j, "num_classes", cfg.num_classes);
    if (j.contains("target_frequencies")) {
      const auto& f = j.at("target_frequencies");
      if (f.is_object()) {
        const int count = f.value("count", cfg.num_classes);
        cfg.target_frequencies = datagen::geometric_frequencies(f.at("head").get<double>(), f.at("tail").get<double>(), count);
        cfg.num_classes = count;
      } else {
        cfg.target_frequencies = f.get<std::vector<double>>();
      }
    }
    if (j.contains("cooccurrence_coupling")) {
      const auto& k = j.at("cooccurrence_coupling");
      if (k.is_string() && k.get<std::string>() == "identity") {
        cfg.cooccurrence_coupling = Eigen::MatrixXd::Identity(cfg.num_classes, cfg.num_classes);
      } else if (k.is_object()) {
        cfg.cooccurrence_coupling = datagen::interleaved_block_coupling(cfg.num_classes, k.at("blocks").get<int>(),
                                                                        k.at("strength").get<double>());
      } else {
        const auto rows = k.get<std::vector<std::vector<double>>>();
        cfg.cooccurrence_coupling.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
          if (rows[r].size() != rows.size()) throw InvalidArgument("cooccurrence_coupling must be a square matrix");
          for (std::size_t c = 0; c < rows.size(); ++c) {
            cfg.cooccurrence_coupling(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
          }
        }
      }
    }
    read_if(j, "latent_dim", cfg.latent_dim);
    read_if(j, "feature_dim", cfg.feature_dim);
    read_if(j, "n_train", cfg.n_train);
    read_if(j, "n_val", cfg.n_val);
    read_if(j, "n_test", cfg.n_test);
    read_if(j, "noise_std", cfg.noise_std);
    read_if(j, "seed", cfg.seed);
    read_if(j, "include_no_finding", cfg.include_no_finding);
    read_if(j, "class_names", cfg.class_names);
    return cfg;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("generator config: ") + e.what());
  }
}

json to_json(const nn::TrainConfig& cfg) {
  return {{"learning_rate", cfg.learning_rate}, {"adam_beta1", cfg.adam_beta1}, {"adam_beta2", cfg.adam_beta2},
          {"adam_eps", cfg.adam_eps},           {"batch_size", cfg.batch_size}, {"max_epochs", cfg.max_epochs},
          {"patience", cfg.patience},           {"seed", cfg.seed},
          {"prior_output_bias", cfg.prior_output_bias}};
}

nn::TrainConfig training_from_json(const json& j, nn::TrainConfig cfg) {
  try {
    read_if(j, "learning_rate", cfg.learning_rate);
    read_if(j, "adam_beta1", cfg.adam_beta1);
    read_if(j, "adam_beta2", cfg.adam_beta2);
    read_if(j, "adam_eps", cfg.adam_eps);
    read_if(j, "batch_size", cfg.batch_size);
    read_if(j, "max_epochs", cfg.max_epochs);
    read_if(j, "patience", cfg.patience);
    read_if(j, "seed", cfg.seed);
    read_if(j, "prior_output_bias", cfg.prior_output_bias);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("training config: ") + e.what());
  }
  return cfg;
}

json to_json(const ExperimentConfig& cfg) {
  return {{"generator", to_json(cfg.generator)},
          {"model", {{"hidden_layers", cfg.hidden_layers}}},
          {"training", to_json(cfg.training)},
          {"experiment", {{"runs", cfg.runs}, {"grid", cfg.grid.ratios()}, {"seed", cfg.seed}, {"parallel", cfg.parallel}}}};
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  if (j.contains("reference_seed")) cfg = reference_config(j.at("reference_seed").get<std::uint64_t>());
  try {
    if (j.contains("generator")) {
      json g = j.at("generator");
      if (!g.contains("preset") && j.contains("reference_seed")) {
        // Overrides on top of the reference generator.
        json base = to_json(cfg.generator);
        base.update(g);
        g = base;
      }
      cfg.generator = generator_from_json(g);
    }
    if (j.contains("model")) read_if(j.at("model"), "hidden_layers", cfg.hidden_layers);
    if (j.contains("training")) cfg.training = training_from_json(j.at("training"), cfg.training);
    if (j.contains("experiment")) {
      const auto& e = j.at("experiment");
      read_if(e, "runs", cfg.runs);
      read_if(e, "seed", cfg.seed);
      read_if(e, "parallel", cfg.parallel);
      if (e.contains("grid")) {
        const auto& g = e.at("grid");
        cfg.grid = g.is_string() ? pruning::SparsityGrid::parse(g.get<std::string>())
                                 : pruning::SparsityGrid(g.get<std::vector<double>>());
      }
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("experiment config: ") + e.what());
  }
  if (cfg.runs < 1) throw InvalidArgument("runs must be positive");
  if (cfg.parallel < 1) throw InvalidArgument("parallel must be positive");
  for (int h : cfg.hidden_layers) {
    if (h <= 0) throw InvalidArgument("hidden layer sizes must be positive");
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::vector<std::uint64_t> run_seeds(std::uint64_t base, int runs) {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < runs; ++i) seeds.push_back(derive_seed(base, static_cast<std::uint64_t>(i) + 1));
  return seeds;
}

std::vector<int> layer_sizes(const LabeledDataset& ds, const std::vector<int>& hidden) {
  std::vector<int> sizes{static_cast<int>(ds.feature_dim())};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(static_cast<int>(ds.num_classes()));
  return sizes;
}

PopulationResult run_population(const LabeledDataset& ds, const ExperimentConfig& cfg, const Progress& progress) {
  if (cfg.runs < 1) throw InvalidArgument("runs must be positive");
  nn::validate(cfg.training);
  const LabeledDataset test = ds.subset(Split::test);
  if (test.size() == 0) throw InvalidArgument("dataset has no test rows");
  const auto sizes = layer_sizes(ds, cfg.hidden_layers);
  const auto seeds = run_seeds(cfg.seed, cfg.runs);

  PopulationResult result;
  result.store = PredictionStore::allocate(cfg.runs, cfg.grid, test.labels, ds.class_names);
  const auto test_rows = ds.rows_of(Split::test);
  for (std::size_t i = 0; i < test_rows.size(); ++i) result.store.image_ids[i] = test_rows[i];
  result.store.train_frequencies = datagen::realized_stats(ds, Split::train).frequency;
  result.models.resize(static_cast<std::size_t>(cfg.runs));
  result.histories.resize(static_cast<std::size_t>(cfg.runs));

  std::atomic<int> next{0};
  std::mutex progress_mutex;
  auto worker = [&] {
    for (int r = next++; r < cfg.runs; r = next++) {
      const auto ri = static_cast<std::size_t>(r);
      nn::TrainConfig tc = cfg.training;
      tc.seed = seeds[ri];
      try {
        nn::TrainResult trained = nn::train(ds, sizes, tc);
        const auto entries = pruning::sweep(trained.model, cfg.grid);
        for (std::size_t k = 0; k < entries.size(); ++k) {
          const Eigen::MatrixXd probs = nn::predict_proba(entries[k].pruned.model, test.features);
          auto slab = result.store.slab(r, k);
          for (Eigen::Index i = 0; i < probs.rows(); ++i) {
            for (Eigen::Index c = 0; c < probs.cols(); ++c) slab[static_cast<std::size_t>(i * probs.cols() + c)] = probs(i, c);
          }
        }
        result.histories[ri] = trained.history;
        result.models[ri] = std::move(trained.model);
        if (progress) {
          std::lock_guard lock(progress_mutex);
          std::ostringstream msg;
          msg << "run " << r + 1 << "/" << cfg.runs << ": " << result.histories[ri].epochs_run << " epochs, best "
              << result.histories[ri].best_epoch << ", val AUROC "
              << result.histories[ri].val_auroc[static_cast<std::size_t>(result.histories[ri].best_epoch - 1)];
          progress(msg.str());
        }
      } catch (const TrainingDiverged& e) {
        result.store.run_status[ri] = {false, e.what()};
        if (progress) {
          std::lock_guard lock(progress_mutex);
          progress("run " + std::to_string(r + 1) + " failed: " + e.what());
        }
      }
    }
  };

  const int threads = std::max(1, std::min(cfg.parallel, cfg.runs));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (result.store.ok_runs().empty()) throw Error("E_DIVERGED", "every run diverged during training");
  return result;
}

AnalysisResult analyze_store(const PredictionStore& store, const std::vector<nn::MlpModel>& models) {
  AnalysisResult out;
  out.ap = analysis::ap_tensor(store);
  for (const auto& name : out.ap.excluded) out.warnings.push_back("class '" + name + "' has no test positives; excluded");
  out.curves = analysis::forgettability_curves(out.ap);
  for (const auto& name : out.curves.excluded) out.warnings.push_back("class '" + name + "' has zero baseline AP; excluded");
  out.has_tail = store.grid.index_of(analysis::kTailSparsity).has_value();
  if (!out.has_tail) out.warnings.push_back("grid lacks 0.95: tail-impact outputs omitted");

  try {
    out.overall = analysis::overall_drop_analysis(out.ap, store.grid);
  } catch (const InvalidArgument& e) {
    out.warnings.push_back(std::string("overall drop analysis skipped: ") + e.what());
  }

  const auto test_stats = datagen::realized_stats(store.labels);
  out.test_counts = test_stats.counts;
  try {
    out.train_frequency = analysis::frequency_correlations(out.curves, store.grid, store.train_frequencies);
    out.test_frequency = analysis::frequency_correlations(out.curves, store.grid, test_stats.frequency);
  } catch (const InvalidArgument& e) {
    out.warnings.push_back(std::string("frequency correlations skipped: ") + e.what());
  }
  try {
    out.pairs = analysis::pair_table(out.curves, out.test_counts, test_stats.iou);
    out.regression = analysis::pair_regression(out.pairs);
  } catch (const Error& e) {
    out.warnings.push_back(std::string("pair regression skipped: ") + e.what());
  }

  if (!models.empty()) {
    const auto edges = nn::log_spaced_edges(1e-6, 1e1, 28);
    nn::Histogram total;
    for (const auto& m : models) {
      auto h = nn::weight_magnitude_histogram(m, edges);
      if (total.counts.empty()) {
        total = std::move(h);
      } else {
        for (std::size_t i = 0; i < h.counts.size(); ++i) total.counts[i] += h.counts[i];
        total.overflow += h.overflow;
      }
    }
    out.histogram = std::move(total);
  }
  return out;
}

std::vector<std::string> write_analysis(const AnalysisResult& result, const PredictionStore& store, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::vector<std::string> files;
  const auto& grid = store.grid;

  {
    auto out = open_out(out_dir / "curves.csv");
    out << "class,k,value\n";
    for (const auto& c : result.curves.curves) {
      for (std::size_t k = 0; k < grid.size(); ++k) out << c.class_name << ',' << fmt(grid[k]) << ',' << fmt(c.values[k]) << '\n';
    }
    files.push_back("curves.csv");
  }
  {
    auto out = open_out(out_dir / "classes.csv");
    out << "class,train_frequency,test_count,first_drop_sparsity" << (result.has_tail ? ",tail_impact" : "") << '\n';
    for (const auto& c : result.curves.curves) {
      const auto drop = analysis::first_drop_sparsity(c, grid);
      out << c.class_name << ',' << fmt(store.train_frequencies[c.class_index]) << ',' << result.test_counts[c.class_index] << ','
          << (drop ? fmt(*drop) : std::string("none"));
      if (result.has_tail) out << ',' << fmt(analysis::tail_impact(c, grid));
      out << '\n';
    }
    files.push_back("classes.csv");
  }
  {
    auto out = open_out(out_dir / "overall.csv");
    out << "k,median_mean_ap,welch_t,welch_df,welch_p\n";
    if (result.overall) {
      for (const auto& row : result.overall->rows) {
        out << fmt(row.k) << ',' << fmt(row.median_mean_ap) << ',' << fmt(row.welch.statistic) << ','
            << fmt(row.welch.degrees_of_freedom) << ',' << fmt(row.welch.p_value) << '\n';
      }
    }
    files.push_back("overall.csv");
  }
  {
    auto out = open_out(out_dir / "pairs.csv");
    out << "c,c',fcd,abs_log_freq_diff,iou_quarter\n";
    for (const auto& p : result.pairs) {
      out << p.name_a << ',' << p.name_b << ',' << fmt(p.fcd) << ',' << fmt(p.abs_log_freq_diff) << ',' << fmt(p.iou_quarter) << '\n';
    }
    files.push_back("pairs.csv");
  }
  {
    json j;
    if (result.regression) {
      const auto& fit = result.regression->fit;
      j["terms"] = analysis::PairRegression::kTerms;
      j["coefficients"] = std::vector<double>(fit.coefficients.data(), fit.coefficients.data() + fit.coefficients.size());
      j["ses"] = std::vector<double>(fit.standard_errors.data(), fit.standard_errors.data() + fit.standard_errors.size());
      j["t_values"] = std::vector<double>(fit.t_values.data(), fit.t_values.data() + fit.t_values.size());
      j["pvalues"] = std::vector<double>(fit.p_values.data(), fit.p_values.data() + fit.p_values.size());
      j["residual_variance"] = fit.residual_variance;
      j["n"] = fit.n;
      j["spearman_fcd_vs_abs_log_freq_diff"] = spearman_json(result.regression->rho_log_freq_diff);
      j["spearman_fcd_vs_iou_quarter"] = spearman_json(result.regression->rho_iou_quarter);
      j["pearson_fcd_vs_abs_log_freq_diff"] = result.regression->pearson_log_freq_diff ? json(*result.regression->pearson_log_freq_diff) : json(nullptr);
      j["pearson_fcd_vs_iou_quarter"] = result.regression->pearson_iou_quarter ? json(*result.regression->pearson_iou_quarter) : json(nullptr);
    } else {
      j["error"] = "regression not fitted (see warnings)";
    }
    open_out(out_dir / "regression.json") << j.dump(2) << '\n';
    files.push_back("regression.json");
  }
  {
    auto corr = [&](const std::optional<analysis::FrequencyCorrelations>& fc) -> json {
      if (!fc) return nullptr;
      json j;
      j["num_classes"] = fc->num_classes;
      j["never_crossed"] = fc->never_crossed;
      j["never_crossed_value"] = analysis::kNeverDropped;
      j["first_drop"] = spearman_json(fc->first_drop_rho);
      j["first_drop_excluding_never_crossed"] = spearman_json(fc->first_drop_rho_excluding);
      j["tail_impact"] = spearman_json(fc->tail_rho);
      return j;
    };
    json j;
    j["train_frequency"] = corr(result.train_frequency);
    j["test_frequency"] = corr(result.test_frequency);
    j["first_significant_k"] = result.overall && result.overall->first_significant_k ? json(*result.overall->first_significant_k) : json(nullptr);
    open_out(out_dir / "frequency.json") << j.dump(2) << '\n';
    files.push_back("frequency.json");
  }
  if (result.histogram) {
    auto out = open_out(out_dir / "histogram.csv");
    out << "bin_lo,bin_hi,count\n";
    const auto& h = *result.histogram;
    for (std::size_t i = 0; i < h.counts.size(); ++i) out << fmt(h.edges[i]) << ',' << fmt(h.edges[i + 1]) << ',' << h.counts[i] << '\n';
    out << fmt(h.edges.back()) << ",inf," << h.overflow << '\n';
    files.push_back("histogram.csv");
  }
  {
    auto out = open_out(out_dir / "excluded.csv");
    out << "class,reason\n";
    for (const auto& name : result.ap.excluded) out << name << ",no test positives\n";
    for (const auto& name : result.curves.excluded) out << name << ",zero baseline AP\n";
    files.push_back("excluded.csv");
  }
  return files;
}

std::vector<std::string> write_pies(const pie::PieReport& report, const PredictionStore& store, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  {
    auto out = open_out(out_dir / "pies.csv");
    out << "image_id,agreement,flag\n";
    for (std::size_t i = 0; i < report.agreement.rho.size(); ++i) {
      out << store.image_ids[i] << ',' << fmt(report.agreement.rho[i]) << ',' << (report.flags.flags[i] ? 1 : 0) << '\n';
    }
  }
  json j;
  j["threshold_rho"] = report.flags.threshold_rho;
  j["num_pies"] = report.characterization.num_pies;
  j["num_non_pies"] = report.characterization.num_non_pies;
  j["uniform_tie"] = report.flags.uniform_tie;
  j["degenerate_vectors"] = report.agreement.num_degenerate;
  j["distinct_agreement_values"] = report.agreement.distinct_values;
  json classes = json::object();
  for (std::size_t c = 0; c < report.characterization.class_ratio.size(); ++c) {
    classes[store.class_names[c]] = ratio_json(report.characterization.class_ratio[c]);
  }
  j["class_ratio"] = classes;
  json counts = json::object();
  for (std::size_t d = 0; d < pie::kCountBuckets.size(); ++d) counts[pie::kCountBuckets[d]] = ratio_json(report.characterization.count_ratio[d]);
  j["count_ratio"] = counts;
  open_out(out_dir / "pie_characterization.json") << j.dump(2) << '\n';
  return {"pies.csv", "pie_characterization.json"};
}

std::vector<nn::MlpModel> load_models(const fs::path& dir) {
  std::vector<fs::path> paths;
  if (!fs::is_directory(dir)) return {};
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".ckpt") paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<nn::MlpModel> models;
  for (const auto& p : paths) models.push_back(nn::load_model(p));
  return models;
}

Manifest Manifest::open(const fs::path& dir) {
  Manifest m;
  m.dir_ = dir;
  const auto path = dir / "manifest.json";
  if (fs::exists(path)) {
    std::ifstream in(path);
    try {
      m.data_ = json::parse(in);
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ": " + e.what());
    }
  } else {
    m.data_ = json::object();
  }
  m.data_["software"] = {{"name", "prunelab"}, {"version", kVersion}};
  return m;
}

void Manifest::set(const std::string& section, json value) { data_[section] = std::move(value); }

void Manifest::record_outputs(const std::vector<std::string>& files) {
  for (const auto& [name, digest] : digest_files(dir_, files)) data_["outputs"][name] = {{"sha256", digest}, {"written_utc", utc_now()}};
}

void Manifest::write() const {
  fs::create_directories(dir_);
  open_out(dir_ / "manifest.json") << data_.dump(2) << '\n';
}

json design_decisions(const ExperimentConfig* cfg) {
  json j = {{"average_precision", "non-interpolated; score ties broken by ascending image index"},
            {"auroc", "Mann-Whitney with ties counted one half"},
            {"log_base", "natural"},
            {"pie_percentile", "exactly floor(0.05 N) lowest agreements; ties by ascending image index"},
            {"prunable_set", "all weight matrices; biases excluded"},
            {"prune_count", "floor(k W); magnitude ties by (layer, row, column)"},
            {"pruning_protocol", "one-shot from the trained model, no fine-tuning"},
            {"first_drop_never_crossed", analysis::kNeverDropped},
            {"first_drop_threshold", analysis::kFirstDropThreshold},
            {"frequency_correlation_split", "train (test variant also emitted)"},
            {"pair_table_split", "test"},
            {"early_stopping_metric", "mean per-class validation AUROC"},
            {"lr_schedule", "constant"},
            {"p_values", "two-sided"}};
  if (cfg) j["batch_size"] = cfg->training.batch_size;
  return j;
}

std::map<std::string, std::string> digest_files(const fs::path& dir, const std::vector<std::string>& files) {
  std::map<std::string, std::string> out;
  for (const auto& f : files) out[f] = sha256_file(dir / f);
  return out;
}

}  // namespace prunelab::experiment
