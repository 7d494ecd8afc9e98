#include "prunelab/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "prunelab/error.hpp"
#include "prunelab/rng.hpp"
#include "prunelab/stats.hpp"
#include "text_io.hpp"

namespace prunelab {

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw InvalidArgument("unknown split tag '" + std::string(s) + "'");
}

std::vector<Eigen::Index> LabeledDataset::rows_of(Split s) const {
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == s) rows.push_back(static_cast<Eigen::Index>(i));
  }
  return rows;
}

LabeledDataset LabeledDataset::subset(Split s) const {
  const auto rows = rows_of(s);
  LabeledDataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.labels.resize(static_cast<Eigen::Index>(rows.size()), labels.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(rows[i]);
    out.labels.row(static_cast<Eigen::Index>(i)) = labels.row(rows[i]);
  }
  out.split.assign(rows.size(), s);
  out.class_names = class_names;
  return out;
}

bool LabeledDataset::operator==(const LabeledDataset& other) const {
  return features.rows() == other.features.rows() && features.cols() == other.features.cols() &&
         labels.rows() == other.labels.rows() && labels.cols() == other.labels.cols() &&
         features == other.features && labels == other.labels && split == other.split &&
         class_names == other.class_names;
}

}  // namespace prunelab

namespace prunelab::datagen {

namespace {

constexpr double kNegativeEigenTolerance = 1e-8;
constexpr const char* kNoFindingName = "No Finding";

std::string default_class_name(int c) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "class_%02d", c);
  return buf;
}

}  // namespace

void validate(const GeneratorConfig& config) {
  const int c = config.num_classes;
  if (c <= 0) throw InvalidArgument("num_classes must be positive");
  if (static_cast<int>(config.target_frequencies.size()) != c) {
    throw InvalidArgument("target_frequencies must have num_classes entries");
  }
  for (int i = 0; i < c; ++i) {
    const double f = config.target_frequencies[i];
    if (!(f > 0.0 && f < 1.0)) {
      std::ostringstream msg;
      msg << "infeasible target frequency " << f << " for class " << i << " (must lie strictly in (0,1))";
      throw InvalidArgument(msg.str());
    }
    if (i > 0 && f > config.target_frequencies[i - 1]) {
      throw InvalidArgument("target_frequencies must be sorted descending (head to tail)");
    }
  }
  const auto& k = config.cooccurrence_coupling;
  if (k.rows() != c || k.cols() != c) throw InvalidArgument("cooccurrence_coupling must be C x C");
  for (int i = 0; i < c; ++i) {
    if (k(i, i) != 1.0) throw InvalidArgument("cooccurrence_coupling diagonal must be exactly 1");
    for (int j = 0; j < c; ++j) {
      if (!(k(i, j) >= 0.0 && k(i, j) <= 1.0)) throw InvalidArgument("cooccurrence_coupling entries must lie in [0,1]");
      if (k(i, j) != k(j, i)) throw InvalidArgument("cooccurrence_coupling must be symmetric");
    }
  }
  if (config.latent_dim < c) throw InvalidArgument("latent_dim must be at least num_classes");
  if (config.feature_dim <= 0) throw InvalidArgument("feature_dim must be positive");
  if (config.n_train <= 0 || config.n_val <= 0 || config.n_test <= 0) {
    throw InvalidArgument("n_train, n_val and n_test must all be positive");
  }
  if (!(config.noise_std >= 0.0) || !std::isfinite(config.noise_std)) throw InvalidArgument("noise_std must be nonnegative");
  if (!config.class_names.empty() && static_cast<int>(config.class_names.size()) != c) {
    throw InvalidArgument("class_names must be empty or have num_classes entries");
  }
}

Eigen::MatrixXd class_directions(const Eigen::MatrixXd& coupling) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(coupling);
  if (eig.info() != Eigen::Success) throw InvalidArgument("eigendecomposition of coupling matrix failed");
  Eigen::VectorXd values = eig.eigenvalues();
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (values(i) < -kNegativeEigenTolerance) {
      std::ostringstream msg;
      msg.precision(6);
      msg << "cooccurrence_coupling is not positive semidefinite: eigenvalue " << values(i);
      throw InvalidArgument(msg.str());
    }
    values(i) = std::max(0.0, values(i));
  }
  const Eigen::MatrixXd& q = eig.eigenvectors();
  return q * values.cwiseSqrt().asDiagonal() * q.transpose();
}

bool GeneratedDataset::all_within_tolerance() const {
  return std::all_of(frequency_checks.begin(), frequency_checks.end(),
                     [](const FrequencyCheck& f) { return f.within_tolerance; });
}

GeneratedDataset generate(const GeneratorConfig& config) {
  validate(config);
  const int c = config.num_classes;
  const int latent = config.latent_dim;
  const int d = config.feature_dim;
  const Eigen::Index n = static_cast<Eigen::Index>(config.n_train) + config.n_val + config.n_test;

  const Eigen::MatrixXd directions = class_directions(config.cooccurrence_coupling);
  Eigen::VectorXd thresholds(c);
  Eigen::VectorXd inv_norms(c);
  for (int i = 0; i < c; ++i) {
    thresholds(i) = stats::normal_quantile(1.0 - config.target_frequencies[i]);
    const double norm = directions.row(i).norm();
    inv_norms(i) = norm > 0.0 ? 1.0 / norm : 0.0;
  }

  std::mt19937_64 mixing_rng(derive_seed(config.seed, 1));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd mixing(d, latent);
  const double mixing_scale = 1.0 / std::sqrt(static_cast<double>(latent));
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < latent; ++j) mixing(i, j) = normal(mixing_rng) * mixing_scale;
  }

  const int total_classes = c + (config.include_no_finding ? 1 : 0);
  GeneratedDataset out;
  LabeledDataset& ds = out.dataset;
  ds.features.resize(n, d);
  ds.labels.resize(n, total_classes);
  ds.split.resize(static_cast<std::size_t>(n));
  ds.class_names = config.class_names;
  if (ds.class_names.empty()) {
    for (int i = 0; i < c; ++i) ds.class_names.push_back(default_class_name(i));
  }
  if (config.include_no_finding) ds.class_names.emplace_back(kNoFindingName);

  std::mt19937_64 sample_rng(derive_seed(config.seed, 2));
  Eigen::VectorXd u(latent);
  Eigen::VectorXd eps(d);
  for (Eigen::Index row = 0; row < n; ++row) {
    for (int j = 0; j < latent; ++j) u(j) = normal(sample_rng);
    for (int j = 0; j < d; ++j) eps(j) = normal(sample_rng);

    const Eigen::VectorXd scores = (directions * u.head(c)).cwiseProduct(inv_norms);
    bool any = false;
    for (int i = 0; i < c; ++i) {
      const bool on = scores(i) > thresholds(i);
      ds.labels(row, i) = on ? 1 : 0;
      any = any || on;
    }
    if (config.include_no_finding) ds.labels(row, c) = any ? 0 : 1;

    ds.features.row(row) = (mixing * u + config.noise_std * eps).transpose();
    ds.split[static_cast<std::size_t>(row)] =
        row < config.n_train ? Split::train : (row < config.n_train + config.n_val ? Split::val : Split::test);
  }

  const RealizedStats train = realized_stats(ds, Split::train);
  for (int i = 0; i < c; ++i) {
    FrequencyCheck check;
    check.class_name = ds.class_names[static_cast<std::size_t>(i)];
    check.target = config.target_frequencies[static_cast<std::size_t>(i)];
    check.realized = train.frequency[static_cast<std::size_t>(i)];
    check.within_tolerance = std::abs(check.realized - check.target) <= kFrequencyTolerance * check.target;
    out.frequency_checks.push_back(check);
  }
  return out;
}

RealizedStats realized_stats(const LabelMatrix& labels) {
  const Eigen::Index n = labels.rows();
  const Eigen::Index c = labels.cols();
  if (n == 0) throw InvalidArgument("realized_stats: split is empty");
  RealizedStats out;
  out.n = n;
  out.counts.assign(static_cast<std::size_t>(c), 0);
  Eigen::MatrixXd both = Eigen::MatrixXd::Zero(c, c);
  for (Eigen::Index row = 0; row < n; ++row) {
    for (Eigen::Index a = 0; a < c; ++a) {
      if (labels(row, a) == 0) continue;
      ++out.counts[static_cast<std::size_t>(a)];
      for (Eigen::Index b = a; b < c; ++b) {
        if (labels(row, b) != 0) both(a, b) += 1.0;
      }
    }
  }
  out.frequency.resize(static_cast<std::size_t>(c));
  for (Eigen::Index a = 0; a < c; ++a) {
    out.frequency[static_cast<std::size_t>(a)] = static_cast<double>(out.counts[static_cast<std::size_t>(a)]) / static_cast<double>(n);
  }
  out.iou = Eigen::MatrixXd::Zero(c, c);
  out.degenerate.setConstant(c, c, false);
  for (Eigen::Index a = 0; a < c; ++a) {
    for (Eigen::Index b = a; b < c; ++b) {
      const double inter = both(a, b);
      const double uni = static_cast<double>(out.counts[static_cast<std::size_t>(a)] + out.counts[static_cast<std::size_t>(b)]) - inter;
      if (uni == 0.0) {
        out.degenerate(a, b) = out.degenerate(b, a) = true;
      } else {
        out.iou(a, b) = out.iou(b, a) = inter / uni;
      }
    }
  }
  return out;
}

RealizedStats realized_stats(const LabeledDataset& ds, Split split) {
  const auto rows = ds.rows_of(split);
  if (rows.empty()) throw InvalidArgument("realized_stats: split '" + std::string(to_string(split)) + "' is empty");
  LabelMatrix sub(static_cast<Eigen::Index>(rows.size()), ds.labels.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) sub.row(static_cast<Eigen::Index>(i)) = ds.labels.row(rows[i]);
  return realized_stats(sub);
}

std::vector<double> geometric_frequencies(double head, double tail, int count) {
  if (count < 1 || !(head > 0.0 && head < 1.0) || !(tail > 0.0 && tail <= head)) {
    throw InvalidArgument("geometric_frequencies: need 0 < tail <= head < 1 and count >= 1");
  }
  std::vector<double> out(static_cast<std::size_t>(count));
  if (count == 1) {
    out[0] = head;
    return out;
  }
  const double ratio = std::pow(tail / head, 1.0 / (count - 1));
  for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = head * std::pow(ratio, i);
  out.back() = tail;
  return out;
}

Eigen::MatrixXd interleaved_block_coupling(int num_classes, int blocks, double strength) {
  if (num_classes < 1 || blocks < 1 || !(strength >= 0.0 && strength <= 1.0)) {
    throw InvalidArgument("interleaved_block_coupling: bad arguments");
  }
  Eigen::MatrixXd k = Eigen::MatrixXd::Identity(num_classes, num_classes);
  for (int a = 0; a < num_classes; ++a) {
    for (int b = 0; b < num_classes; ++b) {
      if (a != b && a % blocks == b % blocks) k(a, b) = strength;
    }
  }
  return k;
}

std::vector<std::string> preset_names() { return {"reference", "nih-lt-like", "mimic-lt-like"}; }

GeneratorConfig preset(std::string_view name, std::uint64_t seed) {
  GeneratorConfig cfg;
  cfg.seed = seed;
  if (name == "reference") {
    cfg.num_classes = 12;
    cfg.target_frequencies = geometric_frequencies(0.30, 0.0015, 12);
    cfg.cooccurrence_coupling = interleaved_block_coupling(12, 3, 0.3);
    cfg.latent_dim = 12;
    cfg.feature_dim = 64;
    cfg.n_train = 12000;
    cfg.n_val = 2000;
    cfg.n_test = 4000;
    cfg.noise_std = 1.0;
    return cfg;
  }
  if (name == "nih-lt-like") {
    // 19 findings ordered by training prevalence, plus a derived "No Finding".
    cfg.class_names = {"Infiltration", "Effusion", "Atelectasis", "Nodule", "Mass",
                       "Consolidation", "Pneumothorax", "Pleural Thickening", "Cardiomegaly",
                       "Emphysema", "Edema", "Fibrosis", "Subcutaneous Emphysema", "Pneumonia",
                       "Tortuous Aorta", "Calcification of the Aorta", "Pneumoperitoneum", "Hernia",
                       "Pneumomediastinum"};
    cfg.num_classes = 19;
    cfg.target_frequencies = geometric_frequencies(0.16, 0.00025, 19);
    cfg.cooccurrence_coupling = interleaved_block_coupling(19, 4, 0.4);
    cfg.latent_dim = 24;
    cfg.feature_dim = 64;
    cfg.n_train = 35000;
    cfg.n_val = 5000;
    cfg.n_test = 10000;
    cfg.noise_std = 0.5;
    cfg.include_no_finding = true;
    return cfg;
  }
  if (name == "mimic-lt-like") {
    cfg.class_names = {"Support Devices", "Lung Opacity", "Cardiomegaly", "Effusion", "Atelectasis",
                       "Pneumonia", "Edema", "Enlarged Cardiomediastinum", "Consolidation",
                       "Pneumothorax", "Fracture", "Calcification of the Aorta", "Tortuous Aorta",
                       "Subcutaneous Emphysema", "Lung Lesion", "Pneumomediastinum", "Pneumoperitoneum",
                       "Pleural Other"};
    cfg.num_classes = 18;
    cfg.target_frequencies = geometric_frequencies(0.40, 0.002, 18);
    cfg.cooccurrence_coupling = interleaved_block_coupling(18, 4, 0.4);
    cfg.latent_dim = 24;
    cfg.feature_dim = 64;
    cfg.n_train = 35000;
    cfg.n_val = 5000;
    cfg.n_test = 10000;
    cfg.noise_std = 0.5;
    cfg.include_no_finding = true;
    return cfg;
  }
  throw InvalidArgument("unknown preset '" + std::string(name) + "'");
}

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (const auto& name : ds.class_names) {
    if (name.find_first_of(",\n\r") != std::string::npos) {
      throw InvalidArgument("class name '" + name + "' contains a comma or newline");
    }
  }
  out << "#prunelab-dataset v1, C=" << ds.labels.cols() << ", D=" << ds.features.cols() << '\n';
  for (std::size_t i = 0; i < ds.class_names.size(); ++i) {
    if (i) out << ',';
    out << ds.class_names[i];
  }
  out << '\n';
  std::string line;
  for (Eigen::Index row = 0; row < ds.features.rows(); ++row) {
    line.assign(to_string(ds.split[static_cast<std::size_t>(row)]));
    for (Eigen::Index c = 0; c < ds.labels.cols(); ++c) {
      line += ',';
      line += ds.labels(row, c) ? '1' : '0';
    }
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
      line += ',';
      line += detail::format_double(ds.features(row, j));
    }
    line += '\n';
    out << line;
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  auto fail = [&](std::size_t line_no, const std::string& what) -> ParseError {
    return ParseError(path.string() + ":" + std::to_string(line_no) + ": " + what);
  };

  std::string line;
  if (!std::getline(in, line) || line.empty()) throw fail(1, "missing header");
  long long c = 0, d = 0;
  {
    constexpr std::string_view prefix = "#prunelab-dataset v1, C=";
    if (line.rfind(prefix, 0) != 0) throw fail(1, "malformed header (expected '#prunelab-dataset v1, C=<int>, D=<int>')");
    const auto rest = std::string_view(line).substr(prefix.size());
    const auto comma = rest.find(", D=");
    if (comma == std::string_view::npos) throw fail(1, "malformed header (missing D=)");
    auto pc = detail::parse_int(rest.substr(0, comma));
    auto pd = detail::parse_int(rest.substr(comma + 4));
    if (!pc || !pd || *pc <= 0 || *pd <= 0) throw fail(1, "malformed header (C and D must be positive integers)");
    c = *pc;
    d = *pd;
  }

  LabeledDataset ds;
  if (!std::getline(in, line)) throw fail(2, "missing class-name line");
  for (auto name : detail::split(line, ',')) ds.class_names.emplace_back(name);
  if (static_cast<long long>(ds.class_names.size()) != c) throw fail(2, "expected " + std::to_string(c) + " class names");

  std::vector<std::uint8_t> labels;
  std::vector<double> features;
  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) throw fail(line_no, "empty row");
    const auto fields = detail::split(line, ',');
    if (static_cast<long long>(fields.size()) != 1 + c + d) {
      throw fail(line_no, "ragged row: expected " + std::to_string(1 + c + d) + " fields, found " + std::to_string(fields.size()));
    }
    try {
      ds.split.push_back(parse_split(fields[0]));
    } catch (const InvalidArgument&) {
      throw fail(line_no, "column 1: unknown split tag '" + std::string(fields[0]) + "'");
    }
    for (long long j = 0; j < c; ++j) {
      const auto f = fields[static_cast<std::size_t>(1 + j)];
      if (f != "0" && f != "1") {
        throw fail(line_no, "column " + std::to_string(2 + j) + ": non-binary label '" + std::string(f) + "'");
      }
      labels.push_back(f == "1" ? 1 : 0);
    }
    for (long long j = 0; j < d; ++j) {
      const auto f = fields[static_cast<std::size_t>(1 + c + j)];
      auto v = detail::parse_double(f);
      if (!v) throw fail(line_no, "column " + std::to_string(2 + c + j) + ": invalid number '" + std::string(f) + "'");
      features.push_back(*v);
    }
  }
  const auto n = static_cast<Eigen::Index>(ds.split.size());
  ds.labels = Eigen::Map<LabelMatrix>(labels.data(), n, c);
  ds.features = Eigen::Map<FeatureMatrix>(features.data(), n, d);
  for (Split s : {Split::train, Split::val, Split::test}) {
    if (ds.rows_of(s).empty()) throw ParseError(path.string() + ": split '" + std::string(to_string(s)) + "' has no rows");
  }
  return ds;
}

}  // namespace prunelab::datagen
