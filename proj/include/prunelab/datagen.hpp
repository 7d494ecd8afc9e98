#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace prunelab {

enum class Split : std::uint8_t { train = 0, val = 1, test = 2 };

std::string_view to_string(Split s);
Split parse_split(std::string_view s);

using LabelMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct LabeledDataset {
  FeatureMatrix features;            // N x D
  LabelMatrix labels;                // N x C, entries in {0,1}
  std::vector<Split> split;          // per row
  std::vector<std::string> class_names;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index num_classes() const { return labels.cols(); }
  Eigen::Index feature_dim() const { return features.cols(); }

  std::vector<Eigen::Index> rows_of(Split s) const;
  /// Copy of the rows tagged `s`, in original order.
  LabeledDataset subset(Split s) const;

  bool operator==(const LabeledDataset& other) const;
};

}  // namespace prunelab

namespace prunelab::datagen {

struct GeneratorConfig {
  int num_classes = 0;
  std::vector<double> target_frequencies;  // descending: head -> tail
  Eigen::MatrixXd cooccurrence_coupling;   // C x C, symmetric, unit diagonal, in [0,1]
  int latent_dim = 0;                      // must be >= num_classes
  int feature_dim = 0;
  int n_train = 0;
  int n_val = 0;
  int n_test = 0;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
  bool include_no_finding = false;
  std::vector<std::string> class_names;    // optional; defaults to class_00, class_01, ...
};

/// Throws InvalidArgument describing the first violated invariant.
void validate(const GeneratorConfig& config);

struct FrequencyCheck {
  std::string class_name;
  double target = 0.0;
  double realized = 0.0;
  bool within_tolerance = true;  // |realized - target| <= 15% of target
};

struct GeneratedDataset {
  LabeledDataset dataset;
  /// Realized train-split frequency of every targeted class against its target.
  std::vector<FrequencyCheck> frequency_checks;
  bool all_within_tolerance() const;
};

inline constexpr double kFrequencyTolerance = 0.15;

/// Latent-Gaussian threshold generator. Class directions are rows of the
/// symmetric square root of the coupling matrix, so pairwise cosine
/// similarity equals the coupling entry; a label fires when the normalized
/// projection of a standard-normal latent exceeds the (1 - f) normal quantile.
/// Features are a fixed random linear mixing of the latent plus noise. Rows are
/// laid out train, then val, then test. Deterministic in `config.seed`.
GeneratedDataset generate(const GeneratorConfig& config);

/// Per-class direction vectors (rows), exposed for tests.
Eigen::MatrixXd class_directions(const Eigen::MatrixXd& coupling);

struct RealizedStats {
  std::vector<std::int64_t> counts;
  std::vector<double> frequency;
  Eigen::MatrixXd iou;
  /// degenerate(c, c') is true when both classes are empty on the split.
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> degenerate;
  std::int64_t n = 0;
};

RealizedStats realized_stats(const LabeledDataset& ds, Split split);
RealizedStats realized_stats(const LabelMatrix& labels);

/// Named presets: "nih-lt-like", "mimic-lt-like", "reference".
GeneratorConfig preset(std::string_view name, std::uint64_t seed);
std::vector<std::string> preset_names();

/// Geometric frequency profile from `head` down to `tail` over `count` classes.
std::vector<double> geometric_frequencies(double head, double tail, int count);

/// Unit-diagonal coupling where classes c and c' share a block when
/// c % blocks == c' % blocks; in-block off-diagonal entries equal `strength`.
Eigen::MatrixXd interleaved_block_coupling(int num_classes, int blocks, double strength);

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path);
LabeledDataset load_dataset(const std::filesystem::path& path);

}  // namespace prunelab::datagen
