#include "prunelab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "container.hpp"
#include "prunelab/error.hpp"
#include "prunelab/metrics.hpp"
#include "prunelab/rng.hpp"

namespace prunelab::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_sizes(std::span<const int> sizes) {
  if (sizes.size() < 2) throw InvalidArgument("an MLP needs at least two layer sizes");
  for (int s : sizes) {
    if (s <= 0) throw InvalidArgument("layer sizes must be positive");
  }
}

struct Activations {
  std::vector<Eigen::MatrixXd> pre;   // Z_l, N x sizes[l+1]
  std::vector<Eigen::MatrixXd> post;  // A_l (ReLU), hidden layers only
};

Activations run_forward(const MlpModel& model, const Eigen::Ref<const FeatureMatrix>& x) {
  if (x.cols() != model.input_dim()) {
    throw InvalidArgument("forward: feature dimension " + std::to_string(x.cols()) + " does not match model input " +
                          std::to_string(model.input_dim()));
  }
  Activations act;
  const std::size_t layers = model.num_layers();
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd z;
    if (l == 0) {
      z.noalias() = x * model.weights[0].transpose();
    } else {
      z.noalias() = act.post[l - 1] * model.weights[l].transpose();
    }
    z.rowwise() += model.biases[l].transpose();
    act.pre.push_back(std::move(z));
    if (l + 1 < layers) act.post.push_back(act.pre.back().cwiseMax(0.0));
  }
  return act;
}

Gradients zero_like(const MlpModel& model) {
  Gradients g;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    g.weights.push_back(Eigen::MatrixXd::Zero(model.weights[l].rows(), model.weights[l].cols()));
    g.biases.push_back(Eigen::VectorXd::Zero(model.biases[l].size()));
  }
  return g;
}

}  // namespace

std::size_t MlpModel::num_prunable() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += static_cast<std::size_t>(w.size());
  return n;
}

bool MlpModel::all_finite() const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
  }
  return true;
}

bool MlpModel::operator==(const MlpModel& other) const {
  if (layer_sizes != other.layer_sizes) return false;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l] != other.weights[l] || biases[l] != other.biases[l]) return false;
  }
  return true;
}

void validate(const TrainConfig& config) {
  if (!(config.learning_rate >= 0.0) || !std::isfinite(config.learning_rate)) {
    throw InvalidArgument("learning_rate must be a finite nonnegative number");
  }
  if (!(config.adam_beta1 >= 0.0 && config.adam_beta1 < 1.0) || !(config.adam_beta2 >= 0.0 && config.adam_beta2 < 1.0)) {
    throw InvalidArgument("Adam betas must lie in [0,1)");
  }
  if (!(config.adam_eps > 0.0)) throw InvalidArgument("adam_eps must be positive");
  if (config.batch_size < 1) throw InvalidArgument("batch_size must be positive");
  if (config.max_epochs < 1) throw InvalidArgument("max_epochs must be positive");
  if (config.patience < 1) throw InvalidArgument("patience must be at least 1");
}

MlpModel init_model(std::span<const int> layer_sizes, std::uint64_t seed) {
  check_sizes(layer_sizes);
  MlpModel m;
  m.layer_sizes.assign(layer_sizes.begin(), layer_sizes.end());
  std::mt19937_64 rng(derive_seed(seed, 0x1417));
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l];
    const int fan_out = layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    Eigen::MatrixXd w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) w(r, c) = dist(rng);
    }
    m.weights.push_back(std::move(w));
    m.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return m;
}

Eigen::MatrixXd forward(const MlpModel& model, const Eigen::Ref<const FeatureMatrix>& features) {
  return std::move(run_forward(model, features).pre.back());
}

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& logits) {
  return logits.unaryExpr([](double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
  });
}

Eigen::MatrixXd predict_proba(const MlpModel& model, const Eigen::Ref<const FeatureMatrix>& features) {
  return sigmoid(forward(model, features));
}

LossAndGrad bce_loss_and_grad(const MlpModel& model, const Eigen::Ref<const FeatureMatrix>& features,
                              const Eigen::Ref<const LabelMatrix>& labels) {
  if (labels.rows() != features.rows() || labels.cols() != model.output_dim()) {
    throw InvalidArgument("bce_loss_and_grad: label shape does not match features/model");
  }
  if ((labels.array() > 1).any()) throw InvalidArgument("bce_loss_and_grad: labels must be binary");

  Activations act = run_forward(model, features);
  const Eigen::MatrixXd& z = act.pre.back();
  const Eigen::MatrixXd y = labels.cast<double>();
  const double scale = 1.0 / static_cast<double>(z.size());

  LossAndGrad out;
  out.loss = (z.cwiseMax(0.0) - y.cwiseProduct(z) + z.cwiseAbs().unaryExpr([](double a) { return std::log1p(std::exp(-a)); }))
                 .sum() * scale;

  out.grad = zero_like(model);
  Eigen::MatrixXd delta = (sigmoid(z) - y) * scale;
  for (std::size_t l = model.num_layers(); l-- > 0;) {
    if (l == 0) {
      out.grad.weights[0].noalias() = delta.transpose() * features;
    } else {
      out.grad.weights[l].noalias() = delta.transpose() * act.post[l - 1];
    }
    out.grad.biases[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      Eigen::MatrixXd back = delta * model.weights[l];
      delta = back.cwiseProduct((act.pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return out;
}

double mean_auroc(const Eigen::MatrixXd& scores, const Eigen::Ref<const LabelMatrix>& labels) {
  double sum = 0.0;
  int used = 0;
  std::vector<double> s(static_cast<std::size_t>(scores.rows()));
  std::vector<std::uint8_t> y(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index c = 0; c < scores.cols(); ++c) {
    std::size_t pos = 0;
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
      s[static_cast<std::size_t>(i)] = scores(i, c);
      y[static_cast<std::size_t>(i)] = labels(i, c);
      pos += labels(i, c);
    }
    if (pos == 0 || pos == y.size()) continue;
    sum += metrics::auroc(s, y);
    ++used;
  }
  if (used == 0) throw DegenerateInput("mean AUROC undefined: no class has both labels present");
  return sum / used;
}

TrainResult train(const LabeledDataset& dataset, std::span<const int> layer_sizes, const TrainConfig& config) {
  validate(config);
  check_sizes(layer_sizes);
  if (layer_sizes.front() != dataset.feature_dim() || layer_sizes.back() != dataset.num_classes()) {
    throw InvalidArgument("train: layer sizes must start at the feature dimension and end at the class count");
  }
  const auto train_rows = dataset.rows_of(Split::train);
  const LabeledDataset val = dataset.subset(Split::val);
  if (train_rows.empty() || val.size() == 0) throw InvalidArgument("train: dataset needs train and val rows");

  MlpModel model = init_model(layer_sizes, config.seed);
  if (config.prior_output_bias) {
    const double n = static_cast<double>(train_rows.size());
    auto& bias = model.biases.back();
    for (Eigen::Index c = 0; c < bias.size(); ++c) {
      double pos = 0.0;
      for (auto r : train_rows) pos += dataset.labels(r, c);
      const double p = std::clamp(pos / n, 0.5 / n, 1.0 - 0.5 / n);
      bias(c) = std::log(p / (1.0 - p));
    }
  }
  Gradients m1 = zero_like(model);
  Gradients m2 = zero_like(model);
  std::mt19937_64 order_rng(derive_seed(config.seed, 0x5eed));
  std::vector<Eigen::Index> order(train_rows.begin(), train_rows.end());

  TrainResult result;
  result.model = model;
  double best = -std::numeric_limits<double>::infinity();
  int since_best = 0;
  long long step = 0;

  FeatureMatrix xb;
  LabelMatrix yb;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const auto rows = static_cast<Eigen::Index>(stop - start);
      xb.resize(rows, dataset.feature_dim());
      yb.resize(rows, dataset.num_classes());
      for (Eigen::Index i = 0; i < rows; ++i) {
        xb.row(i) = dataset.features.row(order[start + static_cast<std::size_t>(i)]);
        yb.row(i) = dataset.labels.row(order[start + static_cast<std::size_t>(i)]);
      }
      LossAndGrad lg = bce_loss_and_grad(model, xb, yb);
      if (!std::isfinite(lg.loss)) {
        throw TrainingDiverged(epoch, "training diverged: non-finite loss in epoch " + std::to_string(epoch));
      }
      loss_sum += lg.loss;
      ++batches;

      ++step;
      const double c1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(step));
      const double b1 = config.adam_beta1, b2 = config.adam_beta2, lr = config.learning_rate, eps = config.adam_eps;
      auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
        param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
      };
      for (std::size_t l = 0; l < model.num_layers(); ++l) {
        update(model.weights[l], m1.weights[l], m2.weights[l], lg.grad.weights[l]);
        update(model.biases[l], m1.biases[l], m2.biases[l], lg.grad.biases[l]);
      }
    }
    if (!model.all_finite()) {
      throw TrainingDiverged(epoch, "training diverged: non-finite parameters after epoch " + std::to_string(epoch));
    }

    const double auc = mean_auroc(forward(model, val.features), val.labels);
    result.history.train_loss.push_back(loss_sum / batches);
    result.history.val_auroc.push_back(auc);
    result.history.epochs_run = epoch;
    if (auc > best) {
      best = auc;
      since_best = 0;
      result.model = model;
      result.history.best_epoch = epoch;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

std::size_t Histogram::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0}) + overflow;
}

Histogram weight_magnitude_histogram(const MlpModel& model, std::span<const double> bin_edges) {
  if (bin_edges.size() < 2) throw InvalidArgument("histogram needs at least two bin edges");
  for (std::size_t i = 0; i < bin_edges.size(); ++i) {
    if (bin_edges[i] < 0.0 || (i > 0 && !(bin_edges[i] > bin_edges[i - 1]))) {
      throw InvalidArgument("histogram bin edges must be nonnegative and strictly increasing");
    }
  }
  Histogram h;
  h.edges.assign(bin_edges.begin(), bin_edges.end());
  h.counts.assign(bin_edges.size() - 1, 0);
  for (const auto& w : model.weights) {
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double a = std::abs(w.data()[i]);
      if (a >= bin_edges.back()) {
        ++h.overflow;
        continue;
      }
      // first edge strictly greater than a, minus one; underflow clamps to bin 0
      const auto it = std::upper_bound(bin_edges.begin(), bin_edges.end(), a);
      const auto bin = it == bin_edges.begin() ? 0 : static_cast<std::size_t>(it - bin_edges.begin()) - 1;
      ++h.counts[bin];
    }
  }
  return h;
}

std::vector<double> log_spaced_edges(double lo, double hi, int count) {
  if (!(lo > 0.0 && hi > lo) || count < 1) throw InvalidArgument("log_spaced_edges: need 0 < lo < hi and count >= 1");
  std::vector<double> edges(static_cast<std::size_t>(count) + 1);
  const double a = std::log10(lo), b = std::log10(hi);
  for (int i = 0; i <= count; ++i) edges[static_cast<std::size_t>(i)] = std::pow(10.0, a + (b - a) * i / count);
  edges.front() = lo;
  edges.back() = hi;
  return edges;
}

void save_model(const MlpModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  detail::ContainerHeader h;
  h.kind = detail::ContainerKind::model;
  h.requested = std::nan("");
  h.achieved = std::nan("");
  h.sizes = model.layer_sizes;
  detail::write_header(out, h);
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    const RowMatrix w = model.weights[l];
    detail::write_array(out, w.data(), static_cast<std::size_t>(w.size()));
    detail::write_array(out, model.biases[l].data(), static_cast<std::size_t>(model.biases[l].size()));
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

MlpModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  const auto h = detail::read_header(in, path.string());
  if (h.kind != detail::ContainerKind::model) throw ParseError(path.string() + ": container holds a mask, not a model");
  MlpModel m;
  m.layer_sizes = h.sizes;
  for (std::size_t l = 0; l + 1 < h.sizes.size(); ++l) {
    RowMatrix w(h.sizes[l + 1], h.sizes[l]);
    detail::read_array(in, w.data(), static_cast<std::size_t>(w.size()), path.string());
    Eigen::VectorXd b(h.sizes[l + 1]);
    detail::read_array(in, b.data(), static_cast<std::size_t>(b.size()), path.string());
    m.weights.emplace_back(w);
    m.biases.push_back(std::move(b));
  }
  if (!m.all_finite()) throw ParseError(path.string() + ": checkpoint contains non-finite parameters");
  return m;
}

}  // namespace prunelab::nn
