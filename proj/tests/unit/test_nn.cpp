#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "doctest.h"
#include "prunelab/error.hpp"
#include "prunelab/nn.hpp"

using namespace prunelab;
using doctest::Approx;
namespace fs = std::filesystem;

namespace {

FeatureMatrix random_features(Eigen::Index n, Eigen::Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  FeatureMatrix x(n, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  return x;
}

LabelMatrix random_labels(Eigen::Index n, Eigen::Index c, std::mt19937_64& rng) {
  std::bernoulli_distribution b(0.4);
  LabelMatrix y(n, c);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = b(rng);
  return y;
}

// Two linearly separable classes in 4-D, shared by training tests.
LabeledDataset separable_dataset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  const int n = 600;
  LabeledDataset ds;
  ds.features.resize(n, 4);
  ds.labels.resize(n, 2);
  ds.class_names = {"a", "b"};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 4; ++j) ds.features(i, j) = g(rng);
    const double s0 = ds.features(i, 0) + 0.5 * ds.features(i, 1);
    const double s1 = ds.features(i, 2) - ds.features(i, 3);
    ds.features(i, 0) += s0 > 0 ? 0.5 : -0.5;
    ds.features(i, 2) += s1 > 0 ? 0.5 : -0.5;
    ds.labels(i, 0) = s0 > 0;
    ds.labels(i, 1) = s1 > 0;
    ds.split.push_back(i < 400 ? Split::train : i < 500 ? Split::val : Split::test);
  }
  return ds;
}

double loss_of(const nn::MlpModel& m, const FeatureMatrix& x, const LabelMatrix& y) {
  return nn::bce_loss_and_grad(m, x, y).loss;
}

bool grad_close(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < 1e-8) return std::abs(analytic - numeric) < 1e-10;  // dead units: both ~0
  return std::abs(analytic - numeric) / scale <= 1e-6;
}

}  // namespace

TEST_CASE("initialization") {
  const std::vector<int> sizes{8, 4, 3};
  const auto a = nn::init_model(sizes, 1);
  CHECK(a == nn::init_model(sizes, 1));
  CHECK_FALSE(a == nn::init_model(sizes, 2));
  REQUIRE(a.weights.size() == 2);
  CHECK(a.weights[0].rows() == 4);
  CHECK(a.weights[0].cols() == 8);
  CHECK(a.weights[1].rows() == 3);
  CHECK(a.weights[1].cols() == 4);
  CHECK(a.biases[0].isZero());
  CHECK(a.weights[0].cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 8.0));
  CHECK(a.weights[1].cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 4.0));
  CHECK(a.num_prunable() == 44);
  CHECK_THROWS_AS(nn::init_model(std::vector<int>{3, 0, 2}, 1), InvalidArgument);
  CHECK_THROWS_AS(nn::init_model(std::vector<int>{3}, 1), InvalidArgument);
}

TEST_CASE("forward pass") {
  SUBCASE("zero model") {
    auto m = nn::init_model(std::vector<int>{3, 5, 2}, 1);
    for (auto& w : m.weights) w.setZero();
    FeatureMatrix x = FeatureMatrix::Ones(4, 3);
    CHECK(nn::forward(m, x).isZero());
    CHECK((nn::predict_proba(m, x).array() == 0.5).all());
  }
  SUBCASE("hand computation with one hidden unit") {
    nn::MlpModel m;
    m.layer_sizes = {2, 1, 1};
    m.weights = {Eigen::MatrixXd(1, 2), Eigen::MatrixXd(1, 1)};
    m.weights[0] << 2.0, -1.0;
    m.weights[1] << 3.0;
    m.biases = {Eigen::VectorXd::Constant(1, 0.5), Eigen::VectorXd::Constant(1, -1.0)};
    FeatureMatrix x(1, 2);
    x << 1.0, 0.5;
    // hidden = relu(2 - 0.5 + 0.5) = 2; logit = 3*2 - 1 = 5
    CHECK(nn::forward(m, x)(0, 0) == 5.0);
    x << -1.0, 0.5;  // relu(-2) = 0
    CHECK(nn::forward(m, x)(0, 0) == -1.0);
  }
  SUBCASE("batch equals stacked single rows") {
    std::mt19937_64 rng(3);
    const auto m = nn::init_model(std::vector<int>{5, 7, 3}, 9);
    const auto x = random_features(2, 5, rng);
    const auto both = nn::forward(m, x);
    CHECK(both.row(0) == nn::forward(m, x.row(0)).row(0));
    CHECK(both.row(1) == nn::forward(m, x.row(1)).row(0));
  }
  SUBCASE("dimension mismatch") {
    const auto m = nn::init_model(std::vector<int>{5, 3}, 9);
    CHECK_THROWS_AS(nn::forward(m, FeatureMatrix::Zero(2, 4)), InvalidArgument);
  }
}

TEST_CASE("binary cross-entropy") {
  SUBCASE("zero logits give log 2") {
    auto m = nn::init_model(std::vector<int>{3, 4, 2}, 1);
    for (auto& w : m.weights) w.setZero();
    std::mt19937_64 rng(1);
    const auto r = nn::bce_loss_and_grad(m, random_features(6, 3, rng), random_labels(6, 2, rng));
    CHECK(r.loss == Approx(std::log(2.0)).epsilon(1e-15));
  }
  SUBCASE("saturated correct predictions") {
    nn::MlpModel m;
    m.layer_sizes = {1, 2};
    m.weights = {Eigen::MatrixXd::Zero(2, 1)};
    m.biases = {Eigen::Vector2d(30.0, -30.0)};
    LabelMatrix y(3, 2);
    y << 1, 0, 1, 0, 1, 0;
    CHECK(nn::bce_loss_and_grad(m, FeatureMatrix::Zero(3, 1), y).loss < 1e-10);
  }
  SUBCASE("non-binary labels are rejected") {
    const auto m = nn::init_model(std::vector<int>{2, 2}, 1);
    LabelMatrix y(1, 2);
    y << 1, 2;
    CHECK_THROWS_AS(nn::bce_loss_and_grad(m, FeatureMatrix::Zero(1, 2), y), InvalidArgument);
  }
}

TEST_CASE("gradients match central finite differences on random networks") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> width(1, 6);
  const double h = 1e-5;
  for (int net = 0; net < 20; ++net) {
    std::vector<int> sizes{width(rng) + 1};
    const int hidden_layers = 1 + net % 2;
    for (int l = 0; l < hidden_layers; ++l) sizes.push_back(width(rng) + 1);
    sizes.push_back(width(rng));
    auto m = nn::init_model(sizes, static_cast<std::uint64_t>(net) + 100);
    for (auto& b : m.biases) b.setRandom();
    const auto x = random_features(5, sizes.front(), rng);
    const auto y = random_labels(5, sizes.back(), rng);
    const auto analytic = nn::bce_loss_and_grad(m, x, y).grad;

    for (std::size_t l = 0; l < m.weights.size(); ++l) {
      for (Eigen::Index i = 0; i < m.weights[l].size(); ++i) {
        double& w = m.weights[l].data()[i];
        const double saved = w;
        w = saved + h;
        const double up = loss_of(m, x, y);
        w = saved - h;
        const double down = loss_of(m, x, y);
        w = saved;
        CAPTURE(net);
        CHECK(grad_close(analytic.weights[l].data()[i], (up - down) / (2 * h)));
      }
      for (Eigen::Index i = 0; i < m.biases[l].size(); ++i) {
        double& b = m.biases[l](i);
        const double saved = b;
        b = saved + h;
        const double up = loss_of(m, x, y);
        b = saved - h;
        const double down = loss_of(m, x, y);
        b = saved;
        CHECK(grad_close(analytic.biases[l](i), (up - down) / (2 * h)));
      }
    }
  }
}

TEST_CASE("training") {
  const auto ds = separable_dataset(5);
  const std::vector<int> sizes{4, 16, 2};
  nn::TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.batch_size = 32;
  cfg.max_epochs = 60;
  cfg.patience = 10;
  cfg.seed = 7;

  SUBCASE("separable data is learned") {
    const auto r = nn::train(ds, sizes, cfg);
    const auto val = ds.subset(Split::val);
    CHECK(nn::mean_auroc(nn::predict_proba(r.model, val.features), val.labels) >= 0.99);
  }
  SUBCASE("deterministic") {
    cfg.max_epochs = 5;
    CHECK(nn::train(ds, sizes, cfg).model == nn::train(ds, sizes, cfg).model);
  }
  SUBCASE("zero learning rate with patience 1 stops after two epochs") {
    cfg.learning_rate = 0.0;
    cfg.patience = 1;
    const auto r = nn::train(ds, sizes, cfg);
    CHECK(r.history.epochs_run == 2);
    CHECK(r.history.best_epoch == 1);
    CHECK(r.model == nn::init_model(sizes, cfg.seed));
  }
  SUBCASE("loss decreases over the first epochs") {
    cfg.learning_rate = 1e-3;
    cfg.max_epochs = 5;
    cfg.patience = 5;
    const auto r = nn::train(ds, sizes, cfg);
    REQUIRE(r.history.train_loss.size() == 5);
    CHECK(r.history.train_loss.back() < r.history.train_loss.front());
  }
  SUBCASE("returned snapshot is the best validation epoch") {
    cfg.max_epochs = 30;
    const auto r = nn::train(ds, sizes, cfg);
    const auto& auc = r.history.val_auroc;
    const double best = *std::max_element(auc.begin(), auc.end());
    CHECK(auc[static_cast<std::size_t>(r.history.best_epoch - 1)] == best);
    const auto val = ds.subset(Split::val);
    CHECK(nn::mean_auroc(nn::predict_proba(r.model, val.features), val.labels) == Approx(best).epsilon(1e-12));
    for (std::size_t e = 0; e + 1 < static_cast<std::size_t>(r.history.best_epoch); ++e) CHECK(auc[e] < best);
  }
  SUBCASE("divergence is reported with the epoch") {
    cfg.learning_rate = 1e300;
    try {
      nn::train(ds, sizes, cfg);
      FAIL("expected divergence");
    } catch (const TrainingDiverged& e) {
      CHECK(e.epoch() == 1);
    }
  }
  SUBCASE("prior output bias starts at the training log-odds") {
    cfg.prior_output_bias = true;
    cfg.learning_rate = 0.0;
    cfg.patience = 1;
    const auto r = nn::train(ds, sizes, cfg);
    double pos = 0.0;
    for (auto i : ds.rows_of(Split::train)) pos += ds.labels(i, 0);
    const double p = pos / 400.0;
    CHECK(r.model.biases.back()(0) == Approx(std::log(p / (1.0 - p))).epsilon(1e-14));
  }
  SUBCASE("config validation") {
    cfg.patience = 0;
    CHECK_THROWS_AS(nn::train(ds, sizes, cfg), InvalidArgument);
    cfg.patience = 1;
    CHECK_THROWS_AS(nn::train(ds, std::vector<int>{4, 3}, cfg), InvalidArgument);
  }
}

TEST_CASE("weight magnitude histogram") {
  nn::MlpModel m;
  m.layer_sizes = {3, 1};
  m.weights = {Eigen::MatrixXd(1, 3)};
  m.weights[0] << 0.005, -0.02, 0.5;
  m.biases = {Eigen::VectorXd::Constant(1, 100.0)};
  const std::vector<double> edges{0, 0.01, 0.1, 1};
  auto h = nn::weight_magnitude_histogram(m, edges);
  CHECK(h.counts == std::vector<std::size_t>{1, 1, 1});
  CHECK(h.total() == 3);

  m.weights[0] << 0.0, 0.0, 5.0;
  h = nn::weight_magnitude_histogram(m, edges);
  CHECK(h.counts == std::vector<std::size_t>{2, 0, 0});
  CHECK(h.overflow == 1);
  CHECK(h.total() == 3);

  CHECK_THROWS_AS(nn::weight_magnitude_histogram(m, std::vector<double>{0.1, 0.1}), InvalidArgument);

  const auto log_edges = nn::log_spaced_edges(1e-6, 1e1, 7);
  REQUIRE(log_edges.size() == 8);
  CHECK(log_edges.front() == Approx(1e-6));
  CHECK(log_edges[1] == Approx(1e-5));
  CHECK(log_edges.back() == Approx(10.0));
}

TEST_CASE("checkpoint round trip is bit exact") {
  const auto m = nn::init_model(std::vector<int>{6, 5, 4, 3}, 77);
  const auto dir = fs::temp_directory_path() / "prunelab_test_nn";
  fs::create_directories(dir);
  nn::save_model(m, dir / "m.ckpt");
  CHECK(nn::load_model(dir / "m.ckpt") == m);
  CHECK_THROWS_AS(nn::load_model(dir / "absent.ckpt"), IoError);
}
