#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "bape/baselines.hpp"
#include "bape/error.hpp"
#include "bape/priors.hpp"
#include "oracles.hpp"

using namespace bape;

namespace {

LinearClassifier random_classifier(int k, int p, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n01;
  Eigen::MatrixXd w(k, p);
  Eigen::VectorXd b(k);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < p; ++j) w(i, j) = n01(gen);
    b[i] = n01(gen);
  }
  return {w, b};
}

// Flattened (W, b) parameter vector and its inverse.
Eigen::VectorXd flatten(const LinearClassifier& c) {
  Eigen::VectorXd v(c.W.size() + c.b.size());
  v << Eigen::Map<const Eigen::VectorXd>(c.W.data(), c.W.size()), c.b;
  return v;
}

LinearClassifier unflatten(const Eigen::VectorXd& v, int k, int p) {
  Eigen::MatrixXd w = Eigen::Map<const Eigen::MatrixXd>(v.data(), k, p);
  return {w, v.tail(k)};
}

struct Blobs {
  Eigen::MatrixXd x;
  std::vector<int> y;
};

Blobs separable_blobs(int k, int p, int per_class, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> noise(0.0, 0.05);
  Blobs out{Eigen::MatrixXd(k * per_class, p), {}};
  for (int c = 0; c < k; ++c) {
    for (int i = 0; i < per_class; ++i) {
      const int r = c * per_class + i;
      for (int j = 0; j < p; ++j) out.x(r, j) = (j == c ? 1.0 : 0.0) + noise(gen);
      out.y.push_back(c);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("cross-entropy examples") {
  const LinearClassifier zero(Eigen::MatrixXd::Zero(4, 3), Eigen::VectorXd::Zero(4));
  const auto uni = ClassPriors::uniform(4);
  CHECK(ce_loss(zero, Eigen::VectorXd::Ones(3), 2, LossMode::Softmax, uni) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-14));

  // Logits ln(0.1), ln(0.9): the loss on the first class is -ln 0.1.
  Eigen::VectorXd b(2);
  b << std::log(0.1), std::log(0.9);
  const LinearClassifier two(Eigen::MatrixXd::Zero(2, 1), b);
  CHECK(ce_loss(two, Eigen::VectorXd::Zero(1), 0, LossMode::Softmax, ClassPriors::uniform(2)) ==
        doctest::Approx(2.302585).epsilon(1e-6));

  CHECK_THROWS_AS(ce_loss(zero, Eigen::VectorXd::Ones(3), 4, LossMode::Softmax, uni), DomainError);
  CHECK_THROWS_AS(ce_loss(zero, Eigen::VectorXd::Ones(2), 0, LossMode::Softmax, uni), DimensionMismatch);
  CHECK_THROWS_AS(ce_loss(zero, Eigen::VectorXd::Ones(3), 0, LossMode::LogitAdjusted,
                          ClassPriors::uniform(3)),
                  DimensionMismatch);
}

TEST_CASE("analytic gradients match finite differences in both modes") {
  const int k = 5, p = 4;
  const std::vector<double> w = {0.5, 0.2, 0.1, 0.15, 0.05};
  const auto priors = ClassPriors::from_weights(w);
  std::mt19937_64 gen(17);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 100; ++trial) {
    const auto clf = random_classifier(k, p, 1000u + static_cast<unsigned>(trial));
    Eigen::VectorXd z(p);
    for (int j = 0; j < p; ++j) z[j] = n01(gen);
    const int y = trial % k;
    const double t = trial % 3 == 0 ? 0.5 : 1.0;
    for (auto mode : {LossMode::Softmax, LossMode::LogitAdjusted}) {
      const auto g = ce_loss_grad(clf, z, y, mode, priors, t);
      Eigen::VectorXd analytic(k * p + k);
      analytic << Eigen::Map<const Eigen::VectorXd>(g.dW.data(), g.dW.size()), g.db;
      const auto fd = oracle::fd_gradient(
          [&](const Eigen::VectorXd& v) { return ce_loss(unflatten(v, k, p), z, y, mode, priors, t); },
          flatten(clf));
      CAPTURE(trial);
      CHECK(oracle::rel_err(analytic, fd) <= 1e-6);
    }
  }
}

TEST_CASE("logit-adjusted loss equals softmax loss with shifted bias") {
  const auto priors = ClassPriors::long_tailed(6, 50.0);
  for (unsigned s = 0; s < 20; ++s) {
    const auto clf = random_classifier(6, 3, s);
    const LinearClassifier shifted(clf.W, clf.b + priors.log_values());
    const Eigen::VectorXd z = Eigen::VectorXd::LinSpaced(3, -1.0, 0.5 + s);
    for (int y = 0; y < 6; ++y) {
      CHECK(ce_loss(clf, z, y, LossMode::LogitAdjusted, priors) ==
            doctest::Approx(ce_loss(shifted, z, y, LossMode::Softmax, priors)).epsilon(1e-12));
    }
  }
}

TEST_CASE("training reaches high accuracy on separable blobs") {
  const auto data = separable_blobs(4, 6, 50, 3);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 16;
  cfg.seed = 4;
  for (auto mode : {LossMode::Softmax, LossMode::LogitAdjusted}) {
    cfg.mode = mode;
    const auto result = train(data.x, data.y, 4, cfg);
    int correct = 0;
    for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
      correct += predict(result.classifier, data.x.row(i).transpose()) == data.y[static_cast<std::size_t>(i)];
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(data.x.rows()) >= 0.99);
    REQUIRE(result.epoch_loss.size() == 30);
    CHECK(result.epoch_loss.back() < result.epoch_loss.front());
  }
}

TEST_CASE("lr = 0 keeps the initialization and seeds reproduce bitwise") {
  const auto data = separable_blobs(3, 5, 20, 8);
  TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.epochs = 3;
  cfg.seed = 21;
  const auto frozen = train(data.x, data.y, 3, cfg);
  const auto init = initial_classifier(3, 5, 21);
  CHECK((frozen.classifier.W.array() == init.W.array()).all());
  CHECK((frozen.classifier.b.array() == init.b.array()).all());

  cfg.lr = 0.05;
  const auto a = train(data.x, data.y, 3, cfg);
  const auto b = train(data.x, data.y, 3, cfg);
  CHECK((a.classifier.W.array() == b.classifier.W.array()).all());
  CHECK((a.classifier.b.array() == b.classifier.b.array()).all());
  cfg.seed = 22;
  const auto c = train(data.x, data.y, 3, cfg);
  CHECK((a.classifier.W - c.classifier.W).norm() > 0.0);
}

TEST_CASE("initial weights have standard deviation 1/sqrt(p)") {
  const auto init = initial_classifier(200, 50, 5);
  const double var = init.W.array().square().mean();
  CHECK(std::abs(var * 50.0 - 1.0) <= 0.05);
  CHECK(init.b.isZero());
}

TEST_CASE("epoch_batches partitions every index once") {
  Rng rng(3, StreamDomain::Shuffle, 0);
  const auto batches = epoch_batches(103, 10, rng);
  REQUIRE(batches.size() == 11);
  CHECK(batches.back().size() == 3);
  std::vector<int> seen(103, 0);
  for (const auto& batch : batches) {
    for (auto i : batch) ++seen[i];
  }
  for (int s : seen) CHECK(s == 1);
}

TEST_CASE("minority collapse metric examples") {
  const std::vector<int> tail = {0, 1, 2};
  Eigen::MatrixXd same(3, 4);
  same.rowwise() = Eigen::RowVector4d(1, 2, 3, 4);
  CHECK(minority_collapse_metric(same, tail) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(minority_collapse_metric(Eigen::MatrixXd::Identity(3, 4), tail) == 0.0);

  const auto etf = build_etf(4, 3, 7);
  const std::vector<int> all = {0, 1, 2, 3};
  CHECK(minority_collapse_metric(etf.matrix().transpose(), all) == doctest::Approx(-1.0 / 3.0).epsilon(1e-10));

  Eigen::MatrixXd zero_row = same;
  zero_row.row(1).setZero();
  CHECK_THROWS_AS(minority_collapse_metric(zero_row, tail), DomainError);
  CHECK_THROWS_AS(minority_collapse_metric(same, std::vector<int>{0}), DomainError);
  CHECK_THROWS_AS(minority_collapse_metric(same, std::vector<int>{0, 5}), DomainError);
}

TEST_CASE("norm report examples") {
  Eigen::MatrixXd w(2, 2);
  w << 3, 4, 0, 2;
  const LinearClassifier clf(w, Eigen::VectorXd::Zero(2));
  Eigen::MatrixXd x(3, 2);
  x << 1, 0, 0, 3, 0, 2;
  const std::vector<int> y = {0, 0, 0};
  const auto rows = norm_report(clf, x, y);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].count == 3);
  CHECK(rows[0].norm_product == doctest::Approx(5.0 * 2.0));
  CHECK(rows[1].count == 0);
  CHECK(rows[1].norm_product == 0.0);
}

TEST_CASE("linear classifier JSON round trip and validation") {
  const auto clf = random_classifier(4, 3, 99);
  const std::vector<std::int64_t> counts = {5, 4, 3, 2};
  const auto doc = to_json(clf, counts);
  CHECK(doc.at("counts").get<std::vector<std::int64_t>>() == counts);
  const auto back = linear_classifier_from_json(nlohmann::json::parse(doc.dump()));
  CHECK((back.W.array() == clf.W.array()).all());
  CHECK((back.b.array() == clf.b.array()).all());

  auto bad = doc;
  bad["K"] = 5;
  CHECK_THROWS_AS(linear_classifier_from_json(bad), ConfigError);
  bad = doc;
  bad["type"] = "bape";
  CHECK_THROWS_AS(linear_classifier_from_json(bad), ConfigError);
  bad = doc;
  bad.erase("W");
  CHECK_THROWS_AS(linear_classifier_from_json(bad), ConfigError);
}

TEST_CASE("divergent training raises TrainingDiverged") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Constant(8, 2, 1e150);
  std::vector<int> y = {0, 1, 0, 1, 0, 1, 0, 1};
  TrainConfig cfg;
  // lr * weight_decay > 2 makes every step amplify W.
  cfg.lr = 10.0;
  cfg.weight_decay = 1.0;
  cfg.epochs = 200;
  cfg.batch_size = 4;
  CHECK_THROWS_AS(train(x, y, 2, cfg), TrainingDiverged);
}

TEST_CASE("config validation and loss mode parsing") {
  TrainConfig cfg;
  cfg.lr = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.momentum = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.temperature = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK(parse_loss_mode("la") == LossMode::LogitAdjusted);
  CHECK(to_string(parse_loss_mode("softmax")) == "softmax");
  CHECK_THROWS_AS(parse_loss_mode("hinge"), ConfigError);
  CHECK_THROWS_AS(LinearClassifier(Eigen::MatrixXd::Zero(2, 2), Eigen::VectorXd::Zero(3)), DimensionMismatch);
  Eigen::MatrixXd nan = Eigen::MatrixXd::Zero(2, 2);
  nan(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(LinearClassifier(nan, Eigen::VectorXd::Zero(2)), DomainError);
}
