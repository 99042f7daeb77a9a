#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bape/error.hpp"
#include "bape/harness.hpp"
#include "bape/priors.hpp"
#include "oracles.hpp"

using namespace bape;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  GenerateSource gen;
  gen.train = {5, 120, 10.0};
  gen.truth = {8, 10.0, 30.0, CenterMode::Etf};
  gen.test_per_class = 100;
  cfg.generate = gen;
  cfg.prior = {1.0, 0.5};
  cfg.baseline.epochs = 3;
  cfg.baseline.batch_size = 32;
  cfg.seeds = {1, 2, 3};
  cfg.threads = 1;
  return cfg;
}

std::string stable_report(std::vector<ReportRow> rows) {
  for (auto& r : rows) r.wall_time_s = 0.0;
  return format_report(rows, ReportFormat::Json);
}

const ReportRow& find_row(const std::vector<ReportRow>& rows, const std::string& method) {
  for (const auto& r : rows) {
    if (r.method == method) return r;
  }
  FAIL("missing row " << method);
  return rows.front();
}

std::vector<UnitVector> random_units(int n, int p, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n01;
  std::vector<UnitVector> out;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd v(p);
    for (int j = 0; j < p; ++j) v[j] = n01(gen);
    out.push_back(UnitVector::normalize(v));
  }
  return out;
}

}  // namespace

TEST_CASE("split accuracy examples") {
  const std::vector<std::int64_t> counts = {150, 50, 5};
  const std::vector<int> labels = {0, 0, 1, 2, 2};
  const std::vector<int> preds = {0, 1, 1, 2, 0};
  const auto acc = split_accuracy(preds, labels, counts);
  CHECK(*acc.many == doctest::Approx(0.5));
  CHECK(*acc.medium == doctest::Approx(1.0));
  CHECK(*acc.few == doctest::Approx(0.5));
  CHECK(acc.all == doctest::Approx(0.6));

  // Boundaries: 100 and 20 are both medium.
  const std::vector<std::int64_t> edge = {100, 20};
  const std::vector<int> both = {0, 1};
  const auto e = split_accuracy(both, both, edge);
  CHECK(!e.many.has_value());
  CHECK(!e.few.has_value());
  CHECK(*e.medium == 1.0);
  CHECK_THROWS(split_accuracy(both, std::vector<int>{0}, edge));
}

TEST_CASE("tail classes pick the smallest counts with ties to higher indices") {
  const std::vector<std::int64_t> counts = {10, 5, 5, 20, 1, 7, 8, 9};
  CHECK(tail_classes(counts, 0.25) == std::vector<int>{2, 4});
  CHECK(tail_classes(counts, 0.5) == std::vector<int>{1, 2, 4, 5});
  const std::vector<std::int64_t> three = {3, 2, 1};
  CHECK(tail_classes(three, 0.01) == std::vector<int>{1, 2});
}

TEST_CASE("target prior specs") {
  const std::vector<std::int64_t> counts = {30, 10};
  CHECK(TargetPriorSpec::parse("uniform").resolve(counts)[0] == doctest::Approx(0.5));
  CHECK(TargetPriorSpec::parse("train").resolve(counts)[0] == doctest::Approx(0.75));
  const auto lt = TargetPriorSpec::parse("imbalance:4").resolve(counts);
  CHECK(lt[0] / lt[1] == doctest::Approx(4.0));
  CHECK_THROWS_AS(TargetPriorSpec::parse("zipf"), ConfigError);
  CHECK_THROWS_AS(TargetPriorSpec::parse("imbalance:x"), ConfigError);
}

TEST_CASE("reports in both formats") {
  CHECK(format_report({}, ReportFormat::Json) == "[]\n");
  std::vector<ReportRow> rows(2);
  rows[0] = {"bape", 3, 0.8125, 0.9, std::nullopt, 0.1, 0.85, -0.2, 1.5};
  rows[1] = {"softmax", 3, 1.0 / 3.0, std::nullopt, 0.5, std::nullopt, std::nullopt, std::nullopt, 0.0};
  const auto doc = nlohmann::json::parse(format_report(rows, ReportFormat::Json));
  REQUIRE(doc.size() == 2);
  CHECK(doc[0]["method"] == "bape");
  CHECK(doc[0]["seed"] == 3);
  CHECK(doc[0]["medium"].is_null());
  CHECK(doc[0]["minority_collapse"].get<double>() == -0.2);
  CHECK(doc[1]["accuracy"].get<double>() == 1.0 / 3.0);
  CHECK(doc[1]["oracle_accuracy"].is_null());

  const auto csv = format_report(rows, ReportFormat::Csv);
  std::istringstream in(csv);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "method,seed,accuracy,many,medium,few,oracle_accuracy,minority_collapse,wall_time_s");
  CHECK(lines[2].rfind("softmax,3,", 0) == 0);
  CHECK(lines[2].find(",,") != std::string::npos);
}

TEST_CASE("config parsing and validation") {
  auto cfg = small_config();
  cfg.seeds.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.seeds = {4, 4};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.files = FileSource{"a.bin", "b.bin"};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.eta = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  const auto doc = nlohmann::json::parse(R"({
    "data": {"generate": {"classes": 4, "head_size": 50, "imbalance": 5, "dim": 6}},
    "prior": {"alpha_hat": 2, "beta_hat": 1},
    "estimation": "exact_root",
    "adjust": {"priors": "uniform"},
    "eta": 0.5,
    "seeds": [7, 8]
  })");
  const auto parsed = experiment_config_from_json(doc);
  REQUIRE(parsed.generate.has_value());
  CHECK(parsed.generate->train.num_classes == 4);
  CHECK(parsed.generate->truth.dim == 6);
  CHECK(parsed.estimation == EstimationMode::ExactRoot);
  CHECK(parsed.eta == 0.5);
  CHECK(parsed.seeds == std::vector<std::uint64_t>{7, 8});

  auto unknown = doc;
  unknown["colour"] = "red";
  CHECK_THROWS_AS(experiment_config_from_json(unknown), ConfigError);
  auto wrong_type = doc;
  wrong_type["eta"] = "big";
  CHECK_THROWS_AS(experiment_config_from_json(wrong_type), ConfigError);
  auto no_seeds = doc;
  no_seeds["seeds"] = nlohmann::json::array();
  CHECK_THROWS_AS(experiment_config_from_json(no_seeds), ConfigError);
}

TEST_CASE("experiments are deterministic and independent of thread count") {
  auto cfg = small_config();
  const auto a = stable_report(run_experiment(cfg));
  const auto b = stable_report(run_experiment(cfg));
  CHECK(a == b);
  cfg.threads = 3;
  CHECK(stable_report(run_experiment(cfg)) == a);

  const auto rows = run_experiment(small_config());
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const bool ordered = rows[i - 1].method < rows[i].method ||
                         (rows[i - 1].method == rows[i].method && rows[i - 1].seed < rows[i].seed);
    CHECK(ordered);
  }
  for (const char* m : {methods::kBape, methods::kBapeAdjust, methods::kSoftmax, methods::kLogitAdjusted,
                        methods::kOracle, methods::kEnsemble}) {
    CHECK(find_row(rows, m).accuracy > 0.2);
  }
}

TEST_CASE("eta = 0 freezes the joint head and leaves BAPE untouched") {
  auto cfg = small_config();
  cfg.eta = 0.0;
  const auto frozen = run_seed(cfg, 5);
  const auto init = initial_classifier(5, 8, 5);
  CHECK((frozen.joint_head.W.array() == init.W.array()).all());
  CHECK((frozen.joint_head.b.array() == init.b.array()).all());

  cfg.eta = 1.0;
  const auto joint = run_seed(cfg, 5);
  CHECK((joint.joint_head.W - init.W).norm() > 0.0);
  CHECK(find_row(frozen.rows, methods::kBape).accuracy == find_row(joint.rows, methods::kBape).accuracy);
  CHECK(find_row(frozen.rows, methods::kBapeAdjust).accuracy ==
        find_row(joint.rows, methods::kBapeAdjust).accuracy);
}

TEST_CASE("statistics cover each training sample exactly once per epoch") {
  const auto art = run_seed(small_config(), 9);
  CHECK(art.stats_samples_per_epoch == static_cast<std::int64_t>(art.train.size()));
  std::int64_t total = 0;
  for (auto c : art.bape.classifier.counts()) total += c;
  CHECK(total == static_cast<std::int64_t>(art.train.size()));
}

TEST_CASE("balanced data with a weak prior tracks the oracle") {
  ExperimentConfig cfg;
  GenerateSource gen;
  gen.train = {5, 1000, 1.0};
  gen.truth = {16, 20.0, 20.0, CenterMode::Random};
  gen.test_per_class = 1000;
  cfg.generate = gen;
  cfg.prior = {0.01, 0.0};
  cfg.baseline.epochs = 1;
  cfg.seeds = {4};
  cfg.threads = 1;
  const auto rows = run_experiment(cfg);
  const double bape = find_row(rows, methods::kBape).accuracy;
  const double oracle_acc = find_row(rows, methods::kOracle).accuracy;
  CHECK(std::abs(bape - oracle_acc) <= 0.02);
  CHECK(find_row(rows, methods::kBape).oracle_accuracy.value() == oracle_acc);
}

TEST_CASE("prior direction gradient matches tangent finite differences") {
  const int k = 4, p = 5;
  const auto frame = build_etf(k, p, 3);
  std::vector<ClassStats> stats;
  std::mt19937_64 gen(8);
  for (int c = 0; c < k; ++c) {
    ClassStats s(p);
    // Noisy samples around each frame column, so the resultants are informative.
    for (const auto& z : random_units(10 + 5 * c, p, 100u + static_cast<unsigned>(c))) {
      s.add(UnitVector::normalize(frame.matrix().col(c) * 2.0 + z.vector()));
    }
    stats.push_back(s);
  }
  const auto batch = random_units(16, p, 77);
  std::vector<int> labels;
  for (int i = 0; i < 16; ++i) labels.push_back(i % k);

  for (auto mode : {EstimationMode::PaperApprox, EstimationMode::ExactRoot}) {
    const PriorHyper hyper{2.0, 1.2};
    const auto priors = scaled_priors(frame, hyper, stats);
    const Eigen::MatrixXd grad = prior_direction_gradient(stats, priors, mode, batch, labels);
    REQUIRE(grad.rows() == p);
    REQUIRE(grad.cols() == k);

    auto loss = [&](const Eigen::MatrixXd& m0) {
      std::vector<PriorSpec> ps;
      for (int c = 0; c < k; ++c) {
        const auto& base = priors[static_cast<std::size_t>(c)];
        ps.emplace_back(base.alpha0, base.beta0, UnitVector::normalize(m0.col(c)));
      }
      const auto fit = fit_bape(stats, ps, mode);
      double total = 0.0;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        total -= log_posterior(fit.classifier, batch[i].vector())[labels[i]];
      }
      return total / static_cast<double>(batch.size());
    };
    for (int c = 0; c < k; ++c) {
      const Eigen::VectorXd m = frame.matrix().col(c);
      const Eigen::VectorXd fd = oracle::fd_gradient(
          [&](const Eigen::VectorXd& v) {
            Eigen::MatrixXd m0 = frame.matrix();
            m0.col(c) = v;
            return loss(m0);
          },
          m, 1e-5);
      const Eigen::MatrixXd proj = Eigen::MatrixXd::Identity(p, p) - m * m.transpose();
      CAPTURE(c);
      CHECK(oracle::rel_err(proj * grad.col(c), proj * fd) <= 1e-5);
    }
  }
}

TEST_CASE("m0 gradient path runs and stays deterministic") {
  auto cfg = small_config();
  cfg.m0_gradient = true;
  cfg.refresh_interval = 2;
  cfg.seeds = {6};
  const auto a = stable_report(run_experiment(cfg));
  CHECK(a == stable_report(run_experiment(cfg)));
  const auto rows = run_experiment(cfg);
  for (const auto& r : rows) CHECK(std::isfinite(r.accuracy));
}

TEST_CASE("errors carry the seed and stage") {
  ExperimentConfig cfg;
  cfg.files = FileSource{"/nonexistent/train.bin", "/nonexistent/test.bin"};
  cfg.seeds = {11};
  try {
    run_experiment(cfg);
    FAIL("expected an IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).rfind("seed 11, data: ", 0) == 0);
  }
}

TEST_CASE("config files resolve data paths relative to themselves") {
  const auto dir = std::filesystem::temp_directory_path() / "bape_harness_cfg";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "exp.json") << R"({"data": {"train": "tr.bin", "test": "te.bin"}, "seeds": [1]})";
  const auto cfg = load_experiment_config(dir / "exp.json");
  REQUIRE(cfg.files.has_value());
  CHECK(cfg.files->train == dir / "tr.bin");
  CHECK_THROWS_AS(load_experiment_config(dir / "missing.json"), IoError);
  std::filesystem::remove_all(dir);
}
