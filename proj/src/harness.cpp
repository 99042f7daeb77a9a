#include "bape/harness.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "bape/error.hpp"
#include "bape/priors.hpp"
#include "bape/special.hpp"

namespace bape {

using nlohmann::json;

void SplitThresholds::validate() const {
  if (few_below < 0 || many_above < 0) throw ConfigError("split thresholds must be >= 0");
  if (few_below > many_above + 1) {
    throw ConfigError("split thresholds out of order: few_below must not exceed many_above + 1");
  }
}

SplitAccuracy split_accuracy(std::span<const int> predictions, std::span<const int> labels,
                             std::span<const std::int64_t> train_counts,
                             const SplitThresholds& thresholds) {
  thresholds.validate();
  if (predictions.size() != labels.size()) {
    throw DimensionMismatch("split_accuracy", static_cast<long>(labels.size()),
                            static_cast<long>(predictions.size()));
  }
  if (labels.empty()) throw DomainError("split_accuracy: no samples");
  std::array<std::int64_t, 3> hits{}, totals{};
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= train_counts.size()) {
      throw DomainError("split_accuracy: label out of range");
    }
    const std::int64_t n = train_counts[static_cast<std::size_t>(y)];
    const std::size_t split = n > thresholds.many_above ? 0 : (n < thresholds.few_below ? 2 : 1);
    const bool ok = predictions[i] == y;
    ++totals[split];
    hits[split] += ok;
    correct += ok;
  }
  auto frac = [&](std::size_t s) -> std::optional<double> {
    if (totals[s] == 0) return std::nullopt;
    return static_cast<double>(hits[s]) / static_cast<double>(totals[s]);
  };
  return {frac(0), frac(1), frac(2),
          static_cast<double>(correct) / static_cast<double>(labels.size())};
}

std::vector<int> tail_classes(std::span<const std::int64_t> train_counts, double fraction) {
  const int k = static_cast<int>(train_counts.size());
  if (k < 2) throw DomainError("tail_classes: need at least two classes");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("tail fraction must be in (0, 1]");
  const int m = std::clamp(static_cast<int>(std::ceil(k * fraction)), 2, k);
  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const auto ca = train_counts[static_cast<std::size_t>(a)];
    const auto cb = train_counts[static_cast<std::size_t>(b)];
    return ca != cb ? ca < cb : a > b;
  });
  order.resize(static_cast<std::size_t>(m));
  std::sort(order.begin(), order.end());
  return order;
}

TargetPriorSpec TargetPriorSpec::parse(const std::string& text) {
  TargetPriorSpec spec;
  if (text == "uniform") return spec;
  if (text == "train") {
    spec.kind = Kind::Train;
    return spec;
  }
  const std::string prefix = "imbalance:";
  if (text.rfind(prefix, 0) == 0) {
    spec.kind = Kind::Imbalance;
    try {
      std::size_t used = 0;
      spec.gamma = std::stod(text.substr(prefix.size()), &used);
      if (used != text.size() - prefix.size()) throw std::invalid_argument(text);
    } catch (const std::logic_error&) {
      throw ConfigError("bad imbalance factor in '" + text + "'");
    }
    if (!(spec.gamma >= 1.0) || !std::isfinite(spec.gamma)) {
      throw ConfigError("imbalance factor must be >= 1");
    }
    return spec;
  }
  throw ConfigError("unknown prior spec '" + text + "' (uniform, train, imbalance:<gamma>)");
}

ClassPriors TargetPriorSpec::resolve(std::span<const std::int64_t> train_counts) const {
  const int k = static_cast<int>(train_counts.size());
  switch (kind) {
    case Kind::Uniform:
      return ClassPriors::uniform(k);
    case Kind::Train:
      return ClassPriors::from_counts(train_counts);
    case Kind::Imbalance:
      return ClassPriors::long_tailed(k, gamma);
    case Kind::Explicit:
      if (static_cast<int>(weights.size()) != k) {
        throw DimensionMismatch("target priors", k, static_cast<long>(weights.size()));
      }
      return ClassPriors::from_weights(weights);
  }
  throw ConfigError("invalid prior spec");
}

void ExperimentConfig::validate() const {
  if (generate.has_value() == files.has_value()) {
    throw ConfigError("config needs exactly one data source (generate or files)");
  }
  if (generate) {
    generate->train.validate();
    generate->truth.validate();
    if (generate->test_per_class < 1) throw ConfigError("test_per_class must be >= 1");
    if (!(generate->test_gamma >= 1.0)) throw ConfigError("test imbalance must be >= 1");
  }
  prior.validate();
  baseline.validate();
  if (adjust_priors.kind == TargetPriorSpec::Kind::Explicit) {
    try {
      ClassPriors::from_weights(adjust_priors.weights);
    } catch (const DomainError& e) {
      throw ConfigError(std::string("adjust priors: ") + e.what());
    }
  }
  if (adjust_kappa.kind == KappaMode::Kind::Fixed && !(adjust_kappa.value > 0.0)) {
    throw ConfigError("fixed kappa must be > 0");
  }
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("eta must be finite and >= 0");
  if (m0_gradient && (!(m0_lr > 0.0) || !std::isfinite(m0_lr))) {
    throw ConfigError("m0 learning rate must be > 0");
  }
  if (refresh_interval < 1) throw ConfigError("refresh_interval must be >= 1");
  splits.validate();
  if (!(tail_fraction > 0.0 && tail_fraction <= 1.0)) {
    throw ConfigError("tail_fraction must be in (0, 1]");
  }
  if (seeds.empty()) throw ConfigError("seeds list is empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("seeds list has duplicates");
  }
  if (threads < 0) throw ConfigError("threads must be >= 0");
}

namespace {

void check_keys(const json& obj, const char* where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

GenerateSource parse_generate(const json& g) {
  check_keys(g, "data.generate",
             {"classes", "head_size", "imbalance", "dim", "kappa_min", "kappa_max", "centers",
              "test_per_class", "test_imbalance"});
  GenerateSource src;
  read(g, "classes", src.train.num_classes);
  read(g, "head_size", src.train.head_size);
  read(g, "imbalance", src.train.gamma);
  read(g, "dim", src.truth.dim);
  read(g, "kappa_min", src.truth.kappa_min);
  read(g, "kappa_max", src.truth.kappa_max);
  std::string centers = std::string(to_string(src.truth.centers));
  read(g, "centers", centers);
  src.truth.centers = parse_center_mode(centers);
  read(g, "test_per_class", src.test_per_class);
  read(g, "test_imbalance", src.test_gamma);
  return src;
}

}  // namespace

ExperimentConfig experiment_config_from_json(const json& doc) {
  check_keys(doc, "config",
             {"data", "prior", "estimation", "adjust", "baseline", "eta", "joint", "m0_gradient",
              "splits", "tail_fraction", "seeds", "threads", "output"});
  ExperimentConfig cfg;
  if (!doc.contains("data")) throw ConfigError("config: missing 'data'");
  const json& data = doc.at("data");
  check_keys(data, "data", {"generate", "train", "test"});
  if (data.contains("generate")) cfg.generate = parse_generate(data.at("generate"));
  if (data.contains("train") || data.contains("test")) {
    FileSource files;
    std::string train, test;
    read(data, "train", train);
    read(data, "test", test);
    if (train.empty() || test.empty()) throw ConfigError("data: need both 'train' and 'test'");
    files.train = train;
    files.test = test;
    cfg.files = files;
  }
  if (doc.contains("prior")) {
    const json& p = doc.at("prior");
    check_keys(p, "prior", {"alpha_hat", "beta_hat"});
    read(p, "alpha_hat", cfg.prior.alpha_hat);
    read(p, "beta_hat", cfg.prior.beta_hat);
  }
  if (doc.contains("estimation")) {
    std::string mode;
    read(doc, "estimation", mode);
    cfg.estimation = parse_estimation_mode(mode);
  }
  if (doc.contains("adjust")) {
    const json& a = doc.at("adjust");
    check_keys(a, "adjust", {"priors", "kappa_mode"});
    if (a.contains("priors")) {
      if (a.at("priors").is_array()) {
        cfg.adjust_priors.kind = TargetPriorSpec::Kind::Explicit;
        read(a, "priors", cfg.adjust_priors.weights);
      } else {
        std::string text;
        read(a, "priors", text);
        cfg.adjust_priors = TargetPriorSpec::parse(text);
      }
    }
    if (a.contains("kappa_mode")) {
      std::string text;
      read(a, "kappa_mode", text);
      cfg.adjust_kappa = KappaMode::parse(text);
    }
  }
  if (doc.contains("baseline")) {
    const json& b = doc.at("baseline");
    check_keys(b, "baseline",
               {"lr", "epochs", "batch_size", "weight_decay", "momentum", "temperature",
                "normalize_features"});
    read(b, "lr", cfg.baseline.lr);
    read(b, "epochs", cfg.baseline.epochs);
    read(b, "batch_size", cfg.baseline.batch_size);
    read(b, "weight_decay", cfg.baseline.weight_decay);
    read(b, "momentum", cfg.baseline.momentum);
    read(b, "temperature", cfg.baseline.temperature);
    read(b, "normalize_features", cfg.baseline.normalize_features);
  }
  read(doc, "eta", cfg.eta);
  read(doc, "joint", cfg.joint);
  if (doc.contains("m0_gradient")) {
    const json& m = doc.at("m0_gradient");
    check_keys(m, "m0_gradient", {"enabled", "lr", "refresh_interval"});
    read(m, "enabled", cfg.m0_gradient);
    read(m, "lr", cfg.m0_lr);
    read(m, "refresh_interval", cfg.refresh_interval);
  }
  if (doc.contains("splits")) {
    const json& s = doc.at("splits");
    check_keys(s, "splits", {"many_above", "few_below"});
    read(s, "many_above", cfg.splits.many_above);
    read(s, "few_below", cfg.splits.few_below);
  }
  read(doc, "tail_fraction", cfg.tail_fraction);
  read(doc, "seeds", cfg.seeds);
  read(doc, "threads", cfg.threads);
  if (doc.contains("output")) {
    const json& o = doc.at("output");
    check_keys(o, "output", {"json", "csv"});
    std::string path;
    if (o.contains("json")) {
      read(o, "json", path);
      cfg.json_out = path;
    }
    if (o.contains("csv")) {
      read(o, "csv", path);
      cfg.csv_out = path;
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  ExperimentConfig cfg = experiment_config_from_json(doc);
  // Relative data paths are taken relative to the config file.
  const auto base = path.parent_path();
  if (cfg.files) {
    if (cfg.files->train.is_relative()) cfg.files->train = base / cfg.files->train;
    if (cfg.files->test.is_relative()) cfg.files->test = base / cfg.files->test;
  }
  return cfg;
}

Eigen::MatrixXd prior_direction_gradient(std::span<const ClassStats> stats,
                                         std::span<const PriorSpec> priors, EstimationMode mode,
                                         const std::vector<UnitVector>& batch_z,
                                         std::span<const int> batch_y) {
  if (stats.size() != priors.size()) {
    throw DimensionMismatch("prior_direction_gradient", static_cast<long>(stats.size()),
                            static_cast<long>(priors.size()));
  }
  if (batch_z.size() != batch_y.size()) {
    throw DimensionMismatch("prior_direction_gradient batch", static_cast<long>(batch_z.size()),
                            static_cast<long>(batch_y.size()));
  }
  const auto k = static_cast<Eigen::Index>(stats.size());
  if (k == 0) throw DomainError("prior_direction_gradient: no classes");
  const Eigen::Index p = stats[0].dim();
  const int pi = static_cast<int>(p);

  // Per-class MAP parameters plus what the chain rule needs: u = beta0 m0 + r,
  // beta = |u|, ratio = beta / alpha, kappa = f(ratio).
  struct ClassState {
    bool active = false;
    Eigen::VectorXd mu;
    double kappa = 0.0, beta = 0.0, alpha = 0.0, beta0 = 0.0, dkappa_dratio = 0.0, a_p = 0.0;
  };
  std::vector<ClassState> cls(static_cast<std::size_t>(k));
  std::vector<std::int64_t> counts;
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto& s = stats[static_cast<std::size_t>(c)];
    const auto& pr = priors[static_cast<std::size_t>(c)];
    counts.push_back(s.count());
    if (s.dim() != p) throw DimensionMismatch("prior_direction_gradient stats", p, s.dim());
    auto& st = cls[static_cast<std::size_t>(c)];
    if (s.count() == 0) continue;
    try {
      const PosteriorSpec post = posterior(pr, s);
      const VmfParams est = map_estimate(post, mode);
      st.active = true;
      st.mu = est.mu().vector();
      st.kappa = est.kappa();
      st.alpha = post.alpha;
      st.beta = post.beta;
      st.beta0 = pr.beta0;
      st.a_p = special::mean_resultant_ratio(pi, st.kappa);
      const double r = post.beta / post.alpha;
      if (mode == EstimationMode::PaperApprox) {
        st.dkappa_dratio = p * (1.0 + r * r) / ((1.0 - r * r) * (1.0 - r * r));
      } else {
        st.dkappa_dratio = 1.0 / special::mean_resultant_ratio_derivative(pi, st.kappa);
      }
    } catch (const DegeneratePosterior&) {
    } catch (const ConcentrationOverflow&) {
    }
  }
  const ClassPriors class_priors = ClassPriors::from_counts(counts);

  Eigen::VectorXd offsets(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto& st = cls[static_cast<std::size_t>(c)];
    offsets[c] = st.active ? std::log(class_priors[static_cast<int>(c)]) -
                                 special::log_vmf_normalizer(pi, st.kappa).value
                           : -std::numeric_limits<double>::infinity();
  }

  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(p, k);
  std::size_t used = 0;
  for (std::size_t i = 0; i < batch_z.size(); ++i) {
    const int y = batch_y[i];
    if (y < 0 || y >= k) throw DomainError("prior_direction_gradient: label out of range");
    if (!cls[static_cast<std::size_t>(y)].active) continue;
    const Eigen::VectorXd& z = batch_z[i].vector();
    Eigen::VectorXd logits = offsets;
    for (Eigen::Index c = 0; c < k; ++c) {
      const auto& st = cls[static_cast<std::size_t>(c)];
      if (st.active) logits[c] += st.kappa * st.mu.dot(z);
    }
    const double top = logits.maxCoeff();
    Eigen::VectorXd prob = (logits.array() - top).exp().matrix();
    prob /= prob.sum();
    ++used;
    for (Eigen::Index c = 0; c < k; ++c) {
      const auto& st = cls[static_cast<std::size_t>(c)];
      if (!st.active) continue;
      const double g = prob[c] - (c == y ? 1.0 : 0.0);
      if (g == 0.0) continue;
      const double mz = st.mu.dot(z);
      const double dlogit_dkappa = mz - st.a_p;
      // d logit / d u = kappa (I - mu mu^T) z / beta + dlogit/dkappa * dkappa/dratio * mu / alpha
      const Eigen::VectorXd du = st.kappa * (z - mz * st.mu) / st.beta +
                                 (dlogit_dkappa * st.dkappa_dratio / st.alpha) * st.mu;
      grad.col(c) += g * st.beta0 * du;
    }
  }
  if (used > 0) grad /= static_cast<double>(used);
  return grad;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Re-throws a module error with the method/seed prefix, keeping the
// I/O-versus-validation distinction.
template <typename F>
auto with_context(const std::string& method, std::uint64_t seed, F&& f) -> decltype(f()) {
  const std::string ctx = "seed " + std::to_string(seed) + ", " + method + ": ";
  try {
    return f();
  } catch (const IoError& e) {
    throw IoError(ctx + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(ctx + e.what());
  } catch (const Error& e) {
    throw Error(ctx + e.what());
  }
}

Eigen::MatrixXd unit_rows(const Dataset& data) {
  Eigen::MatrixXd out = data.features_as_double();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (!(n > 0.0)) throw DomainError("feature row " + std::to_string(i) + " has zero norm");
    out.row(i) /= n;
  }
  return out;
}

std::vector<int> predict_all(const BayesClassifier& clf, const Eigen::MatrixXd& rows) {
  std::vector<int> out(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = predict(clf, rows.row(i).transpose());
  }
  return out;
}

std::vector<int> predict_all(const LinearClassifier& clf, const Eigen::MatrixXd& rows) {
  std::vector<int> out(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = predict(clf, rows.row(i).transpose());
  }
  return out;
}

std::optional<double> collapse_or_absent(const Eigen::MatrixXd& rows, std::span<const int> tail) {
  for (int t : tail) {
    if (rows.row(t).norm() == 0.0) return std::nullopt;
  }
  return minority_collapse_metric(rows, tail);
}

struct Inputs {
  Dataset train;
  Dataset test;
  std::optional<MixtureGroundTruth> truth;
};

Inputs load_inputs(const ExperimentConfig& config, std::uint64_t seed) {
  if (config.generate) {
    const auto& g = *config.generate;
    MixtureGroundTruth truth = make_ground_truth(g.train.num_classes, g.truth, seed);
    Dataset train = sample_dataset(truth, class_sizes(g.train), seed, StreamDomain::ClassSamples);
    const LongTailSpec test_spec{g.train.num_classes, g.test_per_class, g.test_gamma};
    Dataset test = sample_dataset(truth, class_sizes(test_spec), seed, StreamDomain::TestSamples);
    // The oracle knows the test distribution.
    truth.priors = ClassPriors::from_counts(test.class_counts);
    return {std::move(train), std::move(test), std::move(truth)};
  }
  Dataset train = read_features(config.files->train);
  Dataset test = read_features(config.files->test, train.num_classes());
  if (test.num_classes() > train.num_classes()) {
    throw DomainError("test set has classes absent from the training file header");
  }
  if (test.dim() != train.dim()) throw DimensionMismatch("test features", train.dim(), test.dim());
  return {std::move(train), std::move(test), std::nullopt};
}

ReportRow make_row(const std::string& method, std::uint64_t seed, const SplitAccuracy& acc,
                   std::optional<double> oracle, std::optional<double> collapse, double secs) {
  return {method, seed, acc.all, acc.many, acc.medium, acc.few, oracle, collapse, secs};
}

EstimationMode other_mode(EstimationMode m) {
  return m == EstimationMode::PaperApprox ? EstimationMode::ExactRoot : EstimationMode::PaperApprox;
}

}  // namespace

SeedArtifacts run_seed(const ExperimentConfig& config, std::uint64_t seed) {
  config.validate();
  Inputs in = with_context("data", seed, [&] { return load_inputs(config, seed); });
  const int k = in.train.num_classes();
  const int p = in.train.dim();
  const auto n = in.train.size();
  if (n == 0) throw DomainError("seed " + std::to_string(seed) + ", data: empty training set");
  const auto& counts = in.train.class_counts;
  const std::span<const std::int64_t> count_span(counts);

  const Eigen::MatrixXd train_raw = in.train.features_as_double();
  const Eigen::MatrixXd train_unit = unit_rows(in.train);
  const Eigen::MatrixXd test_unit = unit_rows(in.test);
  Eigen::MatrixXd test_linear = in.test.features_as_double();
  if (config.baseline.normalize_features) test_linear = test_unit;
  const std::vector<int>& test_labels = in.test.labels;

  const std::vector<int> tail = tail_classes(count_span, config.tail_fraction);
  const ClassPriors target = with_context("adjust", seed, [&] {
    return config.adjust_priors.resolve(count_span);
  });

  std::optional<double> oracle_acc;
  Eigen::MatrixXd oracle_weights;
  if (in.truth) {
    oracle_acc = oracle_accuracy(*in.truth, in.test);
    oracle_weights = in.truth->classifier().weights();
  }

  auto score = [&](const std::vector<int>& pred) {
    return split_accuracy(pred, test_labels, count_span, config.splits);
  };

  std::vector<ReportRow> rows;

  // Joint pass: BAPE statistics and the eta-weighted LA head share one
  // shuffled mini-batch stream.
  auto bape_start = Clock::now();
  TrainConfig head_cfg = config.baseline;
  head_cfg.mode = LossMode::LogitAdjusted;
  head_cfg.seed = seed;
  const long steps_per_epoch =
      static_cast<long>((n + static_cast<std::size_t>(head_cfg.batch_size) - 1) /
                        static_cast<std::size_t>(head_cfg.batch_size));
  SgdTrainer head(initial_classifier(k, p, seed), head_cfg, ClassPriors::from_counts(counts),
                  steps_per_epoch * head_cfg.epochs);
  double head_seconds = 0.0;

  EtfFrame frame = with_context(methods::kBape, seed, [&] { return build_etf(k, p, seed); });
  std::vector<ClassStats> stats;
  std::int64_t per_epoch = 0;
  with_context(methods::kBape, seed, [&] {
    Rng shuffle(seed, StreamDomain::Shuffle, 0);
    const int epochs = std::max(1, head_cfg.epochs);
    for (int epoch = 0; epoch < epochs; ++epoch) {
      stats.assign(static_cast<std::size_t>(k), ClassStats(p));
      const auto batches = epoch_batches(n, head_cfg.batch_size, shuffle);
      long b = 0;
      for (const auto& batch : batches) {
        std::vector<UnitVector> zs;
        std::vector<int> ys;
        zs.reserve(batch.size());
        ys.reserve(batch.size());
        for (std::size_t i : batch) {
          zs.emplace_back(UnitVector(train_unit.row(static_cast<Eigen::Index>(i)).transpose()));
          ys.push_back(in.train.labels[i]);
          stats[static_cast<std::size_t>(ys.back())].add(zs.back());
        }
        if (config.joint && config.eta > 0.0 && epoch < head_cfg.epochs) {
          const auto t0 = Clock::now();
          head.step(train_raw, in.train.labels, batch, config.eta);
          head_seconds += seconds_since(t0);
        }
        if (config.m0_gradient && b % config.refresh_interval == 0) {
          const auto pri = scaled_priors(frame, config.prior, stats);
          const Eigen::MatrixXd g =
              prior_direction_gradient(stats, pri, config.estimation, zs, ys);
          frame = grad_step_m0(frame, g, config.m0_lr);
        }
        ++b;
      }
      std::int64_t total = 0;
      for (const auto& s : stats) total += s.count();
      if (total != static_cast<std::int64_t>(n)) {
        throw Error("statistics audit failed: " + std::to_string(total) + " of " +
                    std::to_string(n) + " samples in epoch " + std::to_string(epoch));
      }
      per_epoch = total;
    }
    return 0;
  });

  const auto final_priors = scaled_priors(frame, config.prior, stats);
  BapeFit fit = with_context(methods::kBape, seed, [&] {
    return fit_bape(stats, final_priors, config.estimation);
  });
  const double fit_seconds = seconds_since(bape_start) - head_seconds;
  {
    const auto pred = predict_all(fit.classifier, test_unit);
    rows.push_back(make_row(methods::kBape, seed, score(pred), oracle_acc,
                            collapse_or_absent(fit.classifier.weights(), tail), fit_seconds));
  }

  auto adjusted_row = [&](const char* method, const BayesClassifier& base, KappaMode kappa,
                          double base_secs) {
    const auto t0 = Clock::now();
    BayesClassifier adj = with_context(method, seed, [&] {
      return adjust(base, AdjustmentPolicy{target, kappa});
    });
    const auto pred = predict_all(adj, test_unit);
    rows.push_back(make_row(method, seed, score(pred), oracle_acc,
                            collapse_or_absent(adj.weights(), tail),
                            base_secs + seconds_since(t0)));
    return adj;
  };

  BayesClassifier bape_adjusted =
      adjusted_row(methods::kBapeAdjust, fit.classifier, config.adjust_kappa, fit_seconds);
  adjusted_row(methods::kBapeAdjustSharedKappa, fit.classifier, KappaMode::shared_mean(),
               fit_seconds);
  {
    const auto t0 = Clock::now();
    BapeFit alt = with_context(methods::kBapeAltAdjust, seed, [&] {
      return fit_bape(stats, final_priors, other_mode(config.estimation));
    });
    adjusted_row(methods::kBapeAltAdjust, alt.classifier, config.adjust_kappa,
                 fit_seconds + seconds_since(t0));
  }

  auto baseline = [&](const char* method, LossMode mode) {
    const auto t0 = Clock::now();
    TrainConfig cfg = config.baseline;
    cfg.mode = mode;
    cfg.seed = seed;
    TrainResult res = with_context(method, seed, [&] {
      return train(train_raw, in.train.labels, k, cfg);
    });
    const auto pred = predict_all(res.classifier, test_linear);
    rows.push_back(make_row(method, seed, score(pred), oracle_acc,
                            collapse_or_absent(res.classifier.W, tail), seconds_since(t0)));
    return res.classifier;
  };
  LinearClassifier softmax = baseline(methods::kSoftmax, LossMode::Softmax);
  LinearClassifier logit_adjusted = baseline(methods::kLogitAdjusted, LossMode::LogitAdjusted);

  // Ensemble: mean of the two classifiers' log-posteriors under the target
  // priors. Without a joint head the standalone LA classifier stands in.
  LinearClassifier joint_head = head.classifier();
  {
    const auto t0 = Clock::now();
    const LinearClassifier& la = (config.joint && config.eta > 0.0) ? joint_head : logit_adjusted;
    const Eigen::VectorXd log_target = target.log_values();
    std::vector<int> pred(test_labels.size());
    for (Eigen::Index i = 0; i < test_unit.rows(); ++i) {
      const Eigen::VectorXd lp_bape = log_posterior(bape_adjusted, test_unit.row(i).transpose());
      Eigen::VectorXd s = la.logits(test_linear.row(i).transpose()) / config.baseline.temperature +
                          log_target;
      const double top = s.maxCoeff();
      s.array() -= top + std::log((s.array() - top).exp().sum());
      const Eigen::VectorXd avg = 0.5 * (lp_bape + s);
      Eigen::Index best = 0;
      avg.maxCoeff(&best);
      pred[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    rows.push_back(make_row(methods::kEnsemble, seed, score(pred), oracle_acc, std::nullopt,
                            fit_seconds + head_seconds + seconds_since(t0)));
  }

  if (in.truth) {
    const auto t0 = Clock::now();
    const auto pred = predict_all(in.truth->classifier(), test_unit);
    rows.push_back(make_row(methods::kOracle, seed, score(pred), oracle_acc,
                            collapse_or_absent(oracle_weights, tail), seconds_since(t0)));
  }

  SeedArtifacts out{std::move(in.train),
                    std::move(in.test),
                    std::move(in.truth),
                    std::move(fit),
                    std::move(bape_adjusted),
                    std::move(softmax),
                    std::move(logit_adjusted),
                    std::move(joint_head),
                    tail,
                    per_epoch,
                    std::move(rows)};
  return out;
}

std::vector<ReportRow> run_experiment(const ExperimentConfig& config) {
  config.validate();
  const std::size_t num = config.seeds.size();
  std::vector<std::vector<ReportRow>> per_seed(num);
  std::vector<std::exception_ptr> errors(num);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < num; i = next++) {
      try {
        per_seed[i] = run_seed(config, config.seeds[i]).rows;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  unsigned threads = config.threads > 0 ? static_cast<unsigned>(config.threads)
                                        : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(num));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<ReportRow> rows;
  for (auto& r : per_seed) rows.insert(rows.end(), r.begin(), r.end());
  std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
    return a.method != b.method ? a.method < b.method : a.seed < b.seed;
  });
  return rows;
}

namespace {

std::string number(double v) {
  if (!std::isfinite(v)) return "null";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string json_value(const std::optional<double>& v) { return v ? number(*v) : "null"; }
std::string csv_value(const std::optional<double>& v) { return v ? number(*v) : ""; }

}  // namespace

std::string format_report(std::span<const ReportRow> rows, ReportFormat format) {
  std::ostringstream out;
  if (format == ReportFormat::Json) {
    if (rows.empty()) return "[]\n";
    out << "[\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      out << "  {\"method\": " << json(r.method).dump() << ", \"seed\": " << r.seed
          << ", \"accuracy\": " << number(r.accuracy) << ", \"many\": " << json_value(r.many)
          << ", \"medium\": " << json_value(r.medium) << ", \"few\": " << json_value(r.few)
          << ", \"oracle_accuracy\": " << json_value(r.oracle_accuracy)
          << ", \"minority_collapse\": " << json_value(r.minority_collapse)
          << ", \"wall_time_s\": " << number(r.wall_time_s) << "}"
          << (i + 1 < rows.size() ? ",\n" : "\n");
    }
    out << "]\n";
    return out.str();
  }
  out << "method,seed,accuracy,many,medium,few,oracle_accuracy,minority_collapse,wall_time_s\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.seed << ',' << number(r.accuracy) << ',' << csv_value(r.many)
        << ',' << csv_value(r.medium) << ',' << csv_value(r.few) << ','
        << csv_value(r.oracle_accuracy) << ',' << csv_value(r.minority_collapse) << ','
        << number(r.wall_time_s) << '\n';
  }
  return out.str();
}

void emit_report(std::span<const ReportRow> rows, ReportFormat format,
                 const std::filesystem::path& path) {
  const std::string text = format_report(rows, format);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace bape
