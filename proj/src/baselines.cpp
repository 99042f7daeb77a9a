#include "bape/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "bape/error.hpp"

namespace bape {

namespace {

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

Eigen::VectorXd adjusted_logits(const LinearClassifier& clf, const Eigen::VectorXd& z,
                                LossMode mode, const ClassPriors& priors, double temperature) {
  Eigen::VectorXd s = clf.logits(z) / temperature;
  if (mode == LossMode::LogitAdjusted) {
    if (priors.size() != clf.num_classes()) {
      throw DimensionMismatch("logit adjustment priors", clf.num_classes(), priors.size());
    }
    s += priors.log_values();
  }
  return s;
}

void check_label(const LinearClassifier& clf, int y) {
  if (y < 0 || y >= clf.num_classes()) {
    throw DomainError("label " + std::to_string(y) + " out of range");
  }
}

}  // namespace

LinearClassifier::LinearClassifier(Eigen::MatrixXd weights, Eigen::VectorXd bias)
    : W(std::move(weights)), b(std::move(bias)) {
  if (W.rows() != b.size()) throw DimensionMismatch("LinearClassifier", W.rows(), b.size());
  if (W.rows() < 2 || W.cols() < 1) throw DomainError("LinearClassifier: need K >= 2, p >= 1");
  if (!W.allFinite() || !b.allFinite()) throw DomainError("LinearClassifier: non-finite entry");
}

Eigen::VectorXd LinearClassifier::logits(const Eigen::VectorXd& z) const {
  if (z.size() != W.cols()) throw DimensionMismatch("LinearClassifier::logits", W.cols(), z.size());
  return W * z + b;
}

std::string_view to_string(LossMode mode) {
  return mode == LossMode::Softmax ? "softmax" : "logit_adjusted";
}

LossMode parse_loss_mode(std::string_view text) {
  if (text == "softmax") return LossMode::Softmax;
  if (text == "logit_adjusted" || text == "logit-adjusted" || text == "la") {
    return LossMode::LogitAdjusted;
  }
  throw ConfigError("unknown loss mode '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and >= 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("temperature must be > 0");
  }
}

double ce_loss(const LinearClassifier& clf, const Eigen::VectorXd& z, int y, LossMode mode,
               const ClassPriors& priors, double temperature) {
  check_label(clf, y);
  const Eigen::VectorXd s = adjusted_logits(clf, z, mode, priors, temperature);
  return log_sum_exp(s) - s[y];
}

CeGradient ce_loss_grad(const LinearClassifier& clf, const Eigen::VectorXd& z, int y,
                        LossMode mode, const ClassPriors& priors, double temperature) {
  check_label(clf, y);
  const Eigen::VectorXd s = adjusted_logits(clf, z, mode, priors, temperature);
  Eigen::VectorXd delta = (s.array() - log_sum_exp(s)).exp();
  delta[y] -= 1.0;
  delta /= temperature;
  return {delta * z.transpose(), delta};
}

LinearClassifier initial_classifier(int num_classes, int dim, std::uint64_t seed) {
  Rng rng(seed, StreamDomain::Init, 0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  Eigen::MatrixXd w(num_classes, dim);
  for (int i = 0; i < num_classes; ++i) {
    for (int j = 0; j < dim; ++j) w(i, j) = scale * rng.normal();
  }
  return LinearClassifier(std::move(w), Eigen::VectorXd::Zero(num_classes));
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.uniform_index(i);
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::vector<std::size_t>> batches;
  const auto bs = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start < n; start += bs) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + bs)));
  }
  return batches;
}

SgdTrainer::SgdTrainer(LinearClassifier init, TrainConfig config, ClassPriors priors,
                       long total_steps)
    : clf_(std::move(init)),
      config_(config),
      priors_(std::move(priors)),
      total_steps_(std::max(1L, total_steps)),
      velocity_w_(Eigen::MatrixXd::Zero(clf_.W.rows(), clf_.W.cols())),
      velocity_b_(Eigen::VectorXd::Zero(clf_.b.size())) {
  config_.validate();
}

double SgdTrainer::step(const Eigen::MatrixXd& features, std::span<const int> labels,
                        std::span<const std::size_t> batch, double loss_weight) {
  if (batch.empty()) return 0.0;
  const auto rows = static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXd z(rows, clf_.W.cols());
  for (Eigen::Index r = 0; r < rows; ++r) {
    z.row(r) = features.row(static_cast<Eigen::Index>(batch[static_cast<std::size_t>(r)]));
    if (config_.normalize_features) z.row(r).normalize();
  }
  Eigen::MatrixXd s = ((z * clf_.W.transpose()).rowwise() + clf_.b.transpose()) / config_.temperature;
  if (config_.mode == LossMode::LogitAdjusted) s.rowwise() += priors_.log_values().transpose();

  // delta = (softmax(s) - onehot(y)) / T, row by row.
  double loss = 0.0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const int y = labels[batch[static_cast<std::size_t>(r)]];
    if (y < 0 || y >= clf_.num_classes()) throw DomainError("label out of range");
    const double m = s.row(r).maxCoeff();
    const double lse = m + std::log((s.row(r).array() - m).exp().sum());
    loss += lse - s(r, y);
    s.row(r) = (s.row(r).array() - lse).exp();
    s(r, y) -= 1.0;
  }
  s /= config_.temperature;

  const double inv = 1.0 / static_cast<double>(rows);
  loss *= inv;
  loss += 0.5 * config_.weight_decay * clf_.W.squaredNorm();
  if (!std::isfinite(loss)) {
    throw TrainingDiverged("training diverged at step " + std::to_string(step_) +
                           ": mini-batch loss " + std::to_string(loss) +
                           ", max |W| = " + std::to_string(clf_.W.cwiseAbs().maxCoeff()));
  }
  const Eigen::MatrixXd grad_w =
      loss_weight * (inv * (s.transpose() * z) + config_.weight_decay * clf_.W);
  const Eigen::VectorXd grad_b = loss_weight * inv * s.colwise().sum().transpose();

  const double progress = static_cast<double>(step_) / static_cast<double>(total_steps_);
  const double lr = config_.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(1.0, progress)));
  velocity_w_ = config_.momentum * velocity_w_ + grad_w;
  velocity_b_ = config_.momentum * velocity_b_ + grad_b;
  if (lr > 0.0) {
    clf_.W -= lr * velocity_w_;
    clf_.b -= lr * velocity_b_;
  }
  ++step_;
  return loss;
}

TrainResult train(const Eigen::MatrixXd& features, std::span<const int> labels, int num_classes,
                  const TrainConfig& config) {
  config.validate();
  const auto n = static_cast<std::size_t>(features.rows());
  if (n == 0) throw DomainError("train: empty dataset");
  if (labels.size() != n) throw DimensionMismatch("train labels", static_cast<long>(n),
                                                  static_cast<long>(labels.size()));
  std::vector<std::int64_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw DomainError("train: label out of range");
    ++counts[static_cast<std::size_t>(y)];
  }

  const auto batch_size = static_cast<std::size_t>(config.batch_size);
  const long steps_per_epoch = static_cast<long>((n + batch_size - 1) / batch_size);
  SgdTrainer trainer(initial_classifier(num_classes, static_cast<int>(features.cols()), config.seed),
                     config, ClassPriors::from_counts(counts), steps_per_epoch * config.epochs);
  Rng shuffle(config.seed, StreamDomain::Shuffle, 0);
  std::vector<double> trace;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double total = 0.0;
    const auto batches = epoch_batches(n, config.batch_size, shuffle);
    for (const auto& batch : batches) total += trainer.step(features, labels, batch);
    trace.push_back(total / static_cast<double>(batches.size()));
  }
  return {trainer.classifier(), std::move(trace)};
}

int predict(const LinearClassifier& clf, const Eigen::VectorXd& z) {
  const Eigen::VectorXd s = clf.logits(z);
  int best = 0;
  for (int y = 1; y < s.size(); ++y) {
    if (s[y] > s[best]) best = y;
  }
  return best;
}

double minority_collapse_metric(const Eigen::MatrixXd& rows, std::span<const int> tail_classes) {
  if (tail_classes.size() < 2) {
    throw DomainError("minority_collapse_metric: need at least two tail classes");
  }
  std::vector<Eigen::VectorXd> unit;
  for (int y : tail_classes) {
    if (y < 0 || y >= rows.rows()) throw DomainError("minority_collapse_metric: bad class index");
    const Eigen::VectorXd w = rows.row(y).transpose();
    const double norm = w.norm();
    if (!(norm > 0.0)) throw DomainError("minority_collapse_metric: zero weight row");
    unit.push_back(w / norm);
  }
  double total = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < unit.size(); ++i) {
    for (std::size_t j = i + 1; j < unit.size(); ++j) {
      total += unit[i].dot(unit[j]);
      ++pairs;
    }
  }
  return std::clamp(total / static_cast<double>(pairs), -1.0, 1.0);
}

double minority_collapse_metric(const LinearClassifier& clf, std::span<const int> tail_classes) {
  return minority_collapse_metric(clf.W, tail_classes);
}

std::vector<NormRow> norm_report(const LinearClassifier& clf, const Eigen::MatrixXd& features,
                                 std::span<const int> labels) {
  const int k = clf.num_classes();
  if (features.cols() != clf.dim()) throw DimensionMismatch("norm_report", clf.dim(), features.cols());
  std::vector<double> norm_sum(static_cast<std::size_t>(k), 0.0);
  std::vector<std::int64_t> counts(static_cast<std::size_t>(k), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= k) throw DomainError("norm_report: label out of range");
    norm_sum[static_cast<std::size_t>(y)] += features.row(static_cast<Eigen::Index>(i)).norm();
    ++counts[static_cast<std::size_t>(y)];
  }
  std::vector<NormRow> rows;
  for (int y = 0; y < k; ++y) {
    const auto c = counts[static_cast<std::size_t>(y)];
    const double mean_norm = c == 0 ? 0.0 : norm_sum[static_cast<std::size_t>(y)] / c;
    rows.push_back({y, c, clf.W.row(y).norm() * mean_norm});
  }
  return rows;
}

nlohmann::json to_json(const LinearClassifier& clf, std::span<const std::int64_t> counts) {
  nlohmann::json w = nlohmann::json::array();
  for (Eigen::Index i = 0; i < clf.W.rows(); ++i) {
    std::vector<double> row(clf.W.row(i).begin(), clf.W.row(i).end());
    w.push_back(row);
  }
  nlohmann::json doc = {{"type", "linear"},
                        {"p", clf.dim()},
                        {"K", clf.num_classes()},
                        {"W", std::move(w)},
                        {"b", std::vector<double>(clf.b.begin(), clf.b.end())}};
  if (!counts.empty()) doc["counts"] = std::vector<std::int64_t>(counts.begin(), counts.end());
  return doc;
}

LinearClassifier linear_classifier_from_json(const nlohmann::json& doc) {
  try {
    if (doc.contains("type") && doc.at("type") != "linear") {
      throw ConfigError("classifier JSON is not of type 'linear'");
    }
    const int p = doc.at("p").get<int>();
    const int k = doc.at("K").get<int>();
    const auto rows = doc.at("W").get<std::vector<std::vector<double>>>();
    const auto bias = doc.at("b").get<std::vector<double>>();
    if (static_cast<int>(rows.size()) != k || static_cast<int>(bias.size()) != k) {
      throw ConfigError("linear classifier JSON: K does not match W/b");
    }
    Eigen::MatrixXd w(k, p);
    for (int i = 0; i < k; ++i) {
      if (static_cast<int>(rows[static_cast<std::size_t>(i)].size()) != p) {
        throw ConfigError("linear classifier JSON: row length does not match p");
      }
      for (int j = 0; j < p; ++j) w(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    return LinearClassifier(std::move(w), Eigen::Map<const Eigen::VectorXd>(bias.data(), k));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed classifier JSON: ") + e.what());
  }
}

}  // namespace bape
