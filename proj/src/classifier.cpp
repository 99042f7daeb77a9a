#include "bape/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "bape/error.hpp"
#include "bape/special.hpp"

namespace bape {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

void check_fitted(const BayesClassifier& clf, const char* where) {
  if (!clf.fitted()) throw NotFitted(std::string(where) + ": classifier has not been fitted");
}

void check_label(const BayesClassifier& clf, int y, const char* where) {
  if (y < 0 || y >= clf.num_classes()) {
    throw DomainError(std::string(where) + ": label " + std::to_string(y) + " out of range");
  }
  if (!clf.active(y)) {
    throw DomainError(std::string(where) + ": label " + std::to_string(y) +
                      " refers to an excluded class");
  }
}

}  // namespace

ClassPriors ClassPriors::from_weights(std::span<const double> weights) {
  if (weights.empty()) throw DomainError("ClassPriors: no classes");
  Eigen::VectorXd v(static_cast<Eigen::Index>(weights.size()));
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) {
      throw DomainError("ClassPriors: weights must be finite and > 0");
    }
    v[static_cast<Eigen::Index>(i)] = weights[i];
  }
  // Already-normalized input is kept verbatim so serialized priors round-trip.
  const double total = v.sum();
  if (std::abs(total - 1.0) <= 1e-12) return ClassPriors(v);
  return ClassPriors(v / total);
}

ClassPriors ClassPriors::uniform(int num_classes) {
  if (num_classes < 1) throw DomainError("ClassPriors: no classes");
  return ClassPriors(Eigen::VectorXd::Constant(num_classes, 1.0 / num_classes));
}

ClassPriors ClassPriors::from_counts(std::span<const std::int64_t> counts) {
  std::vector<double> w;
  w.reserve(counts.size());
  for (auto c : counts) {
    if (c < 0) throw DomainError("ClassPriors: negative count");
    w.push_back(c == 0 ? 0.5 : static_cast<double>(c));
  }
  return from_weights(w);
}

ClassPriors ClassPriors::long_tailed(int num_classes, double gamma) {
  if (num_classes < 2) throw DomainError("ClassPriors::long_tailed: need K >= 2");
  if (!(gamma >= 1.0) || !std::isfinite(gamma)) {
    throw DomainError("ClassPriors::long_tailed: gamma must be >= 1");
  }
  std::vector<double> w(static_cast<std::size_t>(num_classes));
  for (int j = 0; j < num_classes; ++j) {
    w[static_cast<std::size_t>(j)] = std::pow(gamma, -static_cast<double>(j) / (num_classes - 1));
  }
  return from_weights(w);
}

BayesClassifier::BayesClassifier(std::vector<std::optional<VmfParams>> classes,
                                 ClassPriors priors, std::vector<std::int64_t> counts)
    : classes_(std::move(classes)), priors_(std::move(priors)), counts_(std::move(counts)) {
  const int k = num_classes();
  if (k < 2) throw DomainError("BayesClassifier: need at least 2 classes");
  if (priors_->size() != k) throw DimensionMismatch("BayesClassifier priors", k, priors_->size());
  if (!counts_.empty() && static_cast<int>(counts_.size()) != k) {
    throw DimensionMismatch("BayesClassifier counts", k, static_cast<long>(counts_.size()));
  }
  for (const auto& c : classes_) {
    if (!c) continue;
    if (dim_ == 0) dim_ = static_cast<int>(c->dim());
    if (c->dim() != dim_) throw DimensionMismatch("BayesClassifier classes", dim_, c->dim());
  }
  if (dim_ == 0) throw DomainError("BayesClassifier: every class is excluded");

  weights_ = Eigen::MatrixXd::Zero(k, dim_);
  offsets_ = Eigen::VectorXd::Constant(k, kNegInf);
  const Eigen::VectorXd log_pi = priors_->log_values();
  for (int y = 0; y < k; ++y) {
    const auto& c = classes_[static_cast<std::size_t>(y)];
    if (!c) continue;
    weights_.row(y) = c->kappa() * c->mu().vector().transpose();
    offsets_[y] = log_pi[y] - c->log_normalizer();
  }
}

const ClassPriors& BayesClassifier::priors() const {
  if (!priors_) throw NotFitted("BayesClassifier: classifier has not been fitted");
  return *priors_;
}

Eigen::VectorXd BayesClassifier::logits(const Eigen::VectorXd& z) const {
  check_fitted(*this, "logits");
  if (z.size() != dim_) throw DimensionMismatch("logits", dim_, z.size());
  return weights_ * z + offsets_;
}

Eigen::VectorXd log_posterior(const BayesClassifier& clf, const Eigen::VectorXd& z) {
  const Eigen::VectorXd s = clf.logits(z);
  return s.array() - log_sum_exp(s);
}

int predict(const BayesClassifier& clf, const Eigen::VectorXd& z) {
  const Eigen::VectorXd s = clf.logits(z);
  int best = 0;
  for (int y = 1; y < s.size(); ++y) {
    if (s[y] > s[best]) best = y;
  }
  return best;
}

double bape_loss(const BayesClassifier& clf, const Eigen::VectorXd& z, int y) {
  check_fitted(clf, "bape_loss");
  check_label(clf, y, "bape_loss");
  return -log_posterior(clf, z)[y];
}

Eigen::VectorXd bape_loss_grad_z(const BayesClassifier& clf, const Eigen::VectorXd& z, int y) {
  check_fitted(clf, "bape_loss_grad_z");
  check_label(clf, y, "bape_loss_grad_z");
  const Eigen::VectorXd prob = log_posterior(clf, z).array().exp();
  Eigen::VectorXd grad = clf.weights().transpose() * prob;
  grad -= clf.weights().row(y).transpose();
  return grad;
}

Eigen::VectorXd sphere_chain_rule(const Eigen::VectorXd& grad_z, const Eigen::VectorXd& v) {
  if (grad_z.size() != v.size()) throw DimensionMismatch("sphere_chain_rule", v.size(), grad_z.size());
  const double norm = v.norm();
  if (!(norm > 0.0)) throw DomainError("sphere_chain_rule: zero vector");
  const Eigen::VectorXd z = v / norm;
  return (grad_z - z.dot(grad_z) * z) / norm;
}

KappaMode KappaMode::parse(const std::string& text) {
  if (text == "keep") return keep();
  if (text == "shared-mean" || text == "shared_mean") return shared_mean();
  if (text.rfind("fixed:", 0) == 0) {
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(text.substr(6), &used);
      if (used != text.size() - 6) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("invalid kappa mode '" + text + "'");
    }
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("fixed kappa must be > 0");
    return fixed(v);
  }
  throw ConfigError("invalid kappa mode '" + text + "' (keep|shared-mean|fixed:<v>)");
}

std::string KappaMode::to_string() const {
  switch (kind) {
    case Kind::Keep:
      return "keep";
    case Kind::SharedMean:
      return "shared-mean";
    case Kind::Fixed:
      return "fixed:" + std::to_string(value);
  }
  return "keep";
}

BayesClassifier adjust(const BayesClassifier& clf, const AdjustmentPolicy& policy) {
  check_fitted(clf, "adjust");
  if (policy.target_priors.size() != clf.num_classes()) {
    throw DimensionMismatch("adjust target priors", clf.num_classes(), policy.target_priors.size());
  }
  if (policy.kappa_mode.kind == KappaMode::Kind::Fixed &&
      (!(policy.kappa_mode.value > 0.0) || !std::isfinite(policy.kappa_mode.value))) {
    throw ConfigError("adjust: fixed kappa must be > 0");
  }

  double shared = 0.0;
  int active = 0;
  for (const auto& c : clf.classes()) {
    if (!c) continue;
    shared += c->kappa();
    ++active;
  }
  shared /= active;

  std::vector<std::optional<VmfParams>> classes;
  classes.reserve(clf.classes().size());
  for (const auto& c : clf.classes()) {
    if (!c) {
      classes.emplace_back(std::nullopt);
      continue;
    }
    switch (policy.kappa_mode.kind) {
      case KappaMode::Kind::Keep:
        classes.emplace_back(*c);
        break;
      case KappaMode::Kind::SharedMean:
        classes.emplace_back(VmfParams(c->mu(), shared));
        break;
      case KappaMode::Kind::Fixed:
        classes.emplace_back(VmfParams(c->mu(), policy.kappa_mode.value));
        break;
    }
  }
  return BayesClassifier(std::move(classes), policy.target_priors, clf.counts());
}

std::vector<KappaRow> kappa_report(const BayesClassifier& clf) {
  check_fitted(clf, "kappa_report");
  std::vector<KappaRow> rows;
  for (int y = 0; y < clf.num_classes(); ++y) {
    const auto& c = clf.classes()[static_cast<std::size_t>(y)];
    if (!c) continue;
    const std::int64_t count = clf.counts().empty() ? 0 : clf.counts()[static_cast<std::size_t>(y)];
    rows.push_back({y, count, c->kappa(), c->mu().vector().norm()});
  }
  return rows;
}

BapeFit fit_bape(std::span<const ClassStats> stats, std::span<const PriorSpec> priors,
                 EstimationMode mode) {
  if (stats.size() != priors.size()) {
    throw DimensionMismatch("fit_bape", static_cast<long>(stats.size()),
                            static_cast<long>(priors.size()));
  }
  BapeFit fit;
  std::vector<std::optional<VmfParams>> classes;
  std::vector<std::int64_t> counts;
  for (std::size_t y = 0; y < stats.size(); ++y) {
    counts.push_back(stats[y].count());
    const int label = static_cast<int>(y);
    if (stats[y].count() == 0 && priors[y].alpha0 == 0.0) {
      fit.excluded.push_back({label, "no samples and zero prior"});
      classes.emplace_back(std::nullopt);
      continue;
    }
    try {
      classes.emplace_back(map_estimate(posterior(priors[y], stats[y]), mode));
    } catch (const DegeneratePosterior& e) {
      fit.excluded.push_back({label, e.what()});
      classes.emplace_back(std::nullopt);
    } catch (const ConcentrationOverflow& e) {
      fit.excluded.push_back({label, e.what()});
      classes.emplace_back(std::nullopt);
    }
  }
  fit.classifier = BayesClassifier(std::move(classes), ClassPriors::from_counts(counts), counts);
  return fit;
}

std::vector<PriorSpec> scaled_priors(const EtfFrame& frame, const PriorHyper& hyper,
                                     std::span<const ClassStats> stats) {
  if (static_cast<int>(stats.size()) != frame.num_classes()) {
    throw DimensionMismatch("scaled_priors", frame.num_classes(), static_cast<long>(stats.size()));
  }
  std::vector<PriorSpec> out;
  out.reserve(stats.size());
  for (std::size_t y = 0; y < stats.size(); ++y) {
    out.push_back(scale_prior(hyper, frame.column(static_cast<int>(y)),
                              static_cast<double>(stats[y].count())));
  }
  return out;
}

nlohmann::json to_json(const BayesClassifier& clf) {
  check_fitted(clf, "to_json");
  nlohmann::json classes = nlohmann::json::array();
  for (int y = 0; y < clf.num_classes(); ++y) {
    const auto& c = clf.classes()[static_cast<std::size_t>(y)];
    nlohmann::json entry;
    if (c) {
      entry["kappa"] = c->kappa();
      entry["mu"] = std::vector<double>(c->mu().vector().begin(), c->mu().vector().end());
    } else {
      entry["kappa"] = nullptr;
      entry["mu"] = nlohmann::json::array();
    }
    if (!clf.counts().empty()) entry["count"] = clf.counts()[static_cast<std::size_t>(y)];
    classes.push_back(std::move(entry));
  }
  const auto& pi = clf.priors().values();
  return {{"type", "bape"},
          {"p", clf.dim()},
          {"K", clf.num_classes()},
          {"priors", std::vector<double>(pi.begin(), pi.end())},
          {"classes", std::move(classes)}};
}

BayesClassifier bayes_classifier_from_json(const nlohmann::json& doc) {
  try {
    if (doc.contains("type") && doc.at("type") != "bape") {
      throw ConfigError("classifier JSON is not of type 'bape'");
    }
    const int p = doc.at("p").get<int>();
    const int k = doc.at("K").get<int>();
    const auto priors = doc.at("priors").get<std::vector<double>>();
    const auto& entries = doc.at("classes");
    if (static_cast<int>(priors.size()) != k || static_cast<int>(entries.size()) != k) {
      throw ConfigError("classifier JSON: K does not match priors/classes length");
    }
    std::vector<std::optional<VmfParams>> classes;
    std::vector<std::int64_t> counts;
    for (const auto& entry : entries) {
      if (entry.contains("count")) counts.push_back(entry.at("count").get<std::int64_t>());
      if (entry.at("kappa").is_null()) {
        classes.emplace_back(std::nullopt);
        continue;
      }
      const auto mu = entry.at("mu").get<std::vector<double>>();
      if (static_cast<int>(mu.size()) != p) {
        throw ConfigError("classifier JSON: mu has wrong dimension");
      }
      Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(mu.data(), p);
      classes.emplace_back(VmfParams(UnitVector(std::move(v)), entry.at("kappa").get<double>()));
    }
    if (!counts.empty() && static_cast<int>(counts.size()) != k) counts.clear();
    return BayesClassifier(std::move(classes), ClassPriors::from_weights(priors),
                           std::move(counts));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed classifier JSON: ") + e.what());
  }
}

}  // namespace bape
