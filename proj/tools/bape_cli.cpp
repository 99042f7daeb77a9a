// bape: generate synthetic features, fit and evaluate classifiers, run
// comparison experiments and export embeddings.
//
// Exit codes: 0 success, 1 validation error, 2 I/O error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "bape/baselines.hpp"
#include "bape/classifier.hpp"
#include "bape/datagen.hpp"
#include "bape/error.hpp"
#include "bape/estimation.hpp"
#include "bape/harness.hpp"
#include "bape/priors.hpp"

namespace {

using nlohmann::json;

constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw bape::IoError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw bape::ConfigError(path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw bape::IoError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw bape::IoError("write failed for " + path);
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// Either classifier kind, as loaded from a model file.
struct Model {
  std::optional<bape::BayesClassifier> bayes;
  std::optional<bape::LinearClassifier> linear;
  std::vector<std::int64_t> counts;
};

Model load_model(const std::string& path) {
  const json doc = load_json(path);
  Model m;
  const std::string type = doc.value("type", "");
  try {
    if (type == "bape") {
      m.bayes = bape::bayes_classifier_from_json(doc);
      m.counts = m.bayes->counts();
    } else if (type == "linear") {
      m.linear = bape::linear_classifier_from_json(doc);
      if (doc.contains("counts")) m.counts = doc.at("counts").get<std::vector<std::int64_t>>();
    } else {
      throw bape::ConfigError(path + ": unknown model type '" + type + "'");
    }
  } catch (const json::exception& e) {
    throw bape::ConfigError(path + ": " + e.what());
  }
  return m;
}

struct GenerateArgs {
  bape::LongTailSpec spec;
  bape::TruthConfig truth;
  std::string centers = "etf";
  std::string split = "train";
  std::uint64_t seed = 0;
  std::string out;
  std::string truth_out;
};

void run_generate(const GenerateArgs& a) {
  bape::TruthConfig truth = a.truth;
  truth.centers = bape::parse_center_mode(a.centers);
  a.spec.validate();
  const auto gt = bape::make_ground_truth(a.spec.num_classes, truth, a.seed);
  bape::StreamDomain domain;
  if (a.split == "train") {
    domain = bape::StreamDomain::ClassSamples;
  } else if (a.split == "test") {
    domain = bape::StreamDomain::TestSamples;
  } else {
    throw bape::ConfigError("--split must be train or test");
  }
  const auto sizes = bape::class_sizes(a.spec);
  const bape::Dataset data = bape::sample_dataset(gt, sizes, a.seed, domain);
  bape::write_features(a.out, data);
  if (!a.truth_out.empty()) {
    auto with_counts = gt.with_priors(bape::ClassPriors::from_counts(sizes));
    write_text(a.truth_out, bape::to_json(with_counts.classifier()).dump(2) + "\n");
  }
  std::cerr << "wrote " << data.size() << " samples (p=" << data.dim()
            << ", K=" << data.num_classes() << ") to " << a.out << "\n";
}

struct FitArgs {
  std::string data;
  std::string model = "bape";
  bape::PriorHyper prior;
  std::string estimation = "paper";
  bape::TrainConfig train;
  std::uint64_t seed = 0;
  std::string out;
};

void run_fit(const FitArgs& a) {
  const bape::Dataset data = bape::read_features(a.data);
  const int k = data.num_classes();
  json doc;
  if (a.model == "bape") {
    a.prior.validate();
    const auto mode = bape::parse_estimation_mode(a.estimation);
    std::vector<bape::ClassStats> stats(static_cast<std::size_t>(k), bape::ClassStats(data.dim()));
    for (std::size_t i = 0; i < data.size(); ++i) {
      stats[static_cast<std::size_t>(data.labels[i])].add(bape::UnitVector::normalize(data.row(i)));
    }
    const auto frame = bape::build_etf(k, data.dim(), a.seed);
    const auto fit = bape::fit_bape(stats, bape::scaled_priors(frame, a.prior, stats), mode);
    for (const auto& ex : fit.excluded) {
      std::cerr << "class " << ex.label << " excluded: " << ex.reason << "\n";
    }
    doc = bape::to_json(fit.classifier);
  } else {
    bape::TrainConfig cfg = a.train;
    cfg.mode = bape::parse_loss_mode(a.model);
    cfg.seed = a.seed;
    const auto res = bape::train(data.features_as_double(), data.labels, k, cfg);
    doc = bape::to_json(res.classifier, data.class_counts);
    doc["temperature"] = cfg.temperature;
    doc["normalize_features"] = cfg.normalize_features;
  }
  write_text(a.out, doc.dump(2) + "\n");
}

struct EvalArgs {
  std::string model;
  std::string data;
  std::string adjust_priors;
  std::string kappa_mode = "keep";
  bape::SplitThresholds splits;
  std::string out;
};

bape::ClassPriors resolve_priors(const std::string& text, int k,
                                 const std::vector<std::int64_t>& counts) {
  const std::string file_prefix = "file:";
  if (text.rfind(file_prefix, 0) == 0) {
    const json doc = load_json(text.substr(file_prefix.size()));
    try {
      const auto w = (doc.is_object() ? doc.at("priors") : doc).get<std::vector<double>>();
      if (static_cast<int>(w.size()) != k) {
        throw bape::DimensionMismatch("prior file", k, static_cast<long>(w.size()));
      }
      return bape::ClassPriors::from_weights(w);
    } catch (const json::exception& e) {
      throw bape::ConfigError(text + ": " + e.what());
    }
  }
  std::vector<std::int64_t> c = counts;
  if (c.empty()) c.assign(static_cast<std::size_t>(k), 1);
  return bape::TargetPriorSpec::parse(text).resolve(c);
}

void run_eval(const EvalArgs& a) {
  Model m = load_model(a.model);
  const int k = m.bayes ? m.bayes->num_classes() : m.linear->num_classes();
  const bape::Dataset data = bape::read_features(a.data, k);
  if (data.num_classes() > k) throw bape::DomainError("data has more classes than the model");

  std::vector<int> pred(data.size());
  if (m.bayes) {
    bape::BayesClassifier clf = *m.bayes;
    if (!a.adjust_priors.empty() || a.kappa_mode != "keep") {
      const auto target = a.adjust_priors.empty()
                              ? clf.priors()
                              : resolve_priors(a.adjust_priors, k, m.counts);
      clf = bape::adjust(clf, {target, bape::KappaMode::parse(a.kappa_mode)});
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      pred[i] = bape::predict(clf, data.row(i).normalized());
    }
  } else {
    if (!a.adjust_priors.empty() || a.kappa_mode != "keep") {
      throw bape::ConfigError("--adjust-priors and --kappa-mode apply to bape models only");
    }
    const json doc = load_json(a.model);
    const bool normalize = doc.value("normalize_features", false);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Eigen::VectorXd z = normalize ? Eigen::VectorXd(data.row(i).normalized()) : data.row(i);
      pred[i] = bape::predict(*m.linear, z);
    }
  }

  json result = {{"n", data.size()}};
  if (m.counts.size() == static_cast<std::size_t>(k)) {
    const auto acc = bape::split_accuracy(pred, data.labels, m.counts, a.splits);
    result["accuracy"] = acc.all;
    result["many"] = optional_json(acc.many);
    result["medium"] = optional_json(acc.medium);
    result["few"] = optional_json(acc.few);
  } else {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) correct += pred[i] == data.labels[i];
    result["accuracy"] = static_cast<double>(correct) / static_cast<double>(data.size());
  }
  write_text(a.out, result.dump(2) + "\n");
}

struct CompareArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha_hat, beta_hat, eta;
  std::optional<std::string> estimation;
  std::optional<int> threads;
  std::string out;
};

void run_compare(const CompareArgs& a) {
  bape::ExperimentConfig cfg = bape::load_experiment_config(a.config);
  if (a.seed) cfg.seeds = {*a.seed};
  if (a.alpha_hat) cfg.prior.alpha_hat = *a.alpha_hat;
  if (a.beta_hat) cfg.prior.beta_hat = *a.beta_hat;
  if (a.eta) cfg.eta = *a.eta;
  if (a.estimation) cfg.estimation = bape::parse_estimation_mode(*a.estimation);
  if (a.threads) cfg.threads = *a.threads;
  if (!a.out.empty()) {
    (ends_with(a.out, ".csv") ? cfg.csv_out : cfg.json_out) = a.out;
  }
  cfg.validate();
  const auto rows = bape::run_experiment(cfg);
  if (cfg.json_out) bape::emit_report(rows, bape::ReportFormat::Json, *cfg.json_out);
  if (cfg.csv_out) bape::emit_report(rows, bape::ReportFormat::Csv, *cfg.csv_out);
  if (!cfg.json_out && !cfg.csv_out) std::cout << bape::format_report(rows, bape::ReportFormat::Json);
}

struct DumpArgs {
  std::string data;
  std::string model;
  bool raw = false;
  std::string out;
};

void run_dump(const DumpArgs& a) {
  std::optional<Model> m;
  int hint = 0;
  if (!a.model.empty()) {
    m = load_model(a.model);
    if (!m->bayes) throw bape::ConfigError("dump-embeddings --model expects a bape model");
    hint = m->bayes->num_classes();
  }
  const bape::Dataset data = bape::read_features(a.data, hint);
  std::string text = m ? "label,pred" : "label";
  for (int j = 0; j < data.dim(); ++j) text += ",f" + std::to_string(j);
  text += '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    Eigen::VectorXd z = data.row(i);
    if (!a.raw) z.normalize();
    text += std::to_string(data.labels[i]);
    if (m) text += ',' + std::to_string(bape::predict(*m->bayes, z.normalized()));
    for (Eigen::Index j = 0; j < z.size(); ++j) text += ',' + num(z[j]);
    text += '\n';
  }
  write_text(a.out, text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explicit vMF Bayes classifiers versus gradient-descent baselines"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic long-tailed feature file");
  g->add_option("--classes", gen.spec.num_classes, "Number of classes K")->capture_default_str();
  g->add_option("--head-size", gen.spec.head_size, "Samples in the largest class")->capture_default_str();
  g->add_option("--imbalance", gen.spec.gamma, "Imbalance factor gamma")->capture_default_str();
  g->add_option("--dim", gen.truth.dim, "Feature dimension p")->capture_default_str();
  g->add_option("--kappa-min", gen.truth.kappa_min)->capture_default_str();
  g->add_option("--kappa-max", gen.truth.kappa_max)->capture_default_str();
  g->add_option("--centers", gen.centers, "etf or random")->capture_default_str();
  g->add_option("--split", gen.split, "train or test (independent sample stream)")->capture_default_str();
  g->add_option("--seed", gen.seed)->capture_default_str();
  g->add_option("--truth-out", gen.truth_out, "Also write the generating mixture as model JSON");
  g->add_option("--out", gen.out, "Feature file (.csv for CSV)")->required();

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "Fit a classifier on a feature file");
  f->add_option("--data", fit.data)->required();
  f->add_option("--model", fit.model, "bape, softmax or logit_adjusted")->capture_default_str();
  f->add_option("--alpha-hat", fit.prior.alpha_hat)->capture_default_str();
  f->add_option("--beta-hat", fit.prior.beta_hat)->capture_default_str();
  f->add_option("--estimation", fit.estimation, "paper or exact")->capture_default_str();
  f->add_option("--lr", fit.train.lr)->capture_default_str();
  f->add_option("--epochs", fit.train.epochs)->capture_default_str();
  f->add_option("--batch-size", fit.train.batch_size)->capture_default_str();
  f->add_option("--weight-decay", fit.train.weight_decay)->capture_default_str();
  f->add_option("--momentum", fit.train.momentum)->capture_default_str();
  f->add_option("--temperature", fit.train.temperature)->capture_default_str();
  f->add_flag("--normalize-features", fit.train.normalize_features);
  f->add_option("--seed", fit.seed)->capture_default_str();
  f->add_option("--out", fit.out, "Model JSON (stdout when omitted)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score a model on a feature file");
  e->add_option("--model", ev.model)->required();
  e->add_option("--data", ev.data)->required();
  e->add_option("--adjust-priors", ev.adjust_priors,
                "uniform, train, imbalance:<gamma> or file:<path>");
  e->add_option("--kappa-mode", ev.kappa_mode, "keep, shared-mean or fixed:<v>")->capture_default_str();
  e->add_option("--many-above", ev.splits.many_above)->capture_default_str();
  e->add_option("--few-below", ev.splits.few_below)->capture_default_str();
  e->add_option("--out", ev.out, "Result JSON (stdout when omitted)");

  CompareArgs cmp;
  auto* c = app.add_subcommand("compare", "Run a full experiment from a JSON config");
  c->add_option("--config", cmp.config)->required();
  c->add_option("--seed", cmp.seed, "Run this single seed instead of the config's list");
  c->add_option("--alpha-hat", cmp.alpha_hat);
  c->add_option("--beta-hat", cmp.beta_hat);
  c->add_option("--eta", cmp.eta);
  c->add_option("--estimation", cmp.estimation, "paper or exact");
  c->add_option("--threads", cmp.threads);
  c->add_option("--out", cmp.out, "Report path (.csv for CSV, otherwise JSON)");

  DumpArgs dump;
  auto* d = app.add_subcommand("dump-embeddings", "Export features as CSV for external plotting");
  d->add_option("--data", dump.data)->required();
  d->add_option("--model", dump.model, "Add a predicted-label column from a bape model");
  d->add_flag("--raw", dump.raw, "Keep features unnormalized");
  d->add_option("--out", dump.out, "CSV path (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kExitValidation;
  }

  try {
    if (*g) run_generate(gen);
    if (*f) run_fit(fit);
    if (*e) run_eval(ev);
    if (*c) run_compare(cmp);
    if (*d) run_dump(dump);
  } catch (const bape::IoError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitIo;
  } catch (const bape::Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitValidation;
  }
  return 0;
}
