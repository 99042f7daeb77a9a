#include "bape/datagen.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "bape/error.hpp"
#include "bape/priors.hpp"

namespace bape {

double LongTailSpec::lambda() const {
  if (num_classes < 2) return 1.0;
  return std::pow(gamma, -1.0 / static_cast<double>(num_classes - 1));
}

void LongTailSpec::validate() const {
  if (num_classes < 2) throw ConfigError("long-tail spec: need at least 2 classes");
  if (head_size < 1) throw ConfigError("long-tail spec: head size must be >= 1");
  if (!(gamma >= 1.0) || !std::isfinite(gamma)) {
    throw ConfigError("long-tail spec: imbalance factor must be >= 1");
  }
}

std::vector<std::int64_t> class_sizes(const LongTailSpec& spec) {
  spec.validate();
  const double lambda = spec.lambda();
  std::vector<std::int64_t> sizes;
  sizes.reserve(static_cast<std::size_t>(spec.num_classes));
  for (int j = 0; j < spec.num_classes; ++j) {
    const double exact = static_cast<double>(spec.head_size) * std::pow(lambda, j);
    sizes.push_back(std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(exact + 0.5))));
  }
  return sizes;
}

Eigen::VectorXd Dataset::row(std::size_t i) const {
  return features.row(static_cast<Eigen::Index>(i)).cast<double>().transpose();
}

void Dataset::validate() const {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw DomainError("dataset: feature rows and labels differ in length");
  }
  std::vector<std::int64_t> counts(class_counts.size(), 0);
  for (int y : labels) {
    if (y < 0 || y >= num_classes()) throw DomainError("dataset: label out of range");
    ++counts[static_cast<std::size_t>(y)];
  }
  if (counts != class_counts) throw DomainError("dataset: class counts inconsistent with labels");
  if (!features.allFinite()) throw DomainError("dataset: non-finite feature");
}

Dataset make_dataset(FeatureMatrix features, std::vector<int> labels, int num_classes) {
  Dataset d{std::move(features), std::move(labels),
            std::vector<std::int64_t>(static_cast<std::size_t>(std::max(0, num_classes)), 0)};
  for (int y : d.labels) {
    if (y < 0 || y >= num_classes) throw DomainError("dataset: label out of range");
    ++d.class_counts[static_cast<std::size_t>(y)];
  }
  d.validate();
  return d;
}

BayesClassifier MixtureGroundTruth::classifier() const {
  std::vector<std::optional<VmfParams>> params(classes.begin(), classes.end());
  return BayesClassifier(std::move(params), priors);
}

std::string_view to_string(CenterMode mode) { return mode == CenterMode::Etf ? "etf" : "random"; }

CenterMode parse_center_mode(std::string_view text) {
  if (text == "etf") return CenterMode::Etf;
  if (text == "random") return CenterMode::Random;
  throw ConfigError("unknown center mode '" + std::string(text) + "' (etf|random)");
}

void TruthConfig::validate() const {
  if (dim < 2) throw ConfigError("truth config: dimension must be >= 2");
  if (!(kappa_min > 0.0) || !(kappa_max >= kappa_min) || !std::isfinite(kappa_max)) {
    throw ConfigError("truth config: need 0 < kappa_min <= kappa_max");
  }
}

MixtureGroundTruth make_ground_truth(int num_classes, const TruthConfig& config,
                                     std::uint64_t seed) {
  config.validate();
  if (num_classes < 2) throw ConfigError("ground truth: need at least 2 classes");

  std::vector<UnitVector> centers;
  if (config.centers == CenterMode::Etf) {
    const EtfFrame frame =
        build_etf(num_classes, config.dim, stream_seed(seed, StreamDomain::ClassCenters, 0));
    for (int k = 0; k < num_classes; ++k) centers.push_back(frame.column(k));
  } else {
    for (int k = 0; k < num_classes; ++k) {
      Rng rng(seed, StreamDomain::ClassCenters, static_cast<std::uint32_t>(k));
      centers.push_back(UnitVector::normalize(rng.unit_vector(config.dim)));
    }
  }

  const double log_lo = std::log(config.kappa_min);
  const double log_hi = std::log(config.kappa_max);
  std::vector<VmfParams> classes;
  for (int k = 0; k < num_classes; ++k) {
    Rng rng(seed, StreamDomain::ClassKappas, static_cast<std::uint32_t>(k));
    const double u = rng.uniform();
    const double kappa =
        config.kappa_min == config.kappa_max ? config.kappa_min : std::exp(log_lo + u * (log_hi - log_lo));
    classes.emplace_back(centers[static_cast<std::size_t>(k)], kappa);
  }
  return {std::move(classes), ClassPriors::uniform(num_classes)};
}

Dataset sample_dataset(const MixtureGroundTruth& truth, std::span<const std::int64_t> sizes,
                       std::uint64_t seed, StreamDomain domain) {
  if (sizes.size() != truth.classes.size()) {
    throw DimensionMismatch("sample_dataset", static_cast<long>(truth.classes.size()),
                            static_cast<long>(sizes.size()));
  }
  std::int64_t total = 0;
  for (auto s : sizes) {
    if (s < 0) throw DomainError("sample_dataset: negative class size");
    total += s;
  }
  const int p = static_cast<int>(truth.classes.front().dim());
  FeatureMatrix features(total, p);
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(total));
  Eigen::Index row = 0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    if (sizes[k] == 0) continue;
    Rng rng(seed, domain, static_cast<std::uint32_t>(k));
    for (const auto& z : sample(truth.classes[k], static_cast<std::size_t>(sizes[k]), rng)) {
      features.row(row++) = z.vector().cast<float>().transpose();
      labels.push_back(static_cast<int>(k));
    }
  }
  return make_dataset(std::move(features), std::move(labels), static_cast<int>(sizes.size()));
}

GeneratedData generate(const LongTailSpec& spec, const TruthConfig& config, std::uint64_t seed) {
  const auto sizes = class_sizes(spec);
  MixtureGroundTruth truth = make_ground_truth(spec.num_classes, config, seed);
  truth.priors = ClassPriors::from_counts(sizes);
  Dataset data = sample_dataset(truth, sizes, seed);
  return {std::move(data), std::move(truth)};
}

double oracle_accuracy(const MixtureGroundTruth& truth, const Dataset& test) {
  if (test.size() == 0) throw DomainError("oracle_accuracy: empty test set");
  const BayesClassifier clf = truth.classifier();
  if (test.dim() != clf.dim()) throw DimensionMismatch("oracle_accuracy", clf.dim(), test.dim());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (predict(clf, test.row(i)) == test.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

namespace {

constexpr char kMagic[4] = {'B', 'A', 'P', 'F'};
constexpr std::uint32_t kVersion = 1;

bool is_csv(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".csv";
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

class ByteReader {
public:
  ByteReader(const std::string& bytes, const std::filesystem::path& path)
      : bytes_(bytes), path_(path) {}

  std::uint32_t u32(const char* what) {
    if (bytes_.size() - pos_ < 4) {
      throw TruncatedFile(path_.string() + ": truncated while reading " + what);
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  void skip(std::size_t n) { pos_ += n; }

private:
  const std::string& bytes_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading " + path.string());
  return bytes;
}

void write_binary(const std::filesystem::path& path, const Dataset& data) {
  std::string out(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  put_u32(out, static_cast<std::uint32_t>(data.dim()));
  put_u32(out, static_cast<std::uint32_t>(data.num_classes()));
  out.reserve(out.size() + 4 * data.size() * (static_cast<std::size_t>(data.dim()) + 1));
  for (Eigen::Index i = 0; i < data.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.features.cols(); ++j) {
      put_u32(out, std::bit_cast<std::uint32_t>(data.features(i, j)));
    }
  }
  for (int y : data.labels) put_u32(out, static_cast<std::uint32_t>(y));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("error writing " + path.string());
}

Dataset read_binary(const std::filesystem::path& path, const std::string& bytes) {
  if (bytes.size() < 4) throw TruncatedFile(path.string() + ": truncated before magic");
  if (!std::equal(kMagic, kMagic + 4, bytes.begin())) {
    throw BadMagic(path.string() + ": not a BAPF feature file");
  }
  ByteReader r(bytes, path);
  r.skip(4);
  const std::uint32_t version = r.u32("version");
  if (version != kVersion) {
    throw UnsupportedVersion(path.string() + ": unsupported version " + std::to_string(version));
  }
  const std::uint32_t n = r.u32("n");
  const std::uint32_t p = r.u32("p");
  const std::uint32_t k = r.u32("K");
  const std::uint64_t need = 4ULL * n * p + 4ULL * n;
  if (r.remaining() < need) {
    throw TruncatedFile(path.string() + ": expected " + std::to_string(need) +
                        " payload bytes, found " + std::to_string(r.remaining()));
  }
  if (r.remaining() > need) throw IoError(path.string() + ": trailing bytes after payload");

  FeatureMatrix features(n, p);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < p; ++j) features(i, j) = std::bit_cast<float>(r.u32("features"));
  }
  std::vector<int> labels(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t y = r.u32("labels");
    if (y >= k) {
      throw LabelOutOfRange(path.string() + ": label " + std::to_string(y) + " at row " +
                            std::to_string(i) + " not below K=" + std::to_string(k));
    }
    labels[i] = static_cast<int>(y);
  }
  try {
    return make_dataset(std::move(features), std::move(labels), static_cast<int>(k));
  } catch (const DomainError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << "label";
  for (int j = 0; j < data.dim(); ++j) f << ",f" << j;
  f << '\n';
  char buf[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    f << data.labels[i];
    for (int j = 0; j < data.dim(); ++j) {
      std::snprintf(buf, sizeof buf, "%.9g",
                    static_cast<double>(data.features(static_cast<Eigen::Index>(i), j)));
      f << ',' << buf;
    }
    f << '\n';
  }
  if (!f) throw IoError("error writing " + path.string());
}

Dataset read_csv(const std::filesystem::path& path, int num_classes_hint) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line)) throw TruncatedFile(path.string() + ": missing CSV header");
  if (line.rfind("label", 0) != 0) throw BadMagic(path.string() + ": CSV header must start with 'label'");
  const auto dim = static_cast<int>(std::count(line.begin(), line.end(), ','));
  if (dim < 1) throw IoError(path.string() + ": CSV header has no feature columns");

  std::vector<float> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    int column = 0;
    while (std::getline(row, cell, ',')) {
      char* end = nullptr;
      if (column == 0) {
        const long y = std::strtol(cell.c_str(), &end, 10);
        if (end == cell.c_str() || *end != '\0') {
          throw IoError(path.string() + ": bad label on line " + std::to_string(line_no));
        }
        if (y < 0 || (num_classes_hint > 0 && y >= num_classes_hint)) {
          throw LabelOutOfRange(path.string() + ": label " + std::to_string(y) + " on line " +
                                std::to_string(line_no));
        }
        labels.push_back(static_cast<int>(y));
      } else {
        const float v = std::strtof(cell.c_str(), &end);
        if (end == cell.c_str()) {
          throw IoError(path.string() + ": bad number on line " + std::to_string(line_no));
        }
        values.push_back(v);
      }
      ++column;
    }
    if (column != dim + 1) {
      throw TruncatedFile(path.string() + ": line " + std::to_string(line_no) + " has " +
                          std::to_string(column) + " columns, expected " + std::to_string(dim + 1));
    }
  }
  const int k = std::max(num_classes_hint,
                         labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1);
  FeatureMatrix features(static_cast<Eigen::Index>(labels.size()), dim);
  std::copy(values.begin(), values.end(), features.data());
  try {
    return make_dataset(std::move(features), std::move(labels), k);
  } catch (const DomainError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace

void write_features(const std::filesystem::path& path, const Dataset& data) {
  data.validate();
  if (is_csv(path)) {
    write_csv(path, data);
  } else {
    write_binary(path, data);
  }
}

Dataset read_features(const std::filesystem::path& path, int num_classes_hint) {
  if (is_csv(path)) return read_csv(path, num_classes_hint);
  return read_binary(path, slurp(path));
}

}  // namespace bape
