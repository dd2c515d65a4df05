#include "aad/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace aad {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    auto b = s.find_first_not_of(" \t");
    auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  }
  return out;
}

Box compute_bbox(const Matrix& x) {
  Box box;
  const auto d = x.cols();
  if (x.rows() == 0) {
    box.lo = Vector::Zero(d);
    box.hi = Vector::Zero(d);
    return box;
  }
  box.lo = x.colwise().minCoeff().transpose();
  box.hi = x.colwise().maxCoeff().transpose();
  return box;
}

}  // namespace

bool Box::contains(const Eigen::Ref<const Vector>& x) const {
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    if (!(x[j] > lo[j] && x[j] <= hi[j])) return false;
  }
  return true;
}

ParseError::ParseError(std::size_t r, const std::string& what)
    : std::runtime_error("row " + std::to_string(r) + ": " + what), row(r) {}

Dataset::Dataset(Matrix features, std::vector<std::optional<Label>> labels,
                 std::vector<std::optional<std::string>> class_tags,
                 std::vector<std::string> feature_names)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      tags_(std::move(class_tags)),
      names_(std::move(feature_names)) {
  const auto n = static_cast<std::size_t>(features_.rows());
  if (labels_.empty()) labels_.resize(n);
  if (tags_.empty()) tags_.resize(n);
  if (labels_.size() != n || tags_.size() != n)
    throw ContractViolation("Dataset: label/tag count does not match row count");
  if (!features_.allFinite())
    throw std::domain_error("Dataset: non-finite feature value");
  if (names_.empty()) {
    for (Eigen::Index j = 0; j < features_.cols(); ++j) names_.push_back("x" + std::to_string(j));
  }
  bbox_ = compute_bbox(features_);
}

Dataset Dataset::subset(const std::vector<Index>& ids) const {
  Matrix x(static_cast<Eigen::Index>(ids.size()), features_.cols());
  std::vector<std::optional<Label>> labels;
  std::vector<std::optional<std::string>> tags;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = row(ids[i]);
    labels.push_back(labels_.at(ids[i]));
    tags.push_back(tags_.at(ids[i]));
  }
  return Dataset(std::move(x), std::move(labels), std::move(tags), names_);
}

std::optional<Label> GroundTruth::label(Index id) const { return ds_->labels_.at(id); }

std::optional<std::string> GroundTruth::class_tag(Index id) const { return ds_->tags_.at(id); }

bool GroundTruth::has_class_tags() const {
  return !ds_->tags_.empty() &&
         std::all_of(ds_->tags_.begin(), ds_->tags_.end(), [](const auto& t) { return t.has_value(); });
}

Index GroundTruth::anomaly_count() const {
  return static_cast<Index>(std::count(ds_->labels_.begin(), ds_->labels_.end(),
                                       std::optional<Label>(Label::anomaly)));
}

double GroundTruth::anomaly_fraction() const {
  if (ds_->empty()) return 0.0;
  return static_cast<double>(anomaly_count()) / static_cast<double>(ds_->size());
}

Label Oracle::label(Index id) {
  if (id >= ds_->size()) throw std::out_of_range("Oracle: unknown instance id " + std::to_string(id));
  const auto& y = ds_->labels_[id];
  if (!y) throw std::out_of_range("Oracle: instance " + std::to_string(id) + " has no label");
  std::lock_guard lock(mu_);
  if (seen_.insert(id).second) log_.emplace_back(id, *y);
  return *y;
}

std::vector<std::pair<Index, Label>> Oracle::log() const {
  std::lock_guard lock(mu_);
  return log_;
}

std::size_t Oracle::queries() const {
  std::lock_guard lock(mu_);
  return log_.size();
}

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& opts) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(0, "missing header");
  const auto header = split_csv_line(line);

  std::optional<std::size_t> label_col, class_col;
  std::vector<std::size_t> feature_cols;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == opts.label_column) {
      label_col = c;
    } else if (opts.class_column && header[c] == *opts.class_column) {
      class_col = c;
    } else {
      feature_cols.push_back(c);
      names.push_back(header[c]);
    }
  }
  if (opts.class_column && !class_col)
    throw ParseError(0, "class column '" + *opts.class_column + "' not found");

  auto match = [](const std::vector<std::string>& vals, const std::string& v) {
    return std::find(vals.begin(), vals.end(), v) != vals.end();
  };

  std::vector<double> values;
  std::vector<std::optional<Label>> labels;
  std::vector<std::optional<std::string>> tags;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError(row, "expected " + std::to_string(header.size()) + " fields, got " +
                                std::to_string(cells.size()));
    for (auto c : feature_cols) {
      double v = 0.0;
      std::size_t used = 0;
      try {
        v = std::stod(cells[c], &used);
      } catch (const std::exception&) {
        throw ParseError(row, "non-numeric value '" + cells[c] + "' in column " + header[c]);
      }
      if (used != cells[c].size())
        throw ParseError(row, "non-numeric value '" + cells[c] + "' in column " + header[c]);
      if (!std::isfinite(v)) throw ParseError(row, "non-finite value in column " + header[c]);
      values.push_back(v);
    }
    if (label_col) {
      const auto& v = cells[*label_col];
      if (match(opts.anomaly_values, v))
        labels.emplace_back(Label::anomaly);
      else if (match(opts.nominal_values, v))
        labels.emplace_back(Label::nominal);
      else
        throw ParseError(row, "unrecognized label '" + v + "'");
    } else {
      labels.emplace_back(std::nullopt);
    }
    tags.emplace_back(class_col ? std::optional<std::string>(cells[*class_col]) : std::nullopt);
  }

  const auto n = static_cast<Eigen::Index>(labels.size());
  const auto d = static_cast<Eigen::Index>(feature_cols.size());
  Matrix x = n == 0 ? Matrix(0, d) : Eigen::Map<Matrix>(values.data(), n, d);
  return Dataset(std::move(x), std::move(labels), std::move(tags), std::move(names));
}

void write_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const bool tags = std::any_of(ds.tags_.begin(), ds.tags_.end(), [](const auto& t) { return t.has_value(); });
  for (const auto& name : ds.names_) out << name << ',';
  out << "label";
  if (tags) out << ",class";
  out << '\n';
  out.precision(std::numeric_limits<double>::max_digits10);
  for (Index i = 0; i < ds.size(); ++i) {
    for (Eigen::Index j = 0; j < ds.features_.cols(); ++j) out << ds.features_(static_cast<Eigen::Index>(i), j) << ',';
    const auto& y = ds.labels_[i];
    out << (y ? (*y == Label::anomaly ? "1" : "-1") : "");
    if (tags) out << ',' << ds.tags_[i].value_or("");
    out << '\n';
  }
}

std::vector<std::vector<Index>> stream_windows(const Dataset& ds, Index window) {
  if (window < 1) throw ContractViolation("stream_windows: window size must be >= 1");
  std::vector<std::vector<Index>> out;
  for (Index start = 0; start < ds.size(); start += window) {
    std::vector<Index> batch(std::min(window, ds.size() - start));
    std::iota(batch.begin(), batch.end(), start);
    out.push_back(std::move(batch));
  }
  return out;
}

Dataset downsample_anomalies(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ContractViolation("downsample_anomalies: fraction must be in (0,1)");
  GroundTruth truth(ds);
  std::vector<Index> anomalies, keep;
  for (Index i = 0; i < ds.size(); ++i) {
    if (truth.is_anomaly(i)) anomalies.push_back(i);
  }
  const auto nominals = static_cast<double>(ds.size() - anomalies.size());
  const auto target = static_cast<std::size_t>(std::floor(fraction * nominals / (1.0 - fraction)));
  std::mt19937_64 rng(seed);
  std::shuffle(anomalies.begin(), anomalies.end(), rng);
  anomalies.resize(std::min(target, anomalies.size()));
  std::set<Index> chosen(anomalies.begin(), anomalies.end());
  for (Index i = 0; i < ds.size(); ++i) {
    if (!truth.is_anomaly(i) || chosen.count(i)) keep.push_back(i);
  }
  return ds.subset(keep);
}

}  // namespace aad
