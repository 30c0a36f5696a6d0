#include "pointssl/eval.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace pointssl {

void FeatureSet::validate() const {
  if (count() < 1) throw std::invalid_argument("feature set: empty");
  if (static_cast<Eigen::Index>(labels.size()) != count())
    throw std::invalid_argument("feature set: label count does not match feature rows");
  if (class_count < 1) throw std::invalid_argument("feature set: class_count must be positive");
  for (int l : labels) {
    if (l < 0 || l >= class_count)
      throw std::invalid_argument("feature set: label " + std::to_string(l) + " outside [0, " +
                                  std::to_string(class_count) + ")");
  }
  if (count() < class_count) throw std::invalid_argument("feature set: fewer samples than classes");
}

LinearModel train_linear_probe(const FeatureSet& train, const ProbeConfig& cfg) {
  train.validate();
  const Eigen::Index m = train.count();
  const Eigen::Index d = train.width();
  const int classes = train.class_count;

  std::vector<Eigen::Index> per_class(static_cast<std::size_t>(classes), 0);
  for (int l : train.labels) ++per_class[static_cast<std::size_t>(l)];
  for (int c = 0; c < classes; ++c) {
    if (per_class[static_cast<std::size_t>(c)] == 0)
      throw std::invalid_argument("train_linear_probe: class " + std::to_string(c) + " has no training samples");
  }

  // Sign targets y[i][c] = +1 for the true class, -1 otherwise.
  Eigen::MatrixXd Y = Eigen::MatrixXd::Constant(m, classes, -1.0);
  for (Eigen::Index i = 0; i < m; ++i) Y(i, train.labels[static_cast<std::size_t>(i)]) = 1.0;

  LinearModel model;
  model.weights = Eigen::MatrixXd::Zero(classes, d);
  model.bias = Eigen::VectorXd::Zero(classes);

  double lr = cfg.lr;
  for (int it = 0; it < cfg.iterations; ++it) {
    if (it == cfg.iterations / 2 || it == (3 * cfg.iterations) / 4) lr *= 0.5;
    Eigen::MatrixXd scores = train.features * model.weights.transpose();
    scores.rowwise() += model.bias.transpose();
    // Subgradient of mean hinge: -y where the margin is violated.
    Eigen::MatrixXd active = ((1.0 - Y.array() * scores.array()) > 0.0).cast<double>();
    Eigen::MatrixXd gscore = (-Y.array() * active.array()) / static_cast<double>(m);
    Eigen::MatrixXd gw = gscore.transpose() * train.features + 2.0 * cfg.l2_reg * model.weights;
    Eigen::VectorXd gb = gscore.colwise().sum().transpose();
    model.weights -= lr * gw;
    model.bias -= lr * gb;
  }
  return model;
}

double evaluate(const LinearModel& model, const FeatureSet& test) {
  test.validate();
  if (model.weights.cols() != test.width())
    throw std::invalid_argument("evaluate: model width " + std::to_string(model.weights.cols()) +
                                " does not match feature width " + std::to_string(test.width()));
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < test.count(); ++i) {
    const Eigen::VectorXd scores = model.weights * test.features.row(i).transpose() + model.bias;
    int best = 0;
    for (int c = 1; c < scores.size(); ++c) {
      if (scores(c) > scores(best)) best = c;  // strict: ties keep the lowest class id
    }
    if (best == test.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.count());
}

std::vector<int> semi_supervised_subset(const std::vector<int>& labels, int class_count, double fraction,
                                        RngStream& rng) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw std::invalid_argument("semi_supervised_subset: fraction must lie in (0, 1]");
  const int m = static_cast<int>(labels.size());
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(class_count));
  for (int i = 0; i < m; ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    if (l < 0 || l >= class_count) throw std::invalid_argument("semi_supervised_subset: label outside class range");
    by_class[static_cast<std::size_t>(l)].push_back(i);
  }
  for (int c = 0; c < class_count; ++c) {
    if (by_class[static_cast<std::size_t>(c)].empty())
      throw std::invalid_argument("semi_supervised_subset: class " + std::to_string(c) + " has no samples");
  }

  const int want = static_cast<int>(std::llround(fraction * m));
  if (want < class_count) {
    // Too small a budget: take exactly one random sample per class.
    std::vector<int> out;
    for (int c = 0; c < class_count; ++c) {
      const auto& pool = by_class[static_cast<std::size_t>(c)];
      out.push_back(pool[rng.next_below(pool.size())]);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  std::vector<int> pool(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) pool[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < want; ++i) {
    const int j = i + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(m - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  std::vector<int> selected(pool.begin(), pool.begin() + want);

  std::vector<int> count_in(static_cast<std::size_t>(class_count), 0);
  for (int i : selected) ++count_in[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
  for (int c = 0; c < class_count; ++c) {
    if (count_in[static_cast<std::size_t>(c)] > 0) continue;
    // Swap one random member of the missing class for a selected index whose
    // class keeps at least one other representative.
    const auto& pool_c = by_class[static_cast<std::size_t>(c)];
    const int incoming = pool_c[rng.next_below(pool_c.size())];
    for (;;) {
      const std::size_t victim = static_cast<std::size_t>(rng.next_below(selected.size()));
      const int victim_class = labels[static_cast<std::size_t>(selected[victim])];
      if (count_in[static_cast<std::size_t>(victim_class)] < 2) continue;
      --count_in[static_cast<std::size_t>(victim_class)];
      selected[victim] = incoming;
      ++count_in[static_cast<std::size_t>(c)];
      break;
    }
  }
  std::sort(selected.begin(), selected.end());
  return selected;
}

FeatureSet subset_features(const FeatureSet& fs, const std::vector<int>& indices) {
  FeatureSet out;
  out.class_count = fs.class_count;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), fs.width());
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = fs.features.row(indices[i]);
    out.labels.push_back(fs.labels[static_cast<std::size_t>(indices[i])]);
  }
  return out;
}

void export_embeddings(const FeatureSet& fs, const std::string& path) {
  fs.validate();
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("export_embeddings: cannot open '" + path + "' for writing");
  char num[64];
  for (Eigen::Index i = 0; i < fs.count(); ++i) {
    f << fs.labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < fs.width(); ++j) {
      std::snprintf(num, sizeof(num), "%.17g", fs.features(i, j));
      f << ' ' << num;
    }
    f << '\n';
  }
  if (!f) throw std::runtime_error("export_embeddings: write to '" + path + "' failed");
}

FeatureSet import_embeddings(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("import_embeddings: cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  int lineno = 0;
  Eigen::Index width = -1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream in(line);
    int label = 0;
    if (!(in >> label))
      throw std::runtime_error("import_embeddings: line " + std::to_string(lineno) + ": missing label");
    std::vector<double> feat;
    double v = 0;
    while (in >> v) feat.push_back(v);
    if (!in.eof())
      throw std::runtime_error("import_embeddings: line " + std::to_string(lineno) + ": malformed value");
    if (width < 0) width = static_cast<Eigen::Index>(feat.size());
    if (static_cast<Eigen::Index>(feat.size()) != width || width == 0)
      throw std::runtime_error("import_embeddings: line " + std::to_string(lineno) + ": inconsistent feature width");
    rows.push_back(std::move(feat));
    labels.push_back(label);
  }
  if (rows.empty()) throw std::runtime_error("import_embeddings: '" + path + "' holds no samples");

  FeatureSet fs;
  fs.features.resize(static_cast<Eigen::Index>(rows.size()), width);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (Eigen::Index j = 0; j < width; ++j) fs.features(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  fs.labels = std::move(labels);
  fs.class_count = *std::max_element(fs.labels.begin(), fs.labels.end()) + 1;
  return fs;
}

}  // namespace pointssl
