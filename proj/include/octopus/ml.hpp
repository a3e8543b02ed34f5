#pragma once

// Small supervised learners for strut analysis: a bootstrap-aggregated CART
// ensemble and a linear maximum-margin classifier, plus the versioned model
// file format ("OCTM").

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "octopus/core.hpp"

namespace octopus::ml {

using nlohmann::json;

struct Dataset {
  std::vector<std::vector<double>> x;
  std::vector<int> y;  // 0 or 1

  std::size_t size() const noexcept { return y.size(); }
  int n_features() const noexcept { return x.empty() ? 0 : static_cast<int>(x.front().size()); }
  void add(std::vector<double> row, int label) {
    x.push_back(std::move(row));
    y.push_back(label);
  }
  void check() const {
    if (x.size() != y.size()) throw InvalidArgument("feature and label counts differ");
    for (const auto& r : x)
      if (static_cast<int>(r.size()) != n_features()) throw InvalidArgument("ragged feature matrix");
    const auto pos = std::count(y.begin(), y.end(), 1);
    if (pos == 0 || pos == static_cast<long>(y.size()))
      throw DegenerateTraining("training set has a single class");
  }
};

// ---------------------------------------------------------------------------
// Decision trees
// ---------------------------------------------------------------------------

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0;
  int left = -1;
  int right = -1;
  double value = 0;  // leaf: fraction of positives
};

struct Tree {
  std::vector<TreeNode> nodes;

  double predict(const std::vector<double>& x) const {
    int i = 0;
    while (nodes[i].feature >= 0) i = x[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
    return nodes[i].value;
  }
};

struct TreeOptions {
  int max_depth = 12;
  int min_leaf = 2;
};

namespace detail {

inline double gini(double pos, double n) {
  if (n <= 0) return 0;
  const double p = pos / n;
  return 2 * p * (1 - p);
}

inline int grow(Tree& t, const Dataset& d, std::vector<int>& idx, int lo, int hi, int depth,
                const TreeOptions& opt) {
  const int n = hi - lo;
  double pos = 0;
  for (int i = lo; i < hi; ++i) pos += d.y[idx[i]];
  const int node = static_cast<int>(t.nodes.size());
  t.nodes.push_back({});
  t.nodes[node].value = pos / n;
  if (depth >= opt.max_depth || n < 2 * opt.min_leaf || pos == 0 || pos == n) return node;

  const double parent = gini(pos, n) * n;
  double best_gain = 1e-12, best_thr = 0;
  int best_f = -1;
  std::vector<std::pair<double, int>> col(n);
  for (int f = 0; f < d.n_features(); ++f) {
    for (int i = 0; i < n; ++i) col[i] = {d.x[idx[lo + i]][f], d.y[idx[lo + i]]};
    std::sort(col.begin(), col.end());
    double lpos = 0;
    for (int i = 0; i + 1 < n; ++i) {
      lpos += col[i].second;
      const int nl = i + 1, nr = n - nl;
      if (col[i].first == col[i + 1].first || nl < opt.min_leaf || nr < opt.min_leaf) continue;
      const double gain = parent - gini(lpos, nl) * nl - gini(pos - lpos, nr) * nr;
      if (gain > best_gain) {
        best_gain = gain;
        best_f = f;
        best_thr = 0.5 * (col[i].first + col[i + 1].first);
      }
    }
  }
  if (best_f < 0) return node;
  const auto mid = std::partition(idx.begin() + lo, idx.begin() + hi,
                                  [&](int i) { return d.x[i][best_f] <= best_thr; });
  const int m = static_cast<int>(mid - idx.begin());
  const int l = grow(t, d, idx, lo, m, depth + 1, opt);
  const int r = grow(t, d, idx, m, hi, depth + 1, opt);
  t.nodes[node].feature = best_f;
  t.nodes[node].threshold = best_thr;
  t.nodes[node].left = l;
  t.nodes[node].right = r;
  return node;
}

}  // namespace detail

/// CART with Gini impurity over the given sample indices (repeats allowed).
inline Tree fit_tree(const Dataset& d, std::vector<int> idx, const TreeOptions& opt = {}) {
  Tree t;
  if (idx.empty()) {
    t.nodes.push_back({});
    return t;
  }
  detail::grow(t, d, idx, 0, static_cast<int>(idx.size()), 0, opt);
  return t;
}

struct BaggedTrees {
  std::vector<Tree> trees;

  double score(const std::vector<double>& x) const {
    if (trees.empty()) return 0;
    double s = 0;
    for (const auto& t : trees) s += t.predict(x);
    return s / trees.size();
  }
};

/// Each tree sees a bootstrap resample drawn from its own seed, so the result
/// does not depend on training order.
inline BaggedTrees fit_bagged(const Dataset& d, int n_trees, std::uint64_t seed, const TreeOptions& opt = {}) {
  BaggedTrees m;
  const int n = static_cast<int>(d.size());
  for (int k = 0; k < n_trees; ++k) {
    std::mt19937_64 rng(seed * 1000003ull + static_cast<std::uint64_t>(k));
    std::uniform_int_distribution<int> pick(0, n - 1);
    std::vector<int> idx(n);
    for (auto& i : idx) i = pick(rng);
    m.trees.push_back(fit_tree(d, std::move(idx), opt));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Linear SVM
// ---------------------------------------------------------------------------

struct LinearSvm {
  std::vector<double> mean;
  std::vector<double> scale;
  std::vector<double> w;
  double bias = 0;

  double decision(const std::vector<double>& x) const {
    double s = bias;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * (x[i] - mean[i]) / scale[i];
    return s;
  }
  /// Logistic squash of the margin; 0.5 is the decision boundary.
  double score(const std::vector<double>& x) const { return 1.0 / (1.0 + std::exp(-decision(x))); }
};

struct SvmOptions {
  double c = 1.0;
  int max_epochs = 2000;
  double tolerance = 1e-4;
};

/// Hinge-loss SVM on standardised features, solved by dual coordinate descent
/// with the bias folded in as a constant feature.
inline LinearSvm fit_svm(const Dataset& d, std::uint64_t seed, const SvmOptions& opt = {}) {
  const int n = static_cast<int>(d.size()), p = d.n_features();
  LinearSvm m;
  m.mean.assign(p, 0.0);
  m.scale.assign(p, 1.0);
  for (int j = 0; j < p; ++j) {
    double s = 0, ss = 0;
    for (int i = 0; i < n; ++i) s += d.x[i][j];
    const double mu = n ? s / n : 0;
    for (int i = 0; i < n; ++i) ss += (d.x[i][j] - mu) * (d.x[i][j] - mu);
    const double sd = n ? std::sqrt(ss / n) : 0;
    m.mean[j] = mu;
    m.scale[j] = sd > 1e-12 ? sd : 1.0;
  }
  std::vector<std::vector<double>> z(n, std::vector<double>(p + 1, 1.0));
  std::vector<double> qii(n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) z[i][j] = (d.x[i][j] - m.mean[j]) / m.scale[j];
    for (double v : z[i]) qii[i] += v * v;
  }
  std::vector<double> w(p + 1, 0.0), alpha(n, 0.0);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (int epoch = 0; epoch < opt.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double max_pg = -1e300, min_pg = 1e300;
    for (int i : order) {
      const double yi = d.y[i] ? 1.0 : -1.0;
      double g = 0;
      for (int j = 0; j <= p; ++j) g += w[j] * z[i][j];
      g = yi * g - 1;
      double pg = g;
      if (alpha[i] == 0) pg = std::min(g, 0.0);
      else if (alpha[i] == opt.c) pg = std::max(g, 0.0);
      max_pg = std::max(max_pg, pg);
      min_pg = std::min(min_pg, pg);
      if (pg == 0 || qii[i] <= 0) continue;
      const double old = alpha[i];
      alpha[i] = std::clamp(old - g / qii[i], 0.0, opt.c);
      const double delta = (alpha[i] - old) * yi;
      for (int j = 0; j <= p; ++j) w[j] += delta * z[i][j];
    }
    if (max_pg - min_pg < opt.tolerance) break;
  }
  m.w.assign(w.begin(), w.begin() + p);
  m.bias = w[p];
  return m;
}

// ---------------------------------------------------------------------------
// Trained model and file format
// ---------------------------------------------------------------------------

enum class ModelKind : std::uint8_t { strut_detector = 1, coverage_classifier = 2 };

inline const char* kind_name(ModelKind k) {
  return k == ModelKind::strut_detector ? "strut_detector" : "coverage_classifier";
}

struct TrainedModel {
  ModelKind kind = ModelKind::strut_detector;
  int n_features = 0;
  std::variant<BaggedTrees, LinearSvm> model;
  json meta = json::object();

  double score(const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != n_features)
      throw InvalidArgument("model expects " + std::to_string(n_features) + " features, got " +
                            std::to_string(x.size()));
    return std::visit([&](const auto& m) { return m.score(x); }, model);
  }
  void require(ModelKind k) const {
    if (kind != k)
      throw ModelKindMismatch(std::string("expected a ") + kind_name(k) + " model, got " + kind_name(kind));
  }
};

struct TrainOptions {
  int n_trees = 30;
  TreeOptions tree;
  SvmOptions svm;
  double holdout_fraction = 0.2;
};

namespace detail {

inline TrainedModel fit_kind(const Dataset& d, ModelKind kind, std::uint64_t seed, const TrainOptions& opt) {
  TrainedModel m;
  m.kind = kind;
  m.n_features = d.n_features();
  if (kind == ModelKind::strut_detector) m.model = fit_bagged(d, opt.n_trees, seed, opt.tree);
  else m.model = fit_svm(d, seed, opt.svm);
  return m;
}

}  // namespace detail

inline double accuracy(const TrainedModel& m, const Dataset& d) {
  if (d.size() == 0) return 0;
  int ok = 0;
  for (std::size_t i = 0; i < d.size(); ++i) ok += (m.score(d.x[i]) >= 0.5) == (d.y[i] == 1);
  return static_cast<double>(ok) / d.size();
}

/// Fits on a seeded split to report held-out accuracy, then refits on everything.
inline TrainedModel train(const Dataset& d, ModelKind kind, std::uint64_t seed, const TrainOptions& opt = {}) {
  d.check();
  std::vector<int> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed ^ 0x5EEDull);
  std::shuffle(order.begin(), order.end(), rng);
  const int n_hold = static_cast<int>(std::floor(d.size() * opt.holdout_fraction));
  Dataset fit, hold;
  for (int k = 0; k < static_cast<int>(order.size()); ++k) {
    auto& dst = k < n_hold ? hold : fit;
    dst.add(d.x[order[k]], d.y[order[k]]);
  }
  double held = -1;
  const auto pos = std::count(fit.y.begin(), fit.y.end(), 1);
  if (n_hold > 0 && pos > 0 && pos < static_cast<long>(fit.size()))
    held = accuracy(detail::fit_kind(fit, kind, seed, opt), hold);

  auto m = detail::fit_kind(d, kind, seed, opt);
  m.meta = {{"kind", kind_name(kind)},
            {"seed", seed},
            {"n_samples", d.size()},
            {"n_positive", std::count(d.y.begin(), d.y.end(), 1)},
            {"holdout_accuracy", held}};
  return m;
}

namespace detail {

class Writer {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    // Little-endian on disk regardless of host order.
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    buf.insert(buf.end(), b, b + sizeof(T));
  }
  void put_doubles(const std::vector<double>& v) {
    put<std::uint32_t>(static_cast<std::uint32_t>(v.size()));
    for (double x : v) put(x);
  }
  std::string buf;
};

class Reader {
 public:
  Reader(const std::string& s, std::size_t base) : s_(s), base_(base) {}
  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > s_.size()) throw FormatError("truncated model", base_ + pos_);
    unsigned char b[sizeof(T)];
    std::memcpy(b, s_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
  std::vector<double> get_doubles() {
    const auto n = get<std::uint32_t>();
    if (pos_ + static_cast<std::size_t>(n) * 8 > s_.size()) throw FormatError("truncated vector", base_ + pos_);
    std::vector<double> v(n);
    for (auto& x : v) x = get<double>();
    return v;
  }
  std::size_t pos() const noexcept { return base_ + pos_; }
  bool done() const noexcept { return pos_ == s_.size(); }

 private:
  const std::string& s_;
  std::size_t base_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline constexpr char kModelMagic[4] = {'O', 'C', 'T', 'M'};
inline constexpr std::uint16_t kModelVersion = 1;

inline std::string serialize(const TrainedModel& m) {
  detail::Writer blob;
  blob.put<std::uint32_t>(static_cast<std::uint32_t>(m.n_features));
  if (const auto* b = std::get_if<BaggedTrees>(&m.model)) {
    blob.put<std::uint32_t>(static_cast<std::uint32_t>(b->trees.size()));
    for (const auto& t : b->trees) {
      blob.put<std::uint32_t>(static_cast<std::uint32_t>(t.nodes.size()));
      for (const auto& nd : t.nodes) {
        blob.put<std::int32_t>(nd.feature);
        blob.put(nd.threshold);
        blob.put<std::int32_t>(nd.left);
        blob.put<std::int32_t>(nd.right);
        blob.put(nd.value);
      }
    }
  } else {
    const auto& s = std::get<LinearSvm>(m.model);
    blob.put_doubles(s.mean);
    blob.put_doubles(s.scale);
    blob.put_doubles(s.w);
    blob.put(s.bias);
  }
  detail::Writer out;
  out.buf.append(kModelMagic, 4);
  out.put(kModelVersion);
  out.put(static_cast<std::uint8_t>(m.kind));
  out.put<std::uint64_t>(blob.buf.size());
  out.buf += blob.buf;
  const std::string meta = m.meta.dump();
  out.put<std::uint32_t>(static_cast<std::uint32_t>(meta.size()));
  out.buf += meta;
  return out.buf;
}

inline TrainedModel deserialize(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kModelMagic, 4) != 0) throw FormatError("bad model magic", 0);
  detail::Reader head(bytes, 0);
  for (int i = 0; i < 4; ++i) head.get<char>();
  const auto version = head.get<std::uint16_t>();
  if (version != kModelVersion) throw VersionMismatch("unsupported model version " + std::to_string(version));
  TrainedModel m;
  const auto kind = head.get<std::uint8_t>();
  if (kind != 1 && kind != 2) throw FormatError("unknown model kind", 6);
  m.kind = static_cast<ModelKind>(kind);
  const auto blob_len = head.get<std::uint64_t>();
  const std::size_t blob_at = head.pos();
  if (blob_len > bytes.size() - blob_at) throw FormatError("blob length exceeds file", blob_at - 8);
  const std::string blob_s = bytes.substr(blob_at, blob_len);
  detail::Reader blob(blob_s, blob_at);
  m.n_features = static_cast<int>(blob.get<std::uint32_t>());
  if (m.kind == ModelKind::strut_detector) {
    BaggedTrees b;
    b.trees.resize(blob.get<std::uint32_t>());
    for (auto& t : b.trees) {
      t.nodes.resize(blob.get<std::uint32_t>());
      for (auto& nd : t.nodes) {
        const auto at = blob.pos();
        nd.feature = blob.get<std::int32_t>();
        nd.threshold = blob.get<double>();
        nd.left = blob.get<std::int32_t>();
        nd.right = blob.get<std::int32_t>();
        nd.value = blob.get<double>();
        const int nn = static_cast<int>(t.nodes.size());
        if (nd.feature >= m.n_features || (nd.feature >= 0 && (nd.left < 0 || nd.left >= nn || nd.right < 0 ||
                                                                nd.right >= nn)))
          throw FormatError("corrupt tree node", at);
      }
      if (t.nodes.empty()) throw FormatError("empty tree", blob.pos());
    }
    m.model = std::move(b);
  } else {
    LinearSvm s;
    s.mean = blob.get_doubles();
    s.scale = blob.get_doubles();
    s.w = blob.get_doubles();
    s.bias = blob.get<double>();
    if (static_cast<int>(s.w.size()) != m.n_features || s.mean.size() != s.w.size() || s.scale.size() != s.w.size())
      throw FormatError("svm parameter sizes disagree", blob_at);
    m.model = std::move(s);
  }
  if (!blob.done()) throw FormatError("trailing bytes in model blob", blob.pos());
  const std::size_t meta_at = blob_at + blob_len;
  if (meta_at + 4 > bytes.size()) throw FormatError("missing metadata", meta_at);
  const std::string len_s = bytes.substr(meta_at, 4);
  const auto meta_len = detail::Reader(len_s, meta_at).get<std::uint32_t>();
  if (meta_at + 4 + meta_len != bytes.size()) throw FormatError("metadata length mismatch", meta_at);
  try {
    m.meta = json::parse(bytes.substr(meta_at + 4, meta_len));
  } catch (const json::exception&) {
    throw FormatError("metadata is not JSON", meta_at + 4);
  }
  return m;
}

inline void save(const TrainedModel& m, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path);
  const auto s = serialize(m);
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline TrainedModel load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot read " + path);
  std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(s);
}

}  // namespace octopus::ml
