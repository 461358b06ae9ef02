#pragma once

// Lemma-grouped cross-validation of binary gender classifiers (logistic
// regression, one-hidden-layer feedforward net) with class weighting, focal
// loss, label smoothing and block ablation.

#include <algorithm>
#include <array>
#include <limits>
#include <span>
#include <stdexcept>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "occ/common.hpp"
#include "occ/evalstats.hpp"
#include "occ/features.hpp"
#include "occ/io.hpp"
#include "occ/parallel.hpp"
#include "occ/rng.hpp"

namespace occ {

/// One labelled example. `group` is the lemma-id folds are formed over.
struct Instance {
  std::string id;
  FeatureVector features;
  OccGender label = OccGender::M;
  std::string group;
};

// ---------------------------------------------------------------------------
// Fold planning

struct FoldPlan {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  bool stratified = false;
  std::map<std::string, std::size_t> assignment;  // lemma-id -> fold

  std::size_t fold_of(const std::string& group) const {
    auto it = assignment.find(group);
    if (it == assignment.end()) throw DataError("fold plan has no entry for lemma-id '" + group + "'");
    return it->second;
  }

  friend bool operator==(const FoldPlan&, const FoldPlan&) = default;
};

inline std::vector<std::string> distinct_groups(const std::vector<Instance>& instances) {
  std::set<std::string> g;
  for (const auto& in : instances) g.insert(in.group);
  return {g.begin(), g.end()};
}

/// Lemma-ids are shuffled with the seed and dealt round-robin.
inline FoldPlan plan_folds(const std::vector<Instance>& instances, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw PreconditionError("k must be >= 2");
  auto groups = distinct_groups(instances);
  if (groups.size() < k)
    throw PreconditionError("only " + std::to_string(groups.size()) + " lemma-ids for " + std::to_string(k) + " folds");
  Rng rng(seed, "folds");
  rng.shuffle(groups);
  FoldPlan plan{k, seed, false, {}};
  for (std::size_t i = 0; i < groups.size(); ++i) plan.assignment[groups[i]] = i % k;
  return plan;
}

/// Label-stratified variant. Lemma-ids are bucketed by their majority label
/// (ties count as M), each bucket is shuffled with the seed, and the buckets
/// are dealt round-robin one after the other. Per-fold lemma counts of each
/// majority label, and in total, differ by at most one.
inline FoldPlan plan_stratified_folds(const std::vector<Instance>& instances, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw PreconditionError("k must be >= 2");
  std::map<std::string, std::array<std::size_t, 2>> comp;  // group -> {#M, #F}
  for (const auto& in : instances) ++comp[in.group][in.label == OccGender::F ? 1 : 0];
  if (comp.size() < k)
    throw PreconditionError("only " + std::to_string(comp.size()) + " lemma-ids for " + std::to_string(k) + " folds");

  std::array<std::vector<std::string>, 2> buckets;
  for (const auto& [g, c] : comp) buckets[c[1] > c[0] ? 1 : 0].push_back(g);

  FoldPlan plan{k, seed, true, {}};
  std::size_t next = 0;
  for (std::size_t label = 0; label < 2; ++label) {
    Rng rng(seed, "stratified-folds", label);
    rng.shuffle(buckets[label]);
    for (const auto& g : buckets[label]) plan.assignment[g] = next++ % k;
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Classifier specification

enum class ModelKind { LOGREG, FFN };
enum class LossKind { CE, FOCAL };
enum class ClassWeighting { NONE, BALANCED };

inline std::string_view to_string(ModelKind k) { return k == ModelKind::LOGREG ? "logreg" : "ffn"; }
inline std::string_view to_string(LossKind k) { return k == LossKind::CE ? "ce" : "focal"; }

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "logreg") return ModelKind::LOGREG;
  if (s == "ffn") return ModelKind::FFN;
  throw PreconditionError("model must be logreg or ffn");
}

inline LossKind parse_loss_kind(std::string_view s) {
  if (s == "ce") return LossKind::CE;
  if (s == "focal") return LossKind::FOCAL;
  throw PreconditionError("loss must be ce or focal");
}

struct ClassifierSpec {
  ModelKind kind = ModelKind::LOGREG;
  LossKind loss = LossKind::CE;
  double focal_gamma = 2.0;
  ClassWeighting weighting = ClassWeighting::BALANCED;
  double label_smoothing = 0.0;  // CE only
  double l2 = 1e-3;
  std::uint64_t seed = 13;
  // LOGREG (L-BFGS)
  std::size_t max_iter = 500;
  double tolerance = 1e-6;
  // FFN
  std::size_t hidden = 32;
  std::size_t max_epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  std::size_t patience = 3;
  double holdout_fraction = 0.1;

  void validate() const {
    if (!(label_smoothing >= 0.0 && label_smoothing < 0.5)) throw PreconditionError("label smoothing must be in [0, 0.5)");
    if (focal_gamma < 0) throw PreconditionError("focal gamma must be >= 0");
    if (l2 < 0) throw PreconditionError("l2 must be >= 0");
    if (kind == ModelKind::FFN && (hidden == 0 || batch_size == 0 || max_epochs == 0))
      throw PreconditionError("ffn needs hidden, batch_size, max_epochs > 0");
  }
};

struct ClassWeights {
  double m = 1.0, f = 1.0;
  double of(OccGender g) const { return g == OccGender::F ? f : m; }
};

/// Inverse frequency: w_c = N / (K * n_c) with K = 2.
inline ClassWeights balanced_class_weights(std::span<const OccGender> labels) {
  std::size_t nf = 0;
  for (auto l : labels) nf += l == OccGender::F;
  const std::size_t nm = labels.size() - nf;
  if (nm == 0 || nf == 0) throw DataError("single-class training set");
  const double n = static_cast<double>(labels.size());
  return {n / (2.0 * static_cast<double>(nm)), n / (2.0 * static_cast<double>(nf))};
}

// ---------------------------------------------------------------------------
// Losses. The model outputs a logit z for P(F); with s = +1 for F and -1
// for M, u = s * z is the margin and p_t = sigmoid(u).

namespace loss {

inline double log_sigmoid(double u) { return u >= 0 ? -std::log1p(std::exp(-u)) : u - std::log1p(std::exp(u)); }
inline double sigmoid(double u) {
  if (u >= 0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

struct Value {
  double loss;
  double dloss_du;
};

inline Value evaluate(const ClassifierSpec& spec, double u) {
  const double p = sigmoid(u);
  const double logp = log_sigmoid(u);
  if (spec.loss == LossKind::FOCAL) {
    const double g = spec.focal_gamma;
    const double q = 1.0 - p;
    return {-std::pow(q, g) * logp, g * p * std::pow(q, g) * logp - std::pow(q, g + 1.0)};
  }
  const double eps = spec.label_smoothing;
  const double on = 1.0 - eps / 2.0, off = eps / 2.0;
  return {-on * logp - off * log_sigmoid(-u), -on * (1.0 - p) + off * p};
}

}  // namespace loss

// ---------------------------------------------------------------------------
// Sparse design matrix

using SparseRow = std::vector<std::pair<std::uint32_t, double>>;

/// Column vocabulary built from training rows only; unseen test features
/// are dropped. Values are divided by the training max-abs of their column
/// (sparsity-preserving scaling).
class FeatureSpace {
 public:
  FeatureSpace() = default;

  explicit FeatureSpace(const std::vector<const FeatureMap*>& train) {
    std::map<std::string, double> maxabs;
    for (const auto* row : train)
      for (const auto& [name, v] : *row) {
        auto& m = maxabs[name];
        m = std::max(m, std::abs(v));
      }
    names_.reserve(maxabs.size());
    for (const auto& [name, m] : maxabs) {
      index_.emplace(name, static_cast<std::uint32_t>(names_.size()));
      names_.push_back(name);
      scale_.push_back(m > 0 ? m : 1.0);
    }
  }

  std::size_t dim() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }

  SparseRow transform(const FeatureMap& row) const {
    SparseRow out;
    out.reserve(row.size());
    for (const auto& [name, v] : row) {
      auto it = index_.find(name);
      if (it == index_.end() || v == 0.0) continue;
      out.emplace_back(it->second, v / scale_[it->second]);
    }
    return out;
  }

 private:
  std::map<std::string, std::uint32_t> index_;
  std::vector<std::string> names_;
  std::vector<double> scale_;
};

// ---------------------------------------------------------------------------
// Classifier

struct TrainTrace {
  std::vector<double> objective;  // per LOGREG iteration / per FFN epoch (training objective)
  std::vector<double> holdout;    // FFN only: holdout loss per epoch
  std::size_t best_epoch = 0;
};

class Classifier {
 public:
  Classifier() = default;

  ModelKind kind() const noexcept { return kind_; }
  const ClassWeights& class_weights() const noexcept { return weights_; }
  const TrainTrace& trace() const noexcept { return trace_; }

  double logit(const SparseRow& x) const {
    if (kind_ == ModelKind::LOGREG) {
      double z = bias_;
      for (auto [j, v] : x) z += w_[j] * v;
      return z;
    }
    std::vector<double> h(hidden_);
    return ffn_forward(x, h);
  }

  /// P(F); P(M) = 1 - P(F).
  double prob_f(const SparseRow& x) const { return loss::sigmoid(logit(x)); }

  struct Proba {
    double m, f;
  };
  Proba predict_proba(const SparseRow& x) const {
    const double f = prob_f(x);
    return {1.0 - f, f};
  }

  OccGender predict(const SparseRow& x) const { return prob_f(x) > 0.5 ? OccGender::F : OccGender::M; }

  static Classifier train(const ClassifierSpec& spec, const std::vector<SparseRow>& x,
                          const std::vector<OccGender>& y, std::size_t dim, const std::vector<std::string>& names) {
    spec.validate();
    if (x.empty()) throw DataError("empty training set");
    if (x.size() != y.size()) throw PreconditionError("x/y size mismatch");
    ClassWeights weights = balanced_class_weights(y);  // also rejects single-class sets
    if (spec.weighting == ClassWeighting::NONE) weights = {1.0, 1.0};
    Classifier c;
    c.kind_ = spec.kind;
    c.weights_ = weights;
    if (spec.kind == ModelKind::LOGREG)
      c.fit_logreg(spec, x, y, dim);
    else
      c.fit_ffn(spec, x, y, dim, names);
    return c;
  }

 private:
  // ---- logistic regression: L-BFGS on the L2-regularized weighted loss ----
  double logreg_objective(const ClassifierSpec& spec, const std::vector<SparseRow>& x, const std::vector<OccGender>& y,
                          const std::vector<double>& theta, std::vector<double>& grad) const {
    const std::size_t d = theta.size() - 1;
    std::fill(grad.begin(), grad.end(), 0.0);
    double f = 0;
    const double inv_n = 1.0 / static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      double z = theta[d];
      for (auto [j, v] : x[i]) z += theta[j] * v;
      const double s = y[i] == OccGender::F ? 1.0 : -1.0;
      const auto lv = loss::evaluate(spec, s * z);
      const double w = weights_.of(y[i]) * inv_n;
      f += w * lv.loss;
      const double gz = w * lv.dloss_du * s;
      for (auto [j, v] : x[i]) grad[j] += gz * v;
      grad[d] += gz;
    }
    for (std::size_t j = 0; j < d; ++j) {
      f += 0.5 * spec.l2 * theta[j] * theta[j];
      grad[j] += spec.l2 * theta[j];
    }
    return f;
  }

  void fit_logreg(const ClassifierSpec& spec, const std::vector<SparseRow>& x, const std::vector<OccGender>& y,
                  std::size_t dim) {
    const std::size_t n = dim + 1;
    std::vector<double> theta(n, 0.0), g(n), g_new(n), dir(n), theta_new(n);
    double f = logreg_objective(spec, x, y, theta, g);
    trace_.objective.push_back(f);
    constexpr std::size_t kMemory = 10;
    std::vector<std::vector<double>> s_hist, y_hist;
    std::vector<double> rho;
    auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
      double s = 0;
      for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
      return s;
    };
    for (std::size_t it = 0; it < spec.max_iter; ++it) {
      double gmax = 0;
      for (double v : g) gmax = std::max(gmax, std::abs(v));
      if (gmax < spec.tolerance) break;

      // Two-loop recursion for dir = -H g.
      dir = g;
      std::vector<double> alpha(s_hist.size());
      for (std::size_t m = s_hist.size(); m-- > 0;) {
        alpha[m] = rho[m] * dot(s_hist[m], dir);
        for (std::size_t i = 0; i < n; ++i) dir[i] -= alpha[m] * y_hist[m][i];
      }
      if (!s_hist.empty()) {
        const double gamma = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
        for (auto& v : dir) v *= gamma;
      }
      for (std::size_t m = 0; m < s_hist.size(); ++m) {
        const double beta = rho[m] * dot(y_hist[m], dir);
        for (std::size_t i = 0; i < n; ++i) dir[i] += s_hist[m][i] * (alpha[m] - beta);
      }
      for (auto& v : dir) v = -v;
      double slope = dot(g, dir);
      if (slope >= 0) {  // not a descent direction: reset to steepest descent
        for (std::size_t i = 0; i < n; ++i) dir[i] = -g[i];
        slope = -dot(g, g);
        s_hist.clear(), y_hist.clear(), rho.clear();
      }

      // Armijo backtracking.
      double step = s_hist.empty() ? 1.0 / std::max(1.0, std::sqrt(dot(g, g))) : 1.0;
      double f_new = f;
      bool accepted = false;
      for (int ls = 0; ls < 50; ++ls) {
        for (std::size_t i = 0; i < n; ++i) theta_new[i] = theta[i] + step * dir[i];
        f_new = logreg_objective(spec, x, y, theta_new, g_new);
        if (f_new <= f + 1e-4 * step * slope) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;

      std::vector<double> s(n), yy(n);
      for (std::size_t i = 0; i < n; ++i) s[i] = theta_new[i] - theta[i], yy[i] = g_new[i] - g[i];
      const double sy = dot(s, yy);
      theta.swap(theta_new);
      g.swap(g_new);
      const double f_old = f;
      f = f_new;
      trace_.objective.push_back(f);
      if (sy > 1e-12) {
        s_hist.push_back(std::move(s));
        y_hist.push_back(std::move(yy));
        rho.push_back(1.0 / sy);
        if (s_hist.size() > kMemory) s_hist.erase(s_hist.begin()), y_hist.erase(y_hist.begin()), rho.erase(rho.begin());
      }
      if (std::abs(f_old - f) <= 1e-12 * std::max(1.0, std::abs(f))) break;
    }
    w_.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(dim));
    bias_ = theta[dim];
  }

  // ---- feedforward net: one ReLU hidden layer, Adam, early stopping ----
  double ffn_forward(const SparseRow& x, std::vector<double>& h) const {
    for (std::size_t u = 0; u < hidden_; ++u) h[u] = b1_[u];
    for (auto [j, v] : x) {
      const double* row = &w1_[static_cast<std::size_t>(j) * hidden_];
      for (std::size_t u = 0; u < hidden_; ++u) h[u] += row[u] * v;
    }
    double z = c_;
    for (std::size_t u = 0; u < hidden_; ++u) {
      h[u] = std::max(0.0, h[u]);
      z += v_[u] * h[u];
    }
    return z;
  }

  double ffn_loss(const ClassifierSpec& spec, const std::vector<SparseRow>& x, const std::vector<OccGender>& y,
                  const std::vector<std::size_t>& idx) const {
    if (idx.empty()) return 0.0;
    std::vector<double> h(hidden_);
    double total = 0;
    for (auto i : idx) {
      const double s = y[i] == OccGender::F ? 1.0 : -1.0;
      total += weights_.of(y[i]) * loss::evaluate(spec, s * ffn_forward(x[i], h)).loss;
    }
    return total / static_cast<double>(idx.size());
  }

  void fit_ffn(const ClassifierSpec& spec, const std::vector<SparseRow>& x, const std::vector<OccGender>& y,
               std::size_t dim, const std::vector<std::string>& names) {
    hidden_ = spec.hidden;
    const std::size_t H = hidden_;
    double nnz = 0;
    for (const auto& r : x) nnz += static_cast<double>(r.size());
    const double in_scale = 1.0 / std::sqrt(nnz / static_cast<double>(x.size()) + 1.0);

    // Input weights are drawn per feature name, so adding or removing other
    // columns leaves a feature's initial weights unchanged.
    w1_.assign(dim * H, 0.0);
    for (std::size_t j = 0; j < dim; ++j) {
      Rng rng(spec.seed, "ffn-w1:" + (j < names.size() ? names[j] : std::to_string(j)));
      for (std::size_t u = 0; u < H; ++u) w1_[j * H + u] = rng.normal() * in_scale;
    }
    b1_.assign(H, 0.0);
    {
      Rng rng(spec.seed, "ffn-v");
      v_.resize(H);
      for (auto& v : v_) v = rng.normal() / std::sqrt(static_cast<double>(H));
    }
    c_ = 0.0;

    std::vector<std::size_t> order(x.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng split_rng(spec.seed, "ffn-holdout");
    split_rng.shuffle(order);
    std::size_t n_hold = x.size() >= 10 ? static_cast<std::size_t>(std::ceil(spec.holdout_fraction * static_cast<double>(x.size()))) : 0;
    std::vector<std::size_t> hold(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_hold));
    std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_hold), order.end());

    // Parameter layout: [w1 (dim*H), b1 (H), v (H), c]
    const std::size_t P = dim * H + 2 * H + 1;
    std::vector<double> m1(P, 0.0), m2(P, 0.0), grad(P, 0.0);
    const double b1m = 0.9, b2m = 0.999, eps = 1e-8;
    std::size_t t = 0;
    auto param = [&](std::size_t p) -> double& {
      if (p < dim * H) return w1_[p];
      p -= dim * H;
      if (p < H) return b1_[p];
      p -= H;
      if (p < H) return v_[p];
      return c_;
    };

    double best_hold = std::numeric_limits<double>::infinity();
    auto best_w1 = w1_;
    auto best_b1 = b1_, best_v = v_;
    double best_c = c_;
    std::size_t since_best = 0;
    std::vector<double> h(H), pre(H);
    Rng epoch_rng(spec.seed, "ffn-epochs");

    for (std::size_t epoch = 0; epoch < spec.max_epochs; ++epoch) {
      epoch_rng.shuffle(train);
      for (std::size_t start = 0; start < train.size(); start += spec.batch_size) {
        const std::size_t end = std::min(train.size(), start + spec.batch_size);
        std::fill(grad.begin(), grad.end(), 0.0);
        const double inv_b = 1.0 / static_cast<double>(end - start);
        for (std::size_t bi = start; bi < end; ++bi) {
          const std::size_t i = train[bi];
          for (std::size_t u = 0; u < H; ++u) pre[u] = b1_[u];
          for (auto [j, v] : x[i])
            for (std::size_t u = 0; u < H; ++u) pre[u] += w1_[j * H + u] * v;
          double z = c_;
          for (std::size_t u = 0; u < H; ++u) h[u] = std::max(0.0, pre[u]), z += v_[u] * h[u];
          const double s = y[i] == OccGender::F ? 1.0 : -1.0;
          const double gz = weights_.of(y[i]) * loss::evaluate(spec, s * z).dloss_du * s * inv_b;
          grad[P - 1] += gz;
          for (std::size_t u = 0; u < H; ++u) {
            grad[dim * H + H + u] += gz * h[u];
            if (pre[u] <= 0) continue;
            const double gh = gz * v_[u];
            grad[dim * H + u] += gh;
            for (auto [j, v] : x[i]) grad[j * H + u] += gh * v;
          }
        }
        ++t;
        const double c1 = 1.0 - std::pow(b1m, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(b2m, static_cast<double>(t));
        for (std::size_t p = 0; p < P; ++p) {
          double& w = param(p);
          const bool decay = p < dim * H || (p >= dim * H + H && p < P - 1);
          const double gp = grad[p] + (decay ? spec.l2 * w : 0.0);
          m1[p] = b1m * m1[p] + (1 - b1m) * gp;
          m2[p] = b2m * m2[p] + (1 - b2m) * gp * gp;
          w -= spec.learning_rate * (m1[p] / c1) / (std::sqrt(m2[p] / c2) + eps);
        }
      }
      trace_.objective.push_back(ffn_loss(spec, x, y, train));
      if (hold.empty()) continue;
      const double hl = ffn_loss(spec, x, y, hold);
      trace_.holdout.push_back(hl);
      if (hl < best_hold) {
        best_hold = hl;
        best_w1 = w1_, best_b1 = b1_, best_v = v_, best_c = c_;
        trace_.best_epoch = epoch;
        since_best = 0;
      } else if (++since_best >= spec.patience) {
        break;
      }
    }
    if (!hold.empty()) w1_ = std::move(best_w1), b1_ = std::move(best_b1), v_ = std::move(best_v), c_ = best_c;
  }

  ModelKind kind_ = ModelKind::LOGREG;
  ClassWeights weights_;
  TrainTrace trace_;
  std::vector<double> w_;
  double bias_ = 0;
  std::size_t hidden_ = 0;
  std::vector<double> w1_, b1_, v_;
  double c_ = 0;
};

/// A classifier bundled with the feature space it was trained in.
struct TrainedModel {
  FeatureSpace space;
  Classifier classifier;

  double prob_f(const FeatureMap& flat) const { return classifier.prob_f(space.transform(flat)); }
  double prob_gold(const FeatureMap& flat, OccGender gold) const {
    const double f = prob_f(flat);
    return gold == OccGender::F ? f : 1.0 - f;
  }
};

inline TrainedModel train_model(const ClassifierSpec& spec, const std::vector<const FeatureMap*>& rows,
                                const std::vector<OccGender>& labels) {
  TrainedModel m;
  m.space = FeatureSpace(rows);
  std::vector<SparseRow> x;
  x.reserve(rows.size());
  for (const auto* r : rows) x.push_back(m.space.transform(*r));
  m.classifier = Classifier::train(spec, x, labels, m.space.dim(), m.space.names());
  return m;
}

inline TrainedModel train_model(const ClassifierSpec& spec, const std::vector<Instance>& instances) {
  std::vector<FeatureMap> flat;
  flat.reserve(instances.size());
  for (const auto& in : instances) flat.push_back(in.features.flatten());
  std::vector<const FeatureMap*> rows;
  std::vector<OccGender> labels;
  for (std::size_t i = 0; i < instances.size(); ++i) rows.push_back(&flat[i]), labels.push_back(instances[i].label);
  return train_model(spec, rows, labels);
}

// ---------------------------------------------------------------------------
// Cross-validation

struct FoldMetrics {
  double accuracy = 0, macro_f1 = 0;
  std::size_t n_test = 0;
};

struct CVResult {
  std::vector<FoldMetrics> per_fold;
  double mean_accuracy = 0, sd_accuracy = 0, mean_macro_f1 = 0, sd_macro_f1 = 0;
  std::vector<OofPrediction> oof;  // in input instance order
};

inline void summarize(CVResult& r) {
  std::vector<double> acc, f1;
  for (const auto& f : r.per_fold) acc.push_back(f.accuracy), f1.push_back(f.macro_f1);
  r.mean_accuracy = mean(acc);
  r.sd_accuracy = sample_sd(acc);
  r.mean_macro_f1 = mean(f1);
  r.sd_macro_f1 = sample_sd(f1);
}

/// Train on k-1 folds, predict the held-out fold, for every fold. Per-fold
/// feature spaces come from the training folds only. Throws if any lemma-id
/// lands on both sides of a split. `models`, when given, receives the k
/// per-fold models.
inline CVResult cross_validate(const std::vector<Instance>& instances, const ClassifierSpec& spec,
                               const FoldPlan& plan, unsigned jobs = 1, std::vector<TrainedModel>* models = nullptr) {
  if (instances.empty()) throw PreconditionError("no instances");
  std::vector<FeatureMap> flat(instances.size());
  std::vector<std::size_t> fold(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    flat[i] = instances[i].features.flatten();
    fold[i] = plan.fold_of(instances[i].group);
    if (fold[i] >= plan.k) throw DataError("fold index out of range");
  }

  CVResult result;
  result.per_fold.resize(plan.k);
  result.oof.resize(instances.size());
  if (models) models->assign(plan.k, {});
  parallel_for(plan.k, jobs, [&](std::size_t f) {
    std::vector<const FeatureMap*> rows;
    std::vector<OccGender> labels;
    std::set<std::string> train_groups, test_groups;
    std::vector<std::size_t> test;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      if (fold[i] == f) {
        test.push_back(i);
        test_groups.insert(instances[i].group);
      } else {
        rows.push_back(&flat[i]);
        labels.push_back(instances[i].label);
        train_groups.insert(instances[i].group);
      }
    }
    for (const auto& g : test_groups)
      if (train_groups.count(g)) throw std::logic_error("lemma-id '" + g + "' crosses a fold boundary");
    if (test.empty()) throw DataError("fold " + std::to_string(f) + " has no instances");
    TrainedModel model = train_model(spec, rows, labels);
    std::vector<OccGender> gold, pred;
    for (auto i : test) {
      const double pf = model.prob_f(flat[i]);
      const OccGender p = pf > 0.5 ? OccGender::F : OccGender::M;
      result.oof[i] = {instances[i].id, instances[i].label, p, pf, f};
      gold.push_back(instances[i].label);
      pred.push_back(p);
    }
    result.per_fold[f] = {accuracy(gold, pred), macro_f1(gold, pred), test.size()};
    if (models) (*models)[f] = std::move(model);
  });
  summarize(result);
  return result;
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationRow {
  std::string block;
  CVResult cv;
  double f1 = 0, delta = 0, pct_drop = 0;  // delta = baseline F1 - F1 without the block
};

struct AblationReport {
  CVResult baseline;
  std::vector<AblationRow> rows;
};

/// One full CV per removed block, all on the same folds.
inline AblationReport ablate(const std::vector<Instance>& instances, const ClassifierSpec& spec, const FoldPlan& plan,
                             const std::vector<std::string>& blocks, unsigned jobs = 1) {
  std::set<std::string> present;
  for (const auto& in : instances)
    for (const auto& [name, _] : in.features.blocks) present.insert(name);
  for (const auto& b : blocks)
    if (!present.count(b)) throw PreconditionError("unknown block '" + b + "'");

  AblationReport report;
  report.baseline = cross_validate(instances, spec, plan, jobs);
  const double base = report.baseline.mean_macro_f1;
  for (const auto& b : blocks) {
    std::vector<Instance> reduced = instances;
    for (auto& in : reduced) in.features = in.features.without({b});
    AblationRow row;
    row.block = b;
    row.cv = cross_validate(reduced, spec, plan, jobs);
    row.f1 = row.cv.mean_macro_f1;
    row.delta = base - row.f1;
    row.pct_drop = base != 0 ? 100.0 * row.delta / base : 0.0;
    report.rows.push_back(std::move(row));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const FoldPlan& p) {
  nlohmann::json a = nlohmann::json::object();
  for (const auto& [g, f] : p.assignment) a[g] = f;
  return {{"k", p.k}, {"seed", p.seed}, {"stratified", p.stratified}, {"assignment", a}};
}

inline nlohmann::json to_json(const CVResult& r) {
  nlohmann::json folds = nlohmann::json::array();
  for (std::size_t f = 0; f < r.per_fold.size(); ++f)
    folds.push_back({{"fold", f}, {"accuracy", r.per_fold[f].accuracy}, {"macro_f1", r.per_fold[f].macro_f1},
                     {"n_test", r.per_fold[f].n_test}});
  return {{"per_fold", folds},
          {"mean_accuracy", r.mean_accuracy},
          {"sd_accuracy", r.sd_accuracy},
          {"mean_macro_f1", r.mean_macro_f1},
          {"sd_macro_f1", r.sd_macro_f1},
          {"n", r.oof.size()}};
}

inline nlohmann::json to_json(const AblationReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"block", row.block}, {"f1", row.f1}, {"delta", row.delta}, {"pct_drop", row.pct_drop},
                    {"cv", to_json(row.cv)}});
  return {{"kind", "ablation"}, {"baseline_f1", r.baseline.mean_macro_f1}, {"baseline", to_json(r.baseline)},
          {"rows", rows}};
}

inline const std::string kOofHeader = "instance_id\tgold\tpred\tprob_M\tprob_F\tfold";

inline std::string format_oof(const std::vector<OofPrediction>& oof) {
  std::string out = kOofHeader + "\n";
  for (const auto& o : oof)
    out += o.instance_id + '\t' + std::string(to_string(o.gold)) + '\t' + std::string(to_string(o.pred)) + '\t' +
           io::fixed(1.0 - o.prob_f, 6) + '\t' + io::fixed(o.prob_f, 6) + '\t' + std::to_string(o.fold) + "\n";
  return out;
}

inline std::vector<OofPrediction> parse_oof(std::string_view content) {
  auto lines = io::split_lines(content);
  if (lines.empty() || lines[0] != kOofHeader) throw LoadError("OOF header must be: " + kOofHeader, {1});
  std::vector<OofPrediction> out;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    auto c = io::split(lines[ln], '\t');
    auto g = c.size() == 6 ? parse_occ_gender(c[1]) : std::nullopt;
    auto p = c.size() == 6 ? parse_occ_gender(c[2]) : std::nullopt;
    if (!g || !p) throw LoadError("bad OOF row at line " + std::to_string(ln + 1), {ln + 1});
    try {
      out.push_back({c[0], *g, *p, std::stod(c[4]), std::stoul(c[5])});
    } catch (const std::exception&) {
      throw LoadError("bad OOF number at line " + std::to_string(ln + 1), {ln + 1});
    }
  }
  return out;
}

}  // namespace occ
