#pragma once

// Classification metrics, resampling tests, retrieval metrics and the
// k-means / silhouette clustering probe.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "occ/common.hpp"
#include "occ/parallel.hpp"
#include "occ/rng.hpp"

namespace occ {

// ---------------------------------------------------------------------------
// Classification metrics over {M, F}

inline double accuracy(std::span<const OccGender> gold, std::span<const OccGender> pred) {
  if (gold.size() != pred.size()) throw PreconditionError("gold/pred length mismatch");
  if (gold.empty()) throw PreconditionError("empty label sequence");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hit += gold[i] == pred[i];
  return static_cast<double>(hit) / static_cast<double>(gold.size());
}

/// Unweighted mean of per-class F1 over {M, F}; F1 = 2TP / (2TP + FP + FN).
/// A class absent from both gold and pred scores 0.
inline double macro_f1(std::span<const OccGender> gold, std::span<const OccGender> pred,
                       Diagnostics* diag = nullptr) {
  if (gold.size() != pred.size()) throw PreconditionError("gold/pred length mismatch");
  if (gold.empty()) throw PreconditionError("empty label sequence");
  double sum = 0.0;
  for (OccGender c : {OccGender::M, OccGender::F}) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      const bool g = gold[i] == c, p = pred[i] == c;
      tp += g && p;
      fp += !g && p;
      fn += g && !p;
    }
    const std::size_t denom = 2 * tp + fp + fn;
    if (denom == 0) {
      note(diag, "macro_f1: class " + std::string(to_string(c)) + " absent from gold and pred");
      continue;
    }
    sum += 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  }
  return sum / 2.0;
}

// ---------------------------------------------------------------------------
// Quantiles and bootstrap CIs

/// Linear-interpolation quantile (type 7) of an unsorted sample.
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw PreconditionError("quantile of empty sample");
  std::sort(v.begin(), v.end());
  const double h = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double mean(std::span<const double> v) {
  if (v.empty()) throw PreconditionError("mean of empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1); 0 for a single value.
inline double sample_sd(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

struct MeanCI {
  double mean = 0, ci_low = 0, ci_high = 0;
  std::size_t n = 0;
};

/// Percentile bootstrap CI of the mean.
inline MeanCI bootstrap_mean_ci(std::span<const double> values, std::size_t resamples, std::uint64_t seed,
                                double level = 0.95, unsigned jobs = 1) {
  if (values.empty()) throw PreconditionError("bootstrap of empty sample");
  if (resamples == 0) throw PreconditionError("resamples must be >= 1");
  MeanCI r;
  r.n = values.size();
  r.mean = mean(values);
  std::vector<double> stats(resamples);
  parallel_for(resamples, jobs, [&](std::size_t b) {
    Rng rng(seed, "bootstrap-mean", b);
    double s = 0;
    for (std::size_t i = 0; i < values.size(); ++i) s += values[rng.below(values.size())];
    stats[b] = s / static_cast<double>(values.size());
  });
  const double a = (1.0 - level) / 2.0;
  r.ci_low = quantile(stats, a);
  r.ci_high = quantile(stats, 1.0 - a);
  return r;
}

// ---------------------------------------------------------------------------
// Paired bootstrap over out-of-fold predictions

struct OofPrediction {
  std::string instance_id;
  OccGender gold = OccGender::M;
  OccGender pred = OccGender::M;
  double prob_f = 0.5;  // P(F); P(M) = 1 - P(F)
  std::size_t fold = 0;
};

using LabelMetric = std::function<double(std::span<const OccGender>, std::span<const OccGender>)>;

struct PairedBootstrapResult {
  double metric_a = 0, metric_b = 0, delta = 0;
  double ci_low = 0, ci_high = 0, p_value = 1;
  std::size_t resamples = 0, n = 0;
  std::uint64_t seed = 0;
};

/// Resamples instances with replacement and recomputes metric(a) - metric(b)
/// on each replicate. CI: percentile. p: add-one fraction of replicates whose
/// delta is on the other side of 0 from the observed delta (1 when the
/// observed delta is 0). Inputs are put in canonical instance-id order first,
/// so the result does not depend on the order they arrive in.
inline PairedBootstrapResult paired_bootstrap(std::vector<OofPrediction> a, std::vector<OofPrediction> b,
                                              const LabelMetric& metric, std::size_t resamples,
                                              std::uint64_t seed, unsigned jobs = 1) {
  if (a.size() != b.size() || a.empty()) throw DataError("paired bootstrap: misaligned instance sets");
  auto by_id = [](const OofPrediction& x, const OofPrediction& y) { return x.instance_id < y.instance_id; };
  std::sort(a.begin(), a.end(), by_id);
  std::sort(b.begin(), b.end(), by_id);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].instance_id != b[i].instance_id || a[i].gold != b[i].gold)
      throw DataError("paired bootstrap: misaligned instance '" + a[i].instance_id + "'");
    if (i && a[i].instance_id == a[i - 1].instance_id)
      throw DataError("paired bootstrap: duplicate instance '" + a[i].instance_id + "'");
  }
  const std::size_t n = a.size();
  std::vector<OccGender> gold(n), pa(n), pb(n);
  for (std::size_t i = 0; i < n; ++i) gold[i] = a[i].gold, pa[i] = a[i].pred, pb[i] = b[i].pred;

  PairedBootstrapResult r;
  r.n = n;
  r.resamples = resamples;
  r.seed = seed;
  r.metric_a = metric(gold, pa);
  r.metric_b = metric(gold, pb);
  r.delta = r.metric_a - r.metric_b;

  std::vector<double> deltas(resamples);
  parallel_for(resamples, jobs, [&](std::size_t rep) {
    Rng rng(seed, "paired-bootstrap", rep);
    std::vector<OccGender> g(n), x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(rng.below(n));
      g[i] = gold[k], x[i] = pa[k], y[i] = pb[k];
    }
    deltas[rep] = metric(g, x) - metric(g, y);
  });
  r.ci_low = quantile(deltas, 0.025);
  r.ci_high = quantile(deltas, 0.975);
  if (r.delta == 0.0) {
    r.p_value = 1.0;
  } else {
    std::size_t crossing = 0;
    for (double d : deltas) crossing += r.delta > 0 ? d <= 0 : d >= 0;
    r.p_value = std::min(1.0, static_cast<double>(crossing + 1) / static_cast<double>(resamples + 1));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Sign-flip permutation test

struct SignFlipResult {
  double observed_mean = 0;
  double p_value = 1;
  std::size_t permutations = 0, n = 0;
  std::uint64_t seed = 0;
};

/// Two-sided: p = (1 + #{|mean of flipped copy| >= |observed|}) / (P + 1).
inline SignFlipResult sign_flip_test(std::span<const double> deltas, std::size_t permutations, std::uint64_t seed,
                                     unsigned jobs = 1) {
  if (deltas.empty()) throw PreconditionError("sign-flip test on empty deltas");
  if (permutations == 0) throw PreconditionError("permutations must be >= 1");
  SignFlipResult r;
  r.n = deltas.size();
  r.permutations = permutations;
  r.seed = seed;
  r.observed_mean = mean(deltas);
  double scale = 0;
  for (double d : deltas) scale = std::max(scale, std::abs(d));
  // Sums of the same magnitudes in a different sign pattern can differ from
  // the observed sum by rounding alone; treat those as ties.
  const double threshold = std::abs(r.observed_mean) - 1e-12 * scale;

  std::vector<unsigned char> extreme(permutations);
  parallel_for(permutations, jobs, [&](std::size_t p) {
    Rng rng(seed, "sign-flip", p);
    double s = 0;
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < deltas.size(); ++i) {
      if (i % 64 == 0) bits = rng.next();
      s += (bits & 1) ? -deltas[i] : deltas[i];
      bits >>= 1;
    }
    extreme[p] = std::abs(s / static_cast<double>(deltas.size())) >= threshold;
  });
  const auto count = static_cast<std::size_t>(std::count(extreme.begin(), extreme.end(), 1));
  r.p_value = static_cast<double>(count + 1) / static_cast<double>(permutations + 1);
  return r;
}

// ---------------------------------------------------------------------------
// Retrieval

struct RetrievalMetrics {
  double recall_at_k = 0, mrr = 0, ndcg_at_k = 0;
};

/// Binary-gain retrieval metrics. Repeated candidates count once, at their
/// first rank. MRR looks at the whole list, the others at the top k.
inline RetrievalMetrics retrieval_metrics(const std::vector<std::string>& ranked,
                                          const std::set<std::string>& relevant, std::size_t k) {
  if (k == 0) throw PreconditionError("k must be >= 1");
  if (relevant.empty()) throw PreconditionError("relevant set is empty");
  RetrievalMetrics m;
  std::set<std::string> seen;
  std::size_t rank = 0, hits = 0;
  double dcg = 0;
  for (const auto& c : ranked) {
    if (!seen.insert(c).second) continue;
    ++rank;
    if (!relevant.count(c)) continue;
    if (m.mrr == 0) m.mrr = 1.0 / static_cast<double>(rank);
    if (rank <= k) {
      ++hits;
      dcg += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
    }
  }
  double ideal = 0;
  for (std::size_t i = 1; i <= std::min(k, relevant.size()); ++i) ideal += 1.0 / std::log2(static_cast<double>(i) + 1.0);
  m.recall_at_k = static_cast<double>(hits) / static_cast<double>(relevant.size());
  m.ndcg_at_k = dcg / ideal;
  return m;
}

// ---------------------------------------------------------------------------
// k-means + silhouette

using Point = std::vector<double>;

inline double sq_dist(const Point& a, const Point& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

struct KMeansResult {
  std::vector<std::size_t> assignments;
  std::vector<Point> centroids;
  std::size_t iterations = 0;
};

namespace detail {

// Farthest-point seeding: a random first center, then repeatedly the point
// farthest from all chosen centers (lowest index on ties).
inline std::vector<Point> farthest_point_init(const std::vector<Point>& pts, std::size_t k, Rng& rng) {
  std::vector<Point> centers{pts[rng.below(pts.size())]};
  std::vector<double> d(pts.size(), std::numeric_limits<double>::infinity());
  while (centers.size() < k) {
    std::size_t best = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      d[i] = std::min(d[i], sq_dist(pts[i], centers.back()));
      if (d[i] > d[best]) best = i;
    }
    centers.push_back(pts[best]);
  }
  return centers;
}

inline std::optional<KMeansResult> lloyd(const std::vector<Point>& pts, std::vector<Point> centers,
                                         std::size_t max_iter) {
  const std::size_t k = centers.size(), dim = pts.front().size();
  KMeansResult r;
  r.assignments.assign(pts.size(), SIZE_MAX);
  for (std::size_t it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      std::size_t best = 0;
      double bd = sq_dist(pts[i], centers[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double dd = sq_dist(pts[i], centers[c]);
        if (dd < bd) bd = dd, best = c;
      }
      if (r.assignments[i] != best) r.assignments[i] = best, changed = true;
    }
    r.iterations = it + 1;
    std::vector<Point> sums(k, Point(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      ++counts[r.assignments[i]];
      for (std::size_t j = 0; j < dim; ++j) sums[r.assignments[i]][j] += pts[i][j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) return std::nullopt;
      for (std::size_t j = 0; j < dim; ++j) centers[c][j] = sums[c][j] / static_cast<double>(counts[c]);
    }
    if (!changed) break;
  }
  r.centroids = std::move(centers);
  return r;
}

}  // namespace detail

/// Seeded Lloyd k-means. An empty cluster triggers one re-seed from a
/// second stream; a second failure is an error.
inline KMeansResult kmeans(const std::vector<Point>& points, std::size_t k, std::uint64_t seed,
                           std::size_t max_iter = 300) {
  if (k < 2 || k >= points.size()) throw PreconditionError("k-means needs 2 <= k < number of points");
  const std::size_t dim = points.front().size();
  for (const auto& p : points)
    if (p.size() != dim) throw PreconditionError("points have mixed dimensions");
  for (std::uint64_t attempt = 0; attempt < 2; ++attempt) {
    Rng rng(seed, "kmeans-init", attempt);
    if (auto r = detail::lloyd(points, detail::farthest_point_init(points, k, rng), max_iter)) return *r;
  }
  throw DataError("k-means: empty cluster after re-seeding (too few distinct points?)");
}

/// Mean silhouette. Points in singleton clusters score 0. Errors when every
/// point has a zero denominator (no spread at all).
inline double silhouette(const std::vector<Point>& points, const std::vector<std::size_t>& labels, std::size_t k) {
  const std::size_t n = points.size();
  std::vector<std::size_t> sizes(k, 0);
  for (auto l : labels) ++sizes[l];
  double total = 0;
  bool any_defined = false;
  std::vector<double> sum_to(k);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(sum_to.begin(), sum_to.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sum_to[labels[j]] += std::sqrt(sq_dist(points[i], points[j]));
    const std::size_t own = labels[i];
    if (sizes[own] <= 1) {
      any_defined = true;
      continue;
    }
    const double a = sum_to[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c)
      if (c != own && sizes[c] > 0) b = std::min(b, sum_to[c] / static_cast<double>(sizes[c]));
    const double denom = std::max(a, b);
    if (denom == 0 || !std::isfinite(b)) continue;
    any_defined = true;
    total += (b - a) / denom;
  }
  if (!any_defined) throw DataError("silhouette undefined: all distances are zero");
  return total / static_cast<double>(n);
}

struct SilhouetteProbe {
  std::vector<std::size_t> assignments;
  double silhouette = 0;
};

inline SilhouetteProbe silhouette_probe(const std::vector<Point>& points, std::size_t k, std::uint64_t seed) {
  if (points.size() <= k) throw PreconditionError("silhouette probe needs more points than clusters");
  auto km = kmeans(points, k, seed);
  return {km.assignments, silhouette(points, km.assignments, k)};
}

// ---------------------------------------------------------------------------
// Report JSON: {test, observed, p_value, ci:[lo,hi], n, resamples|permutations, seed}

inline nlohmann::json to_json(const PairedBootstrapResult& r) {
  return {{"test", "paired_bootstrap"}, {"observed", r.delta},  {"metric_a", r.metric_a},
          {"metric_b", r.metric_b},     {"p_value", r.p_value}, {"ci", {r.ci_low, r.ci_high}},
          {"n", r.n},                   {"resamples", r.resamples}, {"seed", r.seed}};
}

inline nlohmann::json to_json(const SignFlipResult& r) {
  return {{"test", "sign_flip"}, {"observed", r.observed_mean}, {"p_value", r.p_value},
          {"n", r.n},            {"permutations", r.permutations}, {"seed", r.seed}};
}

}  // namespace occ
