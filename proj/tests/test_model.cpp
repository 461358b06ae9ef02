#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "occ/model.hpp"

using namespace occ;

namespace {

constexpr OccGender M = OccGender::M, F = OccGender::F;

Instance make(std::string id, std::string group, OccGender y, FeatureVector fv) {
  return {std::move(id), std::move(fv), y, std::move(group)};
}

FeatureVector one_block(const std::string& block, FeatureMap m) {
  FeatureVector fv;
  fv.blocks[block] = std::move(m);
  return fv;
}

// Lemmas with 1-3 orthographic-variant instances each, mixed label sizes.
std::vector<Instance> random_dataset(Rng& rng, std::size_t lemmas) {
  std::vector<Instance> out;
  for (std::size_t l = 0; l < lemmas; ++l) {
    const std::string g = "lemma" + std::to_string(l);
    const OccGender y = rng.uniform() < 0.35 ? F : M;
    const auto variants = 1 + rng.below(3);
    for (std::size_t v = 0; v < variants; ++v)
      out.push_back(make(g + "~" + std::to_string(v), g, y, one_block("b", {{"x", rng.normal()}})));
  }
  return out;
}

// Balanced-weight CE + L2 logistic fit on 1-D data by Newton's method with
// the exact Hessian.
std::pair<double, double> newton_logistic(const std::vector<double>& x, const std::vector<OccGender>& y, double l2) {
  std::size_t nf = 0;
  for (auto v : y) nf += v == F;
  const double n = static_cast<double>(x.size());
  const double wf = n / (2.0 * nf), wm = n / (2.0 * (x.size() - nf));
  double w = 0, b = 0;
  for (int it = 0; it < 100; ++it) {
    double gw = l2 * w, gb = 0, hww = l2, hwb = 0, hbb = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double p = 1.0 / (1.0 + std::exp(-(w * x[i] + b)));
      const double t = y[i] == F ? 1.0 : 0.0, c = (y[i] == F ? wf : wm) / n;
      gw += c * (p - t) * x[i];
      gb += c * (p - t);
      const double h = c * p * (1 - p);
      hww += h * x[i] * x[i], hwb += h * x[i], hbb += h;
    }
    const double det = hww * hbb - hwb * hwb;
    w -= (hbb * gw - hwb * gb) / det;
    b -= (hww * gb - hwb * gw) / det;
  }
  return {w, b};
}

}  // namespace

TEST(Folds, OneLemmaPerFold) {
  std::vector<Instance> data;
  for (int l = 0; l < 10; ++l) data.push_back(make("i" + std::to_string(l), "g" + std::to_string(l), M, {}));
  for (std::uint64_t seed : {1u, 13u, 99u}) {
    auto plan = plan_folds(data, 10, seed);
    std::set<std::size_t> folds;
    for (const auto& [g, f] : plan.assignment) folds.insert(f);
    EXPECT_EQ(folds.size(), 10u);
  }
}

TEST(Folds, VariantsStayTogetherAndSeedIsDeterministic) {
  Rng rng(1, "folds-test");
  auto data = random_dataset(rng, 40);
  auto a = plan_folds(data, 5, 13), b = plan_folds(data, 5, 13);
  EXPECT_EQ(a, b);
  EXPECT_FALSE(plan_folds(data, 5, 14) == a);
  EXPECT_THROW(plan_folds(data, 41, 13), PreconditionError);
  EXPECT_THROW(plan_folds(data, 1, 13), PreconditionError);
}

TEST(Folds, StratifiedBalancesLabels) {
  Rng rng(2, "strat-test");
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Instance> data;
    const auto lemmas = 30 + rng.below(60);
    for (std::size_t l = 0; l < lemmas; ++l)
      data.push_back(make("i" + std::to_string(l), "g" + std::to_string(l), rng.coin() ? F : M, {}));
    const std::size_t k = 3;
    auto plan = plan_stratified_folds(data, k, 13);
    std::vector<std::array<std::size_t, 2>> counts(k, {0, 0});
    for (const auto& in : data) ++counts[plan.fold_of(in.group)][in.label == F];
    for (std::size_t c = 0; c < 2; ++c) {
      std::size_t lo = SIZE_MAX, hi = 0;
      for (const auto& f : counts) lo = std::min(lo, f[c]), hi = std::max(hi, f[c]);
      EXPECT_LE(hi - lo, 1u);
    }
  }
}

TEST(Folds, StratifiedLevelsMajorityLabelsOverLemmas) {
  Rng rng(4, "strat-variants");
  for (int trial = 0; trial < 30; ++trial) {
    auto data = random_dataset(rng, 20 + rng.below(50));
    const std::size_t k = 2 + rng.below(4);
    auto plan = plan_stratified_folds(data, k, 13);
    EXPECT_TRUE(plan.stratified);
    std::map<std::string, OccGender> label;
    for (const auto& in : data) label[in.group] = in.label;
    std::vector<std::array<std::size_t, 2>> counts(k, {0, 0});
    for (const auto& [g, y] : label) ++counts[plan.fold_of(g)][y == F];
    std::size_t lo = SIZE_MAX, hi = 0;
    for (std::size_t c = 0; c < 2; ++c) {
      std::size_t clo = SIZE_MAX, chi = 0;
      for (const auto& f : counts) clo = std::min(clo, f[c]), chi = std::max(chi, f[c]);
      EXPECT_LE(chi - clo, 1u);
    }
    for (const auto& f : counts) lo = std::min(lo, f[0] + f[1]), hi = std::max(hi, f[0] + f[1]);
    EXPECT_LE(hi - lo, 1u);
  }
}

TEST(ClassWeights, InverseFrequency) {
  std::vector<OccGender> y{M, M, M, M, F, F};
  auto w = balanced_class_weights(y);
  EXPECT_DOUBLE_EQ(w.m, 0.75);
  EXPECT_DOUBLE_EQ(w.f, 1.5);
  EXPECT_THROW(balanced_class_weights(std::vector<OccGender>{M, M}), DataError);
}

TEST(Loss, FocalGammaZeroIsCrossEntropy) {
  ClassifierSpec ce, focal;
  focal.loss = LossKind::FOCAL;
  focal.focal_gamma = 0.0;
  for (double u : {-30.0, -4.0, -0.5, 0.0, 0.3, 2.0, 25.0}) {
    EXPECT_NEAR(loss::evaluate(ce, u).loss, loss::evaluate(focal, u).loss, 1e-9) << u;
    EXPECT_NEAR(loss::evaluate(ce, u).dloss_du, loss::evaluate(focal, u).dloss_du, 1e-9) << u;
  }
}

TEST(Loss, GradientsMatchFiniteDifferences) {
  ClassifierSpec focal, smooth;
  focal.loss = LossKind::FOCAL;
  focal.focal_gamma = 2.0;
  smooth.label_smoothing = 0.1;
  for (const auto& spec : {focal, smooth})
    for (double u : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
      const double h = 1e-6;
      const double fd = (loss::evaluate(spec, u + h).loss - loss::evaluate(spec, u - h).loss) / (2 * h);
      EXPECT_NEAR(loss::evaluate(spec, u).dloss_du, fd, 1e-6);
    }
}

TEST(Loss, SmoothedCrossEntropyValue) {
  ClassifierSpec s;
  s.label_smoothing = 0.2;
  const double p = 1.0 / (1.0 + std::exp(-1.5));
  EXPECT_NEAR(loss::evaluate(s, 1.5).loss, -(0.9 * std::log(p) + 0.1 * std::log(1 - p)), 1e-12);
}

TEST(Train, FocalGammaZeroReproducesTrajectory) {
  Rng rng(4, "traj");
  auto data = random_dataset(rng, 60);
  for (auto kind : {ModelKind::LOGREG, ModelKind::FFN}) {
    ClassifierSpec ce;
    ce.kind = kind;
    ce.max_epochs = 5;
    ClassifierSpec focal = ce;
    focal.loss = LossKind::FOCAL;
    focal.focal_gamma = 0.0;
    auto a = train_model(ce, data).classifier.trace().objective;
    auto b = train_model(focal, data).classifier.trace().objective;
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-9);
  }
}

TEST(Train, SeparableToy) {
  std::vector<Instance> data;
  for (int i = 0; i < 20; ++i) {
    const double a = (i % 5) * 0.2 + 1.0, b = (i % 3) * 0.3;
    data.push_back(make("p" + std::to_string(i), "p" + std::to_string(i), F, one_block("x", {{"a", a}, {"b", b}})));
    data.push_back(make("n" + std::to_string(i), "n" + std::to_string(i), M, one_block("x", {{"a", -a}, {"b", b}})));
  }
  for (auto kind : {ModelKind::LOGREG, ModelKind::FFN}) {
    ClassifierSpec spec;
    spec.kind = kind;
    spec.l2 = 1e-4;
    auto model = train_model(spec, data);
    std::size_t hit = 0;
    for (const auto& in : data) hit += (model.prob_f(in.features.flatten()) > 0.5 ? F : M) == in.label;
    EXPECT_EQ(hit, data.size()) << to_string(kind);
  }
}

TEST(Train, LogregMatchesNewtonOracle) {
  const std::vector<double> x{-2.0, -1.0, -0.5, 0.3, 0.6, 1.5, 2.0, -0.2, 0.8};
  const std::vector<OccGender> y{M, M, F, M, F, F, F, M, M};
  std::vector<Instance> data;
  for (std::size_t i = 0; i < x.size(); ++i)
    data.push_back(make("i" + std::to_string(i), "g", y[i], one_block("b", {{"x", x[i]}})));
  ClassifierSpec spec;
  spec.l2 = 0.05;
  spec.tolerance = 1e-10;
  auto model = train_model(spec, data);
  // The model sees x divided by its training max-abs (2.0).
  double scale = 2.0;
  std::vector<double> xs;
  for (double v : x) xs.push_back(v / scale);
  auto [w, b] = newton_logistic(xs, y, spec.l2);
  for (double probe : {-1.7, -0.1, 0.45, 1.9})
    EXPECT_NEAR(model.classifier.logit(model.space.transform({{"b/x", probe}})), w * probe / scale + b, 1e-6);
}

// Two lemmas, k = 2: each fold trains on one lemma's 1-D data and predicts
// the other's. Predictions and metrics follow from the Newton fit.
TEST(CrossValidate, TwoLemmaHandCheck) {
  const std::vector<double> xa{-1.5, -0.5, 0.4, 1.2, 2.0}, xb{-1.0, -0.2, 0.1, 0.9};
  const std::vector<OccGender> ya{M, M, F, F, F}, yb{M, F, M, F};
  std::vector<Instance> data;
  for (std::size_t i = 0; i < xa.size(); ++i) data.push_back(make("a" + std::to_string(i), "A", ya[i], one_block("b", {{"x", xa[i]}})));
  for (std::size_t i = 0; i < xb.size(); ++i) data.push_back(make("b" + std::to_string(i), "B", yb[i], one_block("b", {{"x", xb[i]}})));
  FoldPlan plan{2, 13, false, {{"A", 0}, {"B", 1}}};
  ClassifierSpec spec;
  spec.tolerance = 1e-10;
  auto cv = cross_validate(data, spec, plan);

  auto fold_metrics = [&](const std::vector<double>& xtr, const std::vector<OccGender>& ytr,
                          const std::vector<double>& xte, const std::vector<OccGender>& yte) {
    double scale = 0;
    for (double v : xtr) scale = std::max(scale, std::abs(v));
    std::vector<double> xs;
    for (double v : xtr) xs.push_back(v / scale);
    auto [w, b] = newton_logistic(xs, ytr, spec.l2);
    std::vector<OccGender> pred;
    for (double v : xte) pred.push_back(w * v / scale + b > 0 ? F : M);
    return std::pair{accuracy(yte, pred), macro_f1(yte, pred)};
  };
  auto f0 = fold_metrics(xb, yb, xa, ya);  // fold 0 holds out A
  auto f1 = fold_metrics(xa, ya, xb, yb);
  EXPECT_DOUBLE_EQ(cv.per_fold[0].accuracy, f0.first);
  EXPECT_DOUBLE_EQ(cv.per_fold[0].macro_f1, f0.second);
  EXPECT_DOUBLE_EQ(cv.per_fold[1].accuracy, f1.first);
  EXPECT_DOUBLE_EQ(cv.per_fold[1].macro_f1, f1.second);
  EXPECT_DOUBLE_EQ(cv.mean_accuracy, (f0.first + f1.first) / 2);
}

TEST(CrossValidate, LeakedLabelIsPerfect) {
  Rng rng(6, "leak");
  auto data = random_dataset(rng, 60);
  for (auto& in : data) in.features.blocks["oracle"] = {{"is_f", in.label == F ? 1.0 : 0.0}, {"is_m", in.label == M ? 1.0 : 0.0}};
  auto cv = cross_validate(data, {}, plan_folds(data, 5, 13));
  EXPECT_DOUBLE_EQ(cv.mean_accuracy, 1.0);
  auto abl = ablate(data, {}, plan_folds(data, 5, 13), {"oracle"});
  EXPECT_DOUBLE_EQ(abl.baseline.mean_macro_f1, 1.0);
  EXPECT_LT(abl.rows[0].cv.mean_accuracy, 0.75);
  EXPECT_GT(abl.rows[0].delta, 0.2);
}

TEST(CrossValidate, RandomFeaturesNearChance) {
  double total = 0;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(seed, "chance");
    std::vector<Instance> data;
    for (int l = 0; l < 80; ++l) {
      FeatureMap m;
      for (int j = 0; j < 5; ++j) m["r" + std::to_string(j)] = rng.normal();
      data.push_back(make("i" + std::to_string(l), "g" + std::to_string(l), l % 2 ? F : M, one_block("noise", m)));
    }
    total += cross_validate(data, {}, plan_folds(data, 5, seed)).mean_macro_f1;
  }
  EXPECT_NEAR(total / 20, 0.5, 0.08);
}

TEST(CrossValidate, GroupsNeverCrossAndThreadsAgree) {
  Rng rng(8, "groups");
  auto data = random_dataset(rng, 50);
  auto plan = plan_folds(data, 5, 13);
  auto a = cross_validate(data, {}, plan, 1);
  auto b = cross_validate(data, {}, plan, 4);
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(a.oof[i].fold, plan.fold_of(data[i].group));
    EXPECT_EQ(a.oof[i].prob_f, b.oof[i].prob_f);
  }
  plan.assignment.erase(plan.assignment.begin());
  EXPECT_THROW(cross_validate(data, {}, plan), DataError);
}

TEST(Ablate, ZeroBlockRemovalIsNoOp) {
  Rng rng(9, "dummy");
  auto data = random_dataset(rng, 40);
  for (auto& in : data) in.features.blocks["dummy"] = {{"z", 0.0}};
  for (auto kind : {ModelKind::LOGREG, ModelKind::FFN}) {
    ClassifierSpec spec;
    spec.kind = kind;
    spec.max_epochs = 10;
    auto r = ablate(data, spec, plan_folds(data, 4, 13), {"dummy"});
    EXPECT_EQ(r.rows[0].delta, 0.0) << to_string(kind);
  }
  EXPECT_THROW(ablate(data, {}, plan_folds(data, 4, 13), {"nope"}), PreconditionError);
}

TEST(Oof, TsvRoundTrip) {
  std::vector<OofPrediction> v{{"a", M, F, 0.75, 0}, {"b", F, F, 0.5, 2}};
  auto back = parse_oof(format_oof(v));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].pred, F);
  EXPECT_DOUBLE_EQ(back[0].prob_f, 0.75);
  EXPECT_EQ(back[1].fold, 2u);
  EXPECT_THROW(parse_oof("x\n"), LoadError);
}
