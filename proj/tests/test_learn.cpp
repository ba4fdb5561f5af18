#include "cbe/learn.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "cbe/rng.hpp"
#include "test_util.hpp"

using namespace cbe::learn;

namespace {

Dataset random_dataset(cbe::Rng& rng, std::size_t n, std::size_t d) {
  Dataset ds;
  ds.features = Matrix(n, d);
  for (auto& x : ds.features.data) x = rng.uniform(-2, 2);
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels.push_back(static_cast<int>(i % 2));
    ds.ids.push_back("r" + std::to_string(i));
  }
  return ds;
}

// Two Gaussian-ish blobs separated along the diagonal with a margin.
Dataset blobs(cbe::Rng& rng, std::size_t n) {
  Dataset ds;
  ds.features = Matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % 2);
    const double c = y ? 2.0 : -2.0;
    ds.features(i, 0) = c + rng.uniform(-1, 1);
    ds.features(i, 1) = c + rng.uniform(-1, 1);
    ds.labels.push_back(y);
    ds.ids.push_back(std::to_string(i));
  }
  return ds;
}

std::vector<double> numeric_gradient(std::vector<double> params,
                                     const std::function<double(const std::vector<double>&)>& f) {
  const double h = 1e-5;
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double orig = params[i];
    params[i] = orig + h;
    const double up = f(params);
    params[i] = orig - h;
    const double down = f(params);
    params[i] = orig;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-300});
}

double accuracy(const Prediction& p, const std::vector<int>& gold) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hit += p.labels[i] == gold[i];
  return static_cast<double>(hit) / static_cast<double>(gold.size());
}

// Smallest |pre-activation| over all hidden units and rows.
double min_hidden_margin(const MlpModel& m, const Dataset& ds) {
  double best = INFINITY;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t h = 0; h < m.hidden; ++h) {
      double z = m.b1[h];
      for (std::size_t j = 0; j < m.inputs; ++j) z += ds.features(i, j) * m.w1(j, h);
      best = std::min(best, std::abs(z));
    }
  }
  return best;
}

}  // namespace

TEST(LogReg, GradientMatchesFiniteDifferences) {
  cbe::Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto ds = random_dataset(rng, 8, 5);
    LogRegModel m;
    m.weights.resize(5);
    for (auto& w : m.weights) w = rng.uniform(-1, 1);
    m.bias = rng.uniform(-1, 1);
    m.l2 = rng.uniform(0, 0.5);
    std::vector<double> grad;
    logreg_loss(m, ds, &grad);
    std::vector<double> params = m.weights;
    params.push_back(m.bias);
    const auto numeric = numeric_gradient(params, [&](const std::vector<double>& p) {
      LogRegModel q = m;
      q.weights.assign(p.begin(), p.end() - 1);
      q.bias = p.back();
      return logreg_loss(q, ds);
    });
    EXPECT_LT(rel_error(grad, numeric), 1e-5);
  }
}

TEST(LogReg, SeparableBlobs) {
  cbe::Rng rng(2);
  const auto ds = blobs(rng, 100);
  GradientDescentOptions opts;
  opts.epochs = 500;
  opts.l2 = 0;
  std::vector<double> trace;
  const auto m = train_logreg(ds, opts, &trace);
  EXPECT_EQ(accuracy(predict(m, ds.features), ds.labels), 1.0);
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1]);
}

TEST(LogReg, LossNeverIncreasesWithLargeRate) {
  cbe::Rng rng(3);
  const auto ds = random_dataset(rng, 40, 6);
  GradientDescentOptions opts;
  opts.lr = 50.0;
  opts.epochs = 100;
  std::vector<double> trace;
  train_logreg(ds, opts, &trace);
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1]);
}

TEST(LogReg, StrongPenaltyShrinksWeights) {
  cbe::Rng rng(4);
  auto ds = blobs(rng, 30);
  ds.labels[0] = 1;  // 16 positives of 30
  GradientDescentOptions opts;
  opts.l2 = 1e4;
  opts.lr = 1e-4;  // lr * l2 below the stability bound
  opts.epochs = 200000;
  const auto m = train_logreg(ds, opts);
  for (double w : m.weights) EXPECT_LT(std::abs(w), 1e-3);
  for (double s : predict(m, ds.features).scores) EXPECT_NEAR(s, 16.0 / 30.0, 5e-3);
}

TEST(LogReg, ZeroModelPredictsHalf) {
  LogRegModel m;
  m.weights = {0, 0};
  const auto p = predict(m, Matrix(3, 2, 1.0));
  for (double s : p.scores) EXPECT_EQ(s, 0.5);
  for (int y : p.labels) EXPECT_EQ(y, 1);
  EXPECT_CBE_ERROR(predict(m, Matrix(3, 4)), DimensionMismatch);
}

TEST(LogReg, RejectsBadData) {
  cbe::Rng rng(5);
  auto ds = random_dataset(rng, 6, 2);
  auto single = ds;
  single.labels.assign(6, 1);
  EXPECT_CBE_ERROR(train_logreg(single, {}), SingleClass);
  ds.features(0, 0) = NAN;
  EXPECT_CBE_ERROR(train_logreg(ds, {}), NonFiniteFeatures);
}

TEST(Mlp, GradientMatchesFiniteDifferences) {
  cbe::Rng rng(6);
  int checked = 0;
  while (checked < 50) {
    const auto ds = random_dataset(rng, 8, 5);
    auto m = init_mlp(5, 1 + rng.below(6), rng.next());
    for (auto& b : m.b1) b = rng.uniform(-0.5, 0.5);
    m.b2 = rng.uniform(-0.5, 0.5);
    m.l2 = rng.uniform(0, 0.5);
    // central differences straddling a ReLU kink are meaningless
    if (min_hidden_margin(m, ds) < 1e-4) continue;
    ++checked;
    std::vector<double> grad;
    mlp_loss(m, ds, &grad);
    const auto numeric = numeric_gradient(mlp_parameters(m), [&](const std::vector<double>& p) {
      MlpModel q = m;
      set_mlp_parameters(q, p);
      return mlp_loss(q, ds);
    });
    EXPECT_LT(rel_error(grad, numeric), 1e-4);
  }
}

TEST(Mlp, InitRange) {
  const auto m = init_mlp(6, 4, 3);
  const double bound = std::sqrt(6.0 / 10.0);
  for (double w : m.w1.data) EXPECT_LE(std::abs(w), bound);
  const double bound2 = std::sqrt(6.0 / 5.0);
  for (double w : m.w2) EXPECT_LE(std::abs(w), bound2);
  EXPECT_EQ(init_mlp(6, 4, 3).w1, m.w1);
  EXPECT_CBE_ERROR(init_mlp(6, 0, 3), InvalidConfig);
}

TEST(Mlp, Xor) {
  Dataset ds;
  ds.features = Matrix::from_rows({{0, 0}, {0, 1}, {1, 0}, {1, 1}});
  ds.labels = {0, 1, 1, 0};
  ds.ids = {"a", "b", "c", "d"};
  GradientDescentOptions opts;
  opts.epochs = 5000;
  opts.l2 = 0;
  int solved = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::vector<double> trace;
    const auto m = train_mlp(ds, 4, opts, seed, &trace);
    solved += accuracy(predict(m, ds.features), ds.labels) == 1.0;
    for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1]);
  }
  EXPECT_GE(solved, 1);
  EXPECT_CBE_ERROR(train_mlp(ds, 0, opts, 1), InvalidConfig);
}

TEST(Mlp, ZeroWeightsPredictHalf) {
  MlpModel m = init_mlp(3, 2, 1);
  set_mlp_parameters(m, std::vector<double>(mlp_parameters(m).size(), 0.0));
  for (double s : predict(m, Matrix(4, 3, 1.5)).scores) EXPECT_EQ(s, 0.5);
  EXPECT_CBE_ERROR(predict(m, Matrix(1, 2)), DimensionMismatch);
}

TEST(Mlp, Deterministic) {
  cbe::Rng rng(7);
  const auto ds = random_dataset(rng, 30, 4);
  const auto a = train_mlp(ds, 5, {}, 11), b = train_mlp(ds, 5, {}, 11);
  EXPECT_EQ(mlp_parameters(a), mlp_parameters(b));
}

TEST(Knn, OwnPointAndOddK) {
  cbe::Rng rng(8);
  const auto ds = random_dataset(rng, 20, 3);
  const auto m = train_knn(ds, 1, Metric::Euclidean);
  EXPECT_EQ(predict(m, ds.features).labels, ds.labels);
  EXPECT_CBE_ERROR(train_knn(ds, 4, Metric::Euclidean), InvalidConfig);
  EXPECT_CBE_ERROR(train_knn(ds, 0, Metric::Euclidean), InvalidConfig);
  const auto p = predict(train_knn(ds, 5, Metric::Euclidean), ds.features);
  for (std::size_t i = 0; i < p.scores.size(); ++i) {
    EXPECT_EQ(p.labels[i], p.scores[i] >= kThreshold ? 1 : 0);
    EXPECT_NEAR(p.scores[i] * 5, std::round(p.scores[i] * 5), 1e-12);
  }
}

TEST(Knn, CosineIgnoresGlobalScale) {
  cbe::Rng rng(9);
  const auto ds = random_dataset(rng, 40, 4);
  auto scaled = ds;
  for (auto& x : scaled.features.data) x *= 3.7;
  const auto query = random_dataset(rng, 15, 4).features;
  auto scaled_query = query;
  for (auto& x : scaled_query.data) x *= 3.7;
  const auto a = predict(train_knn(ds, 5, Metric::Cosine), query);
  const auto b = predict(train_knn(scaled, 5, Metric::Cosine), scaled_query);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.scores, b.scores);
}

TEST(Models, TrainModelAndSerialization) {
  cbe::Rng rng(10);
  const auto ds = blobs(rng, 40);
  const auto test = blobs(rng, 10).features;
  for (auto f : kAllFamilies) {
    EXPECT_EQ(parse_family(family_name(f)), f);
    Hyperparams hp;
    if (f == Family::Mlp) hp["hidden"] = 3;
    if (f == Family::Knn) hp["metric"] = 1;
    const auto model = train_model(f, hp, ds, 3);
    const auto text = serialize_model(model);
    const auto back = parse_model(text);
    EXPECT_EQ(serialize_model(back), text);
    EXPECT_EQ(predict(back, test).scores, predict(model, test).scores);
  }
  EXPECT_CBE_ERROR(parse_family("svm"), InvalidConfig);
  EXPECT_CBE_ERROR(parse_model("garbage"), ParseError);
}

TEST(Dataset, SubsetAndValidate) {
  cbe::Rng rng(11);
  const auto ds = random_dataset(rng, 6, 2);
  const auto sub = ds.subset({4, 1});
  EXPECT_EQ(sub.ids, (std::vector<std::string>{"r4", "r1"}));
  EXPECT_EQ(sub.features(0, 1), ds.features(4, 1));
  auto bad = ds;
  bad.labels.pop_back();
  EXPECT_CBE_ERROR(bad.validate(), DimensionMismatch);
}
