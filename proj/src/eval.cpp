#include "cbe/eval.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <thread>
#include <unordered_map>

#include "cbe/error.hpp"
#include "cbe/fusion.hpp"
#include "cbe/rng.hpp"

namespace cbe::eval {

ConfusionMatrix confusion(const std::vector<int>& gold, const std::vector<int>& predicted) {
  if (gold.size() != predicted.size()) {
    throw Error(ErrorCode::LengthMismatch, "gold and predicted labels differ in length");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] == 1) {
      (predicted[i] == 1 ? cm.tp : cm.fn)++;
    } else {
      (predicted[i] == 1 ? cm.fp : cm.tn)++;
    }
  }
  return cm;
}

MetricsReport metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw Error(ErrorCode::EmptyMatrix, "confusion matrix is empty");
  MetricsReport r;
  const auto tp = static_cast<double>(cm.tp);
  if (cm.tp + cm.fp > 0) r.precision = tp / static_cast<double>(cm.tp + cm.fp);
  if (cm.tp + cm.fn > 0) r.recall = tp / static_cast<double>(cm.tp + cm.fn);
  if (r.precision && r.recall && *r.precision + *r.recall > 0) {
    r.f1 = 2.0 * *r.precision * *r.recall / (*r.precision + *r.recall);
  }
  r.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  return r;
}

Split stratified_split(const std::vector<int>& labels, double train_ratio, std::uint64_t seed) {
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "train ratio must lie strictly between 0 and 1");
  }
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty()) {
    throw Error(ErrorCode::SingleClass, "stratified split needs both classes");
  }
  Rng rng(derive_seed(seed, "stratified-split"));
  rng.shuffle(pos);
  rng.shuffle(neg);
  auto rounded = [&](std::size_t n) {
    return static_cast<std::ptrdiff_t>(std::llround(static_cast<double>(n) * train_ratio));
  };
  std::ptrdiff_t n_pos = rounded(pos.size());
  std::ptrdiff_t n_neg = rounded(neg.size());
  const std::ptrdiff_t diff = rounded(labels.size()) - (n_pos + n_neg);
  (pos.size() > neg.size() ? n_pos : n_neg) += diff;
  n_pos = std::clamp<std::ptrdiff_t>(n_pos, 0, static_cast<std::ptrdiff_t>(pos.size()));
  n_neg = std::clamp<std::ptrdiff_t>(n_neg, 0, static_cast<std::ptrdiff_t>(neg.size()));

  Split s;
  s.train.insert(s.train.end(), pos.begin(), pos.begin() + n_pos);
  s.train.insert(s.train.end(), neg.begin(), neg.begin() + n_neg);
  s.test.insert(s.test.end(), pos.begin() + n_pos, pos.end());
  s.test.insert(s.test.end(), neg.begin() + n_neg, neg.end());
  if (s.test.empty() || s.train.empty()) {
    throw Error(ErrorCode::InvalidConfig, "split leaves an empty partition");
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

IdSplit stratified_split(const corpus::LabeledCorpus& corpus, corpus::Task task,
                         double train_ratio, std::uint64_t seed) {
  const auto split = stratified_split(corpus.labels_for(task), train_ratio, seed);
  IdSplit out;
  for (auto i : split.train) out.train.push_back(corpus.posts()[i].id);
  for (auto i : split.test) out.test.push_back(corpus.posts()[i].id);
  return out;
}

std::vector<std::size_t> FoldAssignment::fold(std::size_t f) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == f) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldAssignment::complement(std::size_t f) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] != f) out.push_back(i);
  }
  return out;
}

FoldAssignment stratified_kfold(const std::vector<int>& labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::InvalidConfig, "k-fold needs k >= 2");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(i);
  if (std::min(pos.size(), neg.size()) < k) {
    throw Error(ErrorCode::TooFewMinority, "minority class has " +
                                               std::to_string(std::min(pos.size(), neg.size())) +
                                               " rows, fewer than k=" + std::to_string(k));
  }
  Rng rng(derive_seed(seed, "stratified-kfold"));
  rng.shuffle(pos);
  rng.shuffle(neg);
  FoldAssignment fa;
  fa.k = k;
  fa.fold_of.assign(labels.size(), 0);
  std::size_t slot = 0;
  for (auto i : pos) fa.fold_of[i] = slot++ % k;
  for (auto i : neg) fa.fold_of[i] = slot++ % k;
  return fa;
}

std::vector<double> average_ranks(const std::vector<double>& xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && xs[order[j]] == xs[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = avg;
    i = j;
  }
  return ranks;
}

SpearmanResult spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw Error(ErrorCode::LengthMismatch, "spearman inputs differ in length");
  if (xs.size() < 3) throw Error(ErrorCode::TooShort, "spearman needs at least 3 pairs");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  const double n = static_cast<double>(xs.size());
  const double mean = (n + 1.0) / 2.0;  // ranks always average to (n+1)/2
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mean;
    const double dy = ry[i] - mean;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::ZeroVariance, "spearman input has zero variance");
  SpearmanResult r;
  r.rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double dof = n - 2.0;
  if (std::fabs(r.rho) >= 1.0 - 1e-15) {
    r.p = kPValueFloor;
    return r;
  }
  const double t = r.rho * std::sqrt(dof / ((1.0 - r.rho) * (1.0 + r.rho)));
  boost::math::students_t_distribution<double> dist(dof);
  r.p = std::max(kPValueFloor, 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t))));
  r.p = std::min(r.p, 1.0);
  return r;
}

SelectionMetric parse_selection_metric(std::string_view s) {
  if (s == "f1") return SelectionMetric::F1;
  if (s == "accuracy") return SelectionMetric::Accuracy;
  throw Error(ErrorCode::InvalidConfig, "unknown selection metric '" + std::string(s) + "'");
}

double score(const MetricsReport& m, SelectionMetric metric) {
  return metric == SelectionMetric::F1 ? m.f1.value_or(0.0) : m.accuracy;
}

std::vector<learn::Hyperparams> enumerate_grid(const Grid& grid) {
  std::vector<learn::Hyperparams> out{{}};
  for (const auto& axis : grid) {
    if (axis.values.empty()) {
      throw Error(ErrorCode::EmptyGrid, "grid axis '" + axis.name + "' has no values");
    }
    std::vector<learn::Hyperparams> next;
    for (const auto& partial : out) {
      for (double v : axis.values) {
        auto c = partial;
        c[axis.name] = v;
        next.push_back(std::move(c));
      }
    }
    out = std::move(next);
  }
  return out;
}

FoldProvider slice_provider(const learn::Dataset& ds, const FoldAssignment& folds) {
  return [&ds, &folds](std::size_t f) {
    FoldData d{ds.subset(folds.complement(f)), ds.subset(folds.fold(f))};
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < d.train.size(); ++i) {
      const auto r = d.train.features.row(i);
      rows.emplace_back(r.begin(), r.end());
    }
    const auto z = fusion::Standardizer::fit(rows);
    for (auto* part : {&d.train, &d.test}) {
      for (std::size_t i = 0; i < part->size(); ++i) {
        const auto r = part->features.row(i);
        const auto scaled = z.apply(std::vector<double>(r.begin(), r.end()));
        std::copy(scaled.begin(), scaled.end(), r.begin());
      }
    }
    return d;
  };
}

double FoldScores::mean(SelectionMetric metric) const {
  double s = 0.0;
  for (const auto& m : per_fold) s += score(m, metric);
  return per_fold.empty() ? 0.0 : s / static_cast<double>(per_fold.size());
}

namespace {

template <typename Fn>
void run_cells(std::size_t cells, std::size_t threads, Fn&& fn) {
  if (threads <= 1 || cells <= 1) {
    for (std::size_t c = 0; c < cells; ++c) fn(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (std::size_t t = 0; t < std::min(threads, cells); ++t) {
    pool.emplace_back([&] {
      for (std::size_t c = next++; c < cells; c = next++) {
        try {
          fn(c);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

FoldScores cross_validate(learn::Family family, const learn::Hyperparams& params,
                          const FoldProvider& provider, std::size_t k, std::uint64_t seed,
                          std::size_t threads) {
  FoldScores out;
  out.per_fold.resize(k);
  out.predictions.resize(k);
  run_cells(k, threads, [&](std::size_t f) {
    const auto data = provider(f);
    const auto model =
        learn::train_model(family, params, data.train, derive_seed(seed, "fold-" + std::to_string(f)));
    out.predictions[f] = learn::predict(model, data.test.features);
    out.per_fold[f] = metrics(confusion(data.test.labels, out.predictions[f].labels));
  });
  return out;
}

GridSearchResult grid_search(learn::Family family, const Grid& grid, const FoldProvider& provider,
                             std::size_t k, SelectionMetric metric, std::uint64_t seed,
                             std::size_t threads) {
  if (grid.empty()) throw Error(ErrorCode::EmptyGrid, "hyperparameter grid is empty");
  GridSearchResult r;
  r.configs = enumerate_grid(grid);
  r.fold_scores.assign(r.configs.size(), std::vector<double>(k, 0.0));
  // Folds are materialized once and shared by every configuration.
  std::vector<FoldData> folds(k);
  run_cells(k, threads, [&](std::size_t f) { folds[f] = provider(f); });
  run_cells(r.configs.size() * k, threads, [&](std::size_t cell) {
    const std::size_t c = cell / k;
    const std::size_t f = cell % k;
    const auto model = learn::train_model(family, r.configs[c], folds[f].train,
                                          derive_seed(seed, "fold-" + std::to_string(f)));
    const auto pred = learn::predict(model, folds[f].test.features);
    r.fold_scores[c][f] = score(metrics(confusion(folds[f].test.labels, pred.labels)), metric);
  });
  r.mean_scores.resize(r.configs.size());
  for (std::size_t c = 0; c < r.configs.size(); ++c) {
    double s = 0.0;
    for (double x : r.fold_scores[c]) s += x;
    r.mean_scores[c] = s / static_cast<double>(k);
    if (r.mean_scores[c] > r.mean_scores[r.best_index]) r.best_index = c;
  }
  return r;
}

GridSearchResult grid_search(learn::Family family, const Grid& grid, const learn::Dataset& ds,
                             const FoldAssignment& folds, SelectionMetric metric,
                             std::uint64_t seed, std::size_t threads) {
  return grid_search(family, grid, slice_provider(ds, folds), folds.k, metric, seed, threads);
}

namespace {

std::vector<double> class_vector(const std::vector<std::vector<std::string>>& items,
                                 const std::vector<int>& labels, int cls,
                                 const std::vector<std::string>& terms, TermCounting counting) {
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < terms.size(); ++i) pos.emplace(terms[i], i);
  std::vector<double> v(terms.size(), 0.0);
  for (std::size_t p = 0; p < items.size(); ++p) {
    if (labels[p] != cls) continue;
    std::set<std::size_t> seen;
    for (const auto& item : items[p]) {
      auto it = pos.find(item);
      if (it == pos.end()) continue;
      if (counting == TermCounting::Documents && !seen.insert(it->second).second) continue;
      v[it->second] += 1.0;
    }
  }
  return v;
}

}  // namespace

BiasReport bias_check(const corpus::LabeledCorpus& corpus, corpus::Task task,
                      const std::vector<std::size_t>& evaluated, const std::vector<int>& predicted,
                      std::size_t top_n, TermCounting counting) {
  const auto gold_all = corpus.labels_for(task);
  if (evaluated.size() != predicted.size()) {
    throw Error(ErrorCode::LengthMismatch, "predictions do not cover the evaluated posts");
  }
  BiasReport report;
  report.task = task;
  std::vector<std::vector<std::string>> items;
  std::vector<int> gold;
  std::unordered_map<std::string, std::size_t> totals;
  for (auto idx : evaluated) {
    items.push_back(corpus::post_items(corpus.posts().at(idx), corpus::ItemKind::Unigram));
    gold.push_back(gold_all[idx]);
    std::set<std::string> seen;
    for (const auto& t : items.back()) {
      if (counting == TermCounting::Documents && !seen.insert(t).second) continue;
      ++totals[t];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(totals.begin(), totals.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > top_n) ranked.resize(top_n);
  std::vector<std::string> terms;
  for (auto& [t, _] : ranked) terms.push_back(t);
  report.terms = terms.size();

  auto correlate = [&](const std::vector<int>& labels, std::optional<double>& rho,
                       std::optional<double>& p, const char* which) {
    try {
      const auto r = spearman(class_vector(items, labels, 0, terms, counting),
                              class_vector(items, labels, 1, terms, counting));
      rho = r.rho;
      p = r.p;
    } catch (const Error& e) {
      if (!report.note.empty()) report.note += ";";
      report.note += std::string(which) + ":" + std::string(error_code_name(e.code()));
    }
  };
  correlate(gold, report.rho_input, report.p_input, "input");
  correlate(predicted, report.rho_output, report.p_output, "output");
  return report;
}

std::string format_number(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

namespace {

std::string opt(const std::optional<double>& x) { return x ? format_number(*x) : "NA"; }

std::string opt_p(const std::optional<double>& x) {
  if (!x) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", *x);
  return buf;
}

}  // namespace

std::string results_tsv(const std::vector<ResultRow>& rows) {
  std::string out = "model\tinput\ttask\tf1\taccuracy\n";
  for (const auto& r : rows) {
    out += r.model + "\t" + r.input + "\t" + r.task + "\t" + opt(r.f1) + "\t" +
           format_number(r.accuracy) + "\n";
  }
  return out;
}

std::string bias_tsv(const std::vector<BiasReport>& rows) {
  std::string out = "model\tinput\ttask\tterms\trho_input\tp_input\trho_output\tp_output\tnote\n";
  for (const auto& r : rows) {
    out += r.model + "\t" + r.input_kind + "\t" + std::string(corpus::task_name(r.task)) + "\t" +
           std::to_string(r.terms) + "\t" + opt(r.rho_input) + "\t" + opt_p(r.p_input) + "\t" +
           opt(r.rho_output) + "\t" + opt_p(r.p_output) + "\t" + r.note + "\n";
  }
  return out;
}

}  // namespace cbe::eval
