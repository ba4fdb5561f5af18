#pragma once

// Reference implementations used by the unit tests and the acceptance binary.
// They are written directly from the definitions and share no code with the
// library beyond its data types.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cbe/embed.hpp"
#include "cbe/kgstore.hpp"
#include "cbe/rng.hpp"

namespace cbe::oracle {

inline std::string node_iri(std::size_t i) { return "http://ex.org/n" + std::to_string(i); }
inline std::string pred_iri(std::size_t i) { return "http://ex.org/p" + std::to_string(i); }

// Random directed multigraph with a few literal-valued statements mixed in.
inline kg::KnowledgeGraph random_graph(Rng& rng, std::size_t nodes, std::size_t edges) {
  std::set<kg::Triple> triples;
  for (std::size_t e = 0; e < edges; ++e) {
    triples.insert({node_iri(rng.below(nodes)), pred_iri(rng.below(4)),
                    kg::Term::iri(node_iri(rng.below(nodes)))});
  }
  for (std::size_t i = 0; i < nodes / 10 + 1; ++i) {
    triples.insert({node_iri(rng.below(nodes)), "http://ex.org/label", kg::Term::literal("x")});
  }
  return kg::KnowledgeGraph(triples);
}

// Every walk a walker can produce from seed: extend along each IRI edge until
// max_depth hops or a node without IRI out-edges. Stops collecting (returns
// nullopt) beyond `limit` walks.
inline std::optional<std::set<std::vector<std::string>>> enumerate_walks(
    const std::set<kg::Triple>& triples, const std::string& seed, std::size_t max_depth,
    bool with_predicates, std::size_t limit = 10000) {
  std::multimap<std::string, std::pair<std::string, std::string>> out;
  std::set<std::pair<std::string, std::pair<std::string, std::string>>> dedup;
  for (const auto& t : triples) {
    if (!t.object.is_iri()) continue;
    if (dedup.insert({t.subject, {t.predicate, t.object.value}}).second) {
      out.emplace(t.subject, std::make_pair(t.predicate, t.object.value));
    }
  }
  std::set<std::vector<std::string>> all;
  bool overflow = false;
  std::function<void(std::vector<std::string>&, const std::string&, std::size_t)> rec =
      [&](std::vector<std::string>& path, const std::string& node, std::size_t depth) {
        if (overflow) return;
        auto [lo, hi] = out.equal_range(node);
        if (depth == max_depth || lo == hi) {
          all.insert(path);
          if (all.size() > limit) overflow = true;
          return;
        }
        for (auto it = lo; it != hi; ++it) {
          const auto size = path.size();
          if (with_predicates) path.push_back(it->second.first);
          path.push_back(it->second.second);
          rec(path, it->second.second, depth + 1);
          path.resize(size);
        }
      };
  std::vector<std::string> path{seed};
  rec(path, seed, 0);
  if (overflow) return std::nullopt;
  return all;
}

// Weighted average over in-vocabulary tokens (weight a/(a+p), 1 for tokens
// without a frequency), then projection off the top right singular vector
// from a full SVD.
inline std::vector<std::vector<double>> sif(const std::vector<embed::Sequence>& sentences,
                                            const embed::EmbeddingTable& table,
                                            const embed::WordFreq& freq, double a,
                                            bool remove_pc) {
  const auto n = static_cast<Eigen::Index>(sentences.size());
  const auto d = static_cast<Eigen::Index>(table.dim);
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, d);
  for (Eigen::Index s = 0; s < n; ++s) {
    int used = 0;
    for (const auto& tok : sentences[s]) {
      const auto idx = table.vocab.index_of(tok);
      if (idx < 0) continue;
      const auto it = freq.find(tok);
      const double w = it == freq.end() ? 1.0 : a / (a + it->second);
      for (Eigen::Index j = 0; j < d; ++j) X(s, j) += w * table.input[idx * d + j];
      ++used;
    }
    if (used) X.row(s) /= used;
  }
  if (remove_pc && n >= 2 && X.norm() > 0) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeFullV);
    const Eigen::VectorXd u = svd.matrixV().col(0);
    X = X - X * u * u.transpose();
  }
  std::vector<std::vector<double>> result(sentences.size(), std::vector<double>(table.dim));
  for (Eigen::Index s = 0; s < n; ++s) {
    for (Eigen::Index j = 0; j < d; ++j) result[s][j] = X(s, j);
  }
  return result;
}

// Ranks by counting: rank = 1 + #smaller + (#equal - 1)/2.
inline std::vector<double> ranks(const std::vector<double>& xs) {
  std::vector<double> r(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double less = 0, equal = 0;
    for (double y : xs) {
      if (y < xs[i]) less += 1;
      if (y == xs[i]) equal += 1;
    }
    r[i] = 1 + less + (equal - 1) / 2;
  }
  return r;
}

inline std::optional<double> spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) { mx += rx[i] / n; my += ry[i] / n; }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

struct Ratios {
  std::optional<double> precision, recall, f1;
  double accuracy;
};

inline Ratios ratios(double tp, double fp, double tn, double fn) {
  Ratios r;
  if (tp + fp > 0) r.precision = tp / (tp + fp);
  if (tp + fn > 0) r.recall = tp / (tp + fn);
  // P + R > 0 exactly when tp > 0
  if (r.precision && r.recall && tp > 0) r.f1 = 2 * tp / (2 * tp + fp + fn);
  r.accuracy = (tp + tn) / (tp + fp + tn + fn);
  return r;
}

}  // namespace cbe::oracle
