#include "cbe/learn.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cbe/embed.hpp"
#include "cbe/error.hpp"
#include "cbe/rng.hpp"
#include "cbe/text.hpp"

namespace cbe::learn {

using embed::sigmoid;

namespace {

// log(1 + e^z)
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double cross_entropy(double logit, int y) { return softplus(logit) - (y ? logit : 0.0); }

void check_trainable(const Dataset& ds) {
  ds.validate();
  if (ds.size() < 2) throw Error(ErrorCode::SingleClass, "training needs at least two rows");
  const auto pos = std::count(ds.labels.begin(), ds.labels.end(), 1);
  if (pos == 0 || static_cast<std::size_t>(pos) == ds.size()) {
    throw Error(ErrorCode::SingleClass, "training data has a single class");
  }
}

void check_dim(std::size_t expected, const Matrix& x) {
  if (x.cols != expected) {
    throw Error(ErrorCode::DimensionMismatch, "model expects " + std::to_string(expected) +
                                                  " features, got " + std::to_string(x.cols));
  }
}

Prediction from_scores(std::vector<double> scores) {
  Prediction p;
  p.labels.reserve(scores.size());
  for (double s : scores) p.labels.push_back(s >= kThreshold ? 1 : 0);
  p.scores = std::move(scores);
  return p;
}

// Shared descent loop over a flat parameter vector.
template <typename LossFn>
void descend(std::vector<double>& params, LossFn&& loss_fn, const GradientDescentOptions& opts,
             std::vector<double>* trace) {
  std::vector<double> grad;
  double lr = opts.lr;
  std::size_t halvings = 0;
  double loss = loss_fn(params, &grad);
  if (trace) trace->push_back(loss);
  std::vector<double> candidate(params.size());
  std::vector<double> cand_grad;
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    while (true) {
      for (std::size_t i = 0; i < params.size(); ++i) candidate[i] = params[i] - lr * grad[i];
      const double next = loss_fn(candidate, &cand_grad);
      if (std::isfinite(next) && next <= loss) {
        params.swap(candidate);
        grad.swap(cand_grad);
        loss = next;
        break;
      }
      if (halvings >= opts.max_halvings) {
        if (trace) trace->push_back(loss);
        return;
      }
      lr *= 0.5;
      ++halvings;
    }
    if (trace) trace->push_back(loss);
  }
}

}  // namespace

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  Matrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.cols) {
      throw Error(ErrorCode::DimensionMismatch, "ragged feature rows");
    }
    std::copy(rows[i].begin(), rows[i].end(), m.data.begin() + static_cast<std::ptrdiff_t>(i * m.cols));
  }
  return m;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.features = Matrix(indices.size(), features.cols);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto src = features.row(indices[r]);
    std::copy(src.begin(), src.end(), out.features.row(r).begin());
    out.labels.push_back(labels[indices[r]]);
    if (!ids.empty()) out.ids.push_back(ids[indices[r]]);
  }
  return out;
}

void Dataset::validate() const {
  if (features.rows != labels.size() || (!ids.empty() && ids.size() != labels.size())) {
    throw Error(ErrorCode::DimensionMismatch, "dataset row counts disagree");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw Error(ErrorCode::InvalidConfig, "labels must be 0 or 1");
  }
  for (double x : features.data) {
    if (!std::isfinite(x)) throw Error(ErrorCode::NonFiniteFeatures, "non-finite feature value");
  }
}

double logreg_loss(const LogRegModel& m, const Dataset& ds, std::vector<double>* grad) {
  const std::size_t d = ds.features.cols;
  const double n = static_cast<double>(ds.size());
  if (grad) grad->assign(d + 1, 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto x = ds.features.row(i);
    double z = m.bias;
    for (std::size_t j = 0; j < d; ++j) z += m.weights[j] * x[j];
    loss += cross_entropy(z, ds.labels[i]);
    if (grad) {
      const double g = (sigmoid(z) - ds.labels[i]) / n;
      for (std::size_t j = 0; j < d; ++j) (*grad)[j] += g * x[j];
      (*grad)[d] += g;
    }
  }
  loss /= n;
  double sq = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    sq += m.weights[j] * m.weights[j];
    if (grad) (*grad)[j] += m.l2 * m.weights[j];
  }
  return loss + 0.5 * m.l2 * sq;
}

LogRegModel train_logreg(const Dataset& ds, const GradientDescentOptions& opts,
                         std::vector<double>* loss_trace) {
  check_trainable(ds);
  const std::size_t d = ds.features.cols;
  LogRegModel m;
  m.l2 = opts.l2;
  m.weights.assign(d, 0.0);
  std::vector<double> params(d + 1, 0.0);
  auto loss_fn = [&](const std::vector<double>& p, std::vector<double>* g) {
    LogRegModel probe{{p.begin(), p.begin() + static_cast<std::ptrdiff_t>(d)}, p[d], opts.l2};
    return logreg_loss(probe, ds, g);
  };
  descend(params, loss_fn, opts, loss_trace);
  m.weights.assign(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(d));
  m.bias = params[d];
  return m;
}

std::vector<double> mlp_parameters(const MlpModel& m) {
  std::vector<double> p = m.w1.data;
  p.insert(p.end(), m.b1.begin(), m.b1.end());
  p.insert(p.end(), m.w2.begin(), m.w2.end());
  p.push_back(m.b2);
  return p;
}

void set_mlp_parameters(MlpModel& m, std::span<const double> p) {
  const std::size_t nw1 = m.inputs * m.hidden;
  if (p.size() != nw1 + 2 * m.hidden + 1) {
    throw Error(ErrorCode::DimensionMismatch, "MLP parameter vector has the wrong size");
  }
  std::copy(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(nw1), m.w1.data.begin());
  std::copy(p.begin() + static_cast<std::ptrdiff_t>(nw1),
            p.begin() + static_cast<std::ptrdiff_t>(nw1 + m.hidden), m.b1.begin());
  std::copy(p.begin() + static_cast<std::ptrdiff_t>(nw1 + m.hidden),
            p.begin() + static_cast<std::ptrdiff_t>(nw1 + 2 * m.hidden), m.w2.begin());
  m.b2 = p.back();
}

MlpModel init_mlp(std::size_t inputs, std::size_t hidden, std::uint64_t seed) {
  if (hidden == 0) throw Error(ErrorCode::InvalidConfig, "MLP needs at least one hidden unit");
  MlpModel m;
  m.inputs = inputs;
  m.hidden = hidden;
  m.w1 = Matrix(inputs, hidden);
  m.b1.assign(hidden, 0.0);
  m.w2.assign(hidden, 0.0);
  Rng rng(seed);
  const double r1 = std::sqrt(6.0 / static_cast<double>(inputs + hidden));
  for (auto& w : m.w1.data) w = rng.uniform(-r1, r1);
  const double r2 = std::sqrt(6.0 / static_cast<double>(hidden + 1));
  for (auto& w : m.w2) w = rng.uniform(-r2, r2);
  return m;
}

double mlp_loss(const MlpModel& m, const Dataset& ds, std::vector<double>* grad) {
  const std::size_t d = m.inputs;
  const std::size_t h = m.hidden;
  const double n = static_cast<double>(ds.size());
  const std::size_t nw1 = d * h;
  if (grad) grad->assign(nw1 + 2 * h + 1, 0.0);
  std::vector<double> z1(h);
  std::vector<double> a(h);
  double loss = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto x = ds.features.row(i);
    for (std::size_t k = 0; k < h; ++k) z1[k] = m.b1[k];
    for (std::size_t j = 0; j < d; ++j) {
      const double xj = x[j];
      if (xj == 0.0) continue;
      const double* w = m.w1.data.data() + j * h;
      for (std::size_t k = 0; k < h; ++k) z1[k] += xj * w[k];
    }
    double z2 = m.b2;
    for (std::size_t k = 0; k < h; ++k) {
      a[k] = z1[k] > 0 ? z1[k] : 0.0;
      z2 += a[k] * m.w2[k];
    }
    loss += cross_entropy(z2, ds.labels[i]);
    if (!grad) continue;
    const double dz2 = (sigmoid(z2) - ds.labels[i]) / n;
    auto& g = *grad;
    for (std::size_t k = 0; k < h; ++k) {
      g[nw1 + h + k] += dz2 * a[k];
      const double dz1 = z1[k] > 0 ? dz2 * m.w2[k] : 0.0;
      z1[k] = dz1;  // reuse as the hidden delta
      g[nw1 + k] += dz1;
    }
    g[nw1 + 2 * h] += dz2;
    for (std::size_t j = 0; j < d; ++j) {
      const double xj = x[j];
      if (xj == 0.0) continue;
      double* gw = g.data() + j * h;
      for (std::size_t k = 0; k < h; ++k) gw[k] += xj * z1[k];
    }
  }
  loss /= n;
  double sq = 0.0;
  for (std::size_t i = 0; i < nw1; ++i) {
    sq += m.w1.data[i] * m.w1.data[i];
    if (grad) (*grad)[i] += m.l2 * m.w1.data[i];
  }
  for (std::size_t k = 0; k < h; ++k) {
    sq += m.w2[k] * m.w2[k];
    if (grad) (*grad)[nw1 + h + k] += m.l2 * m.w2[k];
  }
  return loss + 0.5 * m.l2 * sq;
}

MlpModel train_mlp(const Dataset& ds, std::size_t hidden, const GradientDescentOptions& opts,
                   std::uint64_t seed, std::vector<double>* loss_trace) {
  if (hidden == 0) throw Error(ErrorCode::InvalidConfig, "MLP needs at least one hidden unit");
  check_trainable(ds);
  MlpModel m = init_mlp(ds.features.cols, hidden, seed);
  m.l2 = opts.l2;
  std::vector<double> params = mlp_parameters(m);
  MlpModel probe = m;
  auto loss_fn = [&](const std::vector<double>& p, std::vector<double>* g) {
    set_mlp_parameters(probe, p);
    return mlp_loss(probe, ds, g);
  };
  descend(params, loss_fn, opts, loss_trace);
  set_mlp_parameters(m, params);
  return m;
}

KnnModel train_knn(const Dataset& ds, std::size_t k, Metric metric) {
  ds.validate();
  if (k < 1 || k % 2 == 0) throw Error(ErrorCode::InvalidConfig, "k must be a positive odd integer");
  if (ds.size() == 0) throw Error(ErrorCode::SingleClass, "k-NN needs training rows");
  return KnnModel{ds.features, ds.labels, k, metric};
}

Prediction predict(const LogRegModel& model, const Matrix& features) {
  check_dim(model.weights.size(), features);
  std::vector<double> scores(features.rows);
  for (std::size_t i = 0; i < features.rows; ++i) {
    const auto x = features.row(i);
    double z = model.bias;
    for (std::size_t j = 0; j < x.size(); ++j) z += model.weights[j] * x[j];
    scores[i] = sigmoid(z);
  }
  return from_scores(std::move(scores));
}

Prediction predict(const MlpModel& model, const Matrix& features) {
  check_dim(model.inputs, features);
  std::vector<double> scores(features.rows);
  std::vector<double> z1(model.hidden);
  for (std::size_t i = 0; i < features.rows; ++i) {
    const auto x = features.row(i);
    double z2 = model.b2;
    for (std::size_t k = 0; k < model.hidden; ++k) {
      double z = model.b1[k];
      for (std::size_t j = 0; j < model.inputs; ++j) z += x[j] * model.w1(j, k);
      z2 += (z > 0 ? z : 0.0) * model.w2[k];
    }
    scores[i] = sigmoid(z2);
  }
  return from_scores(std::move(scores));
}

Prediction predict(const KnnModel& model, const Matrix& features) {
  check_dim(model.train.cols, features);
  const std::size_t n = model.train.rows;
  const std::size_t k = std::min(model.k, n);
  std::vector<double> train_norm(n, 0.0);
  if (model.metric == Metric::Cosine) {
    for (std::size_t t = 0; t < n; ++t) {
      for (double v : model.train.row(t)) train_norm[t] += v * v;
      train_norm[t] = std::sqrt(train_norm[t]);
    }
  }
  std::vector<double> scores(features.rows);
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < features.rows; ++i) {
    const auto x = features.row(i);
    double xnorm = 0.0;
    if (model.metric == Metric::Cosine) {
      for (double v : x) xnorm += v * v;
      xnorm = std::sqrt(xnorm);
    }
    for (std::size_t t = 0; t < n; ++t) {
      const auto r = model.train.row(t);
      double s = 0.0;
      if (model.metric == Metric::Euclidean) {
        for (std::size_t j = 0; j < x.size(); ++j) s += (x[j] - r[j]) * (x[j] - r[j]);
      } else {
        double dotp = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) dotp += x[j] * r[j];
        const double denom = xnorm * train_norm[t];
        s = 1.0 - (denom > 0 ? dotp / denom : 0.0);
      }
      dist[t] = {s, t};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    std::size_t pos = 0;
    for (std::size_t j = 0; j < k; ++j) pos += model.labels[dist[j].second] == 1;
    scores[i] = static_cast<double>(pos) / static_cast<double>(k);
  }
  return from_scores(std::move(scores));
}

Prediction predict(const Model& model, const Matrix& features) {
  return std::visit([&](const auto& m) { return predict(m, features); }, model);
}

std::string_view family_name(Family f) {
  switch (f) {
    case Family::LogReg: return "logreg";
    case Family::Mlp: return "mlp";
    case Family::Knn: return "knn";
  }
  return "?";
}

Family parse_family(std::string_view s) {
  if (s == "logreg") return Family::LogReg;
  if (s == "mlp") return Family::Mlp;
  if (s == "knn") return Family::Knn;
  throw Error(ErrorCode::InvalidConfig, "unknown model family '" + std::string(s) + "'");
}

Model train_model(Family family, const Hyperparams& params, const Dataset& ds, std::uint64_t seed) {
  auto get = [&](const char* key, double fallback) {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  };
  switch (family) {
    case Family::LogReg: {
      GradientDescentOptions o;
      o.l2 = get("l2", 1e-3);
      o.lr = get("lr", 0.5);
      o.epochs = static_cast<std::size_t>(get("epochs", 300));
      return train_logreg(ds, o);
    }
    case Family::Mlp: {
      GradientDescentOptions o;
      o.l2 = get("l2", 1e-3);
      o.lr = get("lr", 0.2);
      o.epochs = static_cast<std::size_t>(get("epochs", 500));
      return train_mlp(ds, static_cast<std::size_t>(get("hidden", 16)), o, seed);
    }
    case Family::Knn: {
      check_trainable(ds);
      const auto metric = get("metric", 0) != 0 ? Metric::Cosine : Metric::Euclidean;
      return train_knn(ds, static_cast<std::size_t>(get("k", 5)), metric);
    }
  }
  throw Error(ErrorCode::InvalidConfig, "unknown model family");
}

namespace {

void put_values(std::ostringstream& out, std::string_view name, std::span<const double> values) {
  out << name << ' ' << values.size();
  char buf[32];
  for (double v : values) {
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out << ' ' << std::string_view(buf, static_cast<std::size_t>(end - buf));
  }
  out << '\n';
}

class ModelReader {
 public:
  explicit ModelReader(std::string_view content) {
    std::size_t start = 0;
    while (start < content.size()) {
      auto nl = content.find('\n', start);
      if (nl == std::string_view::npos) nl = content.size();
      if (nl > start) lines_.push_back(content.substr(start, nl - start));
      start = nl + 1;
    }
  }

  std::vector<std::string_view> fields(std::string_view expected) {
    if (pos_ >= lines_.size()) fail("unexpected end of model file");
    auto f = text::split_whitespace(lines_[pos_++]);
    if (f.empty() || f[0] != expected) fail("expected '" + std::string(expected) + "'");
    return f;
  }

  double scalar(std::string_view name) {
    auto f = fields(name);
    if (f.size() != 2) fail("bad scalar line");
    return number(f[1]);
  }

  std::vector<double> values(std::string_view name) {
    auto f = fields(name);
    if (f.size() < 2) fail("bad values line");
    const auto n = static_cast<std::size_t>(number(f[1]));
    if (f.size() != n + 2) fail("value count mismatch for '" + std::string(name) + "'");
    std::vector<double> out;
    for (std::size_t i = 2; i < f.size(); ++i) out.push_back(number(f[i]));
    return out;
  }

  static double number(std::string_view s) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) fail("bad number '" + std::string(s) + "'");
    return v;
  }

  [[noreturn]] static void fail(const std::string& why) {
    throw Error(ErrorCode::ParseError, "model file: " + why);
  }

 private:
  std::vector<std::string_view> lines_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_model(const Model& model) {
  std::ostringstream out;
  out << "cbe-model 1\n";
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, LogRegModel>) {
          out << "family logreg\n";
          put_values(out, "weights", m.weights);
          put_values(out, "bias", std::span<const double>(&m.bias, 1));
          put_values(out, "l2", std::span<const double>(&m.l2, 1));
        } else if constexpr (std::is_same_v<T, MlpModel>) {
          out << "family mlp\n";
          out << "shape " << m.inputs << ' ' << m.hidden << '\n';
          put_values(out, "w1", m.w1.data);
          put_values(out, "b1", m.b1);
          put_values(out, "w2", m.w2);
          put_values(out, "b2", std::span<const double>(&m.b2, 1));
          put_values(out, "l2", std::span<const double>(&m.l2, 1));
        } else {
          out << "family knn\n";
          out << "k " << m.k << '\n';
          out << "metric " << (m.metric == Metric::Cosine ? 1 : 0) << '\n';
          out << "shape " << m.train.rows << ' ' << m.train.cols << '\n';
          std::vector<double> labels(m.labels.begin(), m.labels.end());
          put_values(out, "labels", labels);
          put_values(out, "train", m.train.data);
        }
      },
      model);
  return out.str();
}

Model parse_model(std::string_view content) {
  ModelReader r(content);
  auto header = r.fields("cbe-model");
  if (header.size() != 2 || header[1] != "1") ModelReader::fail("unsupported model version");
  auto fam = r.fields("family");
  if (fam.size() != 2) ModelReader::fail("bad family line");
  switch (parse_family(fam[1])) {
    case Family::LogReg: {
      LogRegModel m;
      m.weights = r.values("weights");
      m.bias = r.values("bias").at(0);
      m.l2 = r.values("l2").at(0);
      return m;
    }
    case Family::Mlp: {
      auto shape = r.fields("shape");
      if (shape.size() != 3) ModelReader::fail("bad shape line");
      MlpModel m;
      m.inputs = static_cast<std::size_t>(ModelReader::number(shape[1]));
      m.hidden = static_cast<std::size_t>(ModelReader::number(shape[2]));
      m.w1 = Matrix(m.inputs, m.hidden);
      m.w1.data = r.values("w1");
      m.b1 = r.values("b1");
      m.w2 = r.values("w2");
      m.b2 = r.values("b2").at(0);
      m.l2 = r.values("l2").at(0);
      if (m.w1.data.size() != m.inputs * m.hidden || m.b1.size() != m.hidden ||
          m.w2.size() != m.hidden) {
        ModelReader::fail("MLP parameter sizes disagree with shape");
      }
      return m;
    }
    case Family::Knn: {
      KnnModel m;
      m.k = static_cast<std::size_t>(r.scalar("k"));
      m.metric = r.scalar("metric") != 0 ? Metric::Cosine : Metric::Euclidean;
      auto shape = r.fields("shape");
      if (shape.size() != 3) ModelReader::fail("bad shape line");
      const auto rows = static_cast<std::size_t>(ModelReader::number(shape[1]));
      const auto cols = static_cast<std::size_t>(ModelReader::number(shape[2]));
      for (double y : r.values("labels")) m.labels.push_back(static_cast<int>(y));
      m.train = Matrix(rows, cols);
      m.train.data = r.values("train");
      if (m.train.data.size() != rows * cols || m.labels.size() != rows) {
        ModelReader::fail("k-NN sizes disagree with shape");
      }
      return m;
    }
  }
  ModelReader::fail("unknown family");
}

}  // namespace cbe::learn
