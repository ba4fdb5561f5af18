#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace cbe::learn {

// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  bool operator==(const Matrix&) const = default;
};

struct Dataset {
  Matrix features;
  std::vector<int> labels;
  std::vector<std::string> ids;

  std::size_t size() const { return labels.size(); }
  // Rows with the given indices, in order.
  Dataset subset(const std::vector<std::size_t>& indices) const;
  void validate() const;
};

struct Prediction {
  std::vector<int> labels;
  std::vector<double> scores;
};

inline constexpr double kThreshold = 0.5;

struct LogRegModel {
  std::vector<double> weights;
  double bias = 0.0;
  double l2 = 0.0;
};

struct MlpModel {
  std::size_t inputs = 0;
  std::size_t hidden = 0;
  Matrix w1;  // inputs x hidden
  std::vector<double> b1;
  std::vector<double> w2;  // hidden
  double b2 = 0.0;
  double l2 = 0.0;
};

enum class Metric { Euclidean, Cosine };

struct KnnModel {
  Matrix train;
  std::vector<int> labels;
  std::size_t k = 5;
  Metric metric = Metric::Euclidean;
};

using Model = std::variant<LogRegModel, MlpModel, KnnModel>;

struct GradientDescentOptions {
  double lr = 0.5;
  std::size_t epochs = 300;
  double l2 = 1e-3;
  std::size_t max_halvings = 10;
};

// Mean cross-entropy plus (l2/2)|w|^2 and its gradient ([weights..., bias]).
double logreg_loss(const LogRegModel& m, const Dataset& ds, std::vector<double>* grad = nullptr);

// Full-batch gradient descent from zero weights. A step that raises the loss
// is undone and the rate halved, so the recorded loss never increases.
LogRegModel train_logreg(const Dataset& ds, const GradientDescentOptions& opts,
                         std::vector<double>* loss_trace = nullptr);

// Mean cross-entropy plus (l2/2)(|W1|^2 + |w2|^2). Gradient layout:
// W1 row-major, b1, w2, b2.
double mlp_loss(const MlpModel& m, const Dataset& ds, std::vector<double>* grad = nullptr);
std::vector<double> mlp_parameters(const MlpModel& m);
void set_mlp_parameters(MlpModel& m, std::span<const double> params);
MlpModel init_mlp(std::size_t inputs, std::size_t hidden, std::uint64_t seed);

MlpModel train_mlp(const Dataset& ds, std::size_t hidden, const GradientDescentOptions& opts,
                   std::uint64_t seed, std::vector<double>* loss_trace = nullptr);

KnnModel train_knn(const Dataset& ds, std::size_t k, Metric metric);

Prediction predict(const Model& model, const Matrix& features);
Prediction predict(const LogRegModel& model, const Matrix& features);
Prediction predict(const MlpModel& model, const Matrix& features);
Prediction predict(const KnnModel& model, const Matrix& features);

enum class Family { LogReg, Mlp, Knn };
std::string_view family_name(Family f);
Family parse_family(std::string_view s);
inline constexpr Family kAllFamilies[] = {Family::LogReg, Family::Mlp, Family::Knn};

using Hyperparams = std::map<std::string, double>;

// Hyperparameter keys: logreg {l2, lr, epochs}; mlp {hidden, l2, lr, epochs};
// knn {k, metric (0 euclidean, 1 cosine)}. Missing keys take defaults.
Model train_model(Family family, const Hyperparams& params, const Dataset& ds, std::uint64_t seed);

// Versioned plain-text parameter dump.
std::string serialize_model(const Model& model);
Model parse_model(std::string_view content);

}  // namespace cbe::learn
