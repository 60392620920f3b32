#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <variant>

#include <Eigen/Dense>

namespace cogload {

using Matrix = Eigen::MatrixXd;  // rows are samples
using Vector = Eigen::VectorXd;

// Per-feature z-scoring with train-set statistics (population std, floored).
struct Standardizer {
  static constexpr double kStdFloor = 1e-8;
  Vector mean;
  Vector std;

  static Standardizer fit(const Matrix& X);
  Matrix apply(const Matrix& X) const;
  Eigen::Index dim() const { return mean.size(); }
};

struct LinearModel {
  Standardizer scaler;
  Vector w;           // in standardized feature space
  double b{0.0};
  double lambda{0.0};
  int sweeps{0};      // coordinate-descent sweeps used
};

// Minimises (1/2n)||y - Zw - b||^2 + lambda ||w||_1 with Z the standardized
// X, by cyclic coordinate descent with soft-thresholding. Stops when the
// largest coordinate change in a sweep is below 1e-9 or after 10000 sweeps.
LinearModel fit_lasso(const Matrix& X, const Vector& y, double lambda);

struct DnnConfig {
  double lr{1e-4};
  int epochs{100};
  int batch_size{32};
  std::uint64_t seed{0};
  Eigen::Index hidden{2000};  // N_T * N_d
  bool zero_init{false};      // all weights zero, biases zero
};

// input -> Linear(hidden) -> BatchNorm -> ReLU -> Linear(1)
class DnnModel {
 public:
  static constexpr double kBnEps = 1e-5;
  static constexpr double kBnMomentum = 0.1;

  DnnModel() = default;
  DnnModel(Eigen::Index input, const DnnConfig& cfg);

  Eigen::Index input_dim() const { return W1.cols(); }
  Eigen::Index hidden_dim() const { return W1.rows(); }

  // Inference on already standardized rows, with frozen running statistics.
  Vector forward_eval(const Matrix& Z) const;

  // Training-mode MSE loss on one batch (batch statistics) and its gradient
  // with respect to the flattened parameters (see flat_params()).
  double loss_and_grad(const Matrix& Z, const Vector& y, Vector* grad) const;
  Vector flat_params() const;
  void set_flat_params(const Vector& theta);
  // Minimum |pre-activation| at the ReLU in training mode.
  double min_abs_preactivation(const Matrix& Z) const;

  Standardizer scaler;
  DnnConfig config;
  Matrix W1;  // hidden x input
  Vector b1, gamma, beta, running_mean, running_var;
  Vector w2;  // hidden
  double b2{0.0};
  double final_loss{0.0};
};

// Adam (0.9, 0.999, 1e-8) with per-epoch cosine annealing from cfg.lr to 0,
// MSE loss, shuffled mini-batches seeded from cfg.seed. Throws NonFinite when
// the loss exceeds 1e6 or stops being finite.
DnnModel fit_dnn(const Matrix& X, const Vector& y, const DnnConfig& cfg);

struct SvrConfig {
  double C{1.0};
  double epsilon{0.1};
  double gamma{std::numeric_limits<double>::quiet_NaN()};  // NaN: 1 / (d * var(Z))
  double tol{1e-3};
  long max_iter{100000};
};

struct SvrModel {
  Standardizer scaler;
  Matrix support;    // standardized support vectors (rows)
  Vector coef;       // alpha+ - alpha-
  std::vector<Eigen::Index> support_index;  // rows of the training matrix
  double bias{0.0};
  double gamma{0.0};
  double C{1.0};
  double epsilon{0.1};
  long iterations{0};
  double dual_objective{0.0};  // 1/2 b'Kb - y'b + eps |b|_1 at the solution
};

// epsilon-SVR with an RBF kernel, solved by SMO with second-order working set
// selection. Stops when the maximal KKT violation drops below cfg.tol.
SvrModel fit_svr(const Matrix& X, const Vector& y, const SvrConfig& cfg = {});

using Model = std::variant<LinearModel, DnnModel, SvrModel>;

enum class EstimatorKind { Linear, Dnn, Svm };
std::string_view to_string(EstimatorKind k);
EstimatorKind parse_estimator(std::string_view s);  // throws InvalidConfig
EstimatorKind kind_of(const Model& m);

// Throws DimensionMismatch when X has the wrong number of columns.
Vector predict(const LinearModel& m, const Matrix& X);
Vector predict(const DnnModel& m, const Matrix& X);
Vector predict(const SvrModel& m, const Matrix& X);
Vector predict(const Model& m, const Matrix& X);
Eigen::Index input_dim(const Model& m);

// Throws ConstantInput when either vector has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);
double mse(std::span<const double> a, std::span<const double> b);

inline std::span<const double> as_span(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

// MDL1 container.
void save_model(const Model& m, const std::string& path);
Model load_model(const std::string& path);
std::vector<unsigned char> encode_model(const Model& m);
Model decode_model(std::span<const unsigned char> bytes, const std::string& origin);

}  // namespace cogload
