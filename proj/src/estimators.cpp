#include "cogload/estimators.hpp"

#include <cmath>

#include "cogload/error.hpp"

namespace cogload {

namespace {

void require_finite(const Matrix& X, const Vector& y, const char* who) {
  if (!X.allFinite() || !y.allFinite()) throw Error(Errc::NonFinite, std::string(who) + ": non-finite input");
  if (X.rows() != y.size()) throw Error(Errc::DimensionMismatch, std::string(who) + ": X/y row mismatch");
}

double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

}  // namespace

Standardizer Standardizer::fit(const Matrix& X) {
  Standardizer s;
  const double n = static_cast<double>(X.rows());
  s.mean = X.colwise().mean().transpose();
  s.std.resize(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double var = (X.col(j).array() - s.mean(j)).square().sum() / n;
    s.std(j) = std::max(std::sqrt(var), kStdFloor);
  }
  return s;
}

Matrix Standardizer::apply(const Matrix& X) const {
  if (X.cols() != mean.size()) {
    throw Error(Errc::DimensionMismatch, "standardizer expects " + std::to_string(mean.size()) +
                                             " features, got " + std::to_string(X.cols()));
  }
  return (X.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array();
}

LinearModel fit_lasso(const Matrix& X, const Vector& y, double lambda) {
  require_finite(X, y, "fit_lasso");
  if (X.rows() < 2) throw Error(Errc::InvalidArgument, "fit_lasso needs n >= 2");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error(Errc::InvalidArgument, "lambda must be >= 0");

  constexpr double kTol = 1e-9;
  constexpr int kMaxSweeps = 10000;
  LinearModel m;
  m.lambda = lambda;
  m.scaler = Standardizer::fit(X);
  const Matrix Z = m.scaler.apply(X);
  const Eigen::Index n = Z.rows(), d = Z.cols();
  const double inv_n = 1.0 / static_cast<double>(n);

  m.b = y.mean();
  m.w = Vector::Zero(d);
  Vector r = y.array() - m.b;  // residual; columns of Z are centred
  const Vector col_sq = Z.colwise().squaredNorm().transpose() * inv_n;

  for (m.sweeps = 1; m.sweeps <= kMaxSweeps; ++m.sweeps) {
    double max_delta = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      if (col_sq(j) <= 0.0) continue;
      const double wj = m.w(j);
      const double rho = Z.col(j).dot(r) * inv_n + col_sq(j) * wj;
      const double next = soft_threshold(rho, lambda) / col_sq(j);
      const double delta = next - wj;
      if (delta != 0.0) {
        r.noalias() -= delta * Z.col(j);
        m.w(j) = next;
        max_delta = std::max(max_delta, std::abs(delta));
      }
    }
    if (max_delta < kTol) break;
  }
  m.sweeps = std::min(m.sweeps, kMaxSweeps);
  if (!m.w.allFinite()) throw Error(Errc::NonFinite, "fit_lasso diverged");
  return m;
}

Vector predict(const LinearModel& m, const Matrix& X) {
  if (X.cols() != m.w.size()) {
    throw Error(Errc::DimensionMismatch, "linear model expects " + std::to_string(m.w.size()) +
                                             " features, got " + std::to_string(X.cols()));
  }
  // scaling folded into the weights: no standardized copy of X
  const Vector v = m.w.array() / m.scaler.std.array();
  return (X * v).array() + (m.b - m.scaler.mean.dot(v));
}

Vector predict(const Model& m, const Matrix& X) {
  return std::visit([&](const auto& model) { return predict(model, X); }, m);
}

Eigen::Index input_dim(const Model& m) {
  return std::visit([](const auto& model) { return model.scaler.dim(); }, m);
}

std::string_view to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::Linear: return "linear";
    case EstimatorKind::Dnn: return "dnn";
    case EstimatorKind::Svm: return "svm";
  }
  return "linear";
}

EstimatorKind parse_estimator(std::string_view s) {
  if (s == "linear" || s == "Linear") return EstimatorKind::Linear;
  if (s == "dnn" || s == "DNN") return EstimatorKind::Dnn;
  if (s == "svm" || s == "SVM" || s == "svr") return EstimatorKind::Svm;
  throw Error(Errc::InvalidConfig, "unknown estimator '" + std::string(s) + "'");
}

EstimatorKind kind_of(const Model& m) {
  if (std::holds_alternative<LinearModel>(m)) return EstimatorKind::Linear;
  if (std::holds_alternative<DnnModel>(m)) return EstimatorKind::Dnn;
  return EstimatorKind::Svm;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw Error(Errc::InvalidArgument, "pearson needs two vectors of equal length >= 2");
  }
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) throw Error(Errc::ConstantInput, "pearson of a constant vector");
  return sab / std::sqrt(saa * sbb);
}

double mse(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw Error(Errc::InvalidArgument, "mse needs two non-empty vectors of equal length");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

}  // namespace cogload
