#include <algorithm>
#include <cmath>
#include <limits>

#include "cogload/error.hpp"
#include "cogload/estimators.hpp"

namespace cogload {

namespace {

constexpr double kTau = 1e-12;

Matrix rbf_kernel(const Matrix& A, const Matrix& B, double gamma) {
  const Vector a2 = A.rowwise().squaredNorm();
  const Vector b2 = B.rowwise().squaredNorm();
  Matrix D = -2.0 * A * B.transpose();
  D.colwise() += a2;
  D.rowwise() += b2.transpose();
  return (-gamma * D.cwiseMax(0.0)).array().exp();
}

// Two-copy dual of epsilon-SVR in the layout used by libsvm: variable t < n is
// alpha_t (sign +1), t >= n is alpha*_{t-n} (sign -1).
struct Dual {
  Eigen::Index n;
  const Matrix& K;
  double C;
  std::vector<double> alpha, grad, sign;

  double q(Eigen::Index s, Eigen::Index t) const { return sign[s] * sign[t] * K(s % n, t % n); }
  bool upper(Eigen::Index t) const { return alpha[t] >= C; }
  bool lower(Eigen::Index t) const { return alpha[t] <= 0.0; }
};

// Second-order working set selection. Returns false at optimality.
bool select_pair(const Dual& d, double tol, Eigen::Index& out_i, Eigen::Index& out_j) {
  const Eigen::Index l = 2 * d.n;
  double gmax = -std::numeric_limits<double>::infinity();
  Eigen::Index i = -1;
  for (Eigen::Index t = 0; t < l; ++t) {
    if (d.sign[t] > 0) {
      if (!d.upper(t) && -d.grad[t] >= gmax) {
        gmax = -d.grad[t];
        i = t;
      }
    } else if (!d.lower(t) && d.grad[t] >= gmax) {
      gmax = d.grad[t];
      i = t;
    }
  }
  double gmax2 = -std::numeric_limits<double>::infinity();
  double best = std::numeric_limits<double>::infinity();
  Eigen::Index j = -1;
  for (Eigen::Index t = 0; t < l; ++t) {
    double diff = 0.0;
    if (d.sign[t] > 0) {
      if (d.lower(t)) continue;
      diff = gmax + d.grad[t];
      gmax2 = std::max(gmax2, d.grad[t]);
    } else {
      if (d.upper(t)) continue;
      diff = gmax - d.grad[t];
      gmax2 = std::max(gmax2, -d.grad[t]);
    }
    if (i < 0 || diff <= 0.0) continue;
    double quad = d.K(i % d.n, i % d.n) + d.K(t % d.n, t % d.n) - 2.0 * d.K(i % d.n, t % d.n);
    if (quad <= 0.0) quad = kTau;
    const double obj = -diff * diff / quad;
    if (obj <= best) {
      best = obj;
      j = t;
    }
  }
  if (i < 0 || j < 0 || gmax + gmax2 < tol) return false;
  out_i = i;
  out_j = j;
  return true;
}

void update_pair(Dual& d, Eigen::Index i, Eigen::Index j) {
  const double C = d.C;
  const double old_i = d.alpha[i], old_j = d.alpha[j];
  double& ai = d.alpha[i];
  double& aj = d.alpha[j];
  const double qii = d.q(i, i), qjj = d.q(j, j), qij = d.q(i, j);
  if (d.sign[i] != d.sign[j]) {
    double quad = qii + qjj + 2.0 * qij;
    if (quad <= 0.0) quad = kTau;
    const double delta = (-d.grad[i] - d.grad[j]) / quad;
    const double diff = ai - aj;
    ai += delta;
    aj += delta;
    if (diff > 0.0) {
      if (aj < 0.0) {
        aj = 0.0;
        ai = diff;
      }
    } else if (ai < 0.0) {
      ai = 0.0;
      aj = -diff;
    }
    if (diff > 0.0) {
      if (ai > C) {
        ai = C;
        aj = C - diff;
      }
    } else if (aj > C) {
      aj = C;
      ai = C + diff;
    }
  } else {
    double quad = qii + qjj - 2.0 * qij;
    if (quad <= 0.0) quad = kTau;
    const double delta = (d.grad[i] - d.grad[j]) / quad;
    const double sum = ai + aj;
    ai -= delta;
    aj += delta;
    if (sum > C) {
      if (ai > C) {
        ai = C;
        aj = sum - C;
      }
    } else if (aj < 0.0) {
      aj = 0.0;
      ai = sum;
    }
    if (sum > C) {
      if (aj > C) {
        aj = C;
        ai = sum - C;
      }
    } else if (ai < 0.0) {
      ai = 0.0;
      aj = sum;
    }
  }
  const double di = ai - old_i, dj = aj - old_j;
  const Eigen::Index l = 2 * d.n;
  for (Eigen::Index t = 0; t < l; ++t) d.grad[t] += d.q(t, i) * di + d.q(t, j) * dj;
}

double compute_rho(const Dual& d) {
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  int n_free = 0;
  for (Eigen::Index t = 0; t < 2 * d.n; ++t) {
    const double yg = d.sign[t] * d.grad[t];
    if (d.upper(t)) {
      if (d.sign[t] < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (d.lower(t)) {
      if (d.sign[t] > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  return n_free > 0 ? sum_free / n_free : 0.5 * (ub + lb);
}

}  // namespace

SvrModel fit_svr(const Matrix& X, const Vector& y, const SvrConfig& cfg) {
  if (!X.allFinite() || !y.allFinite()) throw Error(Errc::NonFinite, "fit_svr: non-finite input");
  if (X.rows() != y.size()) throw Error(Errc::DimensionMismatch, "fit_svr: X/y row mismatch");
  if (X.rows() < 2) throw Error(Errc::InvalidArgument, "fit_svr needs n >= 2");
  if (!(cfg.C > 0.0) || !(cfg.epsilon >= 0.0) || !(cfg.tol > 0.0)) {
    throw Error(Errc::InvalidConfig, "fit_svr: C > 0, epsilon >= 0, tol > 0");
  }
  SvrModel m;
  m.scaler = Standardizer::fit(X);
  const Matrix Z = m.scaler.apply(X);
  const Eigen::Index n = Z.rows();
  m.C = cfg.C;
  m.epsilon = cfg.epsilon;
  m.gamma = cfg.gamma;
  if (std::isnan(m.gamma)) {
    const double mean = Z.mean();
    const double var = (Z.array() - mean).square().mean();
    m.gamma = var > 0.0 ? 1.0 / (static_cast<double>(Z.cols()) * var) : 1.0;
  }
  const Matrix K = rbf_kernel(Z, Z, m.gamma);

  Dual d{n, K, cfg.C, {}, {}, {}};
  d.alpha.assign(static_cast<std::size_t>(2 * n), 0.0);
  d.grad.resize(static_cast<std::size_t>(2 * n));
  d.sign.resize(static_cast<std::size_t>(2 * n));
  for (Eigen::Index t = 0; t < n; ++t) {
    d.sign[t] = 1.0;
    d.grad[t] = cfg.epsilon - y(t);
    d.sign[t + n] = -1.0;
    d.grad[t + n] = cfg.epsilon + y(t);
  }
  long iter = 0;
  Eigen::Index i = 0, j = 0;
  while (iter < cfg.max_iter && select_pair(d, cfg.tol, i, j)) {
    update_pair(d, i, j);
    ++iter;
  }
  m.iterations = iter;
  m.bias = -compute_rho(d);

  Vector beta(n);
  for (Eigen::Index t = 0; t < n; ++t) beta(t) = d.alpha[t] - d.alpha[t + n];
  m.dual_objective = 0.5 * beta.dot(K * beta) - y.dot(beta) + cfg.epsilon * beta.lpNorm<1>();

  for (Eigen::Index t = 0; t < n; ++t) {
    if (beta(t) != 0.0) m.support_index.push_back(t);
  }
  m.support.resize(static_cast<Eigen::Index>(m.support_index.size()), Z.cols());
  m.coef.resize(static_cast<Eigen::Index>(m.support_index.size()));
  for (std::size_t s = 0; s < m.support_index.size(); ++s) {
    m.support.row(static_cast<Eigen::Index>(s)) = Z.row(m.support_index[s]);
    m.coef(static_cast<Eigen::Index>(s)) = beta(m.support_index[s]);
  }
  return m;
}

Vector predict(const SvrModel& m, const Matrix& X) {
  if (X.cols() != m.scaler.dim()) {
    throw Error(Errc::DimensionMismatch, "svr expects " + std::to_string(m.scaler.dim()) +
                                             " features, got " + std::to_string(X.cols()));
  }
  const Matrix Z = m.scaler.apply(X);
  if (m.coef.size() == 0) return Vector::Constant(Z.rows(), m.bias);
  return (rbf_kernel(Z, m.support, m.gamma) * m.coef).array() + m.bias;
}

}  // namespace cogload
