#include <cmath>
#include <numbers>
#include <numeric>

#include "cogload/error.hpp"
#include "cogload/estimators.hpp"
#include "cogload/rng.hpp"

namespace cogload {

namespace {

struct BatchForward {
  Matrix Z1;     // B x H pre-normalisation
  Matrix Zhat;   // normalised
  Matrix A;      // gamma * Zhat + beta
  Matrix R;      // relu(A)
  Vector out;
  Eigen::RowVectorXd mu, var, inv_std;
};

BatchForward forward_train(const DnnModel& m, const Matrix& Z) {
  BatchForward f;
  const double B = static_cast<double>(Z.rows());
  f.Z1 = (Z * m.W1.transpose()).rowwise() + m.b1.transpose();
  f.mu = f.Z1.colwise().mean();
  const Matrix centred = f.Z1.rowwise() - f.mu;
  f.var = centred.colwise().squaredNorm() / B;
  f.inv_std = (f.var.array() + DnnModel::kBnEps).rsqrt();
  f.Zhat = centred.array().rowwise() * f.inv_std.array();
  f.A = (f.Zhat.array().rowwise() * m.gamma.transpose().array()).rowwise() + m.beta.transpose().array();
  f.R = f.A.cwiseMax(0.0);
  f.out = (f.R * m.w2).array() + m.b2;
  return f;
}

struct Grads {
  Matrix W1;
  Vector b1, gamma, beta, w2;
  double b2{0.0};
};

double loss_grads(const DnnModel& m, const Matrix& Z, const Vector& y, Grads* g, BatchForward* keep) {
  BatchForward f = forward_train(m, Z);
  const double B = static_cast<double>(Z.rows());
  const Vector resid = f.out - y;
  const double loss = resid.squaredNorm() / B;
  if (g != nullptr) {
    const Vector dout = 2.0 * resid / B;
    g->w2 = f.R.transpose() * dout;
    g->b2 = dout.sum();
    Matrix dA = dout * m.w2.transpose();
    dA = (f.A.array() > 0.0).select(dA, 0.0);
    g->gamma = (dA.array() * f.Zhat.array()).colwise().sum().transpose();
    g->beta = dA.colwise().sum().transpose();
    const Matrix dZhat = dA.array().rowwise() * m.gamma.transpose().array();
    const Eigen::RowVectorXd sum_d = dZhat.colwise().sum();
    const Eigen::RowVectorXd sum_dz = (dZhat.array() * f.Zhat.array()).colwise().sum();
    Matrix dZ1 = (B * dZhat.array()).matrix();
    dZ1.rowwise() -= sum_d;
    dZ1 -= (f.Zhat.array().rowwise() * sum_dz.array()).matrix();
    dZ1 = (dZ1.array().rowwise() * (f.inv_std.array() / B)).matrix();
    g->W1.noalias() = dZ1.transpose() * Z;
    g->b1 = dZ1.colwise().sum().transpose();
  }
  if (keep != nullptr) *keep = std::move(f);
  return loss;
}

struct AdamState {
  Matrix m, v;
  void init(Eigen::Index r, Eigen::Index c) {
    m = Matrix::Zero(r, c);
    v = Matrix::Zero(r, c);
  }
};

template <typename Param, typename Grad>
void adam_step(Param& p, const Grad& g, AdamState& s, double lr, double bc1, double bc2) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  s.m = b1 * s.m + (1.0 - b1) * g;
  s.v = b2 * s.v + (1.0 - b2) * g.cwiseProduct(g);
  p.array() -= lr * (s.m.array() / bc1) / ((s.v.array() / bc2).sqrt() + eps);
}

}  // namespace

DnnModel::DnnModel(Eigen::Index input, const DnnConfig& cfg) : config(cfg) {
  const Eigen::Index H = cfg.hidden;
  W1 = Matrix::Zero(H, input);
  b1 = Vector::Zero(H);
  gamma = Vector::Ones(H);
  beta = Vector::Zero(H);
  running_mean = Vector::Zero(H);
  running_var = Vector::Ones(H);
  w2 = Vector::Zero(H);
  b2 = 0.0;
  if (cfg.zero_init) return;
  Rng rng(cfg.seed);
  const double k1 = 1.0 / std::sqrt(static_cast<double>(input));
  const double k2 = 1.0 / std::sqrt(static_cast<double>(H));
  for (Eigen::Index j = 0; j < input; ++j)
    for (Eigen::Index i = 0; i < H; ++i) W1(i, j) = rng.uniform(-k1, k1);
  for (Eigen::Index i = 0; i < H; ++i) b1(i) = rng.uniform(-k1, k1);
  for (Eigen::Index i = 0; i < H; ++i) w2(i) = rng.uniform(-k2, k2);
  b2 = rng.uniform(-k2, k2);
}

Vector DnnModel::forward_eval(const Matrix& Z) const {
  Matrix Z1 = (Z * W1.transpose()).rowwise() + b1.transpose();
  const Eigen::RowVectorXd inv_std = (running_var.array() + kBnEps).rsqrt().transpose();
  Z1 = ((Z1.rowwise() - running_mean.transpose()).array().rowwise() * inv_std.array()).matrix();
  Z1 = ((Z1.array().rowwise() * gamma.transpose().array()).rowwise() + beta.transpose().array()).matrix();
  return (Z1.cwiseMax(0.0) * w2).array() + b2;
}

double DnnModel::loss_and_grad(const Matrix& Z, const Vector& y, Vector* grad) const {
  if (grad == nullptr) return loss_grads(*this, Z, y, nullptr, nullptr);
  Grads g;
  const double loss = loss_grads(*this, Z, y, &g, nullptr);
  grad->resize(flat_params().size());
  Eigen::Index k = 0;
  auto put = [&](const auto& block) {
    for (Eigen::Index i = 0; i < block.size(); ++i) (*grad)(k++) = block.data()[i];
  };
  put(g.W1);
  put(g.b1);
  put(g.gamma);
  put(g.beta);
  put(g.w2);
  (*grad)(k++) = g.b2;
  return loss;
}

Vector DnnModel::flat_params() const {
  const Eigen::Index H = hidden_dim();
  Vector theta(W1.size() + 4 * H + 1);
  Eigen::Index k = 0;
  auto put = [&](const auto& block) {
    for (Eigen::Index i = 0; i < block.size(); ++i) theta(k++) = block.data()[i];
  };
  put(W1);
  put(b1);
  put(gamma);
  put(beta);
  put(w2);
  theta(k++) = b2;
  return theta;
}

void DnnModel::set_flat_params(const Vector& theta) {
  if (theta.size() != flat_params().size()) throw Error(Errc::DimensionMismatch, "parameter vector size");
  Eigen::Index k = 0;
  auto get = [&](auto& block) {
    for (Eigen::Index i = 0; i < block.size(); ++i) block.data()[i] = theta(k++);
  };
  get(W1);
  get(b1);
  get(gamma);
  get(beta);
  get(w2);
  b2 = theta(k++);
}

double DnnModel::min_abs_preactivation(const Matrix& Z) const {
  return forward_train(*this, Z).A.cwiseAbs().minCoeff();
}

DnnModel fit_dnn(const Matrix& X, const Vector& y, const DnnConfig& cfg) {
  if (!X.allFinite() || !y.allFinite()) throw Error(Errc::NonFinite, "fit_dnn: non-finite input");
  if (X.rows() != y.size()) throw Error(Errc::DimensionMismatch, "fit_dnn: X/y row mismatch");
  if (X.rows() < 2) throw Error(Errc::InvalidArgument, "fit_dnn needs n >= 2");
  if (cfg.epochs < 1 || cfg.batch_size < 2 || cfg.hidden < 1 || !(cfg.lr > 0.0)) {
    throw Error(Errc::InvalidConfig, "fit_dnn: epochs >= 1, batch_size >= 2, hidden >= 1, lr > 0");
  }
  DnnModel m(X.cols(), cfg);
  m.scaler = Standardizer::fit(X);
  const Matrix Z = m.scaler.apply(X);
  const Eigen::Index n = Z.rows();
  const Eigen::Index H = cfg.hidden;

  AdamState sW1, sb1, sg, sb, sw2, sb2;
  sW1.init(H, Z.cols());
  sb1.init(H, 1);
  sg.init(H, 1);
  sb.init(H, 1);
  sw2.init(H, 1);
  sb2.init(1, 1);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(cfg.seed ^ 0x5DEECE66DULL);
  long step = 0;
  Matrix Zb;
  Vector yb;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = 0.5 * cfg.lr * (1.0 + std::cos(std::numbers::pi * epoch / cfg.epochs));
    rng.shuffle(std::span<Eigen::Index>(order));
    double epoch_loss = 0.0;
    for (Eigen::Index start = 0; start < n;) {
      Eigen::Index stop = std::min<Eigen::Index>(n, start + cfg.batch_size);
      if (n - stop == 1) stop = n;  // never leave a single-row batch
      const Eigen::Index B = stop - start;
      Zb.resize(B, Z.cols());
      yb.resize(B);
      for (Eigen::Index i = 0; i < B; ++i) {
        Zb.row(i) = Z.row(order[static_cast<std::size_t>(start + i)]);
        yb(i) = y(order[static_cast<std::size_t>(start + i)]);
      }
      Grads g;
      BatchForward f;
      const double loss = loss_grads(m, Zb, yb, &g, &f);
      if (!std::isfinite(loss) || loss > 1e6) {
        throw Error(Errc::NonFinite, "fit_dnn diverged (loss " + std::to_string(loss) + ")");
      }
      epoch_loss += loss * static_cast<double>(B);
      // running statistics use the unbiased batch variance
      const double unbias = static_cast<double>(B) / static_cast<double>(B - 1);
      m.running_mean = (1.0 - DnnModel::kBnMomentum) * m.running_mean + DnnModel::kBnMomentum * f.mu.transpose();
      m.running_var = (1.0 - DnnModel::kBnMomentum) * m.running_var +
                      DnnModel::kBnMomentum * unbias * f.var.transpose();

      ++step;
      const double bc1 = 1.0 - std::pow(0.9, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(0.999, static_cast<double>(step));
      adam_step(m.W1, g.W1, sW1, lr, bc1, bc2);
      adam_step(m.b1, g.b1, sb1, lr, bc1, bc2);
      adam_step(m.gamma, g.gamma, sg, lr, bc1, bc2);
      adam_step(m.beta, g.beta, sb, lr, bc1, bc2);
      adam_step(m.w2, g.w2, sw2, lr, bc1, bc2);
      Vector b2v(1), gb2(1);
      b2v(0) = m.b2;
      gb2(0) = g.b2;
      adam_step(b2v, gb2, sb2, lr, bc1, bc2);
      m.b2 = b2v(0);
      start = stop;
    }
    m.final_loss = epoch_loss / static_cast<double>(n);
  }
  return m;
}

Vector predict(const DnnModel& m, const Matrix& X) {
  if (X.cols() != m.input_dim()) {
    throw Error(Errc::DimensionMismatch, "dnn expects " + std::to_string(m.input_dim()) +
                                             " features, got " + std::to_string(X.cols()));
  }
  return m.forward_eval(m.scaler.apply(X));
}

}  // namespace cogload
