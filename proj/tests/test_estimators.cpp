#include <doctest.h>

#include <algorithm>

#include "cogload/estimators.hpp"
#include "cogload/rng.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace cogload;
using testutil::error_code_of;

using namespace oracles;

TEST_CASE("pearson and mse examples") {
  const std::vector<double> a{1, 2, 3}, b{2, 4, 6}, c{3, 2, 1};
  CHECK(pearson(a, b) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pearson(a, c) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(pearson(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 3, 2, 4}) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(error_code_of([] { pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}); }) == Errc::ConstantInput);
  CHECK(error_code_of([] { pearson(std::vector<double>{1, 2, 3}, std::vector<double>{5, 5, 5}); }) == Errc::ConstantInput);
  CHECK(mse(a, a) == 0.0);
  CHECK(mse(std::vector<double>{0, 0}, std::vector<double>{1, 1}) == 1.0);
  CHECK(mse(std::vector<double>{0, 2}, std::vector<double>{1, 1}) == 1.0);
}

TEST_CASE("lasso without penalty equals least squares") {
  Rng rng(1);
  const Matrix X = random_matrix(50, 20, rng);
  const Vector y = planted_target(X, rng, 0.3);
  const LinearModel m = fit_lasso(X, y, 0.0);

  // normal equations on [1, Z]
  const Matrix Z = zscore(X);
  Matrix A(50, 21);
  A.col(0).setOnes();
  A.rightCols(20) = Z;
  const Vector sol = (A.transpose() * A).ldlt().solve(A.transpose() * y);
  const Vector w_ref = sol.tail(20);
  CHECK((m.w - w_ref).norm() / w_ref.norm() <= 1e-6);
  CHECK(m.b == doctest::Approx(sol(0)).epsilon(1e-6));
  CHECK(m.sweeps < 10000);
}

TEST_CASE("lasso on y = 3 x1") {
  Rng rng(2);
  const Matrix X = random_matrix(40, 5, rng);
  const Vector y = 3.0 * X.col(1);
  const LinearModel m = fit_lasso(X, y, 0.0);
  const double sd = std::sqrt((X.col(1).array() - X.col(1).mean()).square().mean());
  CHECK(m.w(1) == doctest::Approx(3.0 * sd).epsilon(1e-8));
  for (Eigen::Index j : {0, 2, 3, 4}) CHECK(std::abs(m.w(j)) <= 1e-8);
  // the same fit expressed in raw units
  CHECK((predict(m, X) - y).cwiseAbs().maxCoeff() <= 1e-7);
}

TEST_CASE("lasso above lambda_max is exactly zero") {
  Rng rng(3);
  const Matrix X = random_matrix(30, 8, rng);
  const Vector y = planted_target(X, rng, 1.0);
  const Matrix Z = zscore(X);
  const Vector yc = y.array() - y.mean();
  const double lambda_max = (Z.transpose() * yc).cwiseAbs().maxCoeff() / 30.0;
  for (double lambda : {lambda_max * 1.0001, lambda_max * 3.0}) {
    const LinearModel m = fit_lasso(X, y, lambda);
    CHECK(m.w.isZero(0.0));
    CHECK(m.b == y.mean());
    const Vector p = predict(m, X);
    for (Eigen::Index i = 0; i < p.size(); ++i) CHECK(p(i) == doctest::Approx(y.mean()).epsilon(1e-12));
  }
}

TEST_CASE("lasso KKT conditions and monotone shrinkage") {
  Rng rng(4);
  const Matrix X = random_matrix(60, 25, rng);
  const Vector y = planted_target(X, rng, 0.5);
  double prev_l1 = std::numeric_limits<double>::infinity();
  for (double lambda : {0.0, 0.05, 0.1, 0.5, 1.0}) {
    CAPTURE(lambda);
    const LinearModel m = fit_lasso(X, y, lambda);
    const Vector g = smooth_grad(m, X, y);
    for (Eigen::Index j = 0; j < m.w.size(); ++j) {
      if (m.w(j) != 0.0) {
        CHECK(std::abs(g(j) + lambda * (m.w(j) > 0 ? 1.0 : -1.0)) <= 1e-5);
      } else {
        CHECK(std::abs(g(j)) <= lambda + 1e-5);
      }
    }
    const double l1 = m.w.lpNorm<1>();
    CHECK(l1 <= prev_l1 + 1e-12);
    prev_l1 = l1;
    if (lambda > 0.0) CHECK((m.w.array() == 0.0).count() > 0);
  }
}

TEST_CASE("lasso input validation") {
  Rng rng(5);
  Matrix X = random_matrix(10, 3, rng);
  Vector y = Vector::LinSpaced(10, 0.0, 1.0);
  CHECK(error_code_of([&] { fit_lasso(X.topRows(1), y.head(1), 0.0); }) == Errc::InvalidArgument);
  CHECK(error_code_of([&] { fit_lasso(X, y, -1.0); }) == Errc::InvalidArgument);
  X(2, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK(error_code_of([&] { fit_lasso(X, y, 0.0); }) == Errc::NonFinite);

  // constant target is not an error
  const LinearModel m = fit_lasso(random_matrix(10, 3, rng), Vector::Constant(10, 4.0), 0.0);
  CHECK(m.w.isZero(0.0));
  CHECK(m.b == 4.0);
}

TEST_CASE("dnn gradients agree with central differences") {
  Rng rng(6);
  const Matrix Z = zscore(random_matrix(16, 20, rng));  // the network sees standardized rows
  const Vector y = planted_target(Z, rng, 0.1);
  DnnConfig cfg;
  cfg.hidden = 8;
  int points = 0;
  for (std::uint64_t seed = 1; points < 5 && seed < 200; ++seed) {
    cfg.seed = seed;
    DnnModel m(20, cfg);
    // every parameter, batch-norm affine ones included, drawn from N(0, 1)
    Vector theta = m.flat_params();
    Rng prng(seed * 31);
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta(i) = prng.normal();
    m.set_flat_params(theta);
    if (m.min_abs_preactivation(Z) < 0.02) continue;  // stay clear of the ReLU kink
    ++points;

    Vector grad;
    m.loss_and_grad(Z, y, &grad);
    REQUIRE(grad.size() == theta.size());
    double worst = 0.0;
    const double h = 1e-3;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      Vector tp = theta, tm = theta;
      tp(i) += h;
      tm(i) -= h;
      m.set_flat_params(tp);
      const double fp = m.loss_and_grad(Z, y, nullptr);
      m.set_flat_params(tm);
      const double fm = m.loss_and_grad(Z, y, nullptr);
      const double fd = (fp - fm) / (2.0 * h);
      const double denom = std::max({std::abs(fd), std::abs(grad(i)), 1e-6});
      worst = std::max(worst, std::abs(fd - grad(i)) / denom);
    }
    m.set_flat_params(theta);
    CAPTURE(seed);
    CHECK(worst <= 1e-4);
  }
  CHECK(points == 5);
}

TEST_CASE("dnn zero fixed point, determinism and a fit of planted data") {
  Rng rng(7);
  const Matrix X = random_matrix(200, 10, rng);
  DnnConfig cfg;
  cfg.hidden = 32;
  cfg.epochs = 5;
  cfg.seed = 3;

  SUBCASE("zero init on a zero target") {
    cfg.zero_init = true;
    const DnnModel m = fit_dnn(X, Vector::Zero(200), cfg);
    CHECK(m.final_loss == 0.0);
    CHECK(m.W1.isZero(0.0));
    CHECK(m.w2.isZero(0.0));
    CHECK(predict(m, X).isZero(0.0));
  }
  SUBCASE("identical seeds give identical weights") {
    const Vector y = planted_target(X, rng, 0.1);
    const DnnModel a = fit_dnn(X, y, cfg);
    const DnnModel b = fit_dnn(X, y, cfg);
    CHECK(a.flat_params() == b.flat_params());
    CHECK(a.running_mean == b.running_mean);
    cfg.seed = 4;
    CHECK(fit_dnn(X, y, cfg).flat_params() != a.flat_params());
  }
  SUBCASE("planted linear data, 200 epochs") {
    const Vector y = planted_target(X, rng, 0.1);
    cfg.epochs = 200;
    cfg.lr = 5e-4;
    const DnnModel m = fit_dnn(X, y, cfg);
    const Vector p = predict(m, X);
    const double var = (y.array() - y.mean()).square().mean();
    CHECK(mse(as_span(p), as_span(y)) < var / 10.0);
  }
  SUBCASE("validation") {
    cfg.batch_size = 1;
    CHECK(error_code_of([&] { fit_dnn(X, Vector::Zero(200), cfg); }) == Errc::InvalidConfig);
    cfg.batch_size = 32;
    CHECK(error_code_of([&] { fit_dnn(X, Vector::Zero(199), cfg); }) == Errc::DimensionMismatch);
    cfg.lr = 1e6;
    cfg.epochs = 50;
    const Vector y = planted_target(X, rng, 0.1) * 1e4;
    CHECK(error_code_of([&] { fit_dnn(X, y, cfg); }) == Errc::NonFinite);
  }
}

TEST_CASE("svr dual objective matches a projected-gradient QP") {
  for (std::uint64_t seed : {8u, 9u}) {
    CAPTURE(seed);
    Rng rng(seed);
    const Matrix X = random_matrix(100, 3, rng);
    Vector y(100);
    for (Eigen::Index i = 0; i < 100; ++i) y(i) = std::sin(X(i, 0)) + 0.2 * X(i, 1) + 0.2 * rng.normal();
    const SvrModel m = fit_svr(X, y);
    const Matrix K = rbf(zscore(X), m.gamma);
    CHECK(m.gamma == doctest::Approx(1.0 / 3.0).epsilon(1e-9));  // unit-variance inputs, d = 3

    const Vector beta = full_coef(m, 100);
    const double own = 0.5 * beta.dot(K * beta) - y.dot(beta) + 0.1 * beta.lpNorm<1>();
    CHECK(m.dual_objective == doctest::Approx(own).epsilon(1e-9));
    const double ref = svr_dual_oracle(K, y, 1.0, 0.1);
    CHECK(std::abs(own - ref) <= 1e-3);

    // feasibility
    CHECK(std::abs(beta.sum()) <= 1e-6);
    CHECK(beta.cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
    for (auto idx : m.support_index) CHECK(idx < 100);
  }
}

TEST_CASE("svr regression behaviour") {
  SUBCASE("constant target") {
    Rng rng(10);
    const Matrix X = random_matrix(30, 4, rng);
    const SvrModel m = fit_svr(X, Vector::Constant(30, 2.5));
    CHECK(m.coef.size() == 0);
    CHECK(m.bias == doctest::Approx(2.5).epsilon(1e-12));
    const Vector p = predict(m, random_matrix(7, 4, rng));
    for (Eigen::Index i = 0; i < 7; ++i) CHECK(p(i) == doctest::Approx(2.5).epsilon(1e-12));
  }
  SUBCASE("1-D sine") {
    Rng rng(11);
    Matrix X(100, 1);
    Vector y(100);
    for (Eigen::Index i = 0; i < 100; ++i) {
      X(i, 0) = rng.uniform(-3.0, 3.0);
      y(i) = std::sin(X(i, 0));
    }
    const SvrModel m = fit_svr(X, y);
    Matrix T(200, 1);
    Vector truth(200);
    for (Eigen::Index i = 0; i < 200; ++i) {
      T(i, 0) = -2.9 + 5.8 * static_cast<double>(i) / 199.0;
      truth(i) = std::sin(T(i, 0));
    }
    const Vector p = predict(m, T);
    CHECK(mse(as_span(p), as_span(truth)) < 0.05);

    const Vector fit = predict(m, X);
    const auto within = ((fit - y).cwiseAbs().array() <= 0.1 + 0.05).count();
    CHECK(within >= 90);
  }
}

TEST_CASE("predict contracts") {
  Rng rng(12);
  const Matrix X = random_matrix(40, 6, rng);
  const Vector y = planted_target(X, rng, 0.2);

  LinearModel flat;
  flat.scaler = Standardizer::fit(X);
  flat.w = Vector::Zero(6);
  flat.b = 1.75;
  CHECK(predict(flat, X).isApproxToConstant(1.75, 0.0));

  DnnConfig dc;
  dc.hidden = 16;
  dc.epochs = 3;
  const std::vector<Model> models{fit_lasso(X, y, 0.1), fit_dnn(X, y, dc), fit_svr(X, y)};
  Matrix same(3, 6);
  for (int i = 0; i < 3; ++i) same.row(i) = X.row(5);
  for (const auto& m : models) {
    CAPTURE(static_cast<int>(kind_of(m)));
    const Vector p = predict(m, same);
    CHECK(p(0) == p(1));
    CHECK(p(1) == p(2));
    CHECK(predict(m, X) == predict(m, X));
    CHECK(input_dim(m) == 6);
    CHECK(error_code_of([&] { predict(m, Matrix::Zero(2, 5)); }) == Errc::DimensionMismatch);
  }
}

TEST_CASE("predictions do not depend on feature scale") {
  Rng rng(13);
  const Matrix X = random_matrix(60, 5, rng);
  const Vector y = planted_target(X, rng, 0.3);
  Matrix X10 = X;
  X10.col(2) *= 10.0;
  const Matrix T = random_matrix(10, 5, rng);
  Matrix T10 = T;
  T10.col(2) *= 10.0;

  CHECK((predict(fit_lasso(X, y, 0.5), T) - predict(fit_lasso(X10, y, 0.5), T10)).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK((predict(fit_svr(X, y), T) - predict(fit_svr(X10, y), T10)).cwiseAbs().maxCoeff() <= 1e-6);
  DnnConfig dc;
  dc.hidden = 16;
  dc.epochs = 10;
  CHECK((predict(fit_dnn(X, y, dc), T) - predict(fit_dnn(X10, y, dc), T10)).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("MDL1 round trip and corruption") {
  testutil::TempDir dir("mdl1");
  Rng rng(14);
  const Matrix X = random_matrix(30, 4, rng);
  const Vector y = planted_target(X, rng, 0.2);
  DnnConfig dc;
  dc.hidden = 8;
  dc.epochs = 3;
  const std::vector<Model> models{fit_lasso(X, y, 0.5), fit_dnn(X, y, dc), fit_svr(X, y)};
  for (std::size_t i = 0; i < models.size(); ++i) {
    const std::string path = dir / ("m" + std::to_string(i) + ".mdl");
    save_model(models[i], path);
    const Model back = load_model(path);
    CHECK(kind_of(back) == kind_of(models[i]));
    CHECK(predict(back, X) == predict(models[i], X));
    CHECK(encode_model(back) == encode_model(models[i]));

    auto bytes = encode_model(models[i]);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "MDL1");
    auto flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x40;
    CHECK(error_code_of([&] { decode_model(flipped, "flipped"); }) == Errc::Format);
    auto cut = bytes;
    cut.resize(bytes.size() - 5);
    CHECK(error_code_of([&] { decode_model(cut, "cut"); }) == Errc::Format);
    auto magic = bytes;
    magic[0] = 'X';
    CHECK(error_code_of([&] { decode_model(magic, "magic"); }) == Errc::Format);
  }
  CHECK(error_code_of([&] { load_model(dir / "absent.mdl"); }) == Errc::Io);
}

TEST_CASE("estimator names") {
  CHECK(parse_estimator("linear") == EstimatorKind::Linear);
  CHECK(parse_estimator(to_string(EstimatorKind::Dnn)) == EstimatorKind::Dnn);
  CHECK(parse_estimator(to_string(EstimatorKind::Svm)) == EstimatorKind::Svm);
  CHECK(error_code_of([] { parse_estimator("lstm"); }) == Errc::InvalidConfig);
}
