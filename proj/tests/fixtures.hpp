#pragma once

// Shared test fixtures: random window tensors and small trained pipelines.

#include <limits>
#include <random>
#include <vector>

#include "cogload/pipeline.hpp"

namespace fixtures {

using namespace cogload;

inline WindowTensor random_windows(std::size_t channels, std::uint64_t seed, double amp = 20.0) {
  WindowTensor w;
  w.n_channels = channels;
  w.data.resize(kNumWindows * channels * kWindowSamples);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd(0.0f, static_cast<float>(amp));
  for (auto& x : w.data) x = nd(rng);
  return w;
}

// Small trained pipeline on random windows with random targets.
inline TrainedPipeline small_pipeline(EstimatorKind kind, const Montage& mont, TemporalMode temporal = TemporalMode::Global) {
  PipelineConfig cfg;
  cfg.provider.kind = "toy";
  cfg.provider.seed = 3;
  cfg.temporal = temporal;
  cfg.estimator = kind;
  cfg.dnn.hidden = 8;
  cfg.dnn.epochs = 5;
  cfg.svr.gamma = std::numeric_limits<double>::quiet_NaN();
  FeatureExtractor fx(make_provider(cfg.provider), mont, cfg.spatial, cfg.temporal);
  const std::size_t n = 12;
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < n; ++i) rows.push_back(fx(random_windows(mont.size(), 100 + i)));
  Matrix X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  Vector y(static_cast<Eigen::Index>(n));
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd(5.0, 2.0);
  for (auto& v : y) v = nd(rng);
  const double hyper = kind == EstimatorKind::Linear ? 0.01 : kind == EstimatorKind::Dnn ? 1e-3 : 1.0;
  return train_pipeline(cfg, mont, hyper, X, y);
}

}  // namespace fixtures
