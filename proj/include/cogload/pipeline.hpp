#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogload/dataset.hpp"
#include "cogload/estimators.hpp"
#include "cogload/explain.hpp"
#include "cogload/features.hpp"

namespace cogload {

// "toy[:seed]", "precomputed:<emb1 path>" or "external:<endpoint>".
struct ProviderSpec {
  std::string kind{"toy"};
  std::uint64_t seed{0};
  std::string target;  // file path or endpoint
  double timeout_s{30.0};

  static ProviderSpec parse(const std::string& s, std::uint64_t default_seed);
  std::string str() const;
};

std::shared_ptr<EmbeddingProvider> make_provider(const ProviderSpec& spec);

struct PipelineConfig {
  ProviderSpec provider;
  SpatialMode spatial{SpatialMode::GroupAvg};
  TemporalMode temporal{TemporalMode::Global};
  EstimatorKind estimator{EstimatorKind::Linear};
  // lambda values (linear) or learning rates (dnn); the svm has one fixed point.
  std::vector<double> grid;
  bool allow_grid_override{false};
  DnnConfig dnn;
  SvrConfig svr;
  std::uint64_t seed{11};
  char eval_cohort{'E'};
  // z-score the target on the training participants before fitting
  bool standardize_target{true};
  std::size_t parallelism{1};

  static std::vector<double> default_grid(EstimatorKind k);
  // Fills an empty grid with the default; throws InvalidConfig for values
  // outside the default grid unless allow_grid_override is set.
  void finalize();
  void validate() const;
};

nlohmann::ordered_json to_json(const PipelineConfig& cfg);
// Keys missing from `doc` keep the values already in `base`.
PipelineConfig pipeline_config_from_json(const nlohmann::json& doc, PipelineConfig base = {});

// window tensor -> embeddings -> spatial pooling -> temporal pooling
class FeatureExtractor {
 public:
  FeatureExtractor(std::shared_ptr<EmbeddingProvider> provider, const Montage& montage, SpatialMode spatial,
                   TemporalMode temporal);

  FeatureTensor embed(const WindowTensor& w) const { return provider_->embed_trial(w); }
  std::vector<double> from_embeddings(const FeatureTensor& h) const;
  std::vector<double> operator()(const WindowTensor& w) const { return from_embeddings(embed(w)); }

  const EmbeddingProvider& provider() const { return *provider_; }
  const std::shared_ptr<EmbeddingProvider>& provider_ptr() const { return provider_; }
  const Montage& montage() const { return montage_; }
  SpatialMode spatial() const { return spatial_; }
  TemporalMode temporal() const { return temporal_; }

 private:
  std::shared_ptr<EmbeddingProvider> provider_;
  Montage montage_;
  SpatialMode spatial_;
  TemporalMode temporal_;
};

// Builds the (10, N_E, 200) tensor used for a prediction from the per-window
// embeddings ([channel][dim] each) seen so far; only the last 10 count. With
// k < 10 windows the k windows occupy the last k slots and the earlier slots
// repeat the oldest one. With 10 windows this is the recording's own tensor.
FeatureTensor assemble_history(const std::vector<std::vector<float>>& windows, std::size_t n_channels);
std::vector<float> window_embedding(const FeatureTensor& h, std::size_t t);

struct TargetScaler {
  double mean{0.0};
  double std{1.0};

  static TargetScaler fit(const Vector& y, bool enabled);
  Vector apply(const Vector& y) const { return (y.array() - mean) / std; }
  Vector invert(const Vector& z) const { return z.array() * std + mean; }
};

// Fits one estimator at one grid value on (already target-scaled) data.
Model fit_model(const PipelineConfig& cfg, double hyper, const Matrix& X, const Vector& y);

struct TrainedPipeline {
  PipelineConfig config;
  Montage montage;
  Model model;
  TargetScaler target;
  double hyperparameter{0.0};
  std::shared_ptr<FeatureExtractor> extractor;  // rebuilt on load

  // Predictions in label units.
  Vector predict_features(const Matrix& X) const;
  double predict(const WindowTensor& w) const;
  double predict_embeddings(const FeatureTensor& h) const;
};

TrainedPipeline train_pipeline(const PipelineConfig& cfg, const Montage& montage, double hyper,
                               const Matrix& X, const Vector& y);

// <path> holds the MDL1 model, <path>.json the pipeline configuration and
// target scaling.
void save_pipeline(const TrainedPipeline& p, const std::string& path);
TrainedPipeline load_pipeline(const std::string& path);

struct ExplainConfig {
  Baseline baseline{Baseline::Zero};
  bool exact{true};
  std::size_t n_perm{200};
  std::uint64_t seed{0};
};

// v(S) = prediction with the channels outside S replaced by the baseline.
// Channelwise providers embed the original and the baseline signal once and
// mix per-channel embeddings; other providers would have to re-embed every
// masked input, which is refused (InvalidConfig). `p` must outlive the result.
ValueFunction make_value_function(const TrainedPipeline& p, const WindowTensor& w, Baseline baseline);
// The literal definition, re-running the whole pipeline on mask_apply(w, .).
double masked_prediction(const TrainedPipeline& p, const WindowTensor& w, Coalition on, Baseline baseline);

AttributionResult explain_window_tensor(const TrainedPipeline& p, const WindowTensor& w, const ExplainConfig& cfg);

}  // namespace cogload
