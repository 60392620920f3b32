#include "cogload/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>

#include "cogload/error.hpp"

namespace cogload {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

bool in_grid(double v, const std::vector<double>& grid) {
  return std::find(grid.begin(), grid.end(), v) != grid.end();
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used == s.size()) return v;
  } catch (const std::logic_error&) {
  }
  throw Error(Errc::InvalidConfig, "bad " + what + " '" + s + "'");
}

ojson montage_json(const Montage& m) {
  ojson doc;
  doc["name"] = m.name();
  ojson list = ojson::array();
  for (const auto& e : m.electrodes()) list.push_back({{"name", e.name}, {"x", e.pos.x}, {"y", e.pos.y}});
  doc["electrodes"] = std::move(list);
  return doc;
}

Montage montage_from_json(const json& doc) {
  std::vector<std::pair<std::string, Vec2>> sites;
  for (const auto& e : doc.at("electrodes")) {
    sites.emplace_back(e.at("name").get<std::string>(), Vec2{e.at("x").get<double>(), e.at("y").get<double>()});
  }
  return Montage(doc.at("name").get<std::string>(), std::move(sites));
}

}  // namespace

ProviderSpec ProviderSpec::parse(const std::string& s, std::uint64_t default_seed) {
  ProviderSpec p;
  const auto colon = s.find(':');
  p.kind = s.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : s.substr(colon + 1);
  if (p.kind == "toy") {
    p.seed = rest.empty() ? default_seed : parse_u64(rest, "toy provider seed");
  } else if (p.kind == "precomputed" || p.kind == "external") {
    if (rest.empty()) throw Error(Errc::InvalidConfig, "provider '" + p.kind + "' needs a target after ':'");
    p.target = rest;
  } else {
    throw Error(Errc::InvalidConfig, "unknown provider '" + s + "' (toy[:seed], precomputed:<file>, external:<endpoint>)");
  }
  return p;
}

std::string ProviderSpec::str() const {
  if (kind == "toy") return "toy:" + std::to_string(seed);
  return kind + ":" + target;
}

std::shared_ptr<EmbeddingProvider> make_provider(const ProviderSpec& spec) {
  if (spec.kind == "toy") return toy_spectral_provider(spec.seed);
  if (spec.kind == "precomputed") return precomputed_provider(spec.target);
  if (spec.kind == "external") return external_provider(spec.target, spec.timeout_s);
  throw Error(Errc::InvalidConfig, "unknown provider kind '" + spec.kind + "'");
}

std::vector<double> PipelineConfig::default_grid(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::Linear: return {0.0, 0.5, 1.0};
    case EstimatorKind::Dnn: return {5e-4, 1e-4, 5e-5, 1e-5};
    case EstimatorKind::Svm: return {1.0};
  }
  return {};
}

void PipelineConfig::finalize() {
  if (grid.empty()) grid = estimator == EstimatorKind::Svm ? std::vector<double>{svr.C} : default_grid(estimator);
  validate();
}

void PipelineConfig::validate() const {
  if (grid.empty()) throw Error(Errc::InvalidConfig, "empty hyperparameter grid");
  for (double g : grid) {
    if (!std::isfinite(g)) throw Error(Errc::InvalidConfig, "non-finite grid value");
    if (estimator == EstimatorKind::Linear && g < 0.0) throw Error(Errc::InvalidConfig, "lambda must be >= 0");
    if (estimator != EstimatorKind::Linear && g <= 0.0) throw Error(Errc::InvalidConfig, "grid values must be > 0");
  }
  if (!allow_grid_override) {
    const auto allowed = estimator == EstimatorKind::Svm ? std::vector<double>{svr.C} : default_grid(estimator);
    for (double g : grid) {
      if (!in_grid(g, allowed)) {
        throw Error(Errc::InvalidConfig, "grid value " + format_double(g) + " is outside the " +
                                             std::string(to_string(estimator)) + " grid (use --allow-grid-override)");
      }
    }
  }
  if (!valid_cohort(eval_cohort)) throw Error(Errc::InvalidConfig, "eval cohort must be one of A..E");
  if (parallelism < 1) throw Error(Errc::InvalidConfig, "parallelism must be >= 1");
  if (dnn.epochs < 1 || dnn.batch_size < 2 || dnn.hidden < 1) {
    throw Error(Errc::InvalidConfig, "dnn needs epochs >= 1, batch_size >= 2, hidden >= 1");
  }
  if (!(svr.C > 0.0) || !(svr.epsilon >= 0.0)) throw Error(Errc::InvalidConfig, "svr needs C > 0 and epsilon >= 0");
}

ojson to_json(const PipelineConfig& cfg) {
  ojson doc;
  doc["provider"] = cfg.provider.str();
  doc["spatial"] = std::string(to_string(cfg.spatial));
  doc["temporal"] = std::string(to_string(cfg.temporal));
  doc["estimator"] = std::string(to_string(cfg.estimator));
  doc["grid"] = cfg.grid;
  doc["allow_grid_override"] = cfg.allow_grid_override;
  doc["seed"] = cfg.seed;
  doc["eval_cohort"] = std::string(1, cfg.eval_cohort);
  doc["standardize_target"] = cfg.standardize_target;
  doc["dnn"] = {{"epochs", cfg.dnn.epochs}, {"batch_size", cfg.dnn.batch_size}, {"hidden", cfg.dnn.hidden}};
  ojson svr = {{"C", cfg.svr.C}, {"epsilon", cfg.svr.epsilon}};
  if (std::isnan(cfg.svr.gamma)) svr["gamma"] = "scale";
  else svr["gamma"] = cfg.svr.gamma;
  svr["tol"] = cfg.svr.tol;
  svr["max_iter"] = cfg.svr.max_iter;
  doc["svr"] = std::move(svr);
  return doc;
}

PipelineConfig pipeline_config_from_json(const json& doc, PipelineConfig cfg) {
  try {
    if (doc.contains("seed")) cfg.seed = doc.at("seed").get<std::uint64_t>();
    if (doc.contains("provider")) cfg.provider = ProviderSpec::parse(doc.at("provider").get<std::string>(), cfg.seed);
    if (doc.contains("spatial")) cfg.spatial = parse_spatial(doc.at("spatial").get<std::string>());
    if (doc.contains("temporal")) cfg.temporal = parse_temporal(doc.at("temporal").get<std::string>());
    if (doc.contains("estimator")) cfg.estimator = parse_estimator(doc.at("estimator").get<std::string>());
    if (doc.contains("grid")) cfg.grid = doc.at("grid").get<std::vector<double>>();
    if (doc.contains("allow_grid_override")) cfg.allow_grid_override = doc.at("allow_grid_override").get<bool>();
    if (doc.contains("eval_cohort")) {
      const auto c = doc.at("eval_cohort").get<std::string>();
      if (c.size() != 1) throw Error(Errc::InvalidConfig, "eval_cohort must be a single letter");
      cfg.eval_cohort = c[0];
    }
    if (doc.contains("standardize_target")) cfg.standardize_target = doc.at("standardize_target").get<bool>();
    if (doc.contains("parallelism")) cfg.parallelism = doc.at("parallelism").get<std::size_t>();
    if (doc.contains("dnn")) {
      const auto& d = doc.at("dnn");
      cfg.dnn.epochs = d.value("epochs", cfg.dnn.epochs);
      cfg.dnn.batch_size = d.value("batch_size", cfg.dnn.batch_size);
      cfg.dnn.hidden = d.value("hidden", cfg.dnn.hidden);
    }
    if (doc.contains("svr")) {
      const auto& s = doc.at("svr");
      cfg.svr.C = s.value("C", cfg.svr.C);
      cfg.svr.epsilon = s.value("epsilon", cfg.svr.epsilon);
      if (s.contains("gamma")) {
        const auto& g = s.at("gamma");
        cfg.svr.gamma = g.is_string() ? std::numeric_limits<double>::quiet_NaN() : g.get<double>();
      }
      cfg.svr.tol = s.value("tol", cfg.svr.tol);
      cfg.svr.max_iter = s.value("max_iter", cfg.svr.max_iter);
    }
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("pipeline config: ") + e.what());
  }
  return cfg;
}

FeatureExtractor::FeatureExtractor(std::shared_ptr<EmbeddingProvider> provider, const Montage& montage,
                                   SpatialMode spatial, TemporalMode temporal)
    : provider_(std::move(provider)), montage_(montage), spatial_(spatial), temporal_(temporal) {}

std::vector<double> FeatureExtractor::from_embeddings(const FeatureTensor& h) const {
  return pool_temporal(pool_spatial(h, montage_, spatial_), temporal_).data;
}

FeatureTensor assemble_history(const std::vector<std::vector<float>>& windows, std::size_t n_channels) {
  if (windows.empty()) throw Error(Errc::InvalidArgument, "history needs at least one window");
  const std::size_t per = n_channels * kEmbedDim;
  const std::size_t k = std::min(windows.size(), kNumWindows);
  const std::size_t first = windows.size() - k;
  FeatureTensor h;
  h.n_channels = n_channels;
  h.data.resize(kNumWindows * per);
  for (std::size_t slot = 0; slot < kNumWindows; ++slot) {
    const std::size_t src = slot + k < kNumWindows ? first : first + slot + k - kNumWindows;
    if (windows[src].size() != per) throw Error(Errc::DimensionMismatch, "window embedding size");
    std::copy(windows[src].begin(), windows[src].end(), h.data.begin() + static_cast<std::ptrdiff_t>(slot * per));
  }
  return h;
}

std::vector<float> window_embedding(const FeatureTensor& h, std::size_t t) {
  const std::size_t per = h.n_channels * kEmbedDim;
  return {h.data.begin() + static_cast<std::ptrdiff_t>(t * per),
          h.data.begin() + static_cast<std::ptrdiff_t>((t + 1) * per)};
}

TargetScaler TargetScaler::fit(const Vector& y, bool enabled) {
  TargetScaler s;
  if (!enabled || y.size() == 0) return s;
  s.mean = y.mean();
  const double var = (y.array() - s.mean).square().mean();
  s.std = var > 0.0 ? std::sqrt(var) : 1.0;
  return s;
}

Model fit_model(const PipelineConfig& cfg, double hyper, const Matrix& X, const Vector& y) {
  switch (cfg.estimator) {
    case EstimatorKind::Linear: return fit_lasso(X, y, hyper);
    case EstimatorKind::Dnn: {
      DnnConfig d = cfg.dnn;
      d.lr = hyper;
      d.seed = cfg.seed;
      return fit_dnn(X, y, d);
    }
    case EstimatorKind::Svm: {
      SvrConfig s = cfg.svr;
      s.C = hyper;
      return fit_svr(X, y, s);
    }
  }
  throw Error(Errc::InvalidConfig, "unknown estimator");
}

Vector TrainedPipeline::predict_features(const Matrix& X) const { return target.invert(cogload::predict(model, X)); }

double TrainedPipeline::predict_embeddings(const FeatureTensor& h) const {
  const auto row = extractor->from_embeddings(h);
  const Matrix X = Eigen::Map<const Matrix>(row.data(), 1, static_cast<Eigen::Index>(row.size()));
  return predict_features(X)(0);
}

double TrainedPipeline::predict(const WindowTensor& w) const { return predict_embeddings(extractor->embed(w)); }

TrainedPipeline train_pipeline(const PipelineConfig& cfg, const Montage& montage, double hyper, const Matrix& X,
                               const Vector& y) {
  TrainedPipeline p;
  p.config = cfg;
  p.montage = montage;
  p.hyperparameter = hyper;
  p.target = TargetScaler::fit(y, cfg.standardize_target);
  p.model = fit_model(cfg, hyper, X, p.target.apply(y));
  p.extractor = std::make_shared<FeatureExtractor>(make_provider(cfg.provider), montage, cfg.spatial, cfg.temporal);
  return p;
}

void save_pipeline(const TrainedPipeline& p, const std::string& path) {
  save_model(p.model, path);
  ojson doc;
  doc["config"] = to_json(p.config);
  doc["hyperparameter"] = p.hyperparameter;
  doc["target"] = {{"mean", p.target.mean}, {"std", p.target.std}};
  doc["montage"] = montage_json(p.montage);
  std::ofstream out(path + ".json", std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path + ".json");
  out << doc.dump(2) << '\n';
  if (!out) throw Error(Errc::Io, "write failed for " + path + ".json");
}

TrainedPipeline load_pipeline(const std::string& path) {
  TrainedPipeline p;
  p.model = load_model(path);
  const std::string side = path + ".json";
  std::ifstream in(side);
  if (!in) throw Error(Errc::Io, "cannot open model sidecar " + side);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw format_error(side, e.byte, e.what());
  }
  try {
    p.config = pipeline_config_from_json(doc.at("config"));
    p.hyperparameter = doc.at("hyperparameter").get<double>();
    p.target.mean = doc.at("target").at("mean").get<double>();
    p.target.std = doc.at("target").at("std").get<double>();
    p.montage = montage_from_json(doc.at("montage"));
  } catch (const json::exception& e) {
    throw format_error(side, 0, e.what());
  }
  if (kind_of(p.model) != p.config.estimator) throw format_error(side, 0, "estimator kind differs from the model file");
  p.extractor = std::make_shared<FeatureExtractor>(make_provider(p.config.provider), p.montage, p.config.spatial,
                                                   p.config.temporal);
  return p;
}

double masked_prediction(const TrainedPipeline& p, const WindowTensor& w, Coalition on, Baseline baseline) {
  MaskSpec spec;
  spec.baseline = baseline;
  for (std::size_t c = 0; c < w.n_channels; ++c)
    if ((on & (Coalition{1} << c)) == 0) spec.off_set.push_back(c);
  return p.predict(mask_apply(w, spec));
}

ValueFunction make_value_function(const TrainedPipeline& p, const WindowTensor& w, Baseline baseline) {
  const std::size_t n = w.n_channels;
  if (n != p.montage.size()) throw Error(Errc::DimensionMismatch, "window tensor and montage channel counts differ");
  if (n > 64) throw Error(Errc::BudgetExceeded, "attribution supports at most 64 channels");
  if (!p.extractor->provider().channelwise()) {
    throw Error(Errc::InvalidConfig, "provider " + p.extractor->provider().id() +
                                         " cannot embed masked signals; attribution needs a per-channel encoder");
  }
  MaskSpec all_off{{}, baseline};
  for (std::size_t c = 0; c < n; ++c) all_off.off_set.push_back(c);

  struct State {
    FeatureTensor original, masked;
    std::array<Coalition, kNumRegions> region_mask{};
    std::map<std::pair<std::size_t, Coalition>, std::vector<double>> blocks;
    std::mutex mu;
  };
  auto st = std::make_shared<State>();
  st->original = p.extractor->embed(w);
  st->masked = p.extractor->embed(mask_apply(w, all_off));
  for (std::size_t r = 0; r < kNumRegions; ++r)
    for (std::size_t c : p.montage.regions()[r]) st->region_mask[r] |= Coalition{1} << c;

  // Spatial pooling of region r only depends on the region's own channels.
  auto block = [st, &montage = p.extractor->montage(), mode = p.config.spatial](std::size_t r, Coalition on)
      -> const std::vector<double>& {
    const Coalition key = on & st->region_mask[r];
    std::lock_guard lock(st->mu);
    auto it = st->blocks.find({r, key});
    if (it != st->blocks.end()) return it->second;
    FeatureTensor mixed = st->original;
    for (std::size_t c : montage.regions()[r]) {
      if (key & (Coalition{1} << c)) continue;
      for (std::size_t t = 0; t < kNumWindows; ++t) {
        const auto src = st->masked.at(t, c);
        std::copy(src.begin(), src.end(), mixed.at(t, c).begin());
      }
    }
    const PooledTensor pooled = pool_spatial(mixed, montage, mode);
    std::vector<double> out(kNumWindows * kEmbedDim);
    for (std::size_t t = 0; t < kNumWindows; ++t) {
      const auto src = pooled.at(t, r);
      std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(t * kEmbedDim));
    }
    return st->blocks.emplace(std::make_pair(r, key), std::move(out)).first->second;
  };

  // Linear head on a linear temporal pooling: the prediction is a sum of
  // per-region terms, so each (region, mask) reduces to one cached scalar.
  const auto* lin = std::get_if<LinearModel>(&p.model);
  if (lin != nullptr && p.config.temporal != TemporalMode::MeanStd) {
    const Vector v = lin->w.array() / lin->scaler.std.array();
    const double b0 = lin->b - lin->scaler.mean.dot(v);
    auto terms = std::make_shared<std::map<std::pair<std::size_t, Coalition>, double>>();
    auto term = [st, terms, block, v, &p](std::size_t r, Coalition on) {
      const Coalition key = on & st->region_mask[r];
      {
        std::lock_guard lock(st->mu);
        if (auto it = terms->find({r, key}); it != terms->end()) return it->second;
      }
      PooledTensor only_r;
      only_r.mode = p.config.spatial;
      only_r.data.assign(kNumWindows * kNumRegions * kEmbedDim, 0.0);
      const auto& b = block(r, on);
      for (std::size_t t = 0; t < kNumWindows; ++t) {
        std::copy_n(b.begin() + static_cast<std::ptrdiff_t>(t * kEmbedDim), kEmbedDim,
                    only_r.data.begin() + static_cast<std::ptrdiff_t>((t * kNumRegions + r) * kEmbedDim));
      }
      const auto row = pool_temporal(only_r, p.config.temporal).data;
      const double c = Eigen::Map<const Vector>(row.data(), static_cast<Eigen::Index>(row.size())).dot(v);
      std::lock_guard lock(st->mu);
      return terms->emplace(std::make_pair(r, key), c).first->second;
    };
    auto eval = [b0, term, target = p.target](std::span<const Coalition> coalitions, std::span<double> values) {
      for (std::size_t i = 0; i < coalitions.size(); ++i) {
        double z = b0;
        for (std::size_t r = 0; r < kNumRegions; ++r) z += term(r, coalitions[i]);
        values[i] = z * target.std + target.mean;
      }
    };
    return ValueFunction(n, eval, 256);
  }

  auto eval = [&p, st, block](std::span<const Coalition> coalitions, std::span<double> values) {
    const std::size_t len = feature_length(p.config.temporal);
    Matrix X(static_cast<Eigen::Index>(coalitions.size()), static_cast<Eigen::Index>(len));
    PooledTensor pooled;
    pooled.mode = p.config.spatial;
    pooled.data.resize(kNumWindows * kNumRegions * kEmbedDim);
    for (std::size_t i = 0; i < coalitions.size(); ++i) {
      for (std::size_t r = 0; r < kNumRegions; ++r) {
        const auto& b = block(r, coalitions[i]);
        for (std::size_t t = 0; t < kNumWindows; ++t) {
          std::copy_n(b.begin() + static_cast<std::ptrdiff_t>(t * kEmbedDim), kEmbedDim,
                      pooled.data.begin() + static_cast<std::ptrdiff_t>((t * kNumRegions + r) * kEmbedDim));
        }
      }
      const auto row = pool_temporal(pooled, p.config.temporal).data;
      for (std::size_t j = 0; j < len; ++j) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
    const Vector pred = p.predict_features(X);
    for (std::size_t i = 0; i < coalitions.size(); ++i) values[i] = pred(static_cast<Eigen::Index>(i));
  };
  // keep one batch matrix around 4 MB
  const std::size_t batch = std::clamp<std::size_t>((std::size_t{1} << 19) / feature_length(p.config.temporal), 8, 256);
  return ValueFunction(n, eval, batch);
}

AttributionResult explain_window_tensor(const TrainedPipeline& p, const WindowTensor& w, const ExplainConfig& cfg) {
  ValueFunction v = make_value_function(p, w, cfg.baseline);
  const auto tree = PartitionTree::from_montage(p.montage);
  return cfg.exact ? owen_exact(v, tree) : owen_sampled(v, tree, cfg.n_perm, cfg.seed);
}

}  // namespace cogload
