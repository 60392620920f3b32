#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cogload/montage.hpp"
#include "cogload/preprocess.hpp"

namespace cogload {

inline constexpr std::size_t kEmbedDim = 200;
inline constexpr std::size_t kNumPsdBands = 5;

// h in R^{N_T x N_E x N_d}, stored [window][channel][dim].
struct FeatureTensor {
  std::size_t n_channels{0};
  std::vector<float> data;
  std::string provider_id;
  Provenance provenance;

  std::span<const float> at(std::size_t t, std::size_t c) const {
    return {data.data() + (t * n_channels + c) * kEmbedDim, kEmbedDim};
  }
  std::span<float> at(std::size_t t, std::size_t c) {
    return {data.data() + (t * n_channels + c) * kEmbedDim, kEmbedDim};
  }
  bool operator==(const FeatureTensor&) const = default;
};

// Encoder contract: one-second, single-channel slices (200 samples at 200 Hz)
// map to kEmbedDim-dimensional vectors. Implementations must tolerate
// concurrent calls.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual std::string id() const = 0;
  virtual std::size_t dim() const { return kEmbedDim; }

  // `slices` holds `batch` consecutive 200-sample slices; `out` receives
  // batch * dim() values.
  virtual void embed_seconds(std::span<const float> slices, std::size_t batch,
                             std::span<float> out) const = 0;

  std::vector<float> embed_second(std::span<const float> slice) const;

  // One window, [channel][3200 samples] -> [channel][dim]: the mean of the
  // 16 disjoint one-second embeddings per channel.
  void embed_window(std::span<const float> window, std::size_t n_channels, std::span<float> out) const;

  // embed_window for each of the 10 windows.
  virtual FeatureTensor embed_trial(const WindowTensor& w) const;

  // True when the embedding of a channel depends only on that channel's
  // signal, which lets attribution reuse per-channel embeddings.
  virtual bool channelwise() const { return true; }
};

// log(1 + |rFFT|) of the 200-sample slice (101 bins) followed by a fixed
// Gaussian projection 101 -> 200 with unit-norm columns drawn from `seed`.
std::shared_ptr<EmbeddingProvider> toy_spectral_provider(std::uint64_t seed);

// Returns stored tensors from an EMB1 file, keyed by trial.
std::shared_ptr<EmbeddingProvider> precomputed_provider(const std::string& path);

// EMBRPC client. `endpoint` is "host:port" / "tcp://host:port" or
// "exec:<command>" (the command speaks the protocol on stdin/stdout).
std::shared_ptr<EmbeddingProvider> external_provider(const std::string& endpoint,
                                                     double timeout_s = 30.0);

// EMB1 container.
using EmbeddingTable = std::map<TrialKey, FeatureTensor>;
EmbeddingTable read_emb1(const std::string& path);
void write_emb1(const EmbeddingTable& table, const std::string& path);

// Welch band powers per window/channel: [window][channel][band], log10(1 + P).
// Bands: delta [0.5,4), theta [4,8), alpha [8,13), beta [13,30), gamma [30,75).
struct BandEdges {
  double lo, hi;
};
inline constexpr std::array<BandEdges, kNumPsdBands> kPsdBands = {
    {{0.5, 4.0}, {4.0, 8.0}, {8.0, 13.0}, {13.0, 30.0}, {30.0, 75.0}}};

struct WelchPsd {
  std::vector<double> freqs;
  std::vector<double> density;  // one-sided, signal_unit^2 / Hz
};
// 1-second Hann segments with 50% overlap.
WelchPsd welch_psd(std::span<const double> x, double fs);
// Power in [lo, hi), integrating each bin over [f - df/2, f + df/2).
double band_power(const WelchPsd& psd, double lo, double hi);
std::vector<double> psd_features(const WindowTensor& w);

enum class SpatialMode { GroupAvg, Intersection };
enum class TemporalMode { Global, Mean, MeanStd };

std::string_view to_string(SpatialMode m);
std::string_view to_string(TemporalMode m);
SpatialMode parse_spatial(std::string_view s);    // throws InvalidConfig
TemporalMode parse_temporal(std::string_view s);  // throws InvalidConfig

// [window][region][dim], shape (10, 9, 200)
struct PooledTensor {
  std::vector<double> data;
  SpatialMode mode{SpatialMode::GroupAvg};

  std::span<const double> at(std::size_t t, std::size_t r) const {
    return {data.data() + (t * kNumRegions + r) * kEmbedDim, kEmbedDim};
  }
};

struct FeatureVector {
  std::vector<double> data;
  TemporalMode mode{TemporalMode::Global};
};

std::size_t feature_length(TemporalMode m);

// Representative electrode per region for intersection pooling. Throws
// EmptyRegion when a region has no electrode at all.
std::array<std::size_t, kNumRegions> intersection_channels(const Montage& montage);

PooledTensor pool_spatial(const FeatureTensor& h, const Montage& montage, SpatialMode mode);
FeatureVector pool_temporal(const PooledTensor& p, TemporalMode mode);

}  // namespace cogload
