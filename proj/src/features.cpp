#include "cogload/features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "cogload/binio.hpp"
#include "cogload/error.hpp"
#include "cogload/fft.hpp"
#include "cogload/rng.hpp"

namespace cogload {

namespace {

constexpr std::size_t kSpectrumBins = kSecondSamples / 2 + 1;  // 101

class ToySpectralProvider final : public EmbeddingProvider {
 public:
  explicit ToySpectralProvider(std::uint64_t seed)
      : seed_(seed), fft_(kSecondSamples), projection_(kEmbedDim * kSpectrumBins) {
    Rng rng(seed);
    // column-major: column b (input bin) is a unit vector in R^200
    for (std::size_t b = 0; b < kSpectrumBins; ++b) {
      double norm = 0.0;
      for (std::size_t d = 0; d < kEmbedDim; ++d) {
        const double v = rng.normal();
        projection_[b * kEmbedDim + d] = v;
        norm += v * v;
      }
      norm = std::sqrt(norm);
      for (std::size_t d = 0; d < kEmbedDim; ++d) projection_[b * kEmbedDim + d] /= norm;
    }
  }

  std::string id() const override { return "toy-spectral:" + std::to_string(seed_); }

  void embed_seconds(std::span<const float> slices, std::size_t batch,
                     std::span<float> out) const override {
    if (slices.size() != batch * kSecondSamples || out.size() != batch * kEmbedDim) {
      throw Error(Errc::DimensionMismatch, "toy provider: batch buffer size");
    }
    std::vector<double> x(kSecondSamples);
    std::vector<std::complex<double>> spec(kSpectrumBins);
    std::vector<double> acc(kEmbedDim);
    for (std::size_t i = 0; i < batch; ++i) {
      const auto in = slices.subspan(i * kSecondSamples, kSecondSamples);
      std::copy(in.begin(), in.end(), x.begin());
      fft_.forward(x, spec);
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t b = 0; b < kSpectrumBins; ++b) {
        const double logmag = std::log1p(std::abs(spec[b]));
        if (logmag == 0.0) continue;
        const double* col = projection_.data() + b * kEmbedDim;
        for (std::size_t d = 0; d < kEmbedDim; ++d) acc[d] += col[d] * logmag;
      }
      for (std::size_t d = 0; d < kEmbedDim; ++d) out[i * kEmbedDim + d] = static_cast<float>(acc[d]);
    }
  }

 private:
  std::uint64_t seed_;
  RealFft fft_;
  std::vector<double> projection_;
};

class PrecomputedProvider final : public EmbeddingProvider {
 public:
  explicit PrecomputedProvider(std::string path) : path_(std::move(path)), table_(read_emb1(path_)) {}

  std::string id() const override { return "precomputed:" + path_; }

  void embed_seconds(std::span<const float>, std::size_t, std::span<float>) const override {
    throw Error(Errc::ProviderFailure,
                "precomputed embeddings exist per trial only; no per-second encoder available");
  }

  FeatureTensor embed_trial(const WindowTensor& w) const override {
    auto it = table_.find(w.provenance.key);
    if (it == table_.end()) {
      throw Error(Errc::MissingEmbedding, "no stored embedding for " + w.provenance.key.str());
    }
    if (it->second.n_channels != w.n_channels) {
      throw Error(Errc::ProviderFailure, "stored embedding for " + w.provenance.key.str() +
                                             " has " + std::to_string(it->second.n_channels) +
                                             " channels, window tensor has " +
                                             std::to_string(w.n_channels));
    }
    FeatureTensor h = it->second;
    h.provider_id = id();
    h.provenance = w.provenance;
    return h;
  }

  bool channelwise() const override { return false; }

 private:
  std::string path_;
  EmbeddingTable table_;
};

constexpr char kEmbMagic[4] = {'E', 'M', 'B', '1'};

TrialKey parse_key(const std::string& s, const std::string& path, std::size_t offset) {
  const auto a = s.rfind('/');
  const auto b = a == std::string::npos ? std::string::npos : s.rfind('/', a - 1);
  if (a == std::string::npos || b == std::string::npos || b == 0) {
    throw format_error(path, offset, "bad key '" + s + "'");
  }
  try {
    std::size_t used = 0;
    TrialKey k;
    k.participant = s.substr(0, b);
    const std::string day = s.substr(b + 1, a - b - 1);
    const std::string idx = s.substr(a + 1);
    k.day = std::stoi(day, &used);
    if (used != day.size()) throw std::invalid_argument(day);
    k.trial_index = std::stoi(idx, &used);
    if (used != idx.size()) throw std::invalid_argument(idx);
    return k;
  } catch (const std::logic_error&) {
    throw format_error(path, offset, "bad key '" + s + "'");
  }
}

}  // namespace

std::vector<float> EmbeddingProvider::embed_second(std::span<const float> slice) const {
  if (slice.size() != kSecondSamples) {
    throw Error(Errc::DimensionMismatch, "embed_second expects 200 samples");
  }
  std::vector<float> out(dim());
  embed_seconds(slice, 1, out);
  return out;
}

void EmbeddingProvider::embed_window(std::span<const float> window, std::size_t n_channels,
                                     std::span<float> out) const {
  if (window.size() != n_channels * kWindowSamples || out.size() != n_channels * kEmbedDim) {
    throw Error(Errc::DimensionMismatch, "embed_window: buffer size");
  }
  // the channels of one window are contiguous: [channel][second][sample]
  const std::size_t batch = n_channels * kSecondsPerWindow;
  std::vector<float> emb(batch * kEmbedDim);
  embed_seconds(window, batch, emb);
  std::vector<double> mean(kEmbedDim);
  for (std::size_t c = 0; c < n_channels; ++c) {
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t s = 0; s < kSecondsPerWindow; ++s) {
      const float* e = emb.data() + (c * kSecondsPerWindow + s) * kEmbedDim;
      for (std::size_t d = 0; d < kEmbedDim; ++d) {
        if (!std::isfinite(e[d])) {
          throw Error(Errc::ProviderFailure, "non-finite embedding at channel " + std::to_string(c));
        }
        mean[d] += e[d];
      }
    }
    float* dst = out.data() + c * kEmbedDim;
    for (std::size_t d = 0; d < kEmbedDim; ++d) {
      dst[d] = static_cast<float>(mean[d] / static_cast<double>(kSecondsPerWindow));
    }
  }
}

FeatureTensor EmbeddingProvider::embed_trial(const WindowTensor& w) const {
  if (dim() != kEmbedDim) {
    throw Error(Errc::ProviderFailure, "provider " + id() + " has dim " + std::to_string(dim()) +
                                           ", expected 200");
  }
  FeatureTensor h;
  h.n_channels = w.n_channels;
  h.provider_id = id();
  h.provenance = w.provenance;
  h.data.assign(kNumWindows * w.n_channels * kEmbedDim, 0.0f);
  for (std::size_t t = 0; t < kNumWindows; ++t) {
    const std::span<const float> win(w.data.data() + t * w.n_channels * kWindowSamples,
                                     w.n_channels * kWindowSamples);
    const std::span<float> dst(h.data.data() + t * w.n_channels * kEmbedDim, w.n_channels * kEmbedDim);
    try {
      embed_window(win, w.n_channels, dst);
    } catch (const Error& e) {
      if (e.code() == Errc::ProviderFailure) {
        throw Error(Errc::ProviderFailure, "window " + std::to_string(t) + ": " + e.what());
      }
      throw;
    }
  }
  return h;
}

std::shared_ptr<EmbeddingProvider> toy_spectral_provider(std::uint64_t seed) {
  return std::make_shared<ToySpectralProvider>(seed);
}

std::shared_ptr<EmbeddingProvider> precomputed_provider(const std::string& path) {
  return std::make_shared<PrecomputedProvider>(path);
}

EmbeddingTable read_emb1(const std::string& path) {
  const auto bytes = binio::read_file(path);
  binio::Reader r(bytes);
  std::string magic;
  if (!r.get_bytes(4, magic) || magic != std::string_view(kEmbMagic, 4)) {
    throw format_error(path, 0, "bad magic, expected EMB1");
  }
  std::uint32_t count = 0;
  if (!r.get(count)) throw format_error(path, r.offset(), "truncated record count");
  EmbeddingTable table;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t rec_offset = r.offset();
    std::uint16_t key_len = 0;
    std::string key;
    if (!r.get(key_len) || !r.get_bytes(key_len, key)) {
      throw format_error(path, r.offset(), "truncated key in record " + std::to_string(i));
    }
    std::uint32_t dims[3] = {0, 0, 0};
    for (auto& d : dims) {
      if (!r.get(d)) throw format_error(path, r.offset(), "truncated dims");
    }
    if (dims[0] != kNumWindows || dims[2] != kEmbedDim || dims[1] == 0) {
      throw format_error(path, r.offset() - 12,
                         "record " + key + " has shape (" + std::to_string(dims[0]) + ", " +
                             std::to_string(dims[1]) + ", " + std::to_string(dims[2]) +
                             "), expected (10, N_E, 200)");
    }
    FeatureTensor h;
    h.n_channels = dims[1];
    h.provenance.key = parse_key(key, path, rec_offset);
    h.data.resize(std::size_t{dims[0]} * dims[1] * dims[2]);
    if (!r.get_span(std::span<float>(h.data))) {
      throw format_error(path, r.offset(), "truncated payload for " + key);
    }
    for (float v : h.data) {
      if (!std::isfinite(v)) throw format_error(path, rec_offset, "non-finite value in " + key);
    }
    const TrialKey k = h.provenance.key;
    if (!table.emplace(k, std::move(h)).second) {
      throw format_error(path, rec_offset, "duplicate key " + key);
    }
  }
  if (r.remaining() != 0) throw format_error(path, r.offset(), "trailing bytes");
  return table;
}

void write_emb1(const EmbeddingTable& table, const std::string& path) {
  binio::Writer w;
  w.put_bytes(std::string_view(kEmbMagic, 4));
  w.put(static_cast<std::uint32_t>(table.size()));
  for (const auto& [key, h] : table) {
    const std::string k = key.str();
    if (k.size() > UINT16_MAX) throw Error(Errc::InvalidArgument, "key too long: " + k);
    w.put(static_cast<std::uint16_t>(k.size()));
    w.put_bytes(k);
    w.put(static_cast<std::uint32_t>(kNumWindows));
    w.put(static_cast<std::uint32_t>(h.n_channels));
    w.put(static_cast<std::uint32_t>(kEmbedDim));
    if (h.data.size() != kNumWindows * h.n_channels * kEmbedDim) {
      throw Error(Errc::DimensionMismatch, "feature tensor " + k + " has wrong size");
    }
    w.put_span(std::span<const float>(h.data));
  }
  binio::write_file(path, w.bytes());
}

WelchPsd welch_psd(std::span<const double> x, double fs) {
  const auto seg = static_cast<std::size_t>(std::llround(fs));  // 1 s
  const std::size_t hop = seg / 2;
  if (x.size() < seg || seg < 2) throw Error(Errc::DimensionMismatch, "signal shorter than one segment");
  static thread_local std::unique_ptr<RealFft> fft;
  if (!fft || fft->size() != seg) fft = std::make_unique<RealFft>(seg);

  std::vector<double> win(seg);
  double wss = 0.0;
  for (std::size_t i = 0; i < seg; ++i) {
    // periodic Hann
    win[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(seg));
    wss += win[i] * win[i];
  }
  WelchPsd psd;
  psd.freqs.resize(seg / 2 + 1);
  psd.density.assign(seg / 2 + 1, 0.0);
  for (std::size_t k = 0; k < psd.freqs.size(); ++k) psd.freqs[k] = static_cast<double>(k) * fs / static_cast<double>(seg);

  std::vector<double> buf(seg);
  std::vector<std::complex<double>> spec(seg / 2 + 1);
  std::size_t n_seg = 0;
  for (std::size_t start = 0; start + seg <= x.size(); start += hop, ++n_seg) {
    double mean = 0.0;
    for (std::size_t i = 0; i < seg; ++i) mean += x[start + i];
    mean /= static_cast<double>(seg);
    for (std::size_t i = 0; i < seg; ++i) buf[i] = (x[start + i] - mean) * win[i];
    fft->forward(buf, spec);
    for (std::size_t k = 0; k < spec.size(); ++k) psd.density[k] += std::norm(spec[k]);
  }
  const double scale = 1.0 / (fs * wss * static_cast<double>(n_seg));
  for (std::size_t k = 0; k < psd.density.size(); ++k) {
    const bool edge = k == 0 || (seg % 2 == 0 && k == psd.density.size() - 1);
    psd.density[k] *= scale * (edge ? 1.0 : 2.0);
  }
  return psd;
}

double band_power(const WelchPsd& psd, double lo, double hi) {
  if (psd.freqs.size() < 2) return 0.0;
  const double df = psd.freqs[1] - psd.freqs[0];
  double p = 0.0;
  for (std::size_t k = 0; k < psd.freqs.size(); ++k) {
    const double a = std::max(lo, psd.freqs[k] - df / 2.0);
    const double b = std::min(hi, psd.freqs[k] + df / 2.0);
    if (b > a) p += psd.density[k] * (b - a);
  }
  return p;
}

std::vector<double> psd_features(const WindowTensor& w) {
  std::vector<double> out(kNumWindows * w.n_channels * kNumPsdBands);
  std::vector<double> x(kWindowSamples);
  for (std::size_t t = 0; t < kNumWindows; ++t) {
    for (std::size_t c = 0; c < w.n_channels; ++c) {
      const auto src = w.window(t, c);
      std::copy(src.begin(), src.end(), x.begin());
      const auto psd = welch_psd(x, w.fs);
      for (std::size_t b = 0; b < kNumPsdBands; ++b) {
        out[(t * w.n_channels + c) * kNumPsdBands + b] =
            std::log10(1.0 + band_power(psd, kPsdBands[b].lo, kPsdBands[b].hi));
      }
    }
  }
  return out;
}

std::string_view to_string(SpatialMode m) {
  return m == SpatialMode::GroupAvg ? "groupavg" : "intersection";
}

std::string_view to_string(TemporalMode m) {
  switch (m) {
    case TemporalMode::Global: return "global";
    case TemporalMode::Mean: return "mean";
    case TemporalMode::MeanStd: return "meanstd";
  }
  return "global";
}

SpatialMode parse_spatial(std::string_view s) {
  if (s == "groupavg" || s == "group-average" || s == "GroupAvg") return SpatialMode::GroupAvg;
  if (s == "intersection" || s == "Intersection") return SpatialMode::Intersection;
  throw Error(Errc::InvalidConfig, "unknown spatial pooling '" + std::string(s) + "'");
}

TemporalMode parse_temporal(std::string_view s) {
  if (s == "global" || s == "Global") return TemporalMode::Global;
  if (s == "mean" || s == "Mean") return TemporalMode::Mean;
  if (s == "meanstd" || s == "MeanStd") return TemporalMode::MeanStd;
  throw Error(Errc::InvalidConfig, "unknown temporal pooling '" + std::string(s) + "'");
}

std::size_t feature_length(TemporalMode m) {
  switch (m) {
    case TemporalMode::Global: return kNumWindows * kNumRegions * kEmbedDim;
    case TemporalMode::Mean: return kNumRegions * kEmbedDim;
    case TemporalMode::MeanStd: return 2 * kNumRegions * kEmbedDim;
  }
  return 0;
}

std::array<std::size_t, kNumRegions> intersection_channels(const Montage& montage) {
  static const std::array<std::vector<std::string_view>, kNumRegions> kRepresentatives = {{
      {"Fpz"},
      {"Fz"},
      {"FCz", "FC1"},
      {"Cz"},
      {"T7"},
      {"CPz", "CP1"},
      {"Pz"},
      {"POz", "PO3"},
      {"Oz"},
  }};
  std::array<std::size_t, kNumRegions> out{};
  for (std::size_t r = 0; r < kNumRegions; ++r) {
    const auto& members = montage.regions()[r];
    if (members.empty()) {
      throw Error(Errc::EmptyRegion, "region " + std::string(region_name(kAllRegions[r])) +
                                         " has no electrode");
    }
    out[r] = members.front();  // fallback: first member by name
    for (auto name : kRepresentatives[r]) {
      if (auto idx = montage.find(name)) {
        out[r] = *idx;
        break;
      }
    }
  }
  return out;
}

PooledTensor pool_spatial(const FeatureTensor& h, const Montage& montage, SpatialMode mode) {
  if (h.n_channels != montage.size() || h.data.size() != kNumWindows * h.n_channels * kEmbedDim) {
    throw Error(Errc::DimensionMismatch, "feature tensor has " + std::to_string(h.n_channels) +
                                             " channels, montage has " +
                                             std::to_string(montage.size()));
  }
  PooledTensor p;
  p.mode = mode;
  p.data.assign(kNumWindows * kNumRegions * kEmbedDim, 0.0);
  if (mode == SpatialMode::Intersection) {
    const auto reps = intersection_channels(montage);
    for (std::size_t t = 0; t < kNumWindows; ++t) {
      for (std::size_t r = 0; r < kNumRegions; ++r) {
        const auto src = h.at(t, reps[r]);
        std::copy(src.begin(), src.end(), p.data.begin() + static_cast<std::ptrdiff_t>((t * kNumRegions + r) * kEmbedDim));
      }
    }
    return p;
  }
  for (std::size_t r = 0; r < kNumRegions; ++r) {
    const auto& members = montage.regions()[r];
    if (members.empty()) {
      throw Error(Errc::EmptyRegion, "region " + std::string(region_name(kAllRegions[r])) +
                                         " has no electrode");
    }
    const double inv = 1.0 / static_cast<double>(members.size());
    for (std::size_t t = 0; t < kNumWindows; ++t) {
      double* dst = p.data.data() + (t * kNumRegions + r) * kEmbedDim;
      for (auto c : members) {  // ascending electrode name
        const auto src = h.at(t, c);
        for (std::size_t d = 0; d < kEmbedDim; ++d) dst[d] += src[d];
      }
      for (std::size_t d = 0; d < kEmbedDim; ++d) dst[d] *= inv;
    }
  }
  return p;
}

FeatureVector pool_temporal(const PooledTensor& p, TemporalMode mode) {
  constexpr std::size_t slice = kNumRegions * kEmbedDim;
  if (p.data.size() != kNumWindows * slice) {
    throw Error(Errc::DimensionMismatch, "pooled tensor must have shape (10, 9, 200)");
  }
  FeatureVector v;
  v.mode = mode;
  if (mode == TemporalMode::Global) {
    v.data = p.data;
    return v;
  }
  std::vector<double> mean(slice, 0.0);
  for (std::size_t t = 0; t < kNumWindows; ++t) {
    for (std::size_t i = 0; i < slice; ++i) mean[i] += p.data[t * slice + i];
  }
  for (auto& m : mean) m /= static_cast<double>(kNumWindows);
  if (mode == TemporalMode::Mean) {
    v.data = std::move(mean);
    return v;
  }
  std::vector<double> sd(slice, 0.0);
  for (std::size_t t = 0; t < kNumWindows; ++t) {
    for (std::size_t i = 0; i < slice; ++i) {
      const double d = p.data[t * slice + i] - mean[i];
      sd[i] += d * d;
    }
  }
  for (auto& s : sd) s = std::sqrt(s / static_cast<double>(kNumWindows));
  v.data = std::move(mean);
  v.data.insert(v.data.end(), sd.begin(), sd.end());
  return v;
}

}  // namespace cogload
