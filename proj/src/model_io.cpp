#include <zlib.h>

#include "cogload/binio.hpp"
#include "cogload/error.hpp"
#include "cogload/estimators.hpp"

// MDL1 layout (little endian):
//   "MDL1" | u8 kind (0 linear, 1 dnn, 2 svm) | u32 d | f64 mean[d] | f64 std[d]
//   | kind payload | u32 crc32 of every preceding byte

namespace cogload {

namespace {

constexpr std::string_view kMagic = "MDL1";

void put_vec(binio::Writer& w, const Vector& v) {
  w.put_span(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

std::uint32_t crc32_of(std::span<const unsigned char> bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

class Decoder {
 public:
  Decoder(std::span<const unsigned char> bytes, const std::string& origin) : r_(bytes), origin_(origin) {}

  template <typename T>
  T get(const char* what) {
    T v{};
    if (!r_.get(v)) fail(std::string("truncated ") + what);
    return v;
  }
  Vector vec(Eigen::Index n, const char* what) {
    if (n < 0 || static_cast<std::size_t>(n) > r_.remaining() / sizeof(double)) {
      fail(std::string("truncated ") + what);
    }
    Vector v(n);
    r_.get_span(std::span<double>(v.data(), static_cast<std::size_t>(n)));
    return v;
  }
  [[noreturn]] void fail(const std::string& reason) { throw format_error(origin_, r_.offset(), reason); }
  std::size_t remaining() const { return r_.remaining(); }

 private:
  binio::Reader r_;
  std::string origin_;
};

}  // namespace

std::vector<unsigned char> encode_model(const Model& model) {
  binio::Writer w;
  w.put_bytes(kMagic);
  w.put(static_cast<std::uint8_t>(kind_of(model)));
  std::visit([&](const auto& m) {
    w.put(static_cast<std::uint32_t>(m.scaler.dim()));
    put_vec(w, m.scaler.mean);
    put_vec(w, m.scaler.std);
  }, model);

  if (const auto* lm = std::get_if<LinearModel>(&model)) {
    w.put(lm->lambda);
    w.put(static_cast<std::int32_t>(lm->sweeps));
    w.put(lm->b);
    put_vec(w, lm->w);
  } else if (const auto* dm = std::get_if<DnnModel>(&model)) {
    w.put(dm->config.lr);
    w.put(static_cast<std::int32_t>(dm->config.epochs));
    w.put(static_cast<std::int32_t>(dm->config.batch_size));
    w.put(dm->config.seed);
    w.put(static_cast<std::uint32_t>(dm->hidden_dim()));
    w.put(static_cast<std::uint8_t>(dm->config.zero_init));
    const Matrix& W1 = dm->W1;
    w.put_span(std::span<const double>(W1.data(), static_cast<std::size_t>(W1.size())));
    for (const Vector* v : {&dm->b1, &dm->gamma, &dm->beta, &dm->running_mean, &dm->running_var, &dm->w2}) {
      put_vec(w, *v);
    }
    w.put(dm->b2);
    w.put(dm->final_loss);
  } else {
    const auto& sm = std::get<SvrModel>(model);
    w.put(sm.gamma);
    w.put(sm.C);
    w.put(sm.epsilon);
    w.put(sm.bias);
    w.put(sm.dual_objective);
    w.put(static_cast<std::int64_t>(sm.iterations));
    w.put(static_cast<std::uint32_t>(sm.support_index.size()));
    for (Eigen::Index idx : sm.support_index) w.put(static_cast<std::uint32_t>(idx));
    put_vec(w, sm.coef);
    w.put_span(std::span<const double>(sm.support.data(), static_cast<std::size_t>(sm.support.size())));
  }
  w.put(crc32_of(w.bytes()));
  return w.bytes();
}

Model decode_model(std::span<const unsigned char> bytes, const std::string& origin) {
  if (bytes.size() < kMagic.size() + 4) throw format_error(origin, 0, "file too short for MDL1");
  const auto body = bytes.first(bytes.size() - 4);
  binio::Reader tail(bytes.last(4));
  std::uint32_t stored = 0;
  tail.get(stored);
  if (stored != crc32_of(body)) throw format_error(origin, body.size(), "CRC32 mismatch");

  Decoder d(body, origin);
  std::string magic;
  for (std::size_t i = 0; i < kMagic.size(); ++i) magic.push_back(static_cast<char>(d.get<std::uint8_t>("magic")));
  if (magic != kMagic) throw format_error(origin, 0, "bad magic (expected MDL1)");
  const auto kind = d.get<std::uint8_t>("kind tag");
  if (kind > 2) d.fail("unknown model kind " + std::to_string(kind));
  Standardizer sc;
  const auto dim = static_cast<Eigen::Index>(d.get<std::uint32_t>("dimension"));
  sc.mean = d.vec(dim, "standardizer");
  sc.std = d.vec(dim, "standardizer");

  Model out;
  if (kind == 0) {
    LinearModel m;
    m.scaler = std::move(sc);
    m.lambda = d.get<double>("lambda");
    m.sweeps = d.get<std::int32_t>("sweeps");
    m.b = d.get<double>("intercept");
    m.w = d.vec(dim, "weights");
    out = std::move(m);
  } else if (kind == 1) {
    DnnModel m;
    m.scaler = std::move(sc);
    m.config.lr = d.get<double>("lr");
    m.config.epochs = d.get<std::int32_t>("epochs");
    m.config.batch_size = d.get<std::int32_t>("batch size");
    m.config.seed = d.get<std::uint64_t>("seed");
    const auto H = static_cast<Eigen::Index>(d.get<std::uint32_t>("hidden size"));
    m.config.hidden = H;
    m.config.zero_init = d.get<std::uint8_t>("init flag") != 0;
    if (H > 0 && static_cast<std::size_t>(dim) > d.remaining() / sizeof(double) / static_cast<std::size_t>(H)) {
      d.fail("truncated hidden weights");
    }
    const Vector flat = d.vec(H * dim, "hidden weights");
    m.W1 = Eigen::Map<const Matrix>(flat.data(), H, dim);
    for (Vector* v : {&m.b1, &m.gamma, &m.beta, &m.running_mean, &m.running_var, &m.w2}) *v = d.vec(H, "layer");
    m.b2 = d.get<double>("output bias");
    m.final_loss = d.get<double>("loss");
    out = std::move(m);
  } else {
    SvrModel m;
    m.scaler = std::move(sc);
    m.gamma = d.get<double>("gamma");
    m.C = d.get<double>("C");
    m.epsilon = d.get<double>("epsilon");
    m.bias = d.get<double>("bias");
    m.dual_objective = d.get<double>("objective");
    m.iterations = d.get<std::int64_t>("iterations");
    const auto nsv = static_cast<Eigen::Index>(d.get<std::uint32_t>("support count"));
    for (Eigen::Index s = 0; s < nsv; ++s) m.support_index.push_back(d.get<std::uint32_t>("support index"));
    m.coef = d.vec(nsv, "coefficients");
    if (nsv > 0 && static_cast<std::size_t>(dim) > d.remaining() / sizeof(double) / static_cast<std::size_t>(nsv)) {
      d.fail("truncated support vectors");
    }
    const Vector flat = d.vec(nsv * dim, "support vectors");
    m.support = Eigen::Map<const Matrix>(flat.data(), nsv, dim);
    out = std::move(m);
  }
  if (d.remaining() != 0) d.fail("trailing bytes before checksum");
  return out;
}

void save_model(const Model& m, const std::string& path) {
  const auto bytes = encode_model(m);
  binio::write_file(path, bytes);
}

Model load_model(const std::string& path) {
  const auto bytes = binio::read_file(path);
  return decode_model(bytes, path);
}

}  // namespace cogload
