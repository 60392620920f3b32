#include "cogload/stream.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <optional>
#include <thread>

#include <json.hpp>

#include "cogload/error.hpp"
#include "cogload/filters.hpp"
#include "cogload/preprocess.hpp"

namespace cogload {

namespace {

using Clock = std::chrono::steady_clock;

struct WindowJob {
  std::vector<float> data;  // [channel][3200]
  double t_s{0.0};
  Clock::time_point complete;
};

class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t cap) : cap_(cap) {}

  // Blocks while full; false once closed.
  bool push(WindowJob job) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return closed_ || q_.size() < cap_; });
    if (closed_) return false;
    q_.push_back(std::move(job));
    not_empty_.notify_one();
    return true;
  }
  std::optional<WindowJob> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return !q_.empty() || closed_; });
    if (q_.empty()) return std::nullopt;
    WindowJob j = std::move(q_.front());
    q_.pop_front();
    not_full_.notify_one();
    return j;
  }
  // Pending jobs stay poppable.
  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::size_t cap_;
  std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
  std::deque<WindowJob> q_;
  bool closed_{false};
};

struct ReaderResult {
  std::optional<Error> error;
};

void write_line(std::ostream& out, const nlohmann::ordered_json& j) {
  out << j.dump() << '\n';
  out.flush();
}

std::size_t read_handshake(embrpc::Channel& in, std::size_t expected_channels, double timeout_s) {
  std::string line;
  try {
    line = in.read_line(4096, timeout_s);
  } catch (const Error& e) {
    if (e.code() == Errc::Timeout) throw;
    throw Error(Errc::Protocol, std::string("handshake: ") + e.what());
  }
  nlohmann::json hs;
  try {
    hs = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    throw Error(Errc::Protocol, "handshake is not a JSON line");
  }
  if (!hs.is_object() || hs.value("proto", std::string()) != kStreamProto) {
    throw Error(Errc::Protocol, "handshake must declare proto clstream/1");
  }
  if (!hs.contains("channels") || !hs["channels"].is_number_unsigned()) {
    throw Error(Errc::Protocol, "handshake lacks a channel count");
  }
  const auto n = hs["channels"].get<std::size_t>();
  if (n != expected_channels) {
    throw Error(Errc::Protocol, "stream has " + std::to_string(n) + " channels, model montage has " +
                                    std::to_string(expected_channels));
  }
  if (!hs.contains("fs") || !hs["fs"].is_number() || hs["fs"].get<double>() != kTargetFs) {
    throw Error(Errc::Protocol, "stream sampling rate must be 200 Hz");
  }
  return n;
}

void reader_loop(embrpc::Channel& in, std::size_t n, const StreamOptions& opts, BoundedQueue& queue,
                 std::atomic<bool>& stop, ReaderResult& result) {
  try {
    // The cascade runs twice so that the magnitude response is |H|^2, the
    // same as the zero-phase batch path; only the phase differs.
    std::vector<Biquad> sections = design_filters(kTargetFs).sections();
    const std::size_t once = sections.size();
    for (std::size_t i = 0; i < once; ++i) sections.push_back(sections[i]);
    std::vector<CausalFilter> filters(n, CausalFilter(sections));
    std::vector<float> ring(n * kWindowSamples, 0.0f);
    std::size_t pos = 0;     // next write slot in every channel ring
    std::size_t seen = 0;    // samples per channel so far
    std::vector<float> frame;
    constexpr std::size_t kMaxFrame = 64u << 20;
    while (!stop) {
      bool got = false;
      try {
        got = embrpc::read_frame(in, frame, kMaxFrame, opts.idle_timeout_s);
      } catch (const Error& e) {
        if (e.code() == Errc::ProviderFailure) throw Error(Errc::Protocol, "truncated frame");
        throw;
      }
      if (!got) break;
      if (frame.empty() || frame.size() % n != 0) {
        throw Error(Errc::Protocol, "malformed frame length " + std::to_string(frame.size() * sizeof(float)) +
                                        " (not a multiple of 4 * " + std::to_string(n) + ")");
      }
      const std::size_t m = frame.size() / n;
      for (float v : frame) {
        if (!std::isfinite(v)) throw Error(Errc::Protocol, "non-finite sample");
      }
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t c = 0; c < n; ++c) {
          ring[c * kWindowSamples + pos] = static_cast<float>(filters[c].step(frame[c * m + i]));
        }
        pos = (pos + 1) % kWindowSamples;
        ++seen;
        if (seen >= kWindowSamples && (seen - kWindowSamples) % kHopSamples == 0) {
          WindowJob job;
          job.complete = Clock::now();
          job.t_s = static_cast<double>(seen) / kTargetFs;
          job.data.resize(n * kWindowSamples);
          for (std::size_t c = 0; c < n; ++c) {
            const float* src = ring.data() + c * kWindowSamples;
            float* dst = job.data.data() + c * kWindowSamples;
            // oldest sample sits at `pos`
            std::copy(src + pos, src + kWindowSamples, dst);
            std::copy(src, src + pos, dst + (kWindowSamples - pos));
          }
          if (!queue.push(std::move(job))) return;
        }
      }
    }
  } catch (const Error& e) {
    result.error = e;
  } catch (const std::exception& e) {
    result.error = Error(Errc::Protocol, e.what());
  }
  queue.close();
}

}  // namespace

int stream_serve(embrpc::Channel& in, std::ostream& out, const TrainedPipeline& p, const StreamOptions& opts) {
  const std::size_t n = p.montage.size();
  try {
    read_handshake(in, n, opts.idle_timeout_s);
  } catch (const Error& e) {
    write_line(out, {{"error", e.what()}});
    return exit_code_for(e.code());
  }

  BoundedQueue queue(std::max<std::size_t>(1, opts.queue_capacity));
  std::atomic<bool> stop{false};
  ReaderResult rr;
  std::thread reader([&] { reader_loop(in, n, opts, queue, stop, rr); });

  std::optional<Error> scorer_error;
  std::vector<std::vector<float>> history;
  std::vector<float> emb(n * kEmbedDim);
  while (auto job = queue.pop()) {
    try {
      p.extractor->provider().embed_window(job->data, n, emb);
      history.push_back(emb);
      if (history.size() > kNumWindows) history.erase(history.begin());
      const double score = p.predict_embeddings(assemble_history(history, n));
      const double latency_ms = std::chrono::duration<double, std::milli>(Clock::now() - job->complete).count();
      write_line(out, {{"t_s", job->t_s}, {"score", score}, {"latency_ms", latency_ms}});
    } catch (const Error& e) {
      scorer_error = e;
      stop = true;
      queue.close();
      break;
    }
  }
  reader.join();
  const std::optional<Error>& err = scorer_error ? scorer_error : rr.error;
  if (err) {
    write_line(out, {{"error", err->what()}});
    return exit_code_for(err->code());
  }
  return 0;
}

void stream_send_handshake(embrpc::Channel& ch, std::size_t channels) {
  const std::string hs =
      nlohmann::ordered_json{{"proto", kStreamProto}, {"channels", channels}, {"fs", 200}}.dump() + "\n";
  ch.write_all(hs.data(), hs.size(), 30.0);
}

void stream_send_chunk(embrpc::Channel& ch, std::span<const float> chunk) { embrpc::write_frame(ch, chunk, 30.0); }

void stream_replay(embrpc::Channel& ch, const Trial& trial_in, std::size_t chunk_samples, double speed) {
  const Trial trial = trial_in.fs == kTargetFs ? trial_in : resample_trial(trial_in);
  const std::size_t n = trial.n_channels;
  chunk_samples = std::max<std::size_t>(1, chunk_samples);
  stream_send_handshake(ch, n);
  const auto t0 = Clock::now();
  std::vector<float> chunk;
  for (std::size_t start = 0; start < trial.n_samples; start += chunk_samples) {
    const std::size_t m = std::min(chunk_samples, trial.n_samples - start);
    if (speed > 0.0) {
      const double due_s = static_cast<double>(start + m) / kTargetFs / speed;
      std::this_thread::sleep_until(t0 + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(due_s)));
    }
    chunk.resize(n * m);
    for (std::size_t c = 0; c < n; ++c) {
      const auto src = trial.channel(c).subspan(start, m);
      std::copy(src.begin(), src.end(), chunk.begin() + static_cast<std::ptrdiff_t>(c * m));
    }
    stream_send_chunk(ch, chunk);
  }
}

std::vector<double> history_scores(const TrainedPipeline& p, const WindowTensor& w) {
  const FeatureTensor h = p.extractor->embed(w);
  std::vector<std::vector<float>> history;
  std::vector<double> scores;
  for (std::size_t t = 0; t < kNumWindows; ++t) {
    history.push_back(window_embedding(h, t));
    scores.push_back(p.predict_embeddings(assemble_history(history, w.n_channels)));
  }
  return scores;
}

}  // namespace cogload
