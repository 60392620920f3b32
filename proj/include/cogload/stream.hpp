#pragma once

// clstream/1: handshake line {"proto":"clstream/1","channels":N,"fs":200},
// then frames of u32 LE byte length + f32 LE samples. A frame carries m
// samples for every channel, channel-major (m samples of channel 0, then
// channel 1, ...), so its length is a multiple of 4 * N bytes.

#include <cstddef>
#include <ostream>
#include <span>
#include <vector>

#include "cogload/embrpc.hpp"
#include "cogload/pipeline.hpp"

namespace cogload {

inline constexpr const char* kStreamProto = "clstream/1";

struct StreamOptions {
  std::size_t queue_capacity{4};       // windows between reader and scorer
  double idle_timeout_s{24.0 * 3600};  // a slow producer is waited for
};

// Reads the stream from `in`, filters causally, and writes one JSON line
// {"t_s","score","latency_ms"} per completed 16 s window (every 8 s). Returns
// 0 at end of input; on a protocol violation writes {"error": ...} and
// returns 5. Other failures write the error line and return their exit code.
int stream_serve(embrpc::Channel& in, std::ostream& out, const TrainedPipeline& p, const StreamOptions& opts = {});

void stream_send_handshake(embrpc::Channel& ch, std::size_t channels);
// `chunk` is channel-major, chunk.size() / channels samples per channel.
void stream_send_chunk(embrpc::Channel& ch, std::span<const float> chunk);

// Sends a 200 Hz trial as handshake + frames of `chunk_samples` per channel.
// speed 1 paces the frames in real time, 0 sends as fast as possible.
void stream_replay(embrpc::Channel& ch, const Trial& trial, std::size_t chunk_samples, double speed);

// The batch counterpart of the stream's k-th score (k = 1..10): the pipeline
// applied to assemble_history of the first k windows of `w`.
std::vector<double> history_scores(const TrainedPipeline& p, const WindowTensor& w);

}  // namespace cogload
