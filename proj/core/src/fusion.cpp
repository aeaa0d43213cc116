#include "emghand/fusion.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <limits>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "emghand/errors.hpp"
#include "emghand/model.hpp"
#include "emghand/net.hpp"
#include "emghand/signal.hpp"

namespace emghand::fusion {

namespace {

void append_num(std::string& s, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  s += buf;
}

const char* source_kind(Source s) {
  switch (s) {
    case Source::truth: return "truth";
    case Source::vision: return "pose";
    case Source::multimodal: return "fused";
  }
  return "pose";
}

}  // namespace

std::string encode_emg(const EmgFrame& frame) {
  std::string s = "{\"t\": " + std::to_string(frame.t_ms) + ", \"kind\": \"emg\", \"ch\": [";
  for (int c = 0; c < 8; ++c) {
    if (c) s += ", ";
    append_num(s, frame.channels[static_cast<std::size_t>(c)]);
  }
  s += "]}\n";
  return s;
}

std::string encode_pose(const PoseSample& pose, const char* kind) {
  std::string s = "{\"t\": " + std::to_string(pose.t_ms) + ", \"kind\": \"" + kind +
                  "\", \"root_p\": [";
  append_num(s, pose.root_position.x);
  s += ", ";
  append_num(s, pose.root_position.y);
  s += ", ";
  append_num(s, pose.root_position.z);
  s += "], \"root_q\": [";
  for (int i = 0; i < 4; ++i) {
    if (i) s += ", ";
    append_num(s, pose.root_orientation[static_cast<std::size_t>(i)]);
  }
  s += "], \"angles\": [";
  for (int j = 0; j < kJointCount; ++j) {
    if (j) s += ", ";
    append_num(s, pose.angles[j]);
  }
  s += "]}\n";
  return s;
}

DecodedFrame decode_frame(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("undecodable frame: ") + e.what());
  }
  if (!j.is_object() || !j.contains("t") || !j.contains("kind"))
    throw DataError("frame must carry 't' and 'kind'");
  if (!j["t"].is_number_integer()) throw DataError("frame 't' must be an integer");
  const std::string kind = j["kind"].is_string() ? j["kind"].get<std::string>() : "";

  auto expect_keys = [&](std::initializer_list<const char*> keys) {
    for (const char* k : keys)
      if (!j.contains(k)) throw DataError(std::string("frame missing '") + k + "'");
    for (const auto& [key, value] : j.items()) {
      bool known = false;
      for (const char* k : keys) known = known || key == k;
      if (!known) throw DataError("frame has unknown key '" + key + "'");
    }
  };
  auto read_array = [&](const char* key, double* out, std::size_t len) {
    const auto& a = j[key];
    if (!a.is_array() || a.size() != len)
      throw DataError(std::string("frame '") + key + "' must be an array of " +
                      std::to_string(len));
    for (std::size_t i = 0; i < len; ++i) {
      if (!a[i].is_number()) throw DataError(std::string("frame '") + key + "' must be numeric");
      out[i] = a[i].get<double>();
    }
  };

  DecodedFrame out;
  if (kind == "emg") {
    expect_keys({"t", "kind", "ch"});
    out.kind = DecodedFrame::Kind::emg;
    out.emg.t_ms = j["t"].get<std::int64_t>();
    read_array("ch", out.emg.channels.data(), 8);
    return out;
  }
  if (kind == "pose" || kind == "fused") {
    expect_keys({"t", "kind", "root_p", "root_q", "angles"});
    out.kind = kind == "pose" ? DecodedFrame::Kind::pose : DecodedFrame::Kind::fused;
    out.pose.t_ms = j["t"].get<std::int64_t>();
    out.pose.source = kind == "pose" ? Source::vision : Source::multimodal;
    double p[3];
    read_array("root_p", p, 3);
    out.pose.root_position = {p[0], p[1], p[2]};
    read_array("root_q", out.pose.root_orientation.data(), 4);
    double norm = 0.0;
    for (double q : out.pose.root_orientation) norm += q * q;
    if (std::abs(std::sqrt(norm) - 1.0) > 1e-6)
      throw DataError("frame quaternion is not normalized");
    read_array("angles", out.pose.angles.deg.data(), 8);
    return out;
  }
  throw DataError("frame has unknown kind '" + kind + "'");
}

PoseSample fuse(const PoseSample& vision, const JointAngleVector& model_angles,
                std::int64_t t_ms) {
  PoseSample out;
  out.t_ms = t_ms;
  out.source = Source::multimodal;
  out.root_position = vision.root_position;
  out.root_orientation = vision.root_orientation;
  out.angles = model_angles;  // vision finger angles are deliberately discarded
  return out;
}

FusionEngine::FusionEngine(std::int64_t window_rows, StreamPairing pairing)
    : window_rows_(window_rows), pairing_(pairing) {
  if (window_rows_ < 1) throw std::invalid_argument("window must have at least one row");
  if (pairing_.queue_capacity < 1) throw std::invalid_argument("queue capacity must be >= 1");
}

void FusionEngine::push_vision(const PoseSample& sample) {
  ++counters_.vision_received;
  if (static_cast<int>(vision_.size()) >= pairing_.queue_capacity) {
    vision_.pop_front();  // drop-oldest, never block the producer
    ++counters_.vision_dropped;
  }
  vision_.push_back(sample);
}

bool FusionEngine::push_emg(const EmgFrame& frame) {
  ++counters_.emg_received;
  if (frame.t_ms <= last_emg_t_) {
    ++counters_.malformed;  // reordered or duplicate tick
    return false;
  }
  last_emg_t_ = frame.t_ms;
  window_.push_back(frame);
  if (static_cast<std::int64_t>(window_.size()) > window_rows_) window_.pop_front();
  if (static_cast<std::int64_t>(window_.size()) < window_rows_) {
    ++counters_.warmup;
    return false;
  }
  ++counters_.ticks;
  return true;
}

std::optional<PoseSample> FusionEngine::match_vision(std::int64_t t_ms) {
  while (!vision_.empty() && vision_.front().t_ms < t_ms - pairing_.tolerance_ms)
    vision_.pop_front();  // stale for this and every later tick
  std::optional<PoseSample> best;
  std::int64_t best_dt = std::numeric_limits<std::int64_t>::max();
  for (const auto& v : vision_) {
    const std::int64_t dt = std::abs(v.t_ms - t_ms);
    if (dt <= pairing_.tolerance_ms && dt < best_dt) {
      best_dt = dt;
      best = v;
    }
  }
  return best;
}

Tensor FusionEngine::window_tensor() const {
  Tensor out({static_cast<std::int64_t>(window_.size()), 8});
  std::int64_t r = 0;
  for (const auto& frame : window_) {
    for (int c = 0; c < 8; ++c) out.at(r, c) = frame.channels[static_cast<std::size_t>(c)];
    ++r;
  }
  return out;
}

PairStreamsResult pair_streams(const std::vector<EmgFrame>& emg,
                               const std::vector<PoseSample>& vision,
                               const StreamPairing& pairing, std::int64_t window_rows) {
  FusionEngine engine(window_rows, pairing);
  PairStreamsResult result;
  std::size_t vi = 0;
  for (const auto& frame : emg) {
    while (vi < vision.size() && vision[vi].t_ms <= frame.t_ms + pairing.tolerance_ms)
      engine.push_vision(vision[vi++]);
    if (!engine.push_emg(frame)) continue;
    if (auto v = engine.match_vision(frame.t_ms)) {
      engine.note_paired();
      result.ticks.push_back({frame.t_ms, engine.window_tensor(), *v});
    } else {
      engine.note_skipped();
    }
  }
  result.counters = engine.counters();
  return result;
}

// ---------------------------------------------------------------------------
// serve
// ---------------------------------------------------------------------------

namespace {

std::atomic<bool> g_signal_stop{false};
void on_signal(int) { g_signal_stop.store(true); }

template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  void push(T value) {
    std::scoped_lock lock(mu_);
    if (queue_.size() >= capacity_) {
      queue_.pop_front();
      ++dropped_;
    }
    queue_.push_back(std::move(value));
  }

  std::optional<T> try_pop() {
    std::scoped_lock lock(mu_);
    if (queue_.empty()) return std::nullopt;
    T v = std::move(queue_.front());
    queue_.pop_front();
    return v;
  }

  bool empty() const {
    std::scoped_lock lock(mu_);
    return queue_.empty();
  }

  std::uint64_t dropped() const {
    std::scoped_lock lock(mu_);
    return dropped_;
  }

 private:
  mutable std::mutex mu_;
  std::deque<T> queue_;
  std::size_t capacity_;
  std::uint64_t dropped_ = 0;
};

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  const auto idx = std::min(n - 1, static_cast<std::size_t>(std::ceil(q * n)) - 1);
  return values[idx];
}

}  // namespace

ServeStats serve(const ServeOptions& options) {
  model::Model model = model::Model::load_checkpoint(options.checkpoint_path);
  const std::int64_t window_rows = model.config().n;

  net::Socket emg_listener = net::Socket::listen_on(options.emg_port);
  net::Socket vision_listener = net::Socket::listen_on(options.vision_port);
  net::Socket out_listener = net::Socket::listen_on(options.out_port);

  g_signal_stop.store(false);
  auto prev_int = std::signal(SIGINT, on_signal);
  auto prev_term = std::signal(SIGTERM, on_signal);

  std::atomic<bool> stop{false};
  auto stop_requested = [&]() { return stop.load() || g_signal_stop.load(); };

  // Clients may connect in any order; the TCP backlog holds the early ones.
  net::Socket emg_conn = emg_listener.accept_one(g_signal_stop);
  net::Socket vision_conn = vision_listener.accept_one(g_signal_stop);
  net::Socket out_conn = out_listener.accept_one(g_signal_stop);

  ServeStats stats;
  if (!emg_conn.valid() || !vision_conn.valid() || !out_conn.valid()) {
    std::signal(SIGINT, prev_int);
    std::signal(SIGTERM, prev_term);
    return stats;  // interrupted before the streams came up
  }

  BoundedQueue<EmgFrame> emg_queue(static_cast<std::size_t>(options.pairing.queue_capacity));
  BoundedQueue<PoseSample> vision_queue(
      static_cast<std::size_t>(options.pairing.queue_capacity));
  std::atomic<std::uint64_t> reader_malformed{0};
  std::atomic<bool> emg_eof{false}, vision_eof{false};

  std::thread emg_reader([&] {
    net::LineReader reader(emg_conn);
    std::string line;
    while (!stop_requested() && reader.read_line(line, stop)) {
      try {
        DecodedFrame f = decode_frame(line);
        if (f.kind != DecodedFrame::Kind::emg) throw DataError("expected an emg frame");
        emg_queue.push(f.emg);
      } catch (const DataError& e) {
        ++reader_malformed;
        std::cerr << "emg stream: skipping frame (" << e.what() << ")\n";
      }
    }
    emg_eof.store(true);
  });
  std::thread vision_reader([&] {
    net::LineReader reader(vision_conn);
    std::string line;
    while (!stop_requested() && reader.read_line(line, stop)) {
      try {
        DecodedFrame f = decode_frame(line);
        if (f.kind != DecodedFrame::Kind::pose) throw DataError("expected a pose frame");
        vision_queue.push(f.pose);
      } catch (const DataError& e) {
        ++reader_malformed;
        std::cerr << "vision stream: skipping frame (" << e.what() << ")\n";
      }
    }
    vision_eof.store(true);
  });

  FusionEngine engine(window_rows, options.pairing);
  std::vector<double> proc_ms;
  using clock = std::chrono::steady_clock;

  while (!stop_requested()) {
    while (auto v = vision_queue.try_pop()) engine.push_vision(*v);
    auto frame = emg_queue.try_pop();
    if (!frame) {
      if (options.once && emg_eof.load() && emg_queue.empty()) break;
      std::this_thread::sleep_for(std::chrono::microseconds(200));
      continue;
    }
    if (!engine.push_emg(*frame)) continue;

    // Grace window: the matching vision frame may still be in flight.
    std::optional<PoseSample> vision = engine.match_vision(frame->t_ms);
    const auto deadline =
        clock::now() + std::chrono::milliseconds(options.pairing.tolerance_ms);
    while (!vision && clock::now() < deadline && !stop_requested()) {
      if (vision_eof.load() && vision_queue.empty()) break;
      while (auto v = vision_queue.try_pop()) engine.push_vision(*v);
      vision = engine.match_vision(frame->t_ms);
      if (!vision) std::this_thread::sleep_for(std::chrono::microseconds(200));
    }
    if (!vision) {
      engine.note_skipped();
      continue;
    }
    engine.note_paired();

    const auto t0 = clock::now();
    try {
      signal::EmgWindow window;
      window.samples = engine.window_tensor();
      window.start_time_ms = static_cast<double>(frame->t_ms) -
                             static_cast<double>(window_rows - 1) * 20.0;
      const JointAngleVector angles = model.forward(window);
      const PoseSample fused = fuse(*vision, angles, frame->t_ms);
      const std::string encoded = encode_pose(fused, "fused");
      const auto t1 = clock::now();
      proc_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      ++stats.fused_emitted;
      if (!out_conn.send_all(encoded)) {
        std::cerr << "output stream closed, shutting down\n";
        stop.store(true);
      }
    } catch (const std::exception& e) {
      engine.note_malformed();
      std::cerr << "tick " << frame->t_ms << ": skipping (" << e.what() << ")\n";
    }
  }

  stop.store(true);
  emg_conn.close();
  vision_conn.close();
  emg_reader.join();
  vision_reader.join();

  stats.counters = engine.counters();
  stats.counters.malformed += reader_malformed.load();
  stats.counters.emg_received += emg_queue.dropped();
  stats.counters.vision_received += vision_queue.dropped();
  stats.counters.emg_dropped += emg_queue.dropped();
  stats.counters.vision_dropped += vision_queue.dropped();
  stats.p50_ms = percentile(proc_ms, 0.50);
  stats.p99_ms = percentile(proc_ms, 0.99);

  std::signal(SIGINT, prev_int);
  std::signal(SIGTERM, prev_term);
  return stats;
}

}  // namespace emghand::fusion
