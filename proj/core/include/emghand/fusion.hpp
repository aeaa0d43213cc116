#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "emghand/geom.hpp"
#include "emghand/joints.hpp"
#include "emghand/tensor.hpp"

namespace emghand::fusion {

enum class Source { truth, vision, multimodal };

struct PoseSample {
  std::int64_t t_ms = 0;
  Source source = Source::vision;
  Vec3 root_position{};
  std::array<double, 4> root_orientation{1.0, 0.0, 0.0, 0.0};  // [w x y z]
  JointAngleVector angles;
};

struct EmgFrame {
  std::int64_t t_ms = 0;
  std::array<double, 8> channels{};
};

struct StreamPairing {
  int tolerance_ms = 10;    // half a 50 Hz tick on the shared clock
  int queue_capacity = 64;  // bounded queues, drop-oldest
};

// --- wire protocol: newline-delimited JSON records, fixed field order ------

std::string encode_emg(const EmgFrame& frame);
std::string encode_pose(const PoseSample& pose, const char* kind);  // "pose" | "fused"

struct DecodedFrame {
  enum class Kind { emg, pose, fused };
  Kind kind = Kind::emg;
  EmgFrame emg;
  PoseSample pose;
};

/// Strict decoder: unknown keys, wrong types, or wrong array lengths are
/// rejected with DataError.
DecodedFrame decode_frame(const std::string& line);

// --- pairing core -----------------------------------------------------------

struct PairingCounters {
  std::uint64_t emg_received = 0;
  std::uint64_t vision_received = 0;
  std::uint64_t malformed = 0;      // undecodable or out-of-order frames
  std::uint64_t emg_dropped = 0;    // bounded-queue overflow (transport layer)
  std::uint64_t vision_dropped = 0;
  std::uint64_t warmup = 0;  // emg samples consumed before the window filled
  std::uint64_t ticks = 0;   // full-window emg ticks
  std::uint64_t paired = 0;
  std::uint64_t skipped = 0;  // ticks without a vision sample in tolerance
};

/// Takes root position/orientation from the vision sample and finger angles
/// from the model; the result is stamped with the emg tick time.
PoseSample fuse(const PoseSample& vision, const JointAngleVector& model_angles,
                std::int64_t t_ms);

/// Single-threaded pairing core: accumulates a rolling emg window and
/// matches each full-window tick against the nearest vision sample within
/// tolerance. Deterministic given the feed order.
class FusionEngine {
 public:
  FusionEngine(std::int64_t window_rows, StreamPairing pairing);

  void push_vision(const PoseSample& sample);

  /// True when the rolling window is full after this sample (a tick).
  /// Non-monotonic timestamps are counted malformed and ignored.
  bool push_emg(const EmgFrame& frame);

  /// Nearest in-tolerance vision sample for tick time t; stale samples are
  /// discarded. Does not touch the paired/skipped counters.
  std::optional<PoseSample> match_vision(std::int64_t t_ms);

  void note_paired() { ++counters_.paired; }
  void note_skipped() { ++counters_.skipped; }
  void note_malformed() { ++counters_.malformed; }
  void note_emg_dropped() { ++counters_.emg_dropped; }

  /// Current window as an n x 8 matrix (oldest row first).
  Tensor window_tensor() const;

  const PairingCounters& counters() const { return counters_; }

 private:
  std::int64_t window_rows_;
  StreamPairing pairing_;
  std::deque<EmgFrame> window_;
  std::deque<PoseSample> vision_;
  std::int64_t last_emg_t_ = std::numeric_limits<std::int64_t>::min();
  PairingCounters counters_;
};

struct PairedTick {
  std::int64_t t_ms = 0;
  Tensor window;  // n x 8
  PoseSample vision;
};

/// Offline pairing of two recorded streams (both ordered by time).
struct PairStreamsResult {
  std::vector<PairedTick> ticks;
  PairingCounters counters;
};
PairStreamsResult pair_streams(const std::vector<EmgFrame>& emg,
                               const std::vector<PoseSample>& vision,
                               const StreamPairing& pairing, std::int64_t window_rows);

// --- serve -------------------------------------------------------------------

struct ServeOptions {
  std::string checkpoint_path;
  std::uint16_t emg_port = 0;
  std::uint16_t vision_port = 0;
  std::uint16_t out_port = 0;
  StreamPairing pairing;
  bool once = false;  // exit when both inbound streams close and drain
};

struct ServeStats {
  PairingCounters counters;
  double p50_ms = 0.0;
  double p99_ms = 0.0;
  std::uint64_t fused_emitted = 0;
};

/// Runs the 50 Hz fusion service over loopback TCP: two inbound NDJSON
/// streams (emg, vision), one outbound fused stream. Blocks until shutdown
/// (SIGINT/SIGTERM, or stream end with `once`). Per-tick processing
/// (feature extraction + forward + fuse + encode) is measured and reported.
ServeStats serve(const ServeOptions& options);

}  // namespace emghand::fusion
