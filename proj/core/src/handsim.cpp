#include "emghand/handsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "emghand/errors.hpp"
#include "emghand/rng.hpp"

namespace emghand::sim {

using ordered_json = nlohmann::ordered_json;

const char* to_string(TaskId t) {
  switch (t) {
    case TaskId::i: return "i";
    case TaskId::ii: return "ii";
    case TaskId::iii: return "iii";
    case TaskId::iv: return "iv";
    case TaskId::v: return "v";
    case TaskId::vi: return "vi";
  }
  return "?";
}

const char* to_string(Speed s) {
  switch (s) {
    case Speed::slow: return "slow";
    case Speed::moderate: return "moderate";
    case Speed::fast: return "fast";
  }
  return "?";
}

const char* to_string(Condition c) {
  return c == Condition::full_view ? "full_view" : "occluded";
}

TaskId parse_task(const std::string& s) {
  for (TaskId t : {TaskId::i, TaskId::ii, TaskId::iii, TaskId::iv, TaskId::v, TaskId::vi})
    if (s == to_string(t)) return t;
  throw DataError("unknown task '" + s + "' (expected i..vi)");
}

Speed parse_speed(const std::string& s) {
  for (Speed sp : {Speed::slow, Speed::moderate, Speed::fast})
    if (s == to_string(sp)) return sp;
  throw DataError("unknown speed '" + s + "'");
}

Condition parse_condition(const std::string& s) {
  for (Condition c : {Condition::full_view, Condition::occluded})
    if (s == to_string(c)) return c;
  throw DataError("unknown condition '" + s + "'");
}

double TaskScript::gesture_ms() const {
  switch (speed) {
    case Speed::slow: return 2000.0;
    case Speed::moderate: return 1000.0;
    case Speed::fast: return 500.0;
  }
  return 1000.0;
}

std::int64_t TaskScript::ticks() const {
  return static_cast<std::int64_t>(repetitions) *
         static_cast<std::int64_t>((gesture_ms() + kRestMs) / kDtMs);
}

namespace {

double raised_cosine(double phase) {  // 0 -> 1 -> 0 over [0, 1]
  return 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * phase));
}

double joint_max(int joint) { return is_pip(joint) ? kPipMaxDeg : kMcpMaxDeg; }

struct Tremor {
  double amp = 0.0, freq_hz = 0.0, phase = 0.0;
  double at(double t_s) const {
    return amp * std::sin(2.0 * std::numbers::pi * freq_hz * t_s + phase);
  }
};

}  // namespace

Tensor task_trajectory(const TaskScript& script, double dt_ms) {
  if (script.repetitions < 1) throw std::invalid_argument("repetitions must be >= 1");
  const double gesture = script.gesture_ms();
  const double period = gesture + kRestMs;
  const std::int64_t ticks_per_rep = static_cast<std::int64_t>(period / dt_ms);
  const std::int64_t total = script.repetitions * ticks_per_rep;

  Rng rng(derive_seed(script.seed, {0x7E3}));
  std::array<Tremor, kJointCount> tremor;
  for (auto& tr : tremor)
    tr = {rng.uniform(0.5, 1.0), rng.uniform(8.0, 12.0),
          rng.uniform(0.0, 2.0 * std::numbers::pi)};

  // driven flexion of one joint at gesture phase p in [0, 1)
  auto flexion = [&](int joint, double p) -> double {
    const int finger = finger_of_joint(joint);
    switch (script.task) {
      case TaskId::i:
        return joint_max(joint) * raised_cosine(p);
      case TaskId::ii:
      case TaskId::iii:
      case TaskId::iv:
      case TaskId::v: {
        const int driven = static_cast<int>(script.task) - static_cast<int>(TaskId::ii);
        return finger == driven ? joint_max(joint) * raised_cosine(p) : 0.0;
      }
      case TaskId::vi: {
        // pinky -> ring -> middle -> index, staggered by quarter-period offsets
        const int slot = 3 - finger;
        const double lo = 0.25 * slot;
        if (p < lo || p >= lo + 0.25) return 0.0;
        return joint_max(joint) * raised_cosine((p - lo) * 4.0);
      }
    }
    return 0.0;
  };

  Tensor out({total, kJointCount});
  for (std::int64_t t = 0; t < total; ++t) {
    const double ms = static_cast<double>(t) * dt_ms;
    const double local = std::fmod(ms, period);
    const bool resting = local >= gesture;
    const double p = resting ? 0.0 : local / gesture;
    for (int j = 0; j < kJointCount; ++j) {
      const double drive = resting ? 0.0 : flexion(j, p);
      out.at(t, j) = drive + tremor[static_cast<std::size_t>(j)].at(ms / 1000.0);
    }
  }
  return out;
}

Tensor synth_emg(const Tensor& truth, std::uint64_t seed, std::uint64_t subject_seed) {
  if (truth.rank() != 2 || truth.cols() != kJointCount)
    throw std::invalid_argument("truth series must be T x 8");
  const std::int64_t ticks = truth.rows();
  const int channels = kJointCount;

  // Subject mixing matrix; the dominant diagonal keeps the inverse problem
  // well-posed.
  Rng wrng(derive_seed(subject_seed, {0x57A8}));
  std::array<std::array<double, kJointCount>, kJointCount> mix{};
  for (int c = 0; c < channels; ++c)
    for (int j = 0; j < kJointCount; ++j)
      mix[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] =
          (c == j) ? wrng.uniform(0.8, 1.2) : wrng.uniform(0.0, 0.25);

  Rng noise(derive_seed(seed, {0xE36}));
  const double dt_s = kDtMs / 1000.0;
  const double drift_rho = std::exp(-kDtMs / kEmgGainDriftTauMs);
  const double drift_step = kEmgGainDriftStd * std::sqrt(1.0 - drift_rho * drift_rho);
  Tensor out({ticks, channels});
  std::array<double, kJointCount> smoothed{};
  std::array<double, kJointCount> drift{};
  for (int c = 0; c < channels; ++c)
    drift[static_cast<std::size_t>(c)] = noise.normal(0.0, kEmgGainDriftStd);
  for (std::int64_t t = 0; t < ticks; ++t) {
    std::array<double, kJointCount> act{};
    for (int j = 0; j < kJointCount; ++j) {
      const double theta = truth.at(t, j);
      const double prev = t > 0 ? truth.at(t - 1, j) : theta;
      const double vel = (theta - prev) / dt_s;
      const double pos_term = std::clamp(theta / joint_max(j), 0.0, 1.0);
      const double vel_term = std::clamp(std::abs(vel) / 300.0, 0.0, 1.0);
      act[static_cast<std::size_t>(j)] = 0.6 * pos_term + 0.4 * vel_term;
    }
    for (int c = 0; c < channels; ++c) {
      double raw = 0.0;
      for (int j = 0; j < kJointCount; ++j)
        raw += mix[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] *
               act[static_cast<std::size_t>(j)];
      auto& d = drift[static_cast<std::size_t>(c)];
      d = drift_rho * d + noise.normal(0.0, drift_step);
      raw *= 1.0 + noise.normal(0.0, kEmgNoiseStd) + d;
      auto& s = smoothed[static_cast<std::size_t>(c)];
      s = 0.5 * raw + 0.5 * s;
      out.at(t, c) = 255.0 * std::clamp(s / 3.0, 0.0, 1.0);
    }
  }
  return out;
}

Tensor simulate_vision(const Tensor& truth, const Tensor& occluded_flags,
                       std::uint64_t seed) {
  if (!truth.same_shape(occluded_flags))
    throw std::invalid_argument("truth and occlusion flags must share shape");
  const std::int64_t ticks = truth.rows();
  Rng rng(derive_seed(seed, {0x715}));
  Tensor out(truth.shape());

  std::array<double, kJointCount> held{};
  std::array<double, kJointCount> bias{};
  std::array<bool, kJointCount> in_episode{};
  for (int j = 0; j < kJointCount; ++j)
    held[static_cast<std::size_t>(j)] = ticks > 0 ? truth.at(0, j) : 0.0;

  for (std::int64_t t = 0; t < ticks; ++t) {
    for (int j = 0; j < kJointCount; ++j) {
      const bool occ = occluded_flags.at(t, j) != 0.0;
      auto& h = held[static_cast<std::size_t>(j)];
      auto& ep = in_episode[static_cast<std::size_t>(j)];
      if (!occ) {
        const double v = truth.at(t, j) + rng.normal(0.0, 2.0);
        out.at(t, j) = v;
        h = v;
        ep = false;
      } else {
        if (!ep) {
          ep = true;
          bias[static_cast<std::size_t>(j)] = rng.uniform(-20.0, 20.0);
        }
        out.at(t, j) = h + bias[static_cast<std::size_t>(j)] + rng.normal(0.0, 8.0);
      }
    }
  }
  return out;
}

Vec3 camera_aim(const occlusion::HandSkeleton& skeleton) {
  return skeleton.root.apply({skeleton.palm_length, 0.0, 0.0});  // knuckle line center
}

Vec3 camera_position(Condition condition, const occlusion::HandSkeleton& skeleton) {
  const bool full = condition == Condition::full_view;
  const double elev = (full ? kFullViewElevDeg : kOccludedElevDeg) * kDegToRad;
  const double azim = (full ? kFullViewAzimuthDeg : kOccludedAzimuthDeg) * kDegToRad;
  const Vec3 local{
      skeleton.palm_length + kCameraRangeCm * std::cos(elev) * std::cos(azim),
      kCameraRangeCm * std::cos(elev) * std::sin(azim),
      kCameraRangeCm * std::sin(elev)};
  return skeleton.root.apply(local);
}

SessionRecording generate_session(const TaskScript& script) {
  return generate_session(script, occlusion::HandSkeleton::canonical());
}

SessionRecording generate_session(const TaskScript& script,
                                  const occlusion::HandSkeleton& skeleton) {
  SessionRecording rec;
  rec.script = script;
  rec.truth = task_trajectory(script);
  const std::int64_t ticks = rec.truth.rows();
  rec.t_ms.resize(static_cast<std::size_t>(ticks));
  for (std::int64_t t = 0; t < ticks; ++t)
    rec.t_ms[static_cast<std::size_t>(t)] = static_cast<std::int64_t>(t) * 20;

  rec.camera_position = camera_position(script.condition, skeleton);
  rec.camera_aim = camera_aim(skeleton);

  rec.occluded = Tensor({ticks, kJointCount});
  for (std::int64_t t = 0; t < ticks; ++t) {
    JointAngleVector angles;
    for (int j = 0; j < kJointCount; ++j) angles[j] = rec.truth.at(t, j);
    const auto geometry = occlusion::build_geometry(skeleton, angles, skeleton.root);
    for (int j = 0; j < kJointCount; ++j)
      rec.occluded.at(t, j) =
          occlusion::bone_occluded(rec.camera_position, j, geometry) ? 1.0 : 0.0;
  }

  rec.emg = synth_emg(rec.truth, derive_seed(script.seed, {0x3146}));
  rec.vision = simulate_vision(rec.truth, rec.occluded, derive_seed(script.seed, {0x111}));
  return rec;
}

// ---------------------------------------------------------------------------
// Recording I/O
// ---------------------------------------------------------------------------

namespace {

void append_double(std::string& line, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  line += ',';
  line += buf;
}

std::string expected_header() {
  std::string h = "t_ms";
  for (int c = 0; c < 8; ++c) h += ",emg_" + std::to_string(c);
  for (int j = 0; j < 8; ++j) h += ",truth_" + std::to_string(j);
  for (int j = 0; j < 8; ++j) h += ",vision_" + std::to_string(j);
  for (int j = 0; j < 8; ++j) h += ",occ_" + std::to_string(j);
  return h;
}

}  // namespace

std::string recording_filename(const TaskScript& script, int session_index) {
  std::ostringstream os;
  os << "task-" << to_string(script.task) << "_speed-" << to_string(script.speed)
     << "_cond-" << to_string(script.condition) << "_session-" << session_index << ".csv";
  return os.str();
}

void save_recording(const SessionRecording& rec, const std::string& csv_path) {
  std::ofstream out(csv_path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write recording: " + csv_path);
  out << expected_header() << '\n';

  const std::int64_t ticks = rec.truth.rows();
  std::string line;
  for (std::int64_t t = 0; t < ticks; ++t) {
    line.clear();
    line += std::to_string(rec.t_ms[static_cast<std::size_t>(t)]);
    for (int c = 0; c < 8; ++c) append_double(line, rec.emg.at(t, c));
    for (int j = 0; j < 8; ++j) append_double(line, rec.truth.at(t, j));
    for (int j = 0; j < 8; ++j) append_double(line, rec.vision.at(t, j));
    for (int j = 0; j < 8; ++j) {
      line += ',';
      line += rec.occluded.at(t, j) != 0.0 ? '1' : '0';
    }
    out << line << '\n';
  }
  if (!out) throw DataError("failed writing recording: " + csv_path);

  ordered_json meta;
  meta["format_version"] = 1;
  meta["task"] = to_string(rec.script.task);
  meta["speed"] = to_string(rec.script.speed);
  meta["condition"] = to_string(rec.script.condition);
  meta["seed"] = rec.script.seed;
  meta["repetitions"] = rec.script.repetitions;
  meta["dt_ms"] = kDtMs;
  ordered_json cam;
  cam["position"] = {rec.camera_position.x, rec.camera_position.y, rec.camera_position.z};
  cam["aim"] = {rec.camera_aim.x, rec.camera_aim.y, rec.camera_aim.z};
  meta["camera"] = std::move(cam);
  std::ofstream mout(csv_path + ".meta.json", std::ios::binary | std::ios::trunc);
  if (!mout) throw DataError("cannot write metadata: " + csv_path + ".meta.json");
  mout << meta.dump(1) << '\n';
}

SessionRecording load_recording(const std::string& csv_path) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw DataError("cannot open recording: " + csv_path);

  std::string header;
  if (!std::getline(in, header)) throw DataError("empty recording: " + csv_path);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  if (header != expected_header())
    throw DataError("unexpected recording header in " + csv_path);

  std::vector<std::array<double, 33>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<double, 33> row{};
    const char* p = line.c_str();
    for (int i = 0; i < 33; ++i) {
      char* end = nullptr;
      row[static_cast<std::size_t>(i)] = std::strtod(p, &end);
      if (end == p) throw DataError("malformed row in " + csv_path);
      p = end;
      if (i < 32) {
        if (*p != ',') throw DataError("malformed row in " + csv_path);
        ++p;
      }
    }
    rows.push_back(row);
  }

  SessionRecording rec;
  const auto ticks = static_cast<std::int64_t>(rows.size());
  rec.truth = Tensor({ticks, 8});
  rec.emg = Tensor({ticks, 8});
  rec.vision = Tensor({ticks, 8});
  rec.occluded = Tensor({ticks, 8});
  rec.t_ms.resize(rows.size());
  for (std::int64_t t = 0; t < ticks; ++t) {
    const auto& row = rows[static_cast<std::size_t>(t)];
    rec.t_ms[static_cast<std::size_t>(t)] = static_cast<std::int64_t>(row[0]);
    for (int i = 0; i < 8; ++i) {
      rec.emg.at(t, i) = row[static_cast<std::size_t>(1 + i)];
      rec.truth.at(t, i) = row[static_cast<std::size_t>(9 + i)];
      rec.vision.at(t, i) = row[static_cast<std::size_t>(17 + i)];
      rec.occluded.at(t, i) = row[static_cast<std::size_t>(25 + i)];
    }
  }

  // Metadata sidecar is optional on load; script fields keep their defaults
  // when it is absent.
  std::ifstream min(csv_path + ".meta.json", std::ios::binary);
  if (min) {
    try {
      ordered_json meta;
      min >> meta;
      rec.script.task = parse_task(meta.at("task").get<std::string>());
      rec.script.speed = parse_speed(meta.at("speed").get<std::string>());
      rec.script.condition = parse_condition(meta.at("condition").get<std::string>());
      rec.script.seed = meta.at("seed").get<std::uint64_t>();
      rec.script.repetitions = meta.at("repetitions").get<int>();
      const auto& cam = meta.at("camera");
      rec.camera_position = {cam.at("position")[0].get<double>(),
                             cam.at("position")[1].get<double>(),
                             cam.at("position")[2].get<double>()};
      rec.camera_aim = {cam.at("aim")[0].get<double>(), cam.at("aim")[1].get<double>(),
                        cam.at("aim")[2].get<double>()};
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed metadata for " + csv_path + ": " + e.what());
    }
  }
  return rec;
}

}  // namespace emghand::sim
