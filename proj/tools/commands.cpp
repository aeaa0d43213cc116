#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <json.hpp>

#include "emghand/errors.hpp"
#include "emghand/fusion.hpp"
#include "emghand/handsim.hpp"
#include "emghand/model.hpp"
#include "emghand/occlusion.hpp"
#include "emghand/rng.hpp"
#include "emghand/selftest.hpp"
#include "emghand/signal.hpp"
#include "emghand/stats.hpp"

namespace emghand::cli {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::vector<sim::TaskId> parse_tasks(const std::vector<std::string>& names) {
  if (names.empty())
    return {sim::TaskId::i, sim::TaskId::ii, sim::TaskId::iii,
            sim::TaskId::iv, sim::TaskId::v, sim::TaskId::vi};
  std::vector<sim::TaskId> out;
  for (const auto& n : names) out.push_back(sim::parse_task(n));
  return out;
}

std::vector<sim::Speed> parse_speeds(const std::vector<std::string>& names) {
  if (names.empty()) return {sim::Speed::slow, sim::Speed::moderate, sim::Speed::fast};
  std::vector<sim::Speed> out;
  for (const auto& n : names) out.push_back(sim::parse_speed(n));
  return out;
}

std::vector<sim::Condition> parse_conditions(const std::vector<std::string>& names) {
  if (names.empty()) return {sim::Condition::full_view, sim::Condition::occluded};
  std::vector<sim::Condition> out;
  for (const auto& n : names) out.push_back(sim::parse_condition(n));
  return out;
}

/// Per-recording seed: mixes the base seed with task/speed/session indices.
/// The camera condition is deliberately excluded so that the two conditions
/// of one recording share the same hand motion and emg stream.
std::uint64_t recording_seed(std::uint64_t base, sim::TaskId task, sim::Speed speed,
                             int session) {
  return derive_seed(base, {static_cast<std::uint64_t>(task),
                            static_cast<std::uint64_t>(speed),
                            static_cast<std::uint64_t>(session)});
}

std::vector<fs::path> sorted_recordings(const std::string& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto& p = entry.path();
    if (p.extension() == ".csv" && p.string().find(".pred.csv") == std::string::npos)
      out.push_back(p);
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw DataError("no recordings (*.csv) found in " + dir);
  return out;
}

}  // namespace

int cmd_generate(const GenerateArgs& args) {
  fs::create_directories(args.out_dir);
  const auto tasks = parse_tasks(args.tasks);
  const auto speeds = parse_speeds(args.speeds);
  const auto conditions = parse_conditions(args.conditions);

  int written = 0;
  for (sim::TaskId task : tasks) {
    for (sim::Speed speed : speeds) {
      for (sim::Condition condition : conditions) {
        for (int session = 0; session < args.sessions; ++session) {
          sim::TaskScript script;
          script.task = task;
          script.speed = speed;
          script.condition = condition;
          script.repetitions = args.repetitions;
          script.seed = recording_seed(args.seed, task, speed, session);
          const sim::SessionRecording rec = sim::generate_session(script);
          const fs::path path = fs::path(args.out_dir) / sim::recording_filename(script, session);
          sim::save_recording(rec, path.string());
          ++written;
        }
      }
    }
  }
  std::cerr << "generate: wrote " << written << " recordings to " << args.out_dir << "\n";
  return 0;
}

int cmd_train(const TrainArgs& args) {
  model::ModelConfig cfg;
  cfg.n = args.window_n;
  cfg.n_hat = args.window_n_hat;
  cfg.lstm_hidden = args.lstm_hidden;
  cfg.feat_hidden = args.feat_hidden;
  cfg.wav_hidden = args.wav_hidden;
  cfg.filt_hidden = args.filt_hidden;
  cfg.final_hidden = args.final_hidden;
  cfg.seed = args.seed;

  model::Dataset data;
  int used = 0;
  for (const auto& path : sorted_recordings(args.data_dir)) {
    const sim::SessionRecording rec = sim::load_recording(path.string());
    if (args.condition_filter != "all" &&
        sim::to_string(rec.script.condition) != args.condition_filter)
      continue;
    data.add_recording(rec.emg, rec.truth, cfg.n, args.hop);
    ++used;
  }
  if (used == 0) throw DataError("no recordings matched condition " + args.condition_filter);
  std::cerr << "train: " << used << " recordings, " << data.window_count() << " windows\n";

  model::TrainOptions opts;
  opts.max_steps = args.max_steps;
  opts.target_deg = args.target_deg;
  opts.batch = args.batch;
  opts.seed = args.seed;
  opts.periodic_checkpoint = args.out_checkpoint;

  model::TrainReport report;
  model::Model m(cfg);
  if (args.resume) {
    m = model::Model::load_checkpoint(args.out_checkpoint);
    model::TrainState state =
        model::TrainState::load(m, args.out_checkpoint + ".state.json");
    std::cerr << "train: resuming from step " << state.step << "\n";
    report = model::train_resume(m, data, opts, std::move(state));
  } else {
    report = m.train(data, opts);
  }
  m.save_checkpoint(args.out_checkpoint);

  std::cerr << "train: " << report.steps << " steps, validation error "
            << report.final_val_deg << " deg"
            << (report.reached_target ? " (target reached)" : "") << "\n";

  if (!args.report_path.empty()) {
    ordered_json j;
    j["steps"] = report.steps;
    j["final_validation_error_deg"] = report.final_val_deg;
    j["reached_target"] = report.reached_target;
    j["target_deg"] = args.target_deg;
    j["batch"] = args.batch;
    j["loss_curve"] = report.loss_curve;
    ordered_json vc = ordered_json::array();
    for (const auto& [s, e] : report.val_curve) vc.push_back(ordered_json::array({s, e}));
    j["validation_curve"] = std::move(vc);
    std::ofstream out(args.report_path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write report: " + args.report_path);
    out << j.dump(1) << '\n';
  }
  return 0;
}

int cmd_infer(const InferArgs& args) {
  model::Model m = model::Model::load_checkpoint(args.checkpoint);
  const auto cfg = m.config();
  fs::create_directories(args.out_dir);

  std::vector<fs::path> inputs;
  if (fs::is_directory(args.data_path))
    inputs = sorted_recordings(args.data_path);
  else
    inputs.push_back(args.data_path);

  for (const auto& path : inputs) {
    const sim::SessionRecording rec = sim::load_recording(path.string());
    const std::int64_t ticks = rec.emg.rows();
    const fs::path out_path =
        fs::path(args.out_dir) / (path.stem().string() + ".pred.csv");
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write predictions: " + out_path.string());
    out << "t_ms";
    for (int j = 0; j < kJointCount; ++j) out << ",pred_" << j;
    out << '\n';

    signal::EmgWindow window;
    window.samples = Tensor({cfg.n, cfg.channels});
    std::string line;
    char buf[32];
    for (std::int64_t end = cfg.n - 1; end < ticks; ++end) {
      const std::int64_t start = end - cfg.n + 1;
      std::copy_n(rec.emg.data() + start * cfg.channels, cfg.n * cfg.channels,
                  window.samples.data());
      window.start_time_ms = static_cast<double>(rec.t_ms[static_cast<std::size_t>(start)]);
      const JointAngleVector angles = m.forward(window);
      line = std::to_string(rec.t_ms[static_cast<std::size_t>(end)]);
      for (int j = 0; j < kJointCount; ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", angles[j]);
        line += ',';
        line += buf;
      }
      out << line << '\n';
    }
    if (!out) throw DataError("failed writing predictions: " + out_path.string());
    std::cerr << "infer: " << out_path.string() << " (" << (ticks - cfg.n + 1)
              << " rows)\n";
  }
  return 0;
}

namespace {

struct PredFile {
  std::vector<std::int64_t> t_ms;
  Tensor angles;  // rows x 8
};

PredFile load_predictions(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open predictions: " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw DataError("empty predictions: " + path.string());
  PredFile out;
  std::vector<std::array<double, 9>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::array<double, 9> row{};
    const char* p = line.c_str();
    for (int i = 0; i < 9; ++i) {
      char* end = nullptr;
      row[static_cast<std::size_t>(i)] = std::strtod(p, &end);
      if (end == p) throw DataError("malformed prediction row in " + path.string());
      p = end;
      if (i < 8) ++p;  // comma
    }
    rows.push_back(row);
  }
  out.angles = Tensor({static_cast<std::int64_t>(rows.size()), 8});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.t_ms.push_back(static_cast<std::int64_t>(rows[r][0]));
    for (int j = 0; j < 8; ++j)
      out.angles.at(static_cast<std::int64_t>(r), j) = rows[r][static_cast<std::size_t>(1 + j)];
  }
  return out;
}

}  // namespace

int cmd_eval(const EvalArgs& args) {
  struct Accum {
    std::vector<double> vision_rows;      // row-major, 8 per tick
    std::vector<double> multimodal_rows;
    std::int64_t occ_flags = 0;
    std::int64_t occ_total = 0;
  };
  std::map<stats::TaskKey, Accum> groups;

  for (const auto& path : sorted_recordings(args.data_dir)) {
    const sim::SessionRecording rec = sim::load_recording(path.string());
    const fs::path pred_path =
        fs::path(args.pred_dir) / (path.stem().string() + ".pred.csv");
    if (!fs::exists(pred_path)) throw DataError("missing predictions: " + pred_path.string());
    const PredFile pred = load_predictions(pred_path);

    const std::int64_t ticks = rec.truth.rows();
    const std::int64_t rows = pred.angles.rows();
    if (rows > ticks) throw DataError("predictions longer than recording: " + pred_path.string());
    const std::int64_t first = ticks - rows;  // first window-complete tick

    Accum& acc = groups[{rec.script.task, rec.script.condition}];
    for (std::int64_t r = 0; r < rows; ++r) {
      const std::int64_t t = first + r;
      if (pred.t_ms[static_cast<std::size_t>(r)] != rec.t_ms[static_cast<std::size_t>(t)])
        throw DataError("prediction timestamps misaligned in " + pred_path.string());
      for (int j = 0; j < kJointCount; ++j) {
        acc.vision_rows.push_back(std::abs(rec.vision.at(t, j) - rec.truth.at(t, j)));
        acc.multimodal_rows.push_back(std::abs(pred.angles.at(r, j) - rec.truth.at(t, j)));
      }
    }
    for (std::int64_t t = 0; t < ticks; ++t)
      for (int j = 0; j < kJointCount; ++j) {
        acc.occ_total += 1;
        if (rec.occluded.at(t, j) != 0.0) acc.occ_flags += 1;
      }
  }

  std::map<stats::TaskKey, stats::TaskSample> data;
  for (auto& [key, acc] : groups) {
    stats::TaskSample sample;
    const auto ticks = static_cast<std::int64_t>(acc.vision_rows.size()) / kJointCount;
    sample.vision_diff = Tensor({ticks, kJointCount}, std::move(acc.vision_rows));
    sample.multimodal_diff = Tensor({ticks, kJointCount}, std::move(acc.multimodal_rows));
    sample.occlusion_pct =
        acc.occ_total > 0
            ? 100.0 * static_cast<double>(acc.occ_flags) / static_cast<double>(acc.occ_total)
            : 0.0;
    data[key] = std::move(sample);
  }

  const auto rows = stats::summarize(data);
  stats::render_report(rows, args.out_dir);

  std::ifstream summary(fs::path(args.out_dir) / "summary.txt");
  std::cout << summary.rdbuf();
  return 0;
}

int cmd_serve(const ServeArgs& args) {
  fusion::ServeOptions opts;
  opts.checkpoint_path = args.checkpoint;
  opts.emg_port = args.emg_port;
  opts.vision_port = args.vision_port;
  opts.out_port = args.out_port;
  opts.pairing.tolerance_ms = args.tolerance_ms;
  opts.pairing.queue_capacity = args.queue;
  opts.once = args.once;

  const fusion::ServeStats stats = fusion::serve(opts);

  ordered_json j;
  j["ticks"] = stats.counters.ticks;
  j["paired"] = stats.counters.paired;
  j["skipped"] = stats.counters.skipped;
  j["emg_received"] = stats.counters.emg_received;
  j["vision_received"] = stats.counters.vision_received;
  j["emg_dropped"] = stats.counters.emg_dropped;
  j["vision_dropped"] = stats.counters.vision_dropped;
  j["malformed"] = stats.counters.malformed;
  j["fused_emitted"] = stats.fused_emitted;
  j["p50_ms"] = stats.p50_ms;
  j["p99_ms"] = stats.p99_ms;
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_selftest(const SelftestArgs& args) {
  const auto results = selftest::run_all(args.inject_lstm_fault);
  bool all_passed = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS" : "FAIL") << "  " << r.name;
    if (!r.detail.empty()) std::cout << "  (" << r.detail << ")";
    std::cout << "\n";
    all_passed = all_passed && r.passed;
  }
  std::cout << (all_passed ? "selftest: all checks passed\n"
                           : "selftest: FAILURES detected\n");
  return all_passed ? 0 : 3;
}

}  // namespace emghand::cli
