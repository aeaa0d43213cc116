#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace emghand::cli {

struct GenerateArgs {
  std::string out_dir;
  std::uint64_t seed = 42;
  std::vector<std::string> tasks;       // empty = all six
  std::vector<std::string> speeds;      // empty = all three
  std::vector<std::string> conditions;  // empty = both
  int sessions = 3;
  int repetitions = 8;
};
int cmd_generate(const GenerateArgs& args);

struct TrainArgs {
  std::string data_dir;
  std::string out_checkpoint;
  std::string report_path;  // optional JSON report
  std::string condition_filter = "full_view";  // or "occluded" / "all"
  std::int64_t max_steps = 50000;
  double target_deg = 3.0;
  std::int64_t batch = 256;
  std::uint64_t seed = 42;
  std::int64_t hop = 1;
  bool resume = false;
  // architecture (documented defaults; reduced sizes are for experiments)
  std::int64_t window_n = 150;
  std::int64_t window_n_hat = 50;
  std::int64_t lstm_hidden = 128;
  std::int64_t feat_hidden = 64;
  std::int64_t wav_hidden = 64;
  std::int64_t filt_hidden = 128;
  std::int64_t final_hidden = 256;
};
int cmd_train(const TrainArgs& args);

struct InferArgs {
  std::string checkpoint;
  std::string data_path;  // recording file or directory
  std::string out_dir;
};
int cmd_infer(const InferArgs& args);

struct EvalArgs {
  std::string data_dir;
  std::string pred_dir;
  std::string out_dir;
};
int cmd_eval(const EvalArgs& args);

struct ServeArgs {
  std::string checkpoint;
  std::uint16_t emg_port = 7711;
  std::uint16_t vision_port = 7712;
  std::uint16_t out_port = 7713;
  int tolerance_ms = 10;
  int queue = 64;
  bool once = false;
};
int cmd_serve(const ServeArgs& args);

struct SelftestArgs {
  bool inject_lstm_fault = false;
};
int cmd_selftest(const SelftestArgs& args);

}  // namespace emghand::cli
