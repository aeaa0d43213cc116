#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "emghand/joints.hpp"
#include "emghand/nn.hpp"
#include "emghand/signal.hpp"
#include "emghand/tensor.hpp"

namespace emghand::model {

struct Trainer;

struct ModelConfig {
  std::int64_t n = 150;       // window length
  std::int64_t n_hat = 50;    // recent-sample count fed to the LSTM/raw branch
  std::int64_t channels = 8;
  std::int64_t joints = 8;
  std::int64_t lstm_hidden = 128;
  std::int64_t feat_hidden = 64;
  std::int64_t wav_hidden = 64;
  std::int64_t filt_hidden = 128;
  std::int64_t final_hidden = 256;
  std::uint64_t seed = 42;

  void validate() const;  // throws std::invalid_argument
  std::int64_t concat_width() const {
    return lstm_hidden + feat_hidden + wav_hidden + filt_hidden;
  }
  /// Wavelet coefficients per channel after the level-4 cascade.
  std::int64_t wavelet_per_channel() const;
  std::int64_t feat_width() const { return channels * 6; }
  std::int64_t wav_width() const { return channels * wavelet_per_channel(); }
};

/// Per-channel input statistics baked into the checkpoint at training time.
struct Normalization {
  std::vector<double> mean;
  std::vector<double> stddev;
};

/// Training corpus: raw per-recording streams plus the window index built
/// over them. Windows reference stream rows instead of owning copies.
struct Dataset {
  struct WindowRef {
    std::int32_t session = 0;
    std::int32_t start = 0;
  };

  std::vector<Tensor> emg;     // per recording: T x C raw samples
  std::vector<Tensor> truth;   // per recording: T x 8 degrees
  std::vector<WindowRef> windows;

  /// Adds one recording and indexes its windows at the given hop.
  void add_recording(Tensor emg_stream, Tensor truth_stream, std::int64_t n,
                     std::int64_t hop = 1);
  std::int64_t window_count() const { return static_cast<std::int64_t>(windows.size()); }
};

struct TrainOptions {
  std::int64_t max_steps = 50000;
  double target_deg = 3.0;
  std::int64_t batch = 256;
  std::uint64_t seed = 42;
  std::int64_t eval_every = 500;
  /// When set, a resumable checkpoint is written here at every evaluation.
  std::string periodic_checkpoint;
};

struct TrainReport {
  std::int64_t steps = 0;
  double final_val_deg = 0.0;
  bool reached_target = false;
  std::vector<double> loss_curve;                          // one entry per step
  std::vector<std::pair<std::int64_t, double>> val_curve;  // (step, mean abs deg)

  /// Mean loss over a trailing window ending at `step` (1-based steps).
  double smoothed_loss_at(std::int64_t step, std::int64_t window = 50) const;
};

/// The four-branch window-to-angles estimator: an LSTM and a raw fully
/// connected branch over the trailing samples, plus fully connected branches
/// over time/frequency features and wavelet features of the whole window,
/// concatenated and reduced by a final head.
class Model {
 public:
  explicit Model(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  const Normalization& normalization() const { return norm_; }
  void set_normalization(Normalization n);

  /// Inference on one window: normalization, feature extraction, forward
  /// pass, clamp to the physiological range. Deterministic.
  JointAngleVector forward(const signal::EmgWindow& window);

  /// Batched unclamped forward over prepared inputs (training/eval path).
  Tensor forward_batch(const Tensor& lstm_seq, const Tensor& feat,
                       const Tensor& wav);

  TrainReport train(const Dataset& data, const TrainOptions& opts);

  void save_checkpoint(const std::string& path) const;
  static Model load_checkpoint(const std::string& path);

  /// Metadata persisted in the checkpoint.
  std::int64_t trained_steps = 0;
  double final_validation_error_deg = 0.0;

  struct testing {
    /// Forward with a permuted branch order; only the canonical order
    /// {0,1,2,3} = [lstm, feat, wav, filt] matches normal inference.
    static JointAngleVector forward_with_branch_order(
        Model& m, const signal::EmgWindow& window, const std::array<int, 4>& order);

    /// Builds the full forward graph plus an MSE loss (gradient-check harness).
    static nn::Var build_loss(Model& m, nn::Tape& tape, const Tensor& lstm_seq,
                              const Tensor& feat, const Tensor& wav,
                              const Tensor& target);
  };

 private:
  friend struct TrainState;
  friend struct Trainer;
  nn::Var build_forward(nn::Tape& tape, nn::Var lstm_seq, nn::Var feat, nn::Var wav,
                        const std::array<int, 4>& order);
  Tensor normalized_window(const Tensor& samples) const;

  ModelConfig cfg_;
  nn::ParamStore params_;
  Normalization norm_;
};

/// Resumable optimizer/trainer state sidecar (written next to periodic
/// checkpoints).
struct TrainState {
  std::int64_t step = 0;
  std::int64_t adam_steps = 0;
  std::vector<double> loss_curve;
  std::vector<std::pair<std::int64_t, double>> val_curve;

  static void save(const Model& m, const TrainState& st, const std::string& path);
  static TrainState load(Model& m, const std::string& path);
};

/// Continues a run from `state`; used by the CLI --resume path.
TrainReport train_resume(Model& m, const Dataset& data, const TrainOptions& opts,
                         TrainState state);

}  // namespace emghand::model
