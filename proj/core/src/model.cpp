#include "emghand/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "emghand/errors.hpp"
#include "emghand/rng.hpp"

namespace emghand::model {

using ordered_json = nlohmann::ordered_json;

namespace {

Tensor uniform_init(Rng& rng, std::vector<std::int64_t> shape, std::int64_t fan_in) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

void expect_keys(const ordered_json& j, std::initializer_list<const char*> keys,
                 const char* ctx) {
  if (!j.is_object()) throw DataError(std::string(ctx) + ": expected an object");
  for (const char* k : keys)
    if (!j.contains(k)) throw DataError(std::string(ctx) + ": missing field '" + k + "'");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* k : keys) known = known || key == k;
    if (!known) throw DataError(std::string(ctx) + ": unknown field '" + key + "'");
  }
}

std::vector<double> to_doubles(const ordered_json& j, const char* ctx) {
  if (!j.is_array()) throw DataError(std::string(ctx) + ": expected an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) throw DataError(std::string(ctx) + ": expected numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  if (n < 2) throw std::invalid_argument("config: window length n must be >= 2");
  if (n_hat < 1 || n_hat > n)
    throw std::invalid_argument("config: n_hat must satisfy 1 <= n_hat <= n");
  if (channels < 1) throw std::invalid_argument("config: channels must be >= 1");
  if (joints < 1) throw std::invalid_argument("config: joints must be >= 1");
  for (std::int64_t w : {lstm_hidden, feat_hidden, wav_hidden, filt_hidden, final_hidden})
    if (w < 1) throw std::invalid_argument("config: layer widths must be >= 1");
}

std::int64_t ModelConfig::wavelet_per_channel() const {
  std::int64_t len = n;
  for (int level = 0; level < 4; ++level) len = (len + 7) / 2;
  return 2 * len;  // approximation + detail
}

void Dataset::add_recording(Tensor emg_stream, Tensor truth_stream, std::int64_t n,
                            std::int64_t hop) {
  if (emg_stream.rank() != 2 || truth_stream.rank() != 2)
    throw std::invalid_argument("dataset streams must be matrices");
  if (emg_stream.rows() != truth_stream.rows())
    throw std::invalid_argument("emg and truth streams must share length");
  if (hop < 1) throw std::invalid_argument("hop must be >= 1");
  const auto session = static_cast<std::int32_t>(emg.size());
  const std::int64_t total = emg_stream.rows();
  emg.push_back(std::move(emg_stream));
  truth.push_back(std::move(truth_stream));
  for (std::int64_t start = 0; start + n <= total; start += hop)
    windows.push_back({session, static_cast<std::int32_t>(start)});
}

double TrainReport::smoothed_loss_at(std::int64_t step, std::int64_t window) const {
  const auto count = static_cast<std::int64_t>(loss_curve.size());
  if (step < 1 || step > count) throw std::invalid_argument("step outside loss curve");
  const std::int64_t lo = std::max<std::int64_t>(0, step - window);
  double acc = 0.0;
  for (std::int64_t i = lo; i < step; ++i) acc += loss_curve[static_cast<std::size_t>(i)];
  return acc / static_cast<double>(step - lo);
}

Model::Model(ModelConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  const std::int64_t h4 = 4 * cfg_.lstm_hidden;

  // Creation order is fixed; together with the seeded generator this makes
  // two builds with equal seeds bit-identical.
  params_.create("lstm.wx", uniform_init(rng, {cfg_.channels, h4}, cfg_.channels));
  params_.create("lstm.wh", uniform_init(rng, {cfg_.lstm_hidden, h4}, cfg_.lstm_hidden));
  params_.create("lstm.b", Tensor({h4}));

  params_.create("feat.w1", uniform_init(rng, {cfg_.feat_width(), cfg_.feat_hidden}, cfg_.feat_width()));
  params_.create("feat.b1", Tensor({cfg_.feat_hidden}));
  params_.create("feat.w2", uniform_init(rng, {cfg_.feat_hidden, cfg_.feat_hidden}, cfg_.feat_hidden));
  params_.create("feat.b2", Tensor({cfg_.feat_hidden}));

  params_.create("wav.w1", uniform_init(rng, {cfg_.wav_width(), cfg_.wav_hidden}, cfg_.wav_width()));
  params_.create("wav.b1", Tensor({cfg_.wav_hidden}));
  params_.create("wav.w2", uniform_init(rng, {cfg_.wav_hidden, cfg_.wav_hidden}, cfg_.wav_hidden));
  params_.create("wav.b2", Tensor({cfg_.wav_hidden}));

  const std::int64_t filt_in = cfg_.n_hat * cfg_.channels;
  params_.create("filt.w1", uniform_init(rng, {filt_in, cfg_.filt_hidden}, filt_in));
  params_.create("filt.b1", Tensor({cfg_.filt_hidden}));

  params_.create("final.w1",
                 uniform_init(rng, {cfg_.concat_width(), cfg_.final_hidden}, cfg_.concat_width()));
  params_.create("final.b1", Tensor({cfg_.final_hidden}));
  params_.create("final.w2",
                 uniform_init(rng, {cfg_.final_hidden, cfg_.joints}, cfg_.final_hidden));
  params_.create("final.b2", Tensor({cfg_.joints}));
}

void Model::set_normalization(Normalization n) {
  if (static_cast<std::int64_t>(n.mean.size()) != cfg_.channels ||
      static_cast<std::int64_t>(n.stddev.size()) != cfg_.channels)
    throw std::invalid_argument("normalization arrays must have one entry per channel");
  for (double& s : n.stddev) s = std::max(s, 1e-6);
  norm_ = std::move(n);
}

Tensor Model::normalized_window(const Tensor& samples) const {
  Tensor out = samples;
  const std::int64_t rows = out.rows(), cols = out.cols();
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c)
      out.at(r, c) = (out.at(r, c) - norm_.mean[static_cast<std::size_t>(c)]) /
                     norm_.stddev[static_cast<std::size_t>(c)];
  return out;
}

nn::Var Model::build_forward(nn::Tape& tape, nn::Var lstm_seq, nn::Var feat,
                             nn::Var wav, const std::array<int, 4>& order) {
  using nn::Activation;
  nn::Var lstm_out =
      nn::lstm_last_hidden(tape, lstm_seq, nn::param(tape, params_.at("lstm.wx")),
                           nn::param(tape, params_.at("lstm.wh")),
                           nn::param(tape, params_.at("lstm.b")), cfg_.lstm_hidden);

  nn::Var f = nn::fc(tape, feat, nn::param(tape, params_.at("feat.w1")),
                     nn::param(tape, params_.at("feat.b1")), Activation::relu);
  f = nn::fc(tape, f, nn::param(tape, params_.at("feat.w2")),
             nn::param(tape, params_.at("feat.b2")), Activation::relu);

  nn::Var w = nn::fc(tape, wav, nn::param(tape, params_.at("wav.w1")),
                     nn::param(tape, params_.at("wav.b1")), Activation::relu);
  w = nn::fc(tape, w, nn::param(tape, params_.at("wav.w2")),
             nn::param(tape, params_.at("wav.b2")), Activation::relu);

  nn::Var filt = nn::fc(tape, nn::flatten_rows(tape, lstm_seq),
                        nn::param(tape, params_.at("filt.w1")),
                        nn::param(tape, params_.at("filt.b1")), Activation::relu);

  const std::array<nn::Var, 4> canonical = {lstm_out, f, w, filt};
  std::vector<nn::Var> parts;
  for (int idx : order) parts.push_back(canonical[static_cast<std::size_t>(idx)]);

  nn::Var cat = nn::concat_cols(tape, parts);
  nn::Var head = nn::fc(tape, cat, nn::param(tape, params_.at("final.w1")),
                        nn::param(tape, params_.at("final.b1")), Activation::relu);
  return nn::fc(tape, head, nn::param(tape, params_.at("final.w2")),
                nn::param(tape, params_.at("final.b2")), Activation::identity);
}

Tensor Model::forward_batch(const Tensor& lstm_seq, const Tensor& feat,
                            const Tensor& wav) {
  nn::Tape tape;
  nn::Var seq = nn::input(tape, lstm_seq);
  nn::Var fv = nn::input(tape, feat);
  nn::Var wv = nn::input(tape, wav);
  nn::Var out = build_forward(tape, seq, fv, wv, {0, 1, 2, 3});
  return out->val();
}

namespace {

struct BatchInputs {
  Tensor lstm_seq;  // B x n_hat x C
  Tensor feat;      // B x 6C
  Tensor wav;       // B x wav_width
  Tensor target;    // B x joints
};

}  // namespace

JointAngleVector Model::forward(const signal::EmgWindow& window) {
  if (norm_.mean.empty())
    throw std::logic_error("model has no input normalization; load or train first");
  if (window.samples.rank() != 2 || window.rows() != cfg_.n || window.cols() != cfg_.channels)
    throw std::invalid_argument("window shape " + window.samples.shape_str() +
                                " does not match model config");
  const Tensor norm = normalized_window(window.samples);
  const signal::FeatureVector features = signal::features_of_matrix(norm);

  Tensor seq({1, cfg_.n_hat, cfg_.channels});
  const std::int64_t tail = cfg_.n - cfg_.n_hat;
  std::copy_n(norm.data() + tail * cfg_.channels, cfg_.n_hat * cfg_.channels, seq.data());
  Tensor feat({1, cfg_.feat_width()}, features.time_freq.values());
  Tensor wav({1, cfg_.wav_width()}, features.wavelet.values());

  const Tensor out = forward_batch(seq, feat, wav);
  JointAngleVector angles;
  for (int j = 0; j < kJointCount; ++j) angles[j] = out[j];
  return angles.clamped();
}

JointAngleVector Model::testing::forward_with_branch_order(
    Model& m, const signal::EmgWindow& window, const std::array<int, 4>& order) {
  const Tensor norm = m.normalized_window(window.samples);
  const signal::FeatureVector features = signal::features_of_matrix(norm);
  Tensor seq({1, m.cfg_.n_hat, m.cfg_.channels});
  const std::int64_t tail = m.cfg_.n - m.cfg_.n_hat;
  std::copy_n(norm.data() + tail * m.cfg_.channels, m.cfg_.n_hat * m.cfg_.channels, seq.data());
  Tensor feat({1, m.cfg_.feat_width()}, features.time_freq.values());
  Tensor wav({1, m.cfg_.wav_width()}, features.wavelet.values());

  nn::Tape tape;
  nn::Var out = m.build_forward(tape, nn::input(tape, std::move(seq)),
                                nn::input(tape, std::move(feat)),
                                nn::input(tape, std::move(wav)), order);
  JointAngleVector angles;
  for (int j = 0; j < kJointCount; ++j) angles[j] = out->val()[j];
  return angles.clamped();
}

nn::Var Model::testing::build_loss(Model& m, nn::Tape& tape, const Tensor& lstm_seq,
                                   const Tensor& feat, const Tensor& wav,
                                   const Tensor& target) {
  nn::Var out = m.build_forward(tape, nn::input(tape, lstm_seq), nn::input(tape, feat),
                                nn::input(tape, wav), {0, 1, 2, 3});
  return nn::mse_loss(tape, out, target);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

struct PreparedData {
  std::vector<Dataset::WindowRef> train, val;
  Tensor feat;    // over all windows, train first then val
  Tensor wav;
  Tensor target;
  std::int64_t n_train = 0;
};

}  // namespace

struct Trainer {
  Model& m;
  const Dataset& data;
  const TrainOptions& opts;
  PreparedData prep;

  Trainer(Model& model, const Dataset& d, const TrainOptions& o) : m(model), data(d), opts(o) {
    if (d.windows.empty()) throw std::invalid_argument("train: empty dataset");
    if (o.batch < 1 || o.max_steps < 0 || o.eval_every < 1)
      throw std::invalid_argument("train: invalid options");
    split();
    compute_normalization();
    precompute_features();
  }

  // Contiguous 90/10 split within each recording; random per-window splits
  // would leak overlapping windows across the boundary.
  void split() {
    std::vector<std::vector<Dataset::WindowRef>> by_session(data.emg.size());
    for (const auto& w : data.windows) by_session[static_cast<std::size_t>(w.session)].push_back(w);
    for (auto& ws : by_session) {
      const auto k = static_cast<std::int64_t>(ws.size());
      const std::int64_t cut = (k * 9) / 10;
      for (std::int64_t i = 0; i < k; ++i)
        (i < cut ? prep.train : prep.val).push_back(ws[static_cast<std::size_t>(i)]);
    }
    if (prep.train.empty()) prep.train = prep.val;
    if (prep.val.empty()) prep.val = prep.train;  // degenerate tiny datasets
    prep.n_train = static_cast<std::int64_t>(prep.train.size());
  }

  void compute_normalization() {
    const std::int64_t c = m.config().channels;
    std::vector<double> sum(static_cast<std::size_t>(c), 0.0);
    std::vector<double> sumsq(static_cast<std::size_t>(c), 0.0);
    std::int64_t rows = 0;
    for (const auto& w : prep.train) {
      const Tensor& stream = data.emg[static_cast<std::size_t>(w.session)];
      for (std::int64_t r = 0; r < m.config().n; ++r) {
        const double* row = stream.data() + (w.start + r) * c;
        for (std::int64_t ch = 0; ch < c; ++ch) {
          sum[static_cast<std::size_t>(ch)] += row[ch];
          sumsq[static_cast<std::size_t>(ch)] += row[ch] * row[ch];
        }
      }
      rows += m.config().n;
    }
    Normalization norm;
    norm.mean.resize(static_cast<std::size_t>(c));
    norm.stddev.resize(static_cast<std::size_t>(c));
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const double mu = sum[static_cast<std::size_t>(ch)] / static_cast<double>(rows);
      const double var = sumsq[static_cast<std::size_t>(ch)] / static_cast<double>(rows) - mu * mu;
      norm.mean[static_cast<std::size_t>(ch)] = mu;
      norm.stddev[static_cast<std::size_t>(ch)] = std::sqrt(std::max(var, 0.0));
    }
    m.set_normalization(std::move(norm));
  }

  void precompute_features() {
    const auto& cfg = m.config();
    const std::int64_t total = static_cast<std::int64_t>(prep.train.size() + prep.val.size());
    prep.feat = Tensor({total, cfg.feat_width()});
    prep.wav = Tensor({total, cfg.wav_width()});
    prep.target = Tensor({total, cfg.joints});
    Tensor window({cfg.n, cfg.channels});
    for (std::int64_t i = 0; i < total; ++i) {
      const auto& w = window_at(i);
      const Tensor& stream = data.emg[static_cast<std::size_t>(w.session)];
      std::copy_n(stream.data() + w.start * cfg.channels, cfg.n * cfg.channels, window.data());
      const signal::FeatureVector f = signal::features_of_matrix(m.normalized_window(window));
      std::copy_n(f.time_freq.data(), cfg.feat_width(), prep.feat.data() + i * cfg.feat_width());
      std::copy_n(f.wavelet.data(), cfg.wav_width(), prep.wav.data() + i * cfg.wav_width());
      const Tensor& truth = data.truth[static_cast<std::size_t>(w.session)];
      std::copy_n(truth.data() + (w.start + cfg.n - 1) * cfg.joints, cfg.joints,
                  prep.target.data() + i * cfg.joints);
    }
  }

  const Dataset::WindowRef& window_at(std::int64_t i) const {
    return i < prep.n_train ? prep.train[static_cast<std::size_t>(i)]
                            : prep.val[static_cast<std::size_t>(i - prep.n_train)];
  }

  void gather_lstm(const std::vector<std::int64_t>& idx, Tensor& seq) const {
    const auto& cfg = m.config();
    const auto& norm = m.normalization();
    const std::int64_t c = cfg.channels;
    const std::int64_t tail = cfg.n - cfg.n_hat;
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const auto& w = window_at(idx[b]);
      const Tensor& stream = data.emg[static_cast<std::size_t>(w.session)];
      const double* src = stream.data() + (w.start + tail) * c;
      double* dst = seq.data() + static_cast<std::int64_t>(b) * cfg.n_hat * c;
      for (std::int64_t i = 0; i < cfg.n_hat * c; ++i) {
        const std::int64_t ch = i % c;
        dst[i] = (src[i] - norm.mean[static_cast<std::size_t>(ch)]) /
                 norm.stddev[static_cast<std::size_t>(ch)];
      }
    }
  }

  BatchInputs gather(const std::vector<std::int64_t>& idx) const {
    const auto& cfg = m.config();
    const auto b = static_cast<std::int64_t>(idx.size());
    BatchInputs in;
    in.lstm_seq = Tensor({b, cfg.n_hat, cfg.channels});
    in.feat = Tensor({b, cfg.feat_width()});
    in.wav = Tensor({b, cfg.wav_width()});
    in.target = Tensor({b, cfg.joints});
    gather_lstm(idx, in.lstm_seq);
    for (std::int64_t i = 0; i < b; ++i) {
      const std::int64_t g = idx[static_cast<std::size_t>(i)];
      std::copy_n(prep.feat.data() + g * cfg.feat_width(), cfg.feat_width(),
                  in.feat.data() + i * cfg.feat_width());
      std::copy_n(prep.wav.data() + g * cfg.wav_width(), cfg.wav_width(),
                  in.wav.data() + i * cfg.wav_width());
      std::copy_n(prep.target.data() + g * cfg.joints, cfg.joints,
                  in.target.data() + i * cfg.joints);
    }
    return in;
  }

  double validation_error() {
    const auto n_val = static_cast<std::int64_t>(prep.val.size());
    double acc = 0.0;
    std::int64_t count = 0;
    for (std::int64_t lo = 0; lo < n_val; lo += opts.batch) {
      const std::int64_t hi = std::min(n_val, lo + opts.batch);
      std::vector<std::int64_t> idx;
      for (std::int64_t i = lo; i < hi; ++i) idx.push_back(prep.n_train + i);
      BatchInputs in = gather(idx);
      const Tensor out = m.forward_batch(in.lstm_seq, in.feat, in.wav);
      for (std::int64_t i = 0; i < out.size(); ++i) {
        const double pred = std::clamp(out[i], kAngleMinDeg, kAngleMaxDeg);
        acc += std::abs(pred - in.target[i]);
        ++count;
      }
    }
    return acc / static_cast<double>(count);
  }

  TrainReport run(TrainState state) {
    Rng batch_rng(derive_seed(opts.seed, {0xBA7C4, static_cast<std::uint64_t>(state.step)}));
    TrainReport report;
    report.loss_curve = std::move(state.loss_curve);
    report.val_curve = std::move(state.val_curve);
    double val = report.val_curve.empty() ? std::numeric_limits<double>::infinity()
                                          : report.val_curve.back().second;
    std::int64_t step = state.step;
    bool reached = val < opts.target_deg;

    while (!reached && step < opts.max_steps) {
      ++step;
      std::vector<std::int64_t> idx(static_cast<std::size_t>(opts.batch));
      for (auto& i : idx) i = batch_rng.uniform_int(prep.n_train);
      BatchInputs in = gather(idx);

      nn::Tape tape;
      nn::Var seq = nn::input(tape, std::move(in.lstm_seq));
      nn::Var fv = nn::input(tape, std::move(in.feat));
      nn::Var wv = nn::input(tape, std::move(in.wav));
      nn::Var out = m.build_forward(tape, seq, fv, wv, {0, 1, 2, 3});
      nn::Var loss = nn::mse_loss(tape, out, in.target);
      nn::backward(tape, loss);
      nn::adam_step(m.params(), nn::lr_schedule(step - 1));
      report.loss_curve.push_back(loss->val()[0]);

      if (step % opts.eval_every == 0 || step == opts.max_steps) {
        val = validation_error();
        report.val_curve.emplace_back(step, val);
        m.trained_steps = step;
        m.final_validation_error_deg = val;
        if (!opts.periodic_checkpoint.empty()) {
          m.save_checkpoint(opts.periodic_checkpoint);
          TrainState st;
          st.step = step;
          st.adam_steps = m.params().adam_steps;
          st.loss_curve = report.loss_curve;
          st.val_curve = report.val_curve;
          TrainState::save(m, st, opts.periodic_checkpoint + ".state.json");
        }
        if (val < opts.target_deg) reached = true;
      }
    }

    if (report.val_curve.empty() || report.val_curve.back().first != step) {
      val = validation_error();
      report.val_curve.emplace_back(step, val);
    }
    report.steps = step;
    report.final_val_deg = val;
    report.reached_target = val < opts.target_deg;
    m.trained_steps = step;
    m.final_validation_error_deg = val;
    return report;
  }
};

TrainReport Model::train(const Dataset& data, const TrainOptions& opts) {
  Trainer trainer(*this, data, opts);
  return trainer.run(TrainState{});
}

TrainReport train_resume(Model& m, const Dataset& data, const TrainOptions& opts,
                         TrainState state) {
  Trainer trainer(m, data, opts);
  m.params().adam_steps = state.adam_steps;
  return trainer.run(std::move(state));
}

// ---------------------------------------------------------------------------
// Checkpoint serialization
// ---------------------------------------------------------------------------

void Model::save_checkpoint(const std::string& path) const {
  ordered_json j;
  j["format_version"] = 1;
  ordered_json cfg;
  cfg["n"] = cfg_.n;
  cfg["n_hat"] = cfg_.n_hat;
  cfg["channels"] = cfg_.channels;
  cfg["joints"] = cfg_.joints;
  cfg["lstm_hidden"] = cfg_.lstm_hidden;
  cfg["feat_hidden"] = cfg_.feat_hidden;
  cfg["wav_hidden"] = cfg_.wav_hidden;
  cfg["filt_hidden"] = cfg_.filt_hidden;
  cfg["final_hidden"] = cfg_.final_hidden;
  cfg["seed"] = cfg_.seed;
  j["config"] = std::move(cfg);
  ordered_json norm;
  norm["mean"] = norm_.mean;
  norm["std"] = norm_.stddev;
  j["normalization"] = std::move(norm);
  ordered_json params = ordered_json::array();
  for (const auto& [name, p] : params_.entries()) {
    if (!p.value.all_finite()) throw InternalError("refusing to save non-finite parameter " + name);
    ordered_json pj;
    pj["name"] = name;
    pj["shape"] = p.value.shape();
    pj["values"] = p.value.values();
    params.push_back(std::move(pj));
  }
  j["params"] = std::move(params);
  ordered_json training;
  training["steps"] = trained_steps;
  training["final_validation_error_deg"] = final_validation_error_deg;
  j["training"] = std::move(training);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out << j.dump(1) << '\n';
  if (!out) throw DataError("failed writing checkpoint: " + path);
}

Model Model::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint " + path + ": " + e.what());
  }

  expect_keys(j, {"format_version", "config", "normalization", "params", "training"},
              "checkpoint");
  if (!j["format_version"].is_number_integer() || j["format_version"].get<int>() != 1)
    throw DataError("unsupported checkpoint format_version");

  const ordered_json& cj = j["config"];
  expect_keys(cj,
              {"n", "n_hat", "channels", "joints", "lstm_hidden", "feat_hidden",
               "wav_hidden", "filt_hidden", "final_hidden", "seed"},
              "checkpoint config");
  ModelConfig cfg;
  cfg.n = cj["n"].get<std::int64_t>();
  cfg.n_hat = cj["n_hat"].get<std::int64_t>();
  cfg.channels = cj["channels"].get<std::int64_t>();
  cfg.joints = cj["joints"].get<std::int64_t>();
  cfg.lstm_hidden = cj["lstm_hidden"].get<std::int64_t>();
  cfg.feat_hidden = cj["feat_hidden"].get<std::int64_t>();
  cfg.wav_hidden = cj["wav_hidden"].get<std::int64_t>();
  cfg.filt_hidden = cj["filt_hidden"].get<std::int64_t>();
  cfg.final_hidden = cj["final_hidden"].get<std::int64_t>();
  cfg.seed = cj["seed"].get<std::uint64_t>();
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("invalid checkpoint config: ") + e.what());
  }

  Model m(cfg);

  const ordered_json& nj = j["normalization"];
  expect_keys(nj, {"mean", "std"}, "checkpoint normalization");
  Normalization norm;
  norm.mean = to_doubles(nj["mean"], "normalization.mean");
  norm.stddev = to_doubles(nj["std"], "normalization.std");
  try {
    m.set_normalization(std::move(norm));
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("invalid checkpoint normalization: ") + e.what());
  }

  if (!j["params"].is_array()) throw DataError("checkpoint params must be an array");
  std::size_t seen = 0;
  for (const auto& pj : j["params"]) {
    expect_keys(pj, {"name", "shape", "values"}, "checkpoint param");
    const std::string name = pj["name"].get<std::string>();
    if (!m.params_.contains(name)) throw DataError("checkpoint has unknown parameter " + name);
    nn::Param& p = m.params_.at(name);
    std::vector<std::int64_t> shape = pj["shape"].get<std::vector<std::int64_t>>();
    if (shape != p.value.shape())
      throw DataError("checkpoint parameter " + name + " has wrong shape");
    std::vector<double> values = to_doubles(pj["values"], "param values");
    if (static_cast<std::int64_t>(values.size()) != p.value.size())
      throw DataError("checkpoint parameter " + name + " has wrong size");
    p.value = Tensor(std::move(shape), std::move(values));
    if (!p.value.all_finite()) throw DataError("checkpoint parameter " + name + " is non-finite");
    ++seen;
  }
  if (seen != m.params_.entries().size())
    throw DataError("checkpoint is missing parameters");

  const ordered_json& tj = j["training"];
  expect_keys(tj, {"steps", "final_validation_error_deg"}, "checkpoint training");
  m.trained_steps = tj["steps"].get<std::int64_t>();
  m.final_validation_error_deg = tj["final_validation_error_deg"].get<double>();
  return m;
}

void TrainState::save(const Model& m, const TrainState& st, const std::string& path) {
  ordered_json j;
  j["format_version"] = 1;
  j["step"] = st.step;
  j["adam_steps"] = st.adam_steps;
  ordered_json moments = ordered_json::array();
  for (const auto& [name, p] : m.params().entries()) {
    ordered_json mj;
    mj["name"] = name;
    mj["m"] = p.m.values();
    mj["v"] = p.v.values();
    moments.push_back(std::move(mj));
  }
  j["moments"] = std::move(moments);
  j["loss_curve"] = st.loss_curve;
  ordered_json vc = ordered_json::array();
  for (const auto& [s, e] : st.val_curve) vc.push_back(ordered_json::array({s, e}));
  j["val_curve"] = std::move(vc);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write train state: " + path);
  out << j.dump() << '\n';
}

TrainState TrainState::load(Model& m, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open train state: " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed train state " + path + ": " + e.what());
  }
  expect_keys(j, {"format_version", "step", "adam_steps", "moments", "loss_curve", "val_curve"},
              "train state");
  TrainState st;
  st.step = j["step"].get<std::int64_t>();
  st.adam_steps = j["adam_steps"].get<std::int64_t>();
  for (const auto& mj : j["moments"]) {
    expect_keys(mj, {"name", "m", "v"}, "train state moment");
    const std::string name = mj["name"].get<std::string>();
    nn::Param& p = m.params().at(name);
    std::vector<double> mvals = to_doubles(mj["m"], "moment m");
    std::vector<double> vvals = to_doubles(mj["v"], "moment v");
    if (static_cast<std::int64_t>(mvals.size()) != p.value.size() ||
        static_cast<std::int64_t>(vvals.size()) != p.value.size())
      throw DataError("train state moment size mismatch for " + name);
    p.m = Tensor(p.value.shape(), std::move(mvals));
    p.v = Tensor(p.value.shape(), std::move(vvals));
  }
  st.loss_curve = to_doubles(j["loss_curve"], "loss curve");
  for (const auto& e : j["val_curve"])
    st.val_curve.emplace_back(e[0].get<std::int64_t>(), e[1].get<double>());
  return st;
}

}  // namespace emghand::model
