#include "emghand/nn.hpp"

#include <Eigen/Core>

#include <atomic>
#include <cmath>
#include <stdexcept>

#include "emghand/errors.hpp"

namespace emghand::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<RowMat>;
using CMap = Eigen::Map<const RowMat>;

Map map2(Tensor& t, std::int64_t r, std::int64_t c) { return Map(t.data(), r, c); }
CMap cmap2(const Tensor& t, std::int64_t r, std::int64_t c) { return CMap(t.data(), r, c); }

void ensure_finite(const Tensor& t, const char* op) {
  if (!t.all_finite())
    throw InternalError(std::string("non-finite values produced by ") + op);
}

void check_rank2(const Tensor& t, const char* what) {
  if (t.rank() != 2)
    throw std::invalid_argument(std::string(what) + " must be rank 2, got " + t.shape_str());
}

std::atomic<bool> g_lstm_fault{false};

}  // namespace

namespace testing {
void set_lstm_backward_fault(bool enabled) { g_lstm_fault = enabled; }
bool lstm_backward_fault() { return g_lstm_fault; }
}  // namespace testing

Param::Param(Tensor init)
    : value(std::move(init)),
      grad(value.shape()),
      m(value.shape()),
      v(value.shape()) {}

Param& ParamStore::create(const std::string& name, Tensor init) {
  auto [it, inserted] = params_.emplace(name, Param(std::move(init)));
  if (!inserted) throw std::invalid_argument("duplicate parameter name: " + name);
  return it->second;
}

Param& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::invalid_argument("unknown parameter: " + name);
  return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::invalid_argument("unknown parameter: " + name);
  return it->second;
}

void ParamStore::zero_grads() {
  for (auto& [name, p] : params_) p.grad.fill(0.0);
}

std::int64_t ParamStore::total_size() const {
  std::int64_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

Var Tape::make(Tensor value, bool needs_grad, std::function<void(Node&)> backprop) {
  auto node = std::make_shared<Node>();
  node->storage = std::move(value);
  node->value = &node->storage;
  node->needs_grad = needs_grad;
  node->backprop = std::move(backprop);
  nodes_.push_back(node);
  return node;
}

Var Tape::make_view(const Tensor& external, bool needs_grad,
                    std::function<void(Node&)> backprop) {
  auto node = std::make_shared<Node>();
  node->value = &external;
  node->needs_grad = needs_grad;
  node->backprop = std::move(backprop);
  nodes_.push_back(node);
  return node;
}

Var input(Tape& tape, Tensor value) { return tape.make(std::move(value), false, {}); }

Var param(Tape& tape, Param& p) {
  Param* pp = &p;
  return tape.make_view(p.value, true, [pp](Node& self) {
    double* dst = pp->grad.data();
    const double* src = self.grad.data();
    for (std::int64_t i = 0; i < self.grad.size(); ++i) dst[i] += src[i];
  });
}

Var fc(Tape& tape, Var x, Var w, Var b, Activation act) {
  check_rank2(x->val(), "fc input");
  check_rank2(w->val(), "fc weights");
  const std::int64_t batch = x->val().rows();
  const std::int64_t in = x->val().cols();
  const std::int64_t out = w->val().cols();
  if (w->val().rows() != in)
    throw std::invalid_argument("fc shape mismatch: input " + x->val().shape_str() +
                                " vs weights " + w->val().shape_str());
  if (b->val().rank() != 1 || b->val().size() != out)
    throw std::invalid_argument("fc bias must be length " + std::to_string(out));

  Tensor y({batch, out});
  {
    Map ym = map2(y, batch, out);
    ym.noalias() = cmap2(x->val(), batch, in) * cmap2(w->val(), in, out);
    ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b->val().data(), out);
    if (act == Activation::relu) ym = ym.cwiseMax(0.0);
  }
  ensure_finite(y, "fc");

  const bool needs = x->needs_grad || w->needs_grad || b->needs_grad;
  return tape.make(std::move(y), needs, [x, w, b, act, batch, in, out](Node& self) {
    RowMat da = cmap2(self.grad, batch, out);
    if (act == Activation::relu) {
      CMap ym = cmap2(self.val(), batch, out);
      da = (ym.array() > 0.0).select(da, 0.0);
    }
    if (x->needs_grad)
      map2(x->grad, batch, in).noalias() += da * cmap2(w->val(), in, out).transpose();
    if (w->needs_grad)
      map2(w->grad, in, out).noalias() += cmap2(x->val(), batch, in).transpose() * da;
    if (b->needs_grad)
      Eigen::Map<Eigen::RowVectorXd>(b->grad.data(), out) += da.colwise().sum();
  });
}

namespace {

/// Saved forward state for the fused LSTM backward pass. Layouts use
/// time-major [T*B, dim] blocks so weight gradients reduce to two GEMMs.
struct LstmCtx {
  std::int64_t batch = 0, steps = 0, in = 0, hidden = 0;
  RowMat x_tb;     // [T*B, C]
  RowMat gates;    // [T*B, 4H], post-activation [i f g o]
  RowMat cells;    // [T*B, H]
  RowMat tanh_c;   // [T*B, H]
  RowMat h_prev;   // [T*B, H], hidden state entering step t
};

}  // namespace

Var lstm_last_hidden(Tape& tape, Var seq, Var wx, Var wh, Var b,
                     std::int64_t hidden) {
  const Tensor& s = seq->val();
  if (s.rank() != 3)
    throw std::invalid_argument("lstm input must be rank 3 [B x T x C], got " + s.shape_str());
  const std::int64_t batch = s.dim(0), steps = s.dim(1), in = s.dim(2);
  if (steps < 1) throw std::invalid_argument("lstm needs at least one timestep");
  const std::int64_t h4 = 4 * hidden;
  if (wx->val().rank() != 2 || wx->val().rows() != in || wx->val().cols() != h4)
    throw std::invalid_argument("lstm wx must be [C x 4H], got " + wx->val().shape_str());
  if (wh->val().rank() != 2 || wh->val().rows() != hidden || wh->val().cols() != h4)
    throw std::invalid_argument("lstm wh must be [H x 4H], got " + wh->val().shape_str());
  if (b->val().rank() != 1 || b->val().size() != h4)
    throw std::invalid_argument("lstm bias must be length 4H");

  auto ctx = std::make_shared<LstmCtx>();
  ctx->batch = batch;
  ctx->steps = steps;
  ctx->in = in;
  ctx->hidden = hidden;
  ctx->x_tb.resize(steps * batch, in);
  for (std::int64_t t = 0; t < steps; ++t)
    for (std::int64_t bi = 0; bi < batch; ++bi)
      for (std::int64_t c = 0; c < in; ++c)
        ctx->x_tb(t * batch + bi, c) = s.at(bi, t, c);

  ctx->gates.resize(steps * batch, h4);
  ctx->cells.resize(steps * batch, hidden);
  ctx->tanh_c.resize(steps * batch, hidden);
  ctx->h_prev.resize(steps * batch, hidden);

  // Input contribution for all timesteps in one GEMM.
  ctx->gates.noalias() = ctx->x_tb * cmap2(wx->val(), in, h4);
  ctx->gates.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b->val().data(), h4);

  RowMat h = RowMat::Zero(batch, hidden);
  RowMat c = RowMat::Zero(batch, hidden);
  for (std::int64_t t = 0; t < steps; ++t) {
    auto z = ctx->gates.middleRows(t * batch, batch);
    ctx->h_prev.middleRows(t * batch, batch) = h;
    z.noalias() += h * cmap2(wh->val(), hidden, h4);
    auto ig = z.middleCols(0, hidden);
    auto fg = z.middleCols(hidden, hidden);
    auto gg = z.middleCols(2 * hidden, hidden);
    auto og = z.middleCols(3 * hidden, hidden);
    ig.array() = ((-ig.array()).exp() + 1.0).inverse();
    fg.array() = ((-fg.array()).exp() + 1.0).inverse();
    gg.array() = gg.array().tanh();
    og.array() = ((-og.array()).exp() + 1.0).inverse();
    c = fg.cwiseProduct(c) + ig.cwiseProduct(gg);
    ctx->cells.middleRows(t * batch, batch) = c;
    auto tc = ctx->tanh_c.middleRows(t * batch, batch);
    tc.array() = c.array().tanh();
    h = og.cwiseProduct(tc);
  }

  Tensor out({batch, hidden});
  map2(out, batch, hidden) = h;
  ensure_finite(out, "lstm");

  const bool needs = seq->needs_grad || wx->needs_grad || wh->needs_grad || b->needs_grad;
  return tape.make(std::move(out), needs, [seq, wx, wh, b, ctx](Node& self) {
    const std::int64_t batch = ctx->batch, steps = ctx->steps, in = ctx->in,
                       hidden = ctx->hidden;
    const std::int64_t h4 = 4 * hidden;
    RowMat dh = cmap2(self.grad, batch, hidden);
    RowMat dc = RowMat::Zero(batch, hidden);
    RowMat dz_all(steps * batch, h4);

    const double fault = testing::lstm_backward_fault() ? -1.0 : 1.0;

    for (std::int64_t t = steps - 1; t >= 0; --t) {
      auto z = ctx->gates.middleRows(t * batch, batch);
      auto ig = z.middleCols(0, hidden);
      auto fg = z.middleCols(hidden, hidden);
      auto gg = z.middleCols(2 * hidden, hidden);
      auto og = z.middleCols(3 * hidden, hidden);
      auto tc = ctx->tanh_c.middleRows(t * batch, batch);

      dc.array() += dh.array() * og.array() * (1.0 - tc.array().square());

      auto dz = dz_all.middleRows(t * batch, batch);
      auto di = dz.middleCols(0, hidden);
      auto df = dz.middleCols(hidden, hidden);
      auto dg = dz.middleCols(2 * hidden, hidden);
      auto dout = dz.middleCols(3 * hidden, hidden);

      dout.array() = dh.array() * tc.array() * og.array() * (1.0 - og.array());
      di.array() = dc.array() * gg.array() * ig.array() * (1.0 - ig.array());
      dg.array() = dc.array() * ig.array() * (1.0 - gg.array().square());
      if (t > 0) {
        auto c_prev = ctx->cells.middleRows((t - 1) * batch, batch);
        df.array() = fault * dc.array() * c_prev.array() * fg.array() * (1.0 - fg.array());
      } else {
        df.setZero();  // c_{-1} = 0
      }

      if (t > 0) {
        dh.noalias() = dz * cmap2(wh->val(), hidden, h4).transpose();
        dc = dc.cwiseProduct(fg);
      }
    }

    if (wx->needs_grad)
      map2(wx->grad, in, h4).noalias() += ctx->x_tb.transpose() * dz_all;
    if (wh->needs_grad)
      map2(wh->grad, hidden, h4).noalias() += ctx->h_prev.transpose() * dz_all;
    if (b->needs_grad)
      Eigen::Map<Eigen::RowVectorXd>(b->grad.data(), h4) += dz_all.colwise().sum();
    if (seq->needs_grad) {
      RowMat dx = dz_all * cmap2(wx->val(), in, h4).transpose();
      for (std::int64_t t = 0; t < steps; ++t)
        for (std::int64_t bi = 0; bi < batch; ++bi)
          for (std::int64_t c2 = 0; c2 < in; ++c2)
            seq->grad.at(bi, t, c2) += dx(t * batch + bi, c2);
    }
  });
}

Var concat_cols(Tape& tape, const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat needs at least one part");
  const std::int64_t batch = parts[0]->val().rows();
  std::int64_t total = 0;
  for (const auto& p : parts) {
    check_rank2(p->val(), "concat part");
    if (p->val().rows() != batch)
      throw std::invalid_argument("concat batch mismatch: " + p->val().shape_str());
    total += p->val().cols();
  }
  Tensor y({batch, total});
  std::int64_t off = 0;
  for (const auto& p : parts) {
    const std::int64_t k = p->val().cols();
    for (std::int64_t r = 0; r < batch; ++r)
      std::copy_n(p->val().data() + r * k, k, y.data() + r * total + off);
    off += k;
  }
  bool needs = false;
  for (const auto& p : parts) needs = needs || p->needs_grad;
  return tape.make(std::move(y), needs, [parts, batch, total](Node& self) {
    std::int64_t off = 0;
    for (const auto& p : parts) {
      const std::int64_t k = p->val().cols();
      if (p->needs_grad)
        for (std::int64_t r = 0; r < batch; ++r)
          for (std::int64_t c = 0; c < k; ++c)
            p->grad.at(r, c) += self.grad[r * total + off + c];
      off += k;
    }
  });
}

Var flatten_rows(Tape& tape, Var x) {
  const Tensor& v = x->val();
  if (v.rank() != 3) throw std::invalid_argument("flatten_rows expects rank 3");
  const std::int64_t batch = v.dim(0);
  const std::int64_t flat = v.dim(1) * v.dim(2);
  Tensor y({batch, flat}, v.values());
  return tape.make(std::move(y), x->needs_grad, [x](Node& self) {
    if (!x->needs_grad) return;
    double* dst = x->grad.data();
    const double* src = self.grad.data();
    for (std::int64_t i = 0; i < self.grad.size(); ++i) dst[i] += src[i];
  });
}

Var mse_loss(Tape& tape, Var pred, const Tensor& target) {
  if (!pred->val().same_shape(target))
    throw std::invalid_argument("mse shapes differ: " + pred->val().shape_str() +
                                " vs " + target.shape_str());
  const std::int64_t n = pred->val().size();
  if (n == 0) throw std::invalid_argument("mse on empty tensors");
  double acc = 0.0;
  const double* p = pred->val().data();
  const double* t = target.data();
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = p[i] - t[i];
    acc += d * d;
  }
  Tensor y({1});
  y[0] = acc / static_cast<double>(n);
  ensure_finite(y, "mse_loss");
  Tensor target_copy = target;
  return tape.make(std::move(y), pred->needs_grad,
                   [pred, target_copy = std::move(target_copy), n](Node& self) {
                     if (!pred->needs_grad) return;
                     const double scale = 2.0 * self.grad[0] / static_cast<double>(n);
                     const double* p = pred->val().data();
                     const double* t = target_copy.data();
                     double* g = pred->grad.data();
                     for (std::int64_t i = 0; i < n; ++i) g[i] += scale * (p[i] - t[i]);
                   });
}

void backward(Tape& tape, const Var& loss) {
  if (loss->val().size() != 1)
    throw std::invalid_argument("backward requires a scalar loss");
  for (const auto& node : tape.nodes())
    if (node->needs_grad) {
      node->grad = Tensor(node->val().shape());
    }
  if (!loss->needs_grad) return;  // nothing depends on parameters
  loss->grad.fill(1.0);
  const auto& nodes = tape.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    Node& node = **it;
    if (node.needs_grad && node.backprop) node.backprop(node);
  }
}

void adam_step(ParamStore& store, double lr, const AdamConfig& cfg) {
  const std::int64_t t = ++store.adam_steps;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (auto& [name, p] : store.entries()) {
    double* val = p.value.data();
    double* g = p.grad.data();
    double* m = p.m.data();
    double* v = p.v.data();
    const std::int64_t n = p.value.size();
    for (std::int64_t i = 0; i < n; ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      val[i] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
      g[i] = 0.0;
    }
    ensure_finite(p.value, "adam_step");
  }
}

double lr_schedule(std::int64_t step) {
  const double s = static_cast<double>(std::min<std::int64_t>(std::max<std::int64_t>(step, 0), 10000));
  return 0.003 * std::pow(10.0, -s / 10000.0);
}

GradCheckResult gradient_check(ParamStore& store,
                               const std::function<Var(Tape&)>& build_loss,
                               double h) {
  store.zero_grads();
  {
    Tape tape;
    Var loss = build_loss(tape);
    backward(tape, loss);
  }
  std::map<std::string, Tensor> analytic;
  for (auto& [name, p] : store.entries()) analytic.emplace(name, p.grad);

  auto loss_value = [&]() {
    Tape tape;
    Var loss = build_loss(tape);
    if (!loss->val().all_finite()) throw InternalError("non-finite loss in gradient_check");
    return loss->val()[0];
  };

  GradCheckResult result;
  for (auto& [name, p] : store.entries()) {
    const Tensor& a = analytic.at(name);
    for (std::int64_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + h;
      const double up = loss_value();
      p.value[i] = saved - h;
      const double down = loss_value();
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(a[i]), std::abs(numeric), 1e-3});
      const double rel = std::abs(a[i] - numeric) / denom;
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst_param = name;
        result.worst_index = i;
        result.analytic = a[i];
        result.numeric = numeric;
      }
    }
  }
  store.zero_grads();
  return result;
}

}  // namespace emghand::nn
