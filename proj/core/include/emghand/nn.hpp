#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "emghand/tensor.hpp"

namespace emghand::nn {

enum class Activation { identity, relu };

/// A named parameter tensor with its gradient and Adam moments.
struct Param {
  Tensor value;
  Tensor grad;
  Tensor m;  // first moment
  Tensor v;  // second moment

  explicit Param(Tensor init);
};

/// Parameter registry. std::map keys keep iteration sorted by name, which
/// makes optimizer update order (and therefore training) reproducible.
class ParamStore {
 public:
  Param& create(const std::string& name, Tensor init);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) > 0; }

  std::map<std::string, Param>& entries() { return params_; }
  const std::map<std::string, Param>& entries() const { return params_; }

  void zero_grads();
  std::int64_t total_size() const;

  /// Number of adam_step calls applied so far (drives bias correction).
  std::int64_t adam_steps = 0;

 private:
  std::map<std::string, Param> params_;
};

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor storage;                  // owns op outputs and input leaves
  const Tensor* value = nullptr;   // aliases storage, or a Param's tensor
  Tensor grad;                     // allocated by backward()
  bool needs_grad = false;
  std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents

  const Tensor& val() const { return *value; }
};

/// Records nodes in creation order; creation order is a valid topological
/// order for the feedforward graphs built here.
class Tape {
 public:
  Var make(Tensor value, bool needs_grad, std::function<void(Node&)> backprop);
  Var make_view(const Tensor& external, bool needs_grad,
                std::function<void(Node&)> backprop);
  const std::vector<Var>& nodes() const { return nodes_; }

 private:
  std::vector<Var> nodes_;
};

/// Leaf holding an input batch; no gradient flows into it.
Var input(Tape& tape, Tensor value);

/// Leaf bound to a stored parameter; backward accumulates into p.grad.
Var param(Tape& tape, Param& p);

/// y = act(x W + b) for x: [B x I], W: [I x O], b: [O].
Var fc(Tape& tape, Var x, Var w, Var b, Activation act);

/// Final hidden state of a single-layer LSTM over seq: [B x T x C].
/// Gate packing along the 4H axis is [input, forget, cell, output];
/// initial hidden and cell state are zero.
Var lstm_last_hidden(Tape& tape, Var seq, Var wx, Var wh, Var b,
                     std::int64_t hidden);

/// Column-wise concatenation of [B x K_i] parts, order preserved.
Var concat_cols(Tape& tape, const std::vector<Var>& parts);

/// [B x T x C] -> [B x T*C] (row-major reshape).
Var flatten_rows(Tape& tape, Var x);

/// Mean over all B*M elements of squared difference; scalar output.
Var mse_loss(Tape& tape, Var pred, const Tensor& target);

/// Seeds the loss gradient with 1 and runs the tape in reverse.
void backward(Tape& tape, const Var& loss);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One Adam update over every parameter (sorted-name order), then zeroes
/// the gradients.
void adam_step(ParamStore& store, double lr, const AdamConfig& cfg = {});

/// Exponential decay from 3e-3 to 3e-4 over the first 10000 steps, constant
/// afterward: lr(s) = 0.003 * 10^(-min(s,10000)/10000).
double lr_schedule(std::int64_t step);

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::int64_t worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares analytic parameter gradients of a scalar loss against central
/// finite differences (h = 1e-5). `build_loss` must rebuild the graph from
/// the store's current values on every call.
GradCheckResult gradient_check(ParamStore& store,
                               const std::function<Var(Tape&)>& build_loss,
                               double h = 1e-5);

namespace testing {
/// Fault-injection hook: flips the sign of one LSTM backward term so that
/// gradient checks must fail. Only ever enabled by tests.
void set_lstm_backward_fault(bool enabled);
bool lstm_backward_fault();
}  // namespace testing

}  // namespace emghand::nn
