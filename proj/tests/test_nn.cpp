#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "emghand/errors.hpp"
#include "emghand/nn.hpp"
#include "emghand/rng.hpp"

using namespace emghand;
using namespace emghand::nn;

namespace {

Tensor random_tensor(Rng& rng, std::vector<std::int64_t> shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-scale, scale);
  return t;
}

struct FaultGuard {
  ~FaultGuard() { testing::set_lstm_backward_fault(false); }
};

}  // namespace

TEST_CASE("fc identity and bias broadcast") {
  Rng rng(1);
  Tensor x = random_tensor(rng, {4, 3});

  ParamStore store;
  Tensor eye({3, 3});
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  Param& w = store.create("w", eye);
  Param& b = store.create("b", Tensor({3}));

  Tape tape;
  Var y = fc(tape, input(tape, x), param(tape, w), param(tape, b), Activation::identity);
  for (std::int64_t i = 0; i < x.size(); ++i) CHECK(y->val()[i] == x[i]);

  Param& wz = store.create("wz", Tensor({3, 2}));
  Tensor bias({2});
  bias[0] = -1.5;
  bias[1] = 2.5;
  Param& b2 = store.create("b2", bias);
  Tape tape2;
  Var y2 = fc(tape2, input(tape2, x), param(tape2, wz), param(tape2, b2), Activation::identity);
  for (std::int64_t r = 0; r < 4; ++r) {
    CHECK(y2->val().at(r, 0) == -1.5);
    CHECK(y2->val().at(r, 1) == 2.5);
  }

  Tensor bad({5, 2});
  Tape tape3;
  CHECK_THROWS_AS(fc(tape3, input(tape3, x), param(tape3, store.create("bad", bad)),
                     param(tape3, b2), Activation::identity),
                  std::invalid_argument);
}

TEST_CASE("fc gradients match finite differences") {
  Rng rng(2);
  Tensor x = random_tensor(rng, {3, 4});
  Tensor target = random_tensor(rng, {3, 2});

  ParamStore store;
  store.create("w", random_tensor(rng, {4, 2}, 0.5));
  store.create("b", random_tensor(rng, {2}, 0.5));

  auto build = [&](Tape& tape) {
    Var y = fc(tape, input(tape, x), param(tape, store.at("w")), param(tape, store.at("b")),
               Activation::identity);
    return mse_loss(tape, y, target);
  };
  const auto res = gradient_check(store, build);
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("fc relu gradients match finite differences") {
  Rng rng(3);
  Tensor x = random_tensor(rng, {5, 4});
  Tensor target = random_tensor(rng, {5, 3});
  ParamStore store;
  store.create("w", random_tensor(rng, {4, 3}, 0.8));
  store.create("b", random_tensor(rng, {3}, 0.8));
  auto build = [&](Tape& tape) {
    Var y = fc(tape, input(tape, x), param(tape, store.at("w")), param(tape, store.at("b")),
               Activation::relu);
    return mse_loss(tape, y, target);
  };
  CHECK(gradient_check(store, build).max_rel_err < 1e-6);
}

TEST_CASE("lstm zero input and parameters give zero hidden state") {
  ParamStore store;
  store.create("wx", Tensor({2, 16}));
  store.create("wh", Tensor({4, 16}));
  store.create("b", Tensor({16}));
  Tape tape;
  Var h = lstm_last_hidden(tape, input(tape, Tensor({3, 4, 2})), param(tape, store.at("wx")),
                           param(tape, store.at("wh")), param(tape, store.at("b")), 4);
  for (std::int64_t i = 0; i < h->val().size(); ++i) CHECK(h->val()[i] == 0.0);
}

TEST_CASE("lstm single step matches scalar cell arithmetic") {
  Rng rng(4);
  const std::int64_t c = 2, hidden = 2;
  ParamStore store;
  store.create("wx", random_tensor(rng, {c, 4 * hidden}, 0.7));
  store.create("wh", random_tensor(rng, {hidden, 4 * hidden}, 0.7));
  store.create("b", random_tensor(rng, {4 * hidden}, 0.3));
  Tensor x({1, 1, c});
  x[0] = 0.4;
  x[1] = -0.9;

  Tape tape;
  Var h = lstm_last_hidden(tape, input(tape, x), param(tape, store.at("wx")),
                           param(tape, store.at("wh")), param(tape, store.at("b")), hidden);

  const Tensor& wx = store.at("wx").value;
  const Tensor& b = store.at("b").value;
  auto sigmoid = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  for (std::int64_t j = 0; j < hidden; ++j) {
    double zi = b[j], zf = b[hidden + j], zg = b[2 * hidden + j], zo = b[3 * hidden + j];
    for (std::int64_t k = 0; k < c; ++k) {
      zi += x[k] * wx.at(k, j);
      zf += x[k] * wx.at(k, hidden + j);
      zg += x[k] * wx.at(k, 2 * hidden + j);
      zo += x[k] * wx.at(k, 3 * hidden + j);
    }
    const double cell = sigmoid(zi) * std::tanh(zg);
    const double expect = sigmoid(zo) * std::tanh(cell);
    CHECK(h->val()[j] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("lstm gradients match finite differences") {
  Rng rng(5);
  const std::int64_t batch = 2, steps = 5, c = 3, hidden = 8;
  Tensor x = random_tensor(rng, {batch, steps, c});
  Tensor target = random_tensor(rng, {batch, hidden});
  ParamStore store;
  store.create("wx", random_tensor(rng, {c, 4 * hidden}, 0.5));
  store.create("wh", random_tensor(rng, {hidden, 4 * hidden}, 0.5));
  store.create("b", random_tensor(rng, {4 * hidden}, 0.2));
  auto build = [&](Tape& tape) {
    Var h = lstm_last_hidden(tape, input(tape, x), param(tape, store.at("wx")),
                             param(tape, store.at("wh")), param(tape, store.at("b")), hidden);
    return mse_loss(tape, h, target);
  };
  CHECK(gradient_check(store, build).max_rel_err < 1e-4);
}

TEST_CASE("injected lstm backward fault breaks the gradient check") {
  FaultGuard guard;
  Rng rng(6);
  const std::int64_t batch = 2, steps = 4, c = 2, hidden = 4;
  Tensor x = random_tensor(rng, {batch, steps, c});
  Tensor target = random_tensor(rng, {batch, hidden});
  ParamStore store;
  store.create("wx", random_tensor(rng, {c, 4 * hidden}, 0.6));
  store.create("wh", random_tensor(rng, {hidden, 4 * hidden}, 0.6));
  store.create("b", random_tensor(rng, {4 * hidden}, 0.3));
  auto build = [&](Tape& tape) {
    Var h = lstm_last_hidden(tape, input(tape, x), param(tape, store.at("wx")),
                             param(tape, store.at("wh")), param(tape, store.at("b")), hidden);
    return mse_loss(tape, h, target);
  };
  CHECK(gradient_check(store, build).max_rel_err < 1e-4);
  testing::set_lstm_backward_fault(true);
  CHECK(gradient_check(store, build).max_rel_err > 1e-3);
}

TEST_CASE("concat preserves order and routes gradients") {
  Rng rng(7);
  ParamStore store;
  store.create("a", random_tensor(rng, {3, 2}));
  store.create("b", random_tensor(rng, {3, 3}));
  Tensor target = random_tensor(rng, {3, 5});

  {
    Tape tape;
    Var a = param(tape, store.at("a"));
    Var only = concat_cols(tape, {a});
    for (std::int64_t i = 0; i < only->val().size(); ++i)
      CHECK(only->val()[i] == store.at("a").value[i]);
  }
  {
    Tape tape;
    Var cat = concat_cols(tape, {param(tape, store.at("a")), param(tape, store.at("b"))});
    REQUIRE(cat->val().rows() == 3);
    REQUIRE(cat->val().cols() == 5);
    CHECK(cat->val().at(1, 0) == store.at("a").value.at(1, 0));
    CHECK(cat->val().at(1, 2) == store.at("b").value.at(1, 0));
    CHECK(cat->val().at(2, 4) == store.at("b").value.at(2, 2));
  }
  {
    Tape tape;
    Tensor bad({4, 2});
    CHECK_THROWS_AS(
        concat_cols(tape, {param(tape, store.at("a")), input(tape, bad)}),
        std::invalid_argument);
  }
  auto build = [&](Tape& tape) {
    Var cat = concat_cols(tape, {param(tape, store.at("a")), param(tape, store.at("b"))});
    return mse_loss(tape, cat, target);
  };
  CHECK(gradient_check(store, build).max_rel_err < 1e-6);
}

TEST_CASE("mse_loss values and gradient") {
  Tensor a({2, 2}, {1.0, 2.0, 3.0, 4.0});
  Tensor b = a;
  Tape tape;
  CHECK(mse_loss(tape, input(tape, a), b)->val()[0] == 0.0);

  Tensor c({2, 2}, {3.0, 4.0, 5.0, 6.0});
  Tape tape2;
  CHECK(mse_loss(tape2, input(tape2, a), c)->val()[0] == doctest::Approx(4.0));

  Rng rng(8);
  ParamStore store;
  store.create("p", random_tensor(rng, {3, 4}));
  Tensor target = random_tensor(rng, {3, 4});
  auto build = [&](Tape& tape3) {
    return mse_loss(tape3, param(tape3, store.at("p")), target);
  };
  CHECK(gradient_check(store, build).max_rel_err < 1e-6);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  ParamStore store;
  Tensor init({3}, {1.0, -2.0, 0.5});
  store.create("p", init);
  adam_step(store, 0.01);
  for (int i = 0; i < 3; ++i) CHECK(store.at("p").value[i] == init[i]);
}

TEST_CASE("adam: first step on unit gradient moves by ~lr") {
  ParamStore store;
  Param& p = store.create("p", Tensor({1}));
  p.grad[0] = 1.0;
  adam_step(store, 0.001);
  // bias-corrected first step: -lr * 1 / (1 + eps)
  CHECK(p.value[0] == doctest::Approx(-0.001).epsilon(1e-6));
  CHECK(p.grad[0] == 0.0);  // gradients zeroed after the step
}

TEST_CASE("adam: constant gradient walks against its sign") {
  ParamStore store;
  Param& p = store.create("p", Tensor({1}));
  double prev = 0.0;
  for (int step = 0; step < 50; ++step) {
    p.grad[0] = 2.5;
    adam_step(store, 0.01);
    CHECK(p.value[0] < prev);
    prev = p.value[0];
  }
}

TEST_CASE("lr_schedule endpoints and midpoint") {
  CHECK(lr_schedule(0) == doctest::Approx(0.003).epsilon(1e-12));
  CHECK(lr_schedule(10000) == doctest::Approx(0.0003).epsilon(1e-12));
  CHECK(lr_schedule(123456) == doctest::Approx(0.0003).epsilon(1e-12));
  CHECK(lr_schedule(5000) == doctest::Approx(0.003 * std::pow(10.0, -0.5)).epsilon(1e-12));
  CHECK(lr_schedule(5000) == doctest::Approx(9.4868329805051381e-4).epsilon(1e-9));
}

TEST_CASE("forward passes are deterministic") {
  Rng rng(9);
  Tensor x = random_tensor(rng, {2, 3, 4});
  ParamStore store;
  store.create("wx", random_tensor(rng, {4, 32}, 0.5));
  store.create("wh", random_tensor(rng, {8, 32}, 0.5));
  store.create("b", random_tensor(rng, {32}, 0.5));
  auto run = [&]() {
    Tape tape;
    Var h = lstm_last_hidden(tape, input(tape, x), param(tape, store.at("wx")),
                             param(tape, store.at("wh")), param(tape, store.at("b")), 8);
    return h->val();
  };
  const Tensor a = run();
  const Tensor b = run();
  for (std::int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("finite inputs with large parameters stay finite") {
  Rng rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    ParamStore store;
    store.create("wx", random_tensor(rng, {4, 24}, 1e3));
    store.create("wh", random_tensor(rng, {6, 24}, 1e3));
    store.create("b", random_tensor(rng, {24}, 1e3));
    store.create("w2", random_tensor(rng, {6, 3}, 1e3));
    store.create("b2", random_tensor(rng, {3}, 1e3));
    Tensor x = random_tensor(rng, {2, 7, 4}, 1e3);
    Tensor target = random_tensor(rng, {2, 3}, 1e3);
    Tape tape;
    Var h = lstm_last_hidden(tape, input(tape, x), param(tape, store.at("wx")),
                             param(tape, store.at("wh")), param(tape, store.at("b")), 6);
    Var y = fc(tape, h, param(tape, store.at("w2")), param(tape, store.at("b2")),
               Activation::relu);
    Var loss = mse_loss(tape, y, target);
    CHECK(loss->val().all_finite());
    backward(tape, loss);
    for (const auto& [name, p] : store.entries()) CHECK(p.grad.all_finite());
  }
}

TEST_CASE("non-finite op output is a hard failure") {
  ParamStore store;
  Tensor huge({1, 1});
  huge[0] = 1e308;
  store.create("w", huge);
  Tensor x({1, 1});
  x[0] = 1e308;
  Tape tape;
  CHECK_THROWS_AS(fc(tape, input(tape, x), param(tape, store.at("w")),
                     param(tape, store.create("b", Tensor({1}))), Activation::identity),
                  InternalError);
}
