#include <cmath>

#include <doctest.h>

#include "mhal/errors.h"
#include "mhal/tape.h"
#include "mhal/tensor.h"

#include "gradient_check.h"

using namespace mhal;
using testutil::check_gradients;
using testutil::random_tensor;

TEST_CASE("tensor shape bookkeeping") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  CHECK(shape_str({3, 4}) == "[3x4]");
}

TEST_CASE("matmul identity and scalar cases") {
  Tape tape;
  Var identity = tape.input(Tensor({2, 2}, {1, 0, 0, 1}));
  Var m = tape.input(Tensor({2, 2}, {1, 2, 3, 4}));
  Var prod = tape.matmul(identity, m);
  CHECK(tape.value(prod).data == std::vector<double>{1, 2, 3, 4});

  Var a = tape.input(Tensor({1, 1}, {3.0}));
  Var b = tape.input(Tensor({1, 1}, {-2.5}));
  CHECK(tape.value(tape.matmul(a, b)).data[0] == doctest::Approx(-7.5));
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape tape;
  Var a = tape.input(Tensor({2, 3}));
  Var b = tape.input(Tensor({4, 2}));
  try {
    tape.matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x2]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient matches central differences") {
  Rng rng = make_rng(7);
  Parameter a("a", random_tensor({3, 4}, rng));
  Parameter b("b", random_tensor({4, 2}, rng));
  auto loss = [&] {
    Tape t;
    return t.value(t.reduce_sum(t.matmul(t.parameter(a), t.parameter(b)))).data[0];
  };
  auto grads = [&] {
    a.value.zero_grad();
    b.value.zero_grad();
    Tape t;
    t.backward(t.reduce_sum(t.matmul(t.parameter(a), t.parameter(b))));
  };
  const auto r = check_gradients({&a, &b}, loss, grads);
  CHECK(r.max_err <= 1e-6);
}

TEST_CASE("elementwise nonlinearity values") {
  Tape tape;
  Var x = tape.input(Tensor({3}, {0.0, 1.0, -1.0}));
  CHECK(tape.value(tape.tanh(x)).data[0] == 0.0);
  CHECK(tape.value(tape.sigmoid(x)).data[0] == doctest::Approx(0.5));
  CHECK(tape.value(tape.exp(x)).data[1] == doctest::Approx(std::exp(1.0)));

  Rng rng = make_rng(3);
  for (int i = 0; i < 20; ++i) {
    const double v = uniform(rng, -6.0, 6.0);
    Tape t2;
    Var p = t2.input(Tensor::scalar(v));
    Var q = t2.input(Tensor::scalar(-v));
    const double s = t2.value(t2.sigmoid(p)).data[0] + t2.value(t2.sigmoid(q)).data[0];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("tanh gradient at 0.3 matches central differences") {
  Parameter x("x", Tensor::scalar(0.3));
  auto loss = [&] {
    Tape t;
    return t.value(t.tanh(t.parameter(x))).data[0];
  };
  auto grads = [&] {
    x.value.zero_grad();
    Tape t;
    t.backward(t.tanh(t.parameter(x)));
  };
  CHECK(check_gradients({&x}, loss, grads).max_err <= 1e-6);
}

TEST_CASE("softmax basics") {
  Tape tape;
  Var x = tape.input(Tensor({3}, {0, 0, 0}));
  const auto& u = tape.value(tape.softmax(x)).data;
  for (double v : u) CHECK(v == doctest::Approx(1.0 / 3));

  Var y = tape.input(Tensor({2}, {std::log(2.0), 0.0}));
  const auto& p = tape.value(tape.softmax(y)).data;
  CHECK(p[0] == doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("softmax shift invariance and normalization") {
  Rng rng = make_rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor raw = random_tensor({5}, rng, -3, 3);
    Tensor shifted = raw;
    const double c = uniform(rng, -10, 10);
    for (double& v : shifted.data) v += c;
    Tape t;
    const auto& a = t.value(t.softmax(t.input(raw))).data;
    const auto& b = t.value(t.softmax(t.input(shifted))).data;
    double sum = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
      CHECK(a[i] >= 0.0);
      CHECK(a[i] <= 1.0);
      sum += a[i];
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-9);
  }
}

TEST_CASE("softmax rejects empty input") {
  Tape tape;
  CHECK_THROWS_AS(tape.softmax(Var{}), ShapeError);
}

TEST_CASE("softmax gradient matches central differences (both axes)") {
  Rng rng = make_rng(13);
  Parameter x("x", random_tensor({3, 4}, rng));
  for (int axis : {0, 1}) {
    // weighted sum so the gradient is not trivially zero
    Tensor w = random_tensor({3, 4}, rng);
    auto make = [&](Tape& t) {
      return t.reduce_sum(t.cmult(t.softmax(t.parameter(x), axis), t.input(w)));
    };
    auto loss = [&] {
      Tape t;
      return t.value(make(t)).data[0];
    };
    auto grads = [&] {
      x.value.zero_grad();
      Tape t;
      t.backward(make(t));
    };
    CHECK(check_gradients({&x}, loss, grads).max_err <= 1e-6);
  }
}

TEST_CASE("reductions") {
  Tape tape;
  Var m = tape.input(Tensor({2, 2}, {1, 0, 0, 1}));
  const auto& mean0 = tape.value(tape.reduce_mean(m, 0)).data;
  CHECK(mean0[0] == doctest::Approx(0.5));
  CHECK(mean0[1] == doctest::Approx(0.5));
  CHECK(tape.value(tape.reduce_sum(m)).data[0] == doctest::Approx(2.0));
  CHECK(tape.value(tape.reduce_mean(m)).data[0] == doctest::Approx(0.5));
  CHECK(tape.value(tape.reduce_max(tape.input(Tensor({3}, {0.1, 0.7, 0.2})))).data[0] ==
        doctest::Approx(0.7));
}

TEST_CASE("dropout semantics") {
  Rng rng = make_rng(17);
  Tape tape;
  Var x = tape.input(Tensor({4}, {1, 2, 3, 4}));
  Var kept = tape.dropout(x, 0.0, rng);
  CHECK(tape.value(kept).data == std::vector<double>{1, 2, 3, 4});
  CHECK(kept.id == x.id);  // rate 0 is the identity

  CHECK_THROWS_AS(tape.dropout(x, 1.0, rng), ShapeError);
  CHECK_THROWS_AS(dropout_mask({4}, 1.5, rng), ShapeError);

  // empirical kept fraction at rate 0.5
  const Tensor mask = dropout_mask({100000}, 0.5, rng);
  long kept_n = 0;
  for (double v : mask.data) {
    if (v != 0.0) {
      ++kept_n;
      CHECK(v == doctest::Approx(2.0));
    }
  }
  const double frac = static_cast<double>(kept_n) / 100000.0;
  CHECK(frac > 0.49);
  CHECK(frac < 0.51);
}

TEST_CASE("backward fan-out accumulation and identity") {
  Parameter x("x", Tensor::scalar(1.5));
  {
    Tape t;
    Var v = t.parameter(x);
    x.value.zero_grad();
    t.backward(t.add(v, v));
    CHECK(x.value.grad[0] == doctest::Approx(2.0));
  }
  {
    Tape t;
    x.value.zero_grad();
    t.backward(t.parameter(x));
    CHECK(x.value.grad[0] == doctest::Approx(1.0));
  }
}

TEST_CASE("backward rejects non-scalar losses and double replay") {
  Tape tape;
  Var m = tape.input(Tensor({2, 2}));
  CHECK_THROWS_AS(tape.backward(m), ShapeError);
  Var s = tape.reduce_sum(m);
  tape.backward(s);
  CHECK_THROWS_AS(tape.backward(s), ShapeError);
}

TEST_CASE("parameters off the tape keep zero gradients") {
  Parameter used("used", Tensor::scalar(2.0));
  Parameter unused("unused", Tensor::scalar(3.0));
  used.value.zero_grad();
  unused.value.zero_grad();
  Tape t;
  t.backward(t.scale(t.parameter(used), 4.0));
  CHECK(used.value.grad[0] == doctest::Approx(4.0));
  CHECK(unused.value.grad[0] == 0.0);
}

TEST_CASE("seeded replay is bit-identical") {
  auto run = [](std::uint64_t seed) {
    Rng rng = make_rng(seed);
    Parameter w("w", glorot_uniform({4, 4}, rng));
    Tape t;
    Var x = t.input(random_tensor({3, 4}, rng));
    Var h = t.tanh(t.matmul(x, t.parameter(w)));
    Var d = t.dropout(h, 0.5, rng);
    Var loss = t.reduce_sum(d);
    w.value.zero_grad();
    t.backward(loss);
    auto out = t.value(loss).data;
    out.insert(out.end(), w.value.grad.begin(), w.value.grad.end());
    return out;
  };
  CHECK(run(42) == run(42));
  CHECK(run(42) != run(43));
}

TEST_CASE("lstm_sequence matches reversed-input symmetry") {
  Rng rng = make_rng(23);
  const int n = 5, in = 3, h = 4;
  Tensor x = random_tensor({n, in}, rng);
  Tensor xrev({n, in});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < in; ++j) xrev.at(i, j) = x.at(n - 1 - i, j);
  }
  Parameter wx("wx", random_tensor({in, 4 * h}, rng, -0.5, 0.5));
  Parameter wh("wh", random_tensor({h, 4 * h}, rng, -0.5, 0.5));
  Parameter b("b", random_tensor({4 * h}, rng, -0.1, 0.1));

  Tape t;
  Var bwd = t.lstm_sequence(t.input(x), t.parameter(wx), t.parameter(wh), t.parameter(b), true);
  Var fwd_on_rev =
      t.lstm_sequence(t.input(xrev), t.parameter(wx), t.parameter(wh), t.parameter(b), false);
  const Tensor& tb = t.value(bwd);
  const Tensor& tf = t.value(fwd_on_rev);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < h; ++j) CHECK(tb.at(i, j) == doctest::Approx(tf.at(n - 1 - i, j)).epsilon(1e-12));
  }
}

TEST_CASE("lstm_sequence gradients match central differences") {
  Rng rng = make_rng(29);
  const int n = 4, in = 3, h = 3;
  Parameter x("x", random_tensor({n, in}, rng));
  Parameter wx("wx", random_tensor({in, 4 * h}, rng, -0.5, 0.5));
  Parameter wh("wh", random_tensor({h, 4 * h}, rng, -0.5, 0.5));
  Parameter b("b", random_tensor({4 * h}, rng, -0.1, 0.1));
  Tensor w = random_tensor({n, h}, rng);
  for (bool reversed : {false, true}) {
    auto make = [&](Tape& t) {
      Var out = t.lstm_sequence(t.parameter(x), t.parameter(wx), t.parameter(wh), t.parameter(b),
                                reversed);
      return t.reduce_sum(t.cmult(out, t.input(w)));
    };
    auto loss = [&] {
      Tape t;
      return t.value(make(t)).data[0];
    };
    auto grads = [&] {
      for (Parameter* p : {&x, &wx, &wh, &b}) p->value.zero_grad();
      Tape t;
      t.backward(make(t));
    };
    CHECK(check_gradients({&x, &wx, &wh, &b}, loss, grads).max_err <= 1e-5);
  }
}

TEST_CASE("structural op gradients match central differences") {
  Rng rng = make_rng(31);
  Parameter a("a", random_tensor({3, 4}, rng));
  Parameter v("v", random_tensor({4}, rng));
  Tensor w1 = random_tensor({4, 3}, rng);
  Tensor w2 = random_tensor({3, 8}, rng);
  auto make = [&](Tape& t) {
    Var m = t.parameter(a);
    Var tr = t.transpose(m);                              // [4 x 3]
    Var hc = t.hconcat(m, t.stack_cols({t.column(m, 0), t.column(m, 2)}));  // [3 x 6]
    Var rr = t.rows_range(hc, 1, 2);                      // [2 x 6]
    Var g = t.gather(t.row(rr, 0), {0, 3, 5});            // [3]
    Var cat = t.concat({g, t.parameter(v)});              // [7]
    Var sr = t.stack_rows({t.row(tr, 1), t.row(tr, 2)});  // [2 x 3]
    Var cd = t.colwise_div(sr, t.add_const(t.square(t.row(tr, 0)), 1.0));
    return t.add(t.add(t.reduce_sum(t.cmult(tr, t.input(w1))), t.reduce_sum(cat)),
                 t.add(t.reduce_sum(cd), t.reduce_max(cat)));
  };
  auto loss = [&] {
    Tape t;
    return t.value(make(t)).data[0];
  };
  auto grads = [&] {
    a.value.zero_grad();
    v.value.zero_grad();
    Tape t;
    t.backward(make(t));
  };
  CHECK(check_gradients({&a, &v}, loss, grads).max_err <= 1e-6);
}

TEST_CASE("cosine similarity closed forms and gradient") {
  Tape tape;
  Var e1 = tape.input(Tensor({2}, {1, 0}));
  Var e2 = tape.input(Tensor({2}, {0, 1}));
  Var diag = tape.input(Tensor({2}, {1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)}));
  CHECK(tape.value(tape.cosine_similarity(e1, e1)).data[0] == doctest::Approx(1.0));
  CHECK(tape.value(tape.cosine_similarity(e1, e2)).data[0] == doctest::Approx(0.0));
  CHECK(tape.value(tape.cosine_similarity(e1, diag)).data[0] ==
        doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));

  Rng rng = make_rng(37);
  Parameter p("p", random_tensor({5}, rng));
  Parameter q("q", random_tensor({5}, rng));
  auto make = [&](Tape& t) { return t.cosine_similarity(t.parameter(p), t.parameter(q)); };
  auto loss = [&] {
    Tape t;
    return t.value(make(t)).data[0];
  };
  auto grads = [&] {
    p.value.zero_grad();
    q.value.zero_grad();
    Tape t;
    t.backward(make(t));
  };
  CHECK(check_gradients({&p, &q}, loss, grads).max_err <= 1e-6);
}

TEST_CASE("smoothed cross entropy value and gradient") {
  Tape tape;
  // uniform scores: loss = ln K for any eps
  Var u = tape.input(Tensor({3}, {0, 0, 0}));
  CHECK(tape.value(tape.smoothed_cross_entropy(u, 0, 0.0)).data[0] ==
        doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(tape.value(tape.smoothed_cross_entropy(u, 1, 0.15)).data[0] ==
        doctest::Approx(std::log(3.0)).epsilon(1e-12));
  // near-one-hot prediction with eps=0 drives the loss to exactly 0
  Var sharp = tape.input(Tensor({3}, {1000.0, 0.0, 0.0}));
  CHECK(tape.value(tape.smoothed_cross_entropy(sharp, 0, 0.0)).data[0] == 0.0);

  Rng rng = make_rng(41);
  Parameter s("s", random_tensor({4}, rng));
  auto make = [&](Tape& t) { return t.smoothed_cross_entropy(t.parameter(s), 2, 0.15); };
  auto loss = [&] {
    Tape t;
    return t.value(make(t)).data[0];
  };
  auto grads = [&] {
    s.value.zero_grad();
    Tape t;
    t.backward(make(t));
  };
  CHECK(check_gradients({&s}, loss, grads).max_err <= 1e-6);

  Parameter rows("rows", random_tensor({3, 4}, rng));
  const std::vector<int> golds{2, -1, 0};
  auto make_rows = [&](Tape& t) {
    return t.smoothed_cross_entropy_rows(t.parameter(rows), golds, 0.15);
  };
  auto loss_rows = [&] {
    Tape t;
    return t.value(make_rows(t)).data[0];
  };
  auto grads_rows = [&] {
    rows.value.zero_grad();
    Tape t;
    t.backward(make_rows(t));
  };
  CHECK(check_gradients({&rows}, loss_rows, grads_rows).max_err <= 1e-6);
}

TEST_CASE("reduce_max routes gradient to the first argmax") {
  Parameter x("x", Tensor({3}, {0.5, 0.9, 0.9}));
  x.value.zero_grad();
  Tape t;
  t.backward(t.reduce_max(t.parameter(x)));
  CHECK(x.value.grad == std::vector<double>{0, 1, 0});
}
