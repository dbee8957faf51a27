#include <cmath>
#include <cstdio>
#include <functional>

#include "core/finite_diff.h"
#include "core/param_store.h"
#include "core/rng.h"
#include "core/tape.h"
#include "doctest.h"

using namespace grf;

namespace {

NumArray random_array(std::vector<int64_t> shape, Rng& rng, double lo = -1.5, double hi = 1.5) {
  NumArray a(std::move(shape), Dtype::F64);
  for (int64_t i = 0; i < a.numel(); ++i) a.set(i, rng.uniform(lo, hi));
  return a;
}

// Project an op output to a scalar with fixed pseudo-random weights so a
// single backward checks every output coordinate.
NodeId to_scalar(Tape& t, NodeId y) {
  NumArray proj(t.value(y).shape(), t.dtype());
  Rng prng(777);
  for (int64_t i = 0; i < proj.numel(); ++i) proj.set(i, prng.uniform(0.25, 1.75));
  return t.sum_all(t.mul(y, t.constant(std::move(proj))));
}

// Max rel error between tape gradient and the central-difference oracle for a
// scalar-valued graph built from one input array.
double grad_vs_fd(const std::function<NodeId(Tape&, NodeId)>& build, const NumArray& x0,
                  double eps = 1e-5) {
  Tape t(Dtype::F64);
  NodeId x = t.input(x0);
  NodeId loss = build(t, x);
  t.backward(loss);
  NumArray analytic = t.grad(x).clone();

  auto f = [&](const NumArray& xv) {
    Tape t2(Dtype::F64);
    return t2.value(build(t2, t2.input(xv))).get(0);
  };
  NumArray fd = finite_diff_grad(f, x0, eps);
  return max_rel_error(analytic, fd);
}

void check_op(const char* name, const std::function<NodeId(Tape&, NodeId)>& build,
              std::vector<int64_t> shape, double lo = -1.5, double hi = 1.5) {
  Rng rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    NumArray x0 = random_array(shape, rng, lo, hi);
    const double err = grad_vs_fd(build, x0);
    INFO(name << " trial " << trial);
    CHECK(err < 1e-4);
  }
}

}  // namespace

TEST_CASE("backprop: sum of squares and constants") {
  Tape t(Dtype::F64);
  NodeId x = t.input(NumArray::from_values({3}, Dtype::F64, std::vector<double>{1, 2, 3}));
  NodeId loss = t.sum_all(t.mul(x, x));
  CHECK(t.value(loss).get(0) == doctest::Approx(14.0));
  t.backward(loss);
  const NumArray& g = t.grad(x);
  CHECK(g.get(0) == doctest::Approx(2.0));
  CHECK(g.get(1) == doctest::Approx(4.0));
  CHECK(g.get(2) == doctest::Approx(6.0));

  Tape t2(Dtype::F64);
  NodeId x2 = t2.input(NumArray::from_values({3}, Dtype::F64, std::vector<double>{1, 2, 3}));
  NodeId c = t2.constant(NumArray::full({1}, Dtype::F64, 5.0));
  t2.backward(t2.sum_all(c));
  const NumArray& g2 = t2.grad(x2);
  for (int64_t i = 0; i < 3; ++i) CHECK(g2.get(i) == 0.0);
}

TEST_CASE("backprop: non-scalar loss and non-finite forward are errors") {
  Rng rng(1);
  Tape t(Dtype::F64);
  NodeId x = t.input(random_array({2, 2}, rng));
  CHECK_THROWS_AS(t.backward(x), ShapeError);

  Tape t2(Dtype::F64);
  NodeId zero = t2.constant(NumArray::full({2}, Dtype::F64, 0.0));
  CHECK_THROWS_AS(t2.div(zero, zero), NumericError);
}

TEST_CASE("backprop: deterministic across identical runs") {
  auto run = [] {
    Rng rng(5);
    Tape t(Dtype::F64);
    NodeId x = t.input(random_array({4, 3}, rng));
    NodeId w = t.input(random_array({3, 2}, rng));
    NodeId y = t.matmul(t.sigmoid(x), w);
    t.backward(t.sum_all(t.mul(y, y)));
    return std::pair{t.grad(x).to_vector(), t.grad(w).to_vector()};
  };
  auto [gx1, gw1] = run();
  auto [gx2, gw2] = run();
  CHECK(gx1 == gx2);  // bit-identical
  CHECK(gw1 == gw2);
}

TEST_CASE("finite_diff_grad: analytic examples") {
  auto square = [](const NumArray& x) { return x.get(0) * x.get(0); };
  NumArray x = NumArray::full({1}, Dtype::F64, 3.0);
  NumArray g = finite_diff_grad(square, x, 1e-5);
  CHECK(std::abs(g.get(0) - 6.0) < 1e-8);

  auto sine = [](const NumArray& x) { return std::sin(x.get(0)); };
  NumArray g2 = finite_diff_grad(sine, NumArray::full({1}, Dtype::F64, 0.0), 1e-5);
  CHECK(std::abs(g2.get(0) - 1.0) < 1e-8);
}

TEST_CASE("elementwise ops match finite differences") {
  Rng rng(7);
  check_op("add", [&](Tape& t, NodeId x) {
    Rng r(3);
    return to_scalar(t, t.add(x, t.constant(random_array({3, 4}, r))));
  }, {3, 4});
  check_op("sub", [&](Tape& t, NodeId x) {
    Rng r(4);
    return to_scalar(t, t.sub(x, t.constant(random_array({3, 4}, r))));
  }, {3, 4});
  check_op("mul", [](Tape& t, NodeId x) {
    Rng r(5);
    return to_scalar(t, t.mul(x, t.constant(random_array({3, 4}, r))));
  }, {3, 4});
  check_op("mul_self", [](Tape& t, NodeId x) { return to_scalar(t, t.mul(x, x)); }, {3, 4});
  check_op("div_num", [](Tape& t, NodeId x) {
    Rng r(6);
    return to_scalar(t, t.div(x, t.constant(random_array({3, 4}, r, 0.5, 2.0))));
  }, {3, 4});
  check_op("div_den", [](Tape& t, NodeId x) {
    Rng r(8);
    return to_scalar(t, t.div(t.constant(random_array({3, 4}, r)), x));
  }, {3, 4}, 0.5, 2.0);
  check_op("scale", [](Tape& t, NodeId x) { return to_scalar(t, t.scale(x, -2.5)); }, {3, 4});
  check_op("add_scalar", [](Tape& t, NodeId x) { return to_scalar(t, t.add_scalar(x, 0.7)); },
           {3, 4});
  check_op("exp", [](Tape& t, NodeId x) { return to_scalar(t, t.exp(x)); }, {3, 4});
  check_op("sin", [](Tape& t, NodeId x) { return to_scalar(t, t.sin(x)); }, {3, 4});
  check_op("cos", [](Tape& t, NodeId x) { return to_scalar(t, t.cos(x)); }, {3, 4});
  check_op("relu", [](Tape& t, NodeId x) { return to_scalar(t, t.relu(x)); }, {3, 4}, 0.2, 1.5);
  check_op("sigmoid", [](Tape& t, NodeId x) { return to_scalar(t, t.sigmoid(x)); }, {3, 4});
  check_op("softplus", [](Tape& t, NodeId x) { return to_scalar(t, t.softplus(x)); }, {3, 4});
}

TEST_CASE("movement and reduction ops match finite differences") {
  check_op("concat_cols", [](Tape& t, NodeId x) {
    Rng r(11);
    NodeId c = t.constant(random_array({4, 2}, r));
    const NodeId parts[] = {x, c, x};
    return to_scalar(t, t.concat_cols(parts));
  }, {4, 3});
  check_op("concat_rows", [](Tape& t, NodeId x) {
    Rng r(12);
    NodeId c = t.constant(random_array({2, 3}, r));
    const NodeId parts[] = {c, x, x};
    return to_scalar(t, t.concat_rows(parts));
  }, {4, 3});
  check_op("gather_rows", [](Tape& t, NodeId x) {
    auto idx = std::make_shared<std::vector<int64_t>>(std::vector<int64_t>{2, 0, -1, 1, 1, 3});
    return to_scalar(t, t.gather_rows(x, idx));
  }, {4, 3});
  check_op("gather_rows_taps", [](Tape& t, NodeId x) {
    auto idx = std::make_shared<std::vector<int64_t>>(std::vector<int64_t>{0, 1, 2, -1, 3, 3});
    return to_scalar(t, t.gather_rows(x, idx, 3));
  }, {4, 3});
  check_op("sum_all", [](Tape& t, NodeId x) { return t.sum_all(x); }, {5, 2});
  check_op("set_sum", [](Tape& t, NodeId x) { return to_scalar(t, t.set_sum(x, 3)); }, {6, 2});
  check_op("set_max", [](Tape& t, NodeId x) { return to_scalar(t, t.set_max(x, 3)); }, {6, 2});
  check_op("set_broadcast",
           [](Tape& t, NodeId x) { return to_scalar(t, t.set_broadcast(x, 4)); }, {3, 2});
  check_op("set_softmax", [](Tape& t, NodeId x) { return to_scalar(t, t.set_softmax(x, 3)); },
           {6, 2});
  check_op("mul_rows_a", [](Tape& t, NodeId x) {
    Rng r(13);
    return to_scalar(t, t.mul_rows(x, t.constant(random_array({4, 1}, r))));
  }, {4, 3});
  check_op("mul_rows_s", [](Tape& t, NodeId x) {
    Rng r(14);
    return to_scalar(t, t.mul_rows(t.constant(random_array({4, 3}, r)), x));
  }, {4, 1});
  check_op("group_sum", [](Tape& t, NodeId x) { return to_scalar(t, t.group_sum(x, 3)); }, {6, 2});
  check_op("group_cumsum_exclusive",
           [](Tape& t, NodeId x) { return to_scalar(t, t.group_cumsum_exclusive(x, 4)); }, {8, 1});
}

TEST_CASE("matmul and linear match finite differences") {
  check_op("matmul_a", [](Tape& t, NodeId x) {
    Rng r(21);
    return to_scalar(t, t.matmul(x, t.constant(random_array({3, 2}, r))));
  }, {4, 3});
  check_op("matmul_b", [](Tape& t, NodeId x) {
    Rng r(22);
    return to_scalar(t, t.matmul(t.constant(random_array({4, 3}, r)), x));
  }, {3, 2});
  for (Act act : {Act::None, Act::Relu, Act::Sigmoid, Act::Softplus}) {
    check_op("linear_x", [act](Tape& t, NodeId x) {
      Rng r(23);
      NodeId w = t.constant(random_array({3, 2}, r));
      NodeId b = t.constant(random_array({2}, r));
      return to_scalar(t, t.linear(x, w, b, act));
    }, {4, 3}, 0.2, 1.5);
    check_op("linear_w", [act](Tape& t, NodeId x) {
      Rng r(24);
      NodeId in = t.constant(random_array({4, 3}, r));
      NodeId b = t.constant(random_array({2}, r));
      return to_scalar(t, t.linear(in, x, b, act));
    }, {3, 2}, 0.2, 1.5);
    check_op("linear_b", [act](Tape& t, NodeId x) {
      Rng r(25);
      NodeId in = t.constant(random_array({4, 3}, r));
      NodeId w = t.constant(random_array({3, 2}, r));
      return to_scalar(t, t.linear(in, w, x, act));
    }, {2}, 0.2, 1.5);
  }
}

TEST_CASE("set_softmax: masks positive, sum to one across the set") {
  Rng rng(31);
  Tape t(Dtype::F64);
  NodeId x = t.input(random_array({4 * 5, 3}, rng, -3.0, 3.0));
  NodeId sm = t.set_softmax(x, 4);
  const NumArray& v = t.value(sm);
  for (int64_t r = 0; r < 5; ++r) {
    for (int64_t c = 0; c < 3; ++c) {
      double sum = 0;
      for (int64_t s = 0; s < 4; ++s) {
        const double m = v.get((s * 5 + r) * 3 + c);
        CHECK(m > 0.0);
        sum += m;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("gather_rows: -1 yields zero rows and no gradient flow") {
  Tape t(Dtype::F64);
  NodeId x = t.input(NumArray::from_values({2, 2}, Dtype::F64, std::vector<double>{1, 2, 3, 4}));
  auto idx = std::make_shared<std::vector<int64_t>>(std::vector<int64_t>{-1, 1, -1});
  NodeId y = t.gather_rows(x, idx);
  CHECK(t.value(y).get(0) == 0.0);
  CHECK(t.value(y).get(2) == 3.0);
  CHECK(t.value(y).get(4) == 0.0);
  t.backward(t.sum_all(y));
  CHECK(t.grad(x).get(0) == 0.0);
  CHECK(t.grad(x).get(2) == 1.0);
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  ParamStore store(Dtype::F64);
  store.create("w", {3}, 1.25);
  store.accumulate_grad("w", NumArray({3}, Dtype::F64));
  store.adam_step(AdamHyper{});
  for (int64_t i = 0; i < 3; ++i) CHECK(store.value("w").get(i) == doctest::Approx(1.25));
  CHECK(store.step_count() == 1);
}

TEST_CASE("adam: unit gradient at step 1 moves by exactly the learning rate") {
  ParamStore store(Dtype::F64);
  store.create("w", {1}, 2.0);
  store.accumulate_grad("w", NumArray::full({1}, Dtype::F64, 1.0));
  AdamHyper hyper;
  hyper.learning_rate = 1e-3;
  store.adam_step(hyper);
  // bias-corrected m-hat = g, v-hat = g^2 => update = lr * g/(|g|+eps) ~ lr
  CHECK(store.value("w").get(0) == doctest::Approx(2.0 - 1e-3).epsilon(1e-7));
}

TEST_CASE("adam: converges on a quadratic") {
  ParamStore store(Dtype::F64);
  store.create("p", {1}, 0.0);
  AdamHyper hyper;
  hyper.learning_rate = 0.1;
  for (int step = 0; step < 100; ++step) {
    const double p = store.value("p").get(0);
    store.accumulate_grad("p", NumArray::full({1}, Dtype::F64, 2.0 * (p - 5.0)));
    store.adam_step(hyper);
  }
  CHECK(std::abs(store.value("p").get(0) - 5.0) < 0.5);
}

TEST_CASE("adam: missing gradient is an error") {
  ParamStore store(Dtype::F64);
  store.create("a", {2}, 0.0);
  store.create("b", {2}, 0.0);
  store.accumulate_grad("a", NumArray({2}, Dtype::F64));
  CHECK_THROWS_AS(store.adam_step(AdamHyper{}), Error);
}

TEST_CASE("param store: gradients accumulate through the tape") {
  ParamStore store(Dtype::F64);
  Rng rng(41);
  store.create_random("w", {3, 2}, rng, 0.5);
  Tape t(Dtype::F64);
  NodeId w = t.param(store, "w");
  NodeId x = t.constant(random_array({4, 3}, rng));
  t.backward(t.sum_all(t.mul(t.matmul(x, w), t.matmul(x, w))));
  t.add_param_grads_to(store);
  CHECK(store.has_grad("w"));
  // dL/dw = 2 X^T (X w)
  NumArray analytic = store.grad("w").clone();
  auto f = [&](const NumArray& wv) {
    Tape t2(Dtype::F64);
    NodeId w2 = t2.input(wv);
    NodeId y = t2.matmul(t2.constant(t.value_ptr(x)), w2);
    return t2.value(t2.sum_all(t2.mul(y, y))).get(0);
  };
  NumArray fd = finite_diff_grad(f, store.value("w"), 1e-5);
  CHECK(max_rel_error(analytic, fd) < 1e-6);
}

TEST_CASE("checkpoint: save/load round-trip preserves everything") {
  ParamStore store(Dtype::F32);
  Rng rng(51);
  store.create_random("layer0/w", {4, 3}, rng, 0.1);
  store.create_random("layer0/b", {3}, rng, 0.1);
  // produce nonzero adam state
  store.accumulate_grad("layer0/w", NumArray::full({4, 3}, Dtype::F32, 0.5));
  store.accumulate_grad("layer0/b", NumArray::full({3}, Dtype::F32, -0.25));
  store.adam_step(AdamHyper{});

  const std::string path = "/tmp/grf_test_ckpt.bin";
  store.save(path, "{\"kind\":\"test\"}");
  std::string meta;
  ParamStore loaded = ParamStore::load(path, &meta);
  CHECK(meta == "{\"kind\":\"test\"}");
  CHECK(loaded.step_count() == 1);
  CHECK(loaded.names() == store.names());
  for (const auto& name : store.names()) {
    CHECK(loaded.value(name).shape() == store.value(name).shape());
    for (int64_t i = 0; i < store.value(name).numel(); ++i)
      CHECK(loaded.value(name).get(i) == store.value(name).get(i));
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoint: rejects a non-checkpoint file") {
  const std::string path = "/tmp/grf_not_a_ckpt.bin";
  FILE* f = std::fopen(path.c_str(), "wb");
  std::fputs("hello world, definitely not a checkpoint", f);
  std::fclose(f);
  CHECK_THROWS_AS(ParamStore::load(path, nullptr), IoError);
  std::remove(path.c_str());
}
