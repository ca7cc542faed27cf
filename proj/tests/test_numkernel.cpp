#include "doctest.h"

#include <cmath>

#include "clicksim/numkernel.hpp"

using namespace clicksim;
using num::Mat;
using num::Vec;

TEST_SUITE_BEGIN("numkernel");

TEST_CASE("affine identity and zero-weight cases") {
  Mat id = Mat::Identity(2, 2);
  Vec x(2);
  x << 3.0, -1.0;
  Vec b = Vec::Zero(2);
  Vec y = num::affine(id, x, b);
  CHECK(y[0] == doctest::Approx(3.0));
  CHECK(y[1] == doctest::Approx(-1.0));

  Mat zero = Mat::Zero(2, 3);
  Vec x3(3);
  x3 << 7.0, -2.0, 0.5;
  Vec b2(2);
  b2 << 1.0, 2.0;
  Vec y2 = num::affine(zero, x3, b2);
  CHECK(y2[0] == doctest::Approx(1.0));
  CHECK(y2[1] == doctest::Approx(2.0));
}

TEST_CASE("affine hand-evaluated product") {
  Mat w(2, 2);
  w << 1.0, 2.0, 3.0, 4.0;
  Vec x(2);
  x << 1.0, 1.0;
  Vec y = num::affine(w, x, Vec::Zero(2));
  CHECK(y[0] == doctest::Approx(3.0));
  CHECK(y[1] == doctest::Approx(7.0));
}

TEST_CASE("affine rejects shape mismatches") {
  Mat w = Mat::Zero(2, 3);
  CHECK_THROWS_AS(num::affine(w, Vec::Zero(2), Vec::Zero(2)), ContractError);
  CHECK_THROWS_AS(num::affine(w, Vec::Zero(3), Vec::Zero(3)), ContractError);
}

TEST_CASE("activation identities") {
  CHECK(num::sigmoid(0.0) == doctest::Approx(0.5));
  Vec v = Vec::Zero(2);
  Vec p = num::softmax(v);
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[1] == doctest::Approx(0.5));

  Vec big(2);
  big << 1000.0, 1000.0;
  Vec pb = num::softmax(big);
  CHECK(std::isfinite(pb[0]));
  CHECK(pb[0] == doctest::Approx(0.5));
  CHECK(pb[1] == doctest::Approx(0.5));
}

TEST_CASE("softmax sums to one and stays in (0,1) for any magnitude") {
  Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + rng.uniform_int(6);
    Vec v(n);
    const double scale = std::pow(10.0, rng.uniform(-3.0, 3.0));
    for (int i = 0; i < n; ++i) v[i] = rng.uniform(-1.0, 1.0) * scale;
    Vec p = num::softmax(v);
    CHECK(std::abs(p.sum() - 1.0) <= 1e-12);
    for (int i = 0; i < n; ++i) {
      CHECK(p[i] > 0.0);
      CHECK(p[i] < 1.0);
    }
  }
}

TEST_CASE("gru zero-weight closed forms") {
  Rng rng(1);
  num::GruCellParams cell;
  cell.init(2, 3, rng);
  for (auto* p : {&cell.w_update, &cell.w_reset, &cell.w_cand, &cell.u_update, &cell.u_reset,
                  &cell.u_cand})
    p->value.setZero();

  Vec h(3);
  h << 1.0, -2.0, 0.5;
  Vec x = Vec::Zero(2);
  Vec h_new = num::gru_forward(cell, x, h);
  // z = 0.5, cand = 0, so h_new = 0.5 h.
  for (int i = 0; i < 3; ++i) CHECK(h_new[i] == doctest::Approx(0.5 * h[i]));

  Vec zero_h = num::gru_forward(cell, x, Vec::Zero(3));
  for (int i = 0; i < 3; ++i) CHECK(zero_h[i] == doctest::Approx(0.0));
}

TEST_CASE("gru matches an independent scalar reference") {
  Rng rng(7);
  num::GruCellParams cell;
  cell.init(3, 3, rng);
  Vec x(3), h(3);
  for (int i = 0; i < 3; ++i) {
    x[i] = rng.uniform(-1.0, 1.0);
    h[i] = rng.uniform(-1.0, 1.0);
  }
  Vec got = num::gru_forward(cell, x, h);

  // Plain-double re-evaluation of the same formulas.
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  double z[3], r[3], c[3];
  for (int i = 0; i < 3; ++i) {
    double az = cell.b_update.value(i, 0), ar = cell.b_reset.value(i, 0);
    for (int j = 0; j < 3; ++j) {
      az += cell.w_update.value(i, j) * x[j] + cell.u_update.value(i, j) * h[j];
      ar += cell.w_reset.value(i, j) * x[j] + cell.u_reset.value(i, j) * h[j];
    }
    z[i] = sig(az);
    r[i] = sig(ar);
  }
  for (int i = 0; i < 3; ++i) {
    double ac = cell.b_cand.value(i, 0);
    for (int j = 0; j < 3; ++j)
      ac += cell.w_cand.value(i, j) * x[j] + cell.u_cand.value(i, j) * (r[j] * h[j]);
    c[i] = std::tanh(ac);
  }
  for (int i = 0; i < 3; ++i) {
    const double expect = (1.0 - z[i]) * h[i] + z[i] * c[i];
    CHECK(got[i] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("gru output bounded by max(|h_prev|, 1) elementwise") {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    num::GruCellParams cell;
    cell.init(4, 5, rng);
    Vec x(4), h(5);
    for (int i = 0; i < 4; ++i) x[i] = rng.uniform(-3.0, 3.0);
    for (int i = 0; i < 5; ++i) h[i] = rng.uniform(-3.0, 3.0);
    Vec h_new = num::gru_forward(cell, x, h);
    for (int i = 0; i < 5; ++i)
      CHECK(std::abs(h_new[i]) <= std::max(std::abs(h[i]), 1.0) + 1e-12);
  }
}

TEST_CASE("gru backward zero cotangent and closed form") {
  Rng rng(3);
  num::GruCellParams cell;
  cell.init(2, 3, rng);
  Vec x(2), h(3);
  x << 0.3, -0.7;
  h << 0.1, 0.2, -0.4;

  num::GruCache cache;
  num::gru_forward(cell, x, h, &cache);
  auto g = num::gru_backward(cell, cache, Vec::Zero(3));
  CHECK(g.dx.norm() == doctest::Approx(0.0));
  CHECK(g.dh_prev.norm() == doctest::Approx(0.0));
  num::ParamStore store;
  cell.register_into(store, "gru");
  for (std::size_t i = 0; i < store.count(); ++i)
    CHECK(store.param(i).grad.norm() == doctest::Approx(0.0));

  // Zero-weight cell: h_new = 0.5 h_prev, so dh_prev = 0.5 g.
  for (auto* p : {&cell.w_update, &cell.w_reset, &cell.w_cand, &cell.u_update, &cell.u_reset,
                  &cell.u_cand})
    p->value.setZero();
  cell.b_update.value.setZero();
  cell.b_reset.value.setZero();
  cell.b_cand.value.setZero();
  num::GruCache c2;
  num::gru_forward(cell, x, h, &c2);
  Vec dh(3);
  dh << 1.0, -2.0, 3.0;
  auto g2 = num::gru_backward(cell, c2, dh);
  for (int i = 0; i < 3; ++i) CHECK(g2.dh_prev[i] == doctest::Approx(0.5 * dh[i]));
}

TEST_CASE("gru backward matches central finite differences") {
  Rng rng(11);
  num::GruCellParams cell;
  cell.init(3, 4, rng);
  Vec x(3), h(4), dh(4);
  for (int i = 0; i < 3; ++i) x[i] = rng.uniform(-1.0, 1.0);
  for (int i = 0; i < 4; ++i) {
    h[i] = rng.uniform(-1.0, 1.0);
    dh[i] = rng.uniform(-1.0, 1.0);
  }

  num::ParamStore store;
  cell.register_into(store, "gru");
  auto loss = [&](bool with_grads) {
    num::GruCache cache;
    Vec out = num::gru_forward(cell, x, h, &cache);
    if (with_grads) num::gru_backward(cell, cache, dh);
    return out.dot(dh);
  };
  Rng probe_rng(5);
  auto report = num::grad_check(loss, store, 60, 1e-4, probe_rng);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("adam zero gradient is the identity on values") {
  Rng rng(2);
  num::Param p;
  p.init_uniform(3, 2, rng);
  Mat before = p.value;
  num::ParamStore store;
  store.add("p", p);
  num::AdamState state;
  num::adam_step(state, store, {.lr = 0.1});
  CHECK((p.value - before).norm() == doctest::Approx(0.0));
  CHECK(state.step_count() == 1);
}

TEST_CASE("adam first step is approximately a sign step of size lr") {
  num::Param p;
  p.resize(2, 1);
  p.value << 1.0, -2.0;
  p.grad << 0.5, -0.25;
  num::ParamStore store;
  store.add("p", p);
  num::AdamState state;
  num::adam_step(state, store, {.lr = 0.01});
  CHECK(p.value(0, 0) == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
  CHECK(p.value(1, 0) == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
}

TEST_CASE("adam matches a hand-computed two-step trace") {
  num::Param p;
  p.resize(1, 1);
  p.value(0, 0) = 1.0;
  num::ParamStore store;
  store.add("w", p);
  num::AdamState state;
  num::AdamConfig cfg{.lr = 0.1};

  p.grad(0, 0) = 0.5;
  num::adam_step(state, store, cfg);
  CHECK(p.value(0, 0) == doctest::Approx(0.9000000019999999).epsilon(1e-12));
  p.grad(0, 0) = 0.5;
  num::adam_step(state, store, cfg);
  CHECK(p.value(0, 0) == doctest::Approx(0.8000000040000005).epsilon(1e-12));
}

TEST_CASE("adam applies the L2 term to gradients") {
  num::Param p;
  p.resize(1, 1);
  p.value(0, 0) = 2.0;
  p.grad(0, 0) = 0.0;
  num::ParamStore store;
  store.add("w", p);
  num::AdamState state;
  num::adam_step(state, store, {.lr = 0.1, .l2 = 0.01});
  // Effective gradient 0.02 > 0, so the value must decrease.
  CHECK(p.value(0, 0) < 2.0);
}

TEST_CASE("grad_check on a quadratic loss") {
  Rng rng(8);
  num::Param p;
  p.init_uniform(4, 3, rng);
  num::ParamStore store;
  store.add("theta", p);

  auto loss = [&](bool with_grads) {
    if (with_grads) p.grad += p.value;
    return 0.5 * p.value.squaredNorm();
  };
  Rng probe_rng(9);
  auto report = num::grad_check(loss, store, 24, 1e-6, probe_rng);
  CHECK(report.max_rel_error < 1e-6);
  CHECK(report.probes.size() == 24);
}

TEST_CASE("dropout mask is inverted and seeded") {
  Rng a(5), b(5);
  Vec m1 = num::dropout_mask(64, 0.5, a);
  Vec m2 = num::dropout_mask(64, 0.5, b);
  CHECK((m1 - m2).norm() == doctest::Approx(0.0));
  for (int i = 0; i < 64; ++i) CHECK((m1[i] == 0.0 || m1[i] == doctest::Approx(2.0)));
  Rng c(6);
  Vec none = num::dropout_mask(16, 0.0, c);
  CHECK(none.sum() == doctest::Approx(16.0));
}

TEST_SUITE_END();
