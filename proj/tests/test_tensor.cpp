#include <cmath>
#include <random>

#include <doctest.h>

#include "lcgn/gradcheck.hpp"
#include "lcgn/tensor.hpp"

using namespace lcgn;

namespace {

Tensor<double> t2(Shape shape, std::vector<double> v) {
  return Tensor<double>(std::move(shape), std::move(v));
}

Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng,
                             bool requires_grad = false) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = dist(rng);
  return Tensor<double>(std::move(shape), std::move(v), requires_grad);
}

}  // namespace

TEST_CASE("matmul identity and annihilation") {
  auto eye = t2({2, 2}, {1, 0, 0, 1});
  auto v = t2({2, 1}, {3, 4});
  auto out = matmul(eye, v);
  CHECK(out.data()[0] == doctest::Approx(3));
  CHECK(out.data()[1] == doctest::Approx(4));

  auto zero = Tensor<double>::zeros({2, 2});
  auto anything = t2({2, 3}, {1, -2, 3, 4, -5, 6});
  auto z = matmul(zero, anything);
  for (auto x : z.data()) CHECK(x == 0.0);
}

TEST_CASE("matmul hand arithmetic") {
  auto a = t2({2, 2}, {1, 2, 3, 4});
  auto b = t2({2, 1}, {5, 6});
  auto out = matmul(a, b);
  CHECK(out.data()[0] == doctest::Approx(17));
  CHECK(out.data()[1] == doctest::Approx(39));
}

TEST_CASE("matmul shape mismatch names both shapes") {
  auto a = t2({2, 3}, {1, 2, 3, 4, 5, 6});
  auto b = t2({2, 2}, {1, 2, 3, 4});
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[2,2]") != std::string::npos);
  }
}

TEST_CASE("matmul transpose flags match explicit transposition") {
  std::mt19937_64 rng(7);
  auto a = random_tensor({4, 3}, rng);
  auto b = random_tensor({5, 3}, rng);
  // a . b^T
  auto out = matmul(a, b, false, true);
  REQUIRE(out.shape() == Shape{4, 5});
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 5; ++j) {
      double want = 0;
      for (int k = 0; k < 3; ++k)
        want += a.data()[i * 3 + k] * b.data()[j * 3 + k];
      CHECK(out.data()[i * 5 + j] == doctest::Approx(want));
    }

  auto c = random_tensor({3, 4}, rng);
  auto d = random_tensor({3, 5}, rng);
  auto out2 = matmul(c, d, true, false);  // c^T . d
  REQUIRE(out2.shape() == Shape{4, 5});
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 5; ++j) {
      double want = 0;
      for (int k = 0; k < 3; ++k)
        want += c.data()[k * 4 + i] * d.data()[k * 5 + j];
      CHECK(out2.data()[i * 5 + j] == doctest::Approx(want));
    }
}

TEST_CASE("bmm equals per-slice matmul") {
  std::mt19937_64 rng(11);
  auto a = random_tensor({3, 2, 4}, rng);
  auto b = random_tensor({3, 4, 5}, rng);
  auto out = bmm(a, b);
  for (int s = 0; s < 3; ++s) {
    auto as = t2({2, 4}, {a.data().begin() + s * 8, a.data().begin() + (s + 1) * 8});
    auto bs = t2({4, 5}, {b.data().begin() + s * 20, b.data().begin() + (s + 1) * 20});
    auto want = matmul(as, bs);
    for (int i = 0; i < 10; ++i)
      CHECK(out.data()[s * 10 + i] == doctest::Approx(want.data()[i]));
  }
}

TEST_CASE("elementwise zero absorption, relu, concat") {
  auto x = t2({3}, {1, 2, 3});
  auto z = t2({3}, {0, 0, 0});
  auto prod = mul(x, z);
  for (auto v : prod.data()) CHECK(v == 0.0);

  auto r = relu(t2({3}, {-1, 0, 2}));
  CHECK(r.data()[0] == 0.0);
  CHECK(r.data()[1] == 0.0);
  CHECK(r.data()[2] == 2.0);

  auto cat = concat_lastdim(t2({2}, {1, 2}), t2({1}, {3}));
  REQUIRE(cat.shape() == Shape{3});
  CHECK(cat.data()[0] == 1.0);
  CHECK(cat.data()[1] == 2.0);
  CHECK(cat.data()[2] == 3.0);
}

TEST_CASE("broadcast add and mul against manual loops") {
  std::mt19937_64 rng(3);
  auto a = random_tensor({2, 3, 4}, rng);
  auto b = random_tensor({4}, rng);
  auto sum = add(a, b);
  auto c = random_tensor({2, 1, 4}, rng);
  auto prod = mul(a, c);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 4; ++k) {
        const auto off = (i * 3 + j) * 4 + k;
        CHECK(sum.data()[off] ==
              doctest::Approx(a.data()[off] + b.data()[k]));
        CHECK(prod.data()[off] ==
              doctest::Approx(a.data()[off] * c.data()[i * 4 + k]));
      }
  CHECK_THROWS_AS(add(t2({2}, {1, 2}), t2({3}, {1, 2, 3})), ShapeError);
}

TEST_CASE("masked softmax oracle values") {
  auto single = masked_softmax(t2({1}, {0.37}), Tensor<double>::full({1}, 1));
  CHECK(single.data()[0] == doctest::Approx(1.0));

  auto sym =
      masked_softmax(t2({3}, {0.5, 0.5, 0.5}), Tensor<double>::full({3}, 1));
  for (auto v : sym.data()) CHECK(v == doctest::Approx(1.0 / 3));

  // Closed form: softmax([0, ln 3]) = [1/4, 3/4].
  auto closed = masked_softmax(t2({2}, {0.0, std::log(3.0)}),
                               Tensor<double>::full({2}, 1));
  CHECK(closed.data()[0] == doctest::Approx(0.25));
  CHECK(closed.data()[1] == doctest::Approx(0.75));
}

TEST_CASE("masked softmax masking, row sums, shift invariance") {
  std::mt19937_64 rng(19);
  auto logits = random_tensor({5, 7}, rng);
  std::vector<double> m(35, 0.0);
  for (int r = 0; r < 5; ++r)
    for (int j = 0; j < 7; ++j)
      if ((r + j) % 3 != 0 || j == 6) m[r * 7 + j] = 1.0;
  auto mask = t2({5, 7}, m);
  auto y = masked_softmax(logits, mask);
  for (int r = 0; r < 5; ++r) {
    double sum = 0;
    for (int j = 0; j < 7; ++j) {
      if (m[r * 7 + j] < 0.5) CHECK(y.data()[r * 7 + j] == 0.0);
      sum += y.data()[r * 7 + j];
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }

  // Adding a constant to all unmasked logits leaves the row unchanged.
  auto shifted_in = logits.clone();
  for (int r = 0; r < 5; ++r)
    for (int j = 0; j < 7; ++j)
      if (m[r * 7 + j] > 0.5) shifted_in.mutable_data()[r * 7 + j] += 11.25;
  auto y2 = masked_softmax(shifted_in, mask);
  for (int i = 0; i < 35; ++i)
    CHECK(y2.data()[i] == doctest::Approx(y.data()[i]).epsilon(1e-9));

  CHECK_THROWS_AS(
      masked_softmax(t2({2}, {1, 2}), Tensor<double>::zeros({2})),
      DegenerateRowError);
}

TEST_CASE("backward linear and quadratic oracles") {
  Tape<double> tape;
  auto x = t2({3}, {1, 2, 3});
  x.set_requires_grad(true);
  {
    TapeScope<double> scope(tape);
    auto loss = reduce_sum_all(x);
    tape.backward(loss);
  }
  for (auto g : x.grad()) CHECK(g == doctest::Approx(1.0));

  Tape<double> tape2;
  auto x2 = t2({2}, {1, 2});
  x2.set_requires_grad(true);
  {
    TapeScope<double> scope(tape2);
    auto loss = reduce_sum_all(mul(x2, x2));
    tape2.backward(loss);
  }
  CHECK(x2.grad()[0] == doctest::Approx(2.0));
  CHECK(x2.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("backward rejects non-scalar loss and empty tape") {
  Tape<double> tape;
  auto x = t2({2}, {1, 2});
  x.set_requires_grad(true);
  {
    TapeScope<double> scope(tape);
    auto y = mul(x, x);
    CHECK_THROWS_AS(tape.backward(y), ContractError);
  }
  Tape<double> empty;
  CHECK_THROWS_AS(empty.backward(Tensor<double>::scalar(1.0)), ContractError);
}

TEST_CASE("gradients accumulate across multiple uses") {
  Tape<double> tape;
  auto x = t2({2}, {3, -1});
  x.set_requires_grad(true);
  {
    TapeScope<double> scope(tape);
    // loss = sum(x) + sum(x) -> dx = 2.
    auto loss = reduce_sum_all(add(x, x));
    tape.backward(loss);
  }
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(2.0));
}

TEST_CASE("forward and backward are deterministic") {
  auto run = [](std::vector<double>& grads) {
    std::mt19937_64 rng(23);
    auto w = random_tensor({4, 4}, rng, true);
    auto x = random_tensor({4, 4}, rng);
    Tape<double> tape;
    double loss_val;
    {
      TapeScope<double> scope(tape);
      auto loss = reduce_sum_all(tanh(matmul(x, w)));
      tape.backward(loss);
      loss_val = loss.item();
    }
    grads.assign(w.grad().begin(), w.grad().end());
    return loss_val;
  };
  std::vector<double> g1, g2;
  const double l1 = run(g1);
  const double l2 = run(g2);
  CHECK(l1 == l2);  // bit identical
  CHECK(g1 == g2);
}

TEST_CASE("composite graph matches central finite differences") {
  std::mt19937_64 rng(41);
  std::vector<std::pair<std::string, Tensor<double>>> params;
  params.emplace_back("w", random_tensor({3, 5}, rng, true));
  params.emplace_back("v", random_tensor({4, 3}, rng, true));
  params.emplace_back("b", random_tensor({1, 3}, rng, true));
  auto x = random_tensor({4, 5}, rng);
  auto mask = Tensor<double>::full({4, 3}, 1);

  auto loss_fn = [&]() {
    auto& w = params[0].second;
    auto& v = params[1].second;
    auto& b = params[2].second;
    auto hidden = relu(add(matmul(x, w, false, true), b));
    auto gated = mul(sigmoid(hidden), tanh(add(hidden, v)));
    auto att = masked_softmax(gated, mask);
    return reduce_mean_all(mul(att, v));
  };
  auto report = check_gradients<double>(loss_fn, params, 1e-4, 16, 99);
  REQUIRE(report.size() == 3);
  for (const auto& e : report) CHECK(e.max_rel_err < 1e-5);
}

TEST_CASE("fused losses match composed definitions and gradcheck") {
  std::mt19937_64 rng(59);
  std::vector<std::pair<std::string, Tensor<double>>> params;
  params.emplace_back("logits", random_tensor({6, 5}, rng, true));
  std::vector<std::int64_t> labels = {0, 3, 2, 4, 1, 2};

  auto ce = softmax_cross_entropy(params[0].second, labels);
  for (int b = 0; b < 6; ++b) {
    double lse = 0;
    const double* row = params[0].second.data().data() + b * 5;
    double mx = *std::max_element(row, row + 5);
    for (int c = 0; c < 5; ++c) lse += std::exp(row[c] - mx);
    lse = mx + std::log(lse);
    CHECK(ce.data()[b] == doctest::Approx(lse - row[labels[b]]));
  }

  auto loss_fn = [&]() {
    return reduce_mean_all(softmax_cross_entropy(params[0].second, labels));
  };
  auto report = check_gradients<double>(loss_fn, params, 1e-4, 16, 1);
  CHECK(report[0].max_rel_err < 1e-6);

  auto sig_fn = [&]() {
    return reduce_mean_all(
        sigmoid_cross_entropy_onehot(params[0].second, labels));
  };
  report = check_gradients<double>(sig_fn, params, 1e-4, 16, 2);
  CHECK(report[0].max_rel_err < 1e-6);

  auto masked_fn = [&]() {
    auto mask = Tensor<double>::full({6, 5}, 1);
    return reduce_mean_all(
        masked_softmax_cross_entropy(params[0].second, mask, labels));
  };
  report = check_gradients<double>(masked_fn, params, 1e-4, 16, 3);
  CHECK(report[0].max_rel_err < 1e-6);
}

TEST_CASE("structured ops backward via finite differences") {
  std::mt19937_64 rng(61);
  std::vector<std::pair<std::string, Tensor<double>>> params;
  params.emplace_back("table", random_tensor({7, 3}, rng, true));
  params.emplace_back("x", random_tensor({2, 4, 3}, rng, true));

  std::vector<std::int64_t> ids = {0, 6, 3, 3, 2, 1};
  std::vector<std::int64_t> gather = {2, 0};
  auto loss_fn = [&]() {
    auto emb = embedding(params[0].second, ids, {2, 3});
    auto picked = gather_dim1(params[1].second, gather);
    auto t0 = select_dim1(params[1].second, 1);
    auto stacked = stack_dim1(std::vector<Tensor<double>>{picked, t0});
    auto sliced = slice_lastdim(stacked, 1, 2);
    return reduce_mean_all(
        add(reduce_sum_all(tanh(emb)), reduce_sum_all(mul(sliced, sliced))));
  };
  auto report = check_gradients<double>(loss_fn, params, 1e-4, 20, 5);
  for (const auto& e : report) CHECK(e.max_rel_err < 1e-6);
}

TEST_CASE("gradcheck on a linear model is exact to 1e-7") {
  std::mt19937_64 rng(71);
  std::vector<std::pair<std::string, Tensor<double>>> params;
  params.emplace_back("w", random_tensor({3, 4}, rng, true));
  auto x = random_tensor({5, 4}, rng);
  auto loss_fn = [&]() {
    return reduce_mean_all(linear(x, params[0].second));
  };
  auto report = check_gradients<double>(loss_fn, params, 1e-4, 12, 7);
  REQUIRE(report.size() == 1);
  CHECK(report[0].max_rel_err < 1e-7);
}

TEST_CASE("gradcheck with no parameters reports nothing") {
  std::vector<std::pair<std::string, Tensor<double>>> params;
  auto loss_fn = [] { return Tensor<double>::scalar(2.5); };
  CHECK(check_gradients<double>(loss_fn, params, 1e-4, 8, 1).empty());
}

TEST_CASE("reshape shares gradient storage") {
  Tape<double> tape;
  auto x = t2({2, 3}, {1, 2, 3, 4, 5, 6});
  x.set_requires_grad(true);
  {
    TapeScope<double> scope(tape);
    auto flat = x.reshape({6});
    auto loss = reduce_sum_all(mul(flat, flat));
    tape.backward(loss);
  }
  for (int i = 0; i < 6; ++i)
    CHECK(x.grad()[i] == doctest::Approx(2.0 * (i + 1)));
}

TEST_CASE("argmax breaks ties toward the lowest index") {
  auto v = t2({2, 4}, {1, 3, 3, 0, -5, -5, -7, -5});
  auto mask = Tensor<double>::full({2, 4}, 1);
  auto idx = argmax_lastdim_masked(v, mask);
  CHECK(idx[0] == 1);
  CHECK(idx[1] == 0);

  std::vector<double> m = {0, 1, 1, 1, 1, 1, 1, 0};
  auto idx2 = argmax_lastdim_masked(v, t2({2, 4}, m));
  CHECK(idx2[0] == 1);
  CHECK(idx2[1] == 0);
}
