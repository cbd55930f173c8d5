#include <cmath>
#include <random>

#include <doctest.h>

#include "lcgn/heads.hpp"
#include "oracles.hpp"

using namespace lcgn;

namespace {

ModelConfig head_config(std::int64_t d = 4, std::int64_t d_ans = 4) {
  ModelConfig mc;
  mc.lcgn.d_txt = d;
  mc.lcgn.d_ctx = d;
  mc.lcgn.d_loc = d;
  mc.lcgn.iterations = 2;
  mc.vocab_size = 8;
  mc.d_feat = 5;
  mc.d_ans = d_ans;
  return mc;
}

Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = dist(rng);
  return Tensor<double>(std::move(shape), std::move(v));
}

oracle::Mat rows_of(const Tensor<double>& t, std::int64_t n,
                    std::int64_t width) {
  oracle::Mat out;
  for (std::int64_t i = 0; i < n; ++i)
    out.push_back({t.data().begin() + i * width,
                   t.data().begin() + (i + 1) * width});
  return out;
}

}  // namespace

TEST_CASE("vqa head singleton and symmetric attention") {
  auto params = ModelParams<double>::init(head_config(), 3);
  std::mt19937_64 rng(7);
  auto x1 = random_tensor({1, 1, 4}, rng);
  auto q = random_tensor({1, 4}, rng);
  auto out1 = vqa_head(x1, q, params, Tensor<double>::full({1, 1}, 1));
  CHECK(out1.beta.data()[0] == doctest::Approx(1.0));

  // Identical rows -> uniform beta, pooled equals any row.
  std::vector<double> row = {0.2, -0.5, 0.9, 0.4};
  std::vector<double> tiled;
  for (int i = 0; i < 3; ++i) tiled.insert(tiled.end(), row.begin(), row.end());
  auto x3 = Tensor<double>({1, 3, 4}, tiled);
  auto out3 = vqa_head(x3, q, params, Tensor<double>::full({1, 3}, 1));
  for (auto b : out3.beta.data()) CHECK(b == doctest::Approx(1.0 / 3));

  // Pooling over identical rows equals the single-row case.
  auto single_y = vqa_head(Tensor<double>({1, 1, 4}, row), q, params,
                           Tensor<double>::full({1, 1}, 1));
  for (std::int64_t k = 0; k < 4; ++k)
    CHECK(out3.y.data()[k] == doctest::Approx(single_y.y.data()[k]));
}

TEST_CASE("vqa head matches the straight-line transcription") {
  auto params = ModelParams<double>::init(head_config(4, 5), 11);
  std::mt19937_64 rng(13);
  auto x = random_tensor({1, 3, 4}, rng);
  auto q = random_tensor({1, 4}, rng);
  auto out = vqa_head(x, q, params, Tensor<double>::full({1, 3}, 1));

  auto want = oracle::vqa_head(rows_of(x, 3, 4),
                               {q.data().begin(), q.data().end()}, params);
  for (int i = 0; i < 3; ++i)
    CHECK(std::abs(out.beta.data()[i] - want.beta[i]) < 1e-10);
  for (int k = 0; k < 5; ++k)
    CHECK(std::abs(out.y.data()[k] - want.y[k]) < 1e-10);
}

TEST_CASE("vqa loss closed forms") {
  // Uniform scores over 4 answers -> ln 4.
  auto y = Tensor<double>::zeros({1, 4});
  auto uniform = vqa_loss(y, {0}, LossKind::softmax);
  CHECK(uniform.item() == doctest::Approx(std::log(4.0)));

  // Dominant correct logit -> loss tends to 0.
  auto strong = Tensor<double>({1, 4}, {50.0, 0.0, 0.0, 0.0});
  CHECK(vqa_loss(strong, {0}, LossKind::softmax).item() ==
        doctest::Approx(0.0).epsilon(1e-12));

  // Sigmoid kind: y = [0, 0], label 0 -> 2 ln 2.
  auto two = Tensor<double>::zeros({1, 2});
  CHECK(vqa_loss(two, {0}, LossKind::sigmoid).item() ==
        doctest::Approx(2.0 * std::log(2.0)));

  CHECK_THROWS_AS(vqa_loss(y, {4}, LossKind::softmax), ContractError);
}

TEST_CASE("ref head singleton, argmax, straight-line match") {
  auto params = ModelParams<double>::init(head_config(), 17);
  std::mt19937_64 rng(19);
  auto x1 = random_tensor({1, 1, 4}, rng);
  auto q = random_tensor({1, 4}, rng);
  auto out1 = ref_head(x1, q, params, Tensor<double>::full({1, 1}, 1));
  CHECK(out1.p[0] == 0);

  // Hand-placed scores r = [1, 3, 2] -> p = 1. Build by overriding W17/W18
  // so the score equals the first coordinate of x_out.
  auto params2 = ModelParams<double>::init(head_config(), 23);
  std::fill(params2.w17.mutable_data().begin(),
            params2.w17.mutable_data().end(), 0.0);
  params2.w17.mutable_data()[0] = 1.0;
  std::fill(params2.w18.mutable_data().begin(),
            params2.w18.mutable_data().end(), 0.0);
  params2.w18.mutable_data()[0] = 1.0;  // gate = q[0] on coordinate 0
  auto q1 = Tensor<double>({1, 4}, {1.0, 0.0, 0.0, 0.0});
  auto xs = Tensor<double>({1, 3, 4}, {1, 0, 0, 0, 3, 0, 0, 0, 2, 0, 0, 0});
  auto out2 = ref_head(xs, q1, params2, Tensor<double>::full({1, 3}, 1));
  CHECK(out2.r.data()[0] == doctest::Approx(1));
  CHECK(out2.r.data()[1] == doctest::Approx(3));
  CHECK(out2.r.data()[2] == doctest::Approx(2));
  CHECK(out2.p[0] == 1);

  std::mt19937_64 rng2(29);
  auto x = random_tensor({1, 4, 4}, rng2);
  auto qq = random_tensor({1, 4}, rng2);
  auto out = ref_head(x, qq, params, Tensor<double>::full({1, 4}, 1));
  auto want = oracle::ref_head(rows_of(x, 4, 4),
                               {qq.data().begin(), qq.data().end()}, params);
  for (int i = 0; i < 4; ++i)
    CHECK(std::abs(out.r.data()[i] - want.r[i]) < 1e-10);
  CHECK(out.p[0] == want.p);
  for (int k = 0; k < 4; ++k)
    CHECK(std::abs(out.u.data()[k] - want.u[k]) < 1e-10);
}

TEST_CASE("ref selection is invariant to positive scaling of scores") {
  auto params = ModelParams<double>::init(head_config(), 31);
  std::mt19937_64 rng(37);
  auto x = random_tensor({1, 5, 4}, rng);
  auto q = random_tensor({1, 4}, rng);
  auto mask = Tensor<double>::full({1, 5}, 1);
  auto base = ref_head(x, q, params, mask);
  for (auto& v : params.w17.mutable_data()) v *= 3.5;
  auto scaled = ref_head(x, q, params, mask);
  CHECK(base.p[0] == scaled.p[0]);
}

TEST_CASE("ref loss closed forms") {
  // Uniform scores over 8 entities, no box term -> ln 8.
  auto r = Tensor<double>::zeros({1, 8});
  auto mask = Tensor<double>::full({1, 8}, 1);
  auto dummy_u = Tensor<double>::zeros({1, 4});
  auto loss = ref_loss(r, mask, {0}, dummy_u, dummy_u, false);
  CHECK(loss.item() == doctest::Approx(std::log(8.0)));

  // Perfect offset regression contributes nothing.
  auto u = Tensor<double>({1, 4}, {0.1, -0.2, 0.5, 0.5});
  auto with_box = ref_loss(r, mask, {0}, u, u.clone(), true);
  CHECK(with_box.item() == doctest::Approx(std::log(8.0)));

  // r = [0, 0], target 0, u - gt = [1, 0, 0, 0] -> ln 2 + 0.25.
  auto r2 = Tensor<double>::zeros({1, 2});
  auto mask2 = Tensor<double>::full({1, 2}, 1);
  auto u2 = Tensor<double>({1, 4}, {1.0, 0.0, 0.0, 0.0});
  auto gt = Tensor<double>::zeros({1, 4});
  auto loss2 = ref_loss(r2, mask2, {0}, u2, gt, true);
  CHECK(loss2.item() == doctest::Approx(std::log(2.0) + 0.25));
}

TEST_CASE("losses are positive away from perfect prediction") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    auto y = random_tensor({2, 5}, rng);
    CHECK(vqa_loss(y, {1, 3}, LossKind::softmax).item() > 0.0);
    CHECK(vqa_loss(y, {1, 3}, LossKind::sigmoid).item() > 0.0);
    auto r = random_tensor({2, 6}, rng);
    auto mask = Tensor<double>::full({2, 6}, 1);
    auto u = random_tensor({2, 4}, rng);
    auto gt = random_tensor({2, 4}, rng);
    CHECK(ref_loss(r, mask, {0, 5}, u, gt, true).item() > 0.0);
  }
}
