#include <doctest.h>

#include <filesystem>

#include "etcon/checkpoint.hpp"
#include "etcon/gradcheck.hpp"
#include "etcon/ops.hpp"
#include "etcon/optim.hpp"
#include "helpers.hpp"

using namespace etcon;
using th::randn;

namespace {

// sum(w * f(x)) with fixed random w, so every output element matters.
Tensor weighted(const Tensor& y, std::uint64_t seed) {
  auto w = randn(y.shape(), seed, 1.0, false);
  return ops::sum(ops::mul(y, w));
}

void expect_grad_ok(const std::function<Tensor()>& build, std::vector<Tensor> leaves) {
  const auto rep = finite_difference_check(build, leaves);
  INFO("max rel err " << rep.max_rel_error);
  CHECK(rep.passed);
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("softmax of equal logits is uniform") {
  auto y = ops::softmax(Tensor::from({1, 3}, {0, 0, 0}));
  for (double v : y.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("identity matmul") {
  auto a = randn({2, 2}, 1, 1.0, false);
  auto y = ops::matmul(Tensor::from({2, 2}, {1, 0, 0, 1}), a);
  for (std::size_t i = 0; i < 4; ++i) CHECK(y.at(i) == a.at(i));
}

TEST_CASE("clip bounds") {
  CHECK(ops::clip(Tensor::scalar(1.7), 0.4, 1.6).item() == 1.6);
  CHECK(ops::clip(Tensor::scalar(0.1), 0.4, 1.6).item() == 0.4);
  CHECK(ops::clip(Tensor::scalar(1.0), 0.4, 1.6).item() == 1.0);
}

TEST_CASE("clip derivative is 0 outside and 1 inside") {
  auto x = Tensor::from({4}, {2.0, 0.1, 1.0, 0.5}, true);
  ops::sum(ops::clip(x, 0.4, 1.6)).backward();
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 0.0);
  CHECK(x.grad()[2] == 1.0);
  CHECK(x.grad()[3] == 1.0);
}

TEST_CASE("sum of squares gradient") {
  auto x = Tensor::from({3}, {1, 2, 3}, true);
  ops::sum(ops::mul(x, x)).backward();
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == 4.0);
  CHECK(x.grad()[2] == 6.0);
}

TEST_CASE("grads accumulate across backward calls") {
  auto x = Tensor::from({2}, {1, -1}, true);
  ops::sum(ops::scale(x, 3.0)).backward();
  ops::sum(ops::scale(x, 3.0)).backward();
  CHECK(x.grad()[0] == 6.0);
  CHECK(x.grad()[1] == 6.0);
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(ops::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
  CHECK_THROWS_AS(ops::log(Tensor::from({1}, {0.0})), NonFiniteError);
  CHECK_THROWS_AS(ops::exp(Tensor::from({1}, {1e4})), NonFiniteError);
  auto x = Tensor::from({2}, {1, 2}, true);
  CHECK_THROWS(ops::scale(x, 2.0).backward());
}

TEST_CASE("elementwise primitives match finite differences") {
  auto a = randn({3, 4}, 11);
  auto b = randn({3, 4}, 12);
  auto bias = randn({4}, 13);
  expect_grad_ok([&] { return weighted(ops::add(a, b), 1); }, {a, b});
  expect_grad_ok([&] { return weighted(ops::add(a, bias), 2); }, {a, bias});
  expect_grad_ok([&] { return weighted(ops::sub(a, b), 3); }, {a, b});
  expect_grad_ok([&] { return weighted(ops::mul(a, b), 4); }, {a, b});
  expect_grad_ok([&] { return weighted(ops::minimum(a, b), 5); }, {a, b});
  expect_grad_ok([&] { return weighted(ops::scale(a, -1.7), 6); }, {a});
  expect_grad_ok([&] { return weighted(ops::add_scalar(a, 0.3), 7); }, {a});
  expect_grad_ok([&] { return weighted(ops::neg(a), 8); }, {a});
  expect_grad_ok([&] { return weighted(ops::exp(a), 9); }, {a});
  expect_grad_ok([&] { return weighted(ops::log(ops::exp(a)), 10); }, {a});
  expect_grad_ok([&] { return weighted(ops::silu(a), 11); }, {a});
  expect_grad_ok([&] { return weighted(ops::gelu(a), 12); }, {a});
}

TEST_CASE("clip away from its corners matches finite differences") {
  auto x = Tensor::from({5}, {0.1, 0.7, 1.2, 1.9, 2.5}, true);
  expect_grad_ok([&] { return weighted(ops::clip(x, 0.4, 1.6), 21); }, {x});
}

TEST_CASE("shape and reduction primitives match finite differences") {
  auto a = randn({3, 4}, 31);
  auto b = randn({2, 4}, 32);
  auto m = randn({4, 5}, 33);
  auto w = randn({4}, 34);
  expect_grad_ok([&] { return weighted(ops::matmul(a, m), 1); }, {a, m});
  expect_grad_ok([&] { return weighted(ops::transpose(a), 2); }, {a});
  expect_grad_ok([&] { return weighted(ops::reshape(a, {2, 6}), 3); }, {a});
  expect_grad_ok([&] { return weighted(ops::concat({a, b}, 0), 4); }, {a, b});
  expect_grad_ok([&] { return weighted(ops::concat({a, ops::transpose(m)}, 0), 5); }, {a, m});
  expect_grad_ok([&] { return weighted(ops::slice(a, 1, 1, 3), 6); }, {a});
  expect_grad_ok([&] { return weighted(ops::softmax(a), 7); }, {a});
  expect_grad_ok([&] { return weighted(ops::log_softmax(a), 8); }, {a});
  expect_grad_ok([&] { return weighted(ops::rms_norm(a, w), 9); }, {a, w});
  expect_grad_ok([&] { return ops::mean(ops::mul(a, a)); }, {a});
  const std::vector<std::int64_t> ids = {2, 0, 2, 1};
  expect_grad_ok([&] { return weighted(ops::embedding(a, ids), 10); }, {a});
  const std::vector<std::int64_t> cols = {3, 0, 1};
  expect_grad_ok([&] { return weighted(ops::pick(a, cols), 11); }, {a});
  const std::vector<std::int64_t> targets = {1, -1, 3};
  expect_grad_ok([&] { return ops::cross_entropy(a, targets); }, {a});
}

TEST_CASE("softmax then log composite") {
  auto a = randn({2, 6}, 41);
  expect_grad_ok([&] { return weighted(ops::log(ops::softmax(a)), 1); }, {a});
}

TEST_CASE("linear layer with cross entropy") {
  auto x = randn({5, 6}, 51, 1.0, false);
  auto w = randn({6, 4}, 52, 0.5);
  auto b = randn({4}, 53, 0.1);
  const std::vector<std::int64_t> y = {0, 3, 2, 1, 3};
  expect_grad_ok([&] { return ops::cross_entropy(ops::add(ops::matmul(x, w), b), y); }, {w, b});
}

TEST_CASE("five layer mlp") {
  auto x = randn({4, 6}, 61, 1.0, false);
  std::vector<Tensor> ws;
  for (int l = 0; l < 5; ++l) ws.push_back(randn({6, 6}, 62 + l, 0.5));
  auto build = [&] {
    Tensor h = x;
    for (const auto& w : ws) h = ops::silu(ops::matmul(h, w));
    return weighted(h, 70);
  };
  expect_grad_ok(build, ws);
}

TEST_CASE("corrupted backward rule is caught") {
  auto x = randn({4}, 81);
  auto bad_square = [&] {
    std::vector<double> v(x.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = x.at(i) * x.at(i);
    return Tensor::make_result(x.shape(), std::move(v), "bad_square", {x}, [](detail::Node& n) {
      auto& p = *n.parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += 3.0 * p.values[i] * n.grad[i];
    });
  };
  const auto rep = finite_difference_check([&] { return weighted(bad_square(), 1); }, {x});
  CHECK_FALSE(rep.passed);
}

TEST_CASE("backward is deterministic") {
  auto a = randn({4, 4}, 91);
  auto m = randn({4, 4}, 92);
  auto run = [&] {
    a.zero_grad();
    weighted(ops::softmax(ops::matmul(a, m)), 3).backward();
    return std::vector<double>(a.grad().begin(), a.grad().end());
  };
  CHECK(run() == run());
}

TEST_CASE("adamw with zero gradient leaves params unchanged") {
  auto p = randn({3}, 101);
  const std::vector<double> before(p.values().begin(), p.values().end());
  std::vector<Tensor> params = {p};
  auto st = make_adamw(params, {});
  p.mutable_grad();
  adamw_step(params, st);
  CHECK(std::vector<double>(p.values().begin(), p.values().end()) == before);
  CHECK(st.step_count == 1);
}

TEST_CASE("adamw first step") {
  auto p = Tensor::from({1}, {1.0}, true);
  p.mutable_grad()[0] = 1.0;
  std::vector<Tensor> params = {p};
  AdamWConfig cfg;
  cfg.learning_rate = 0.1;
  auto st = make_adamw(params, cfg);
  adamw_step(params, st);
  // m_hat = 1, v_hat = 1, step = lr * 1 / (1 + eps)
  CHECK(p.at(0) == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("masked adamw leaves unmasked params bit-identical") {
  auto a = randn({3, 3}, 111);
  auto b = randn({3, 3}, 112);
  std::vector<Tensor> params = {a, b};
  for (auto& t : params) {
    auto g = t.mutable_grad();
    for (auto& v : g) v = 0.5;
  }
  const std::vector<double> b0(b.values().begin(), b.values().end());
  const std::vector<double> a0(a.values().begin(), a.values().end());
  AdamWConfig cfg;
  cfg.weight_decay = 0.1;
  auto st = make_adamw(params, cfg);
  const std::vector<bool> mask = {true, false};
  adamw_step(params, st, &mask);
  CHECK(std::vector<double>(b.values().begin(), b.values().end()) == b0);
  CHECK(std::vector<double>(a.values().begin(), a.values().end()) != a0);
}

TEST_CASE("checkpoint bundle round trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "etcon_bundle_test";
  fs::remove_all(dir);
  TensorBundle b;
  b.tensors["w"] = randn({2, 3}, 121);
  b.tensors["v"] = randn({4}, 122);
  b.target = {"w"};
  b.extra = {{"note", 1}};
  save_bundle(dir, b);
  const auto r = load_bundle(dir);
  CHECK(r.target == b.target);
  CHECK(r.extra == b.extra);
  for (const auto& [name, t] : b.tensors) {
    CHECK(r.tensors.at(name).shape() == t.shape());
    CHECK(std::equal(t.values().begin(), t.values().end(), r.tensors.at(name).values().begin()));
  }
  fs::remove_all(dir);
}

}  // TEST_SUITE
