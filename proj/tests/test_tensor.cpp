#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "alfa/optim.hpp"
#include "alfa/rng.hpp"
#include "alfa/tensor.hpp"

using namespace alfa;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("matmul identity") {
  Tensor eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  Tensor a = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  Tensor r = matmul(eye, a);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(r.data[i] == doctest::Approx(a.data[i]));
}

TEST_CASE("softmax symmetry") {
  Tensor r = softmax_rows(Tensor::row({0, 0, 0}));
  for (double v : r.data) CHECK(v == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("frobenius norm hand value") {
  CHECK(frobenius_norm(Tensor::matrix(2, 2, {3, 4, 0, 0})).value() == doctest::Approx(5.0));
}

TEST_CASE("shape mismatch error names op and shapes") {
  Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4});
  Tensor b = Tensor::row({1, 2, 3});
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("add"), ShapeError);
  CHECK_THROWS_WITH_AS(matmul(a, Tensor::matrix(3, 1, {1, 2, 3})), doctest::Contains("[2x2]"),
                       ShapeError);
}

TEST_CASE("backward of sum is all ones") {
  Tape tape;
  Tensor x = tape.track(Tensor::matrix(2, 3, {1, -2, 3, 4, 5, -6}));
  tape.backward(sum_all(x));
  Tensor g = tape.grad_tensor(x);
  for (double v : g.data) CHECK(v == 1.0);
}

TEST_CASE("backward of frobenius norm is x over norm") {
  Tape tape;
  Tensor x = tape.track(Tensor::matrix(1, 2, {3, 4}));
  tape.backward(frobenius_norm(x));
  Tensor g = tape.grad_tensor(x);
  CHECK(g.data[0] == doctest::Approx(0.6));
  CHECK(g.data[1] == doctest::Approx(0.8));
}

TEST_CASE("relu subgradient at negative input is zero") {
  Tape tape;
  Tensor x = tape.track(Tensor::row({-1, 2}));
  tape.backward(mean_all(relu(x)));
  Tensor g = tape.grad_tensor(x);
  CHECK(g.data[0] == 0.0);
  CHECK(g.data[1] == doctest::Approx(0.5));
}

TEST_CASE("backward rejects non-scalar and untracked roots") {
  Tape tape;
  Tensor x = tape.track(Tensor::row({1, 2}));
  CHECK_THROWS_AS(tape.backward(relu(x)), Error);
  Tensor loose = Tensor::scalar(1.0);
  CHECK_THROWS_AS(tape.backward(loose), Error);
}

TEST_CASE("gradient accumulation is linear") {
  // grad of a+b equals grad(a) + grad(b) computed separately
  Tensor x0 = Tensor::matrix(2, 2, {0.3, -0.7, 1.1, 0.2});
  auto grad_of = [&](bool both) {
    Tape tape;
    Tensor x = tape.track(x0);
    Tensor a = sum_all(mul(x, x));
    Tensor b = frobenius_norm(x);
    tape.backward(both ? add(a, b) : a);
    Tensor ga = tape.grad_tensor(x);
    if (!both) {
      Tape t2;
      Tensor x2 = t2.track(x0);
      t2.backward(frobenius_norm(x2));
      Tensor gb = t2.grad_tensor(x2);
      for (std::size_t i = 0; i < ga.size(); ++i) ga.data[i] += gb.data[i];
    }
    return ga;
  };
  Tensor joint = grad_of(true), split = grad_of(false);
  for (std::size_t i = 0; i < joint.size(); ++i)
    CHECK(joint.data[i] == doctest::Approx(split.data[i]).epsilon(1e-12));
}

TEST_CASE("forward ops are pure") {
  Rng rng(5);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  Tensor r1 = matmul(a, b), r2 = matmul(a, b);
  CHECK(r1.data == r2.data);
}

TEST_CASE("non-finite forward output is an error") {
  Tensor big = Tensor::row({1e308});
  CHECK_THROWS_AS(mul(big, big), Error);
  CHECK_THROWS_AS(alfa::exp(Tensor::row({1e4})), Error);
}

TEST_CASE("grad_check basics") {
  Rng rng(7);
  Tensor x = random_tensor({3, 3}, rng);
  auto sum_sq = [](const Tensor& t) { return sum_all(mul(t, t)); };
  CHECK(grad_check(sum_sq, x, 1e-5) < 1e-6);

  auto constant = [](const Tensor& t) { return scale(sum_all(t), 0.0); };
  CHECK(grad_check(constant, x, 1e-5) == 0.0);

  auto vector_valued = [](const Tensor& t) { return relu(t); };
  CHECK_THROWS_AS(grad_check(vector_valued, x, 1e-5), Error);
  CHECK_THROWS_AS(grad_check(sum_sq, x, 1e-2), Error);
}

TEST_CASE("grad_check across the op set") {
  Rng rng(11);
  struct Case {
    const char* name;
    std::function<Tensor(const Tensor&)> f;
  };
  Tensor rhs = random_tensor({4, 3}, rng);
  Tensor rowv = random_tensor({1, 3}, rng);
  Tensor colv = random_tensor({3, 1}, rng, 0.5, 1.5);
  std::vector<Case> cases = {
      {"add", [&](const Tensor& x) { return sum_all(mul(add(x, x), rhs)); }},
      {"sub", [&](const Tensor& x) { return sum_all(sub(mul(x, rhs), x)); }},
      {"mul", [&](const Tensor& x) { return sum_all(mul(x, rhs)); }},
      {"scale", [&](const Tensor& x) { return sum_all(scale(x, -2.5)); }},
      {"matmul_lhs", [&](const Tensor& x) { return sum_all(mul(matmul(x, transpose(rhs)), matmul(x, transpose(rhs)))); }},
      {"matmul_rhs", [&](const Tensor& x) { return frobenius_norm(matmul(transpose(rhs), x)); }},
      {"transpose", [&](const Tensor& x) { return frobenius_norm(transpose(x)); }},
      {"relu", [&](const Tensor& x) { return sum_all(relu(x)); }},
      {"log", [&](const Tensor& x) { return sum_all(log_clamped(add_scalar(x, 2.0))); }},
      {"exp", [&](const Tensor& x) { return sum_all(alfa::exp(x)); }},
      {"sqrt", [&](const Tensor& x) { return sum_all(alfa::sqrt(add_scalar(x, 2.0))); }},
      {"softmax", [&](const Tensor& x) { return sum_all(mul(softmax_rows(x), rhs)); }},
      {"mean_axis0", [&](const Tensor& x) { return frobenius_norm(mean_axis0(x)); }},
      {"mean_axis1", [&](const Tensor& x) { return frobenius_norm(mean_axis1(x)); }},
      {"rowwise_l2norm", [&](const Tensor& x) { return sum_all(rowwise_l2norm(add_scalar(x, 3.0))); }},
      {"frobenius", [&](const Tensor& x) { return frobenius_norm(add_scalar(x, 1.0)); }},
      {"concat_cols", [&](const Tensor& x) { return frobenius_norm(concat_cols({x, mul(x, x)})); }},
      {"concat_rows", [&](const Tensor& x) { return frobenius_norm(concat_rows({x, mul(x, x)})); }},
      {"take_rows", [&](const Tensor& x) { return sum_all(mul(take_rows(x, {0, 2, 2}), take_rows(x, {1, 0, 3}))); }},
      {"sub_bcast_row", [&](const Tensor& x) { return frobenius_norm(sub_bcast_row(x, mean_axis0(x))); }},
      {"add_bcast_row", [&](const Tensor& x) { return frobenius_norm(add_bcast_row(x, rowv)); }},
      {"mul_bcast_row", [&](const Tensor& x) { return frobenius_norm(mul_bcast_row(x, rowv)); }},
      {"sub_bcast_col", [&](const Tensor& x) { return frobenius_norm(sub_bcast_col(x, mean_axis1(x))); }},
      {"div_bcast_col", [&](const Tensor& x) { return frobenius_norm(div_bcast_col(x, colv)); }},
      {"cross_entropy", [&](const Tensor& x) { return cross_entropy(x, {0, 2, 1, 0}); }},
  };
  for (const auto& c : cases) {
    Tensor x = random_tensor({4, 4}, rng);
    if (std::string(c.name) == "sub_bcast_col" || std::string(c.name) == "div_bcast_col" ||
        std::string(c.name) == "mean_axis1")
      x = random_tensor({3, 4}, rng);
    if (std::string(c.name) == "add_bcast_row" || std::string(c.name) == "mul_bcast_row" ||
        std::string(c.name) == "sub_bcast_row" || std::string(c.name) == "mean_axis0" ||
        std::string(c.name) == "matmul_lhs" || std::string(c.name) == "matmul_rhs" ||
        std::string(c.name) == "softmax" || std::string(c.name) == "mul" ||
        std::string(c.name) == "add" || std::string(c.name) == "sub" ||
        std::string(c.name) == "cross_entropy")
      x = random_tensor({4, 3}, rng);
    if (std::string(c.name) == "transpose" || std::string(c.name) == "matmul_rhs")
      x = random_tensor({4, 2}, rng);
    INFO(c.name);
    CHECK(grad_check(c.f, x, 1e-5) < 1e-5);
  }
}

TEST_CASE("row-of-row gradients: bcast row argument") {
  Rng rng(13);
  Tensor base = random_tensor({3, 4}, rng);
  auto f = [&](const Tensor& r) { return frobenius_norm(mul_bcast_row(base, r)); };
  CHECK(grad_check(f, random_tensor({1, 4}, rng), 1e-5) < 1e-5);
  auto g = [&](const Tensor& r) { return frobenius_norm(sub_bcast_row(base, r)); };
  CHECK(grad_check(g, random_tensor({1, 4}, rng), 1e-5) < 1e-5);
  auto h = [&](const Tensor& c) { return frobenius_norm(div_bcast_col(base, add_scalar(c, 2.0))); };
  CHECK(grad_check(h, random_tensor({3, 1}, rng), 1e-5) < 1e-5);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  ParamSet ps;
  ps.insert("p", Tensor::row({1.0, -2.0}));
  AdamState st;
  st.lr = 0.1;
  std::map<std::string, Tensor> grads;
  grads.emplace("p", Tensor::row({0.0, 0.0}));
  adam_step_grads(ps, grads, st);
  CHECK(ps.at("p").data[0] == 1.0);
  CHECK(ps.at("p").data[1] == -2.0);
}

TEST_CASE("adam: bias-corrected first step moves by about lr") {
  ParamSet ps;
  ps.insert("p", Tensor::scalar(1.0));
  AdamState st;
  st.lr = 0.1;
  std::map<std::string, Tensor> grads;
  grads.emplace("p", Tensor::scalar(1.0));
  adam_step_grads(ps, grads, st);
  CHECK(ps.at("p").value() == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("adam: two steps reduce a convex quadratic") {
  ParamSet ps;
  ps.insert("p", Tensor::scalar(1.0));
  AdamState st;
  st.lr = 0.1;
  auto f = [](double p) { return p * p; };
  const double f0 = f(ps.at("p").value());
  for (int i = 0; i < 2; ++i) {
    std::map<std::string, Tensor> grads;
    grads.emplace("p", Tensor::scalar(2.0 * ps.at("p").value()));
    adam_step_grads(ps, grads, st);
  }
  CHECK(f(ps.at("p").value()) < f0);
}

TEST_CASE("adam: missing gradient for a tracked parameter is an error") {
  ParamSet ps;
  ps.insert("p", Tensor::scalar(1.0));
  AdamState st;
  Tape tape;
  ParamSet bound = ps.bind(tape);
  CHECK_THROWS_AS(adam_step(ps, bound, tape, st), Error);
}

TEST_CASE("binary tensor file round trip") {
  Rng rng(3);
  Tensor t = random_tensor({2, 3, 4}, rng);
  const std::string path = (std::filesystem::temp_directory_path() / "alfa_t.alfa").string();
  save_tensor(path, t);
  Tensor r = load_tensor(path);
  REQUIRE(r.shape == t.shape);
  for (std::size_t i = 0; i < t.size(); ++i)
    CHECK(r.data[i] == doctest::Approx(t.data[i]).epsilon(1e-7));  // f32 payload
  std::filesystem::remove(path);
}

TEST_CASE("loading a malformed tensor file fails") {
  const std::string path = (std::filesystem::temp_directory_path() / "alfa_bad.alfa").string();
  std::FILE* f = std::fopen(path.c_str(), "wb");
  std::fputs("NOPE", f);
  std::fclose(f);
  CHECK_THROWS_AS(load_tensor(path), Error);
  std::filesystem::remove(path);
}
