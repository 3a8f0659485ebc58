// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "groundkit/adam.hpp"
#include "groundkit/error.hpp"
#include "groundkit/grad_check.hpp"
#include "groundkit/matrix.hpp"
#include "groundkit/random.hpp"
#include "groundkit/tape.hpp"

#include <cmath>
#include <functional>
#include <string>

using namespace groundkit;

namespace {

auto random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo = -1.0,
                   double hi = 1.0) -> Matrix
{
    Rng rng(seed);
    Matrix m(rows, cols);
    for (double& x : m.data()) {
        x = rng.uniform(lo, hi);
    }
    return m;
}

// Builds a scalar loss from one parameter and reports the analytic
// gradient, then cross-checks it against central differences.
auto check_op(const Matrix& input, const std::function<ad::Var(ad::Tape&, ad::Var)>& build) -> double
{
    ad::Tape tape;
    const ad::Var p = tape.parameter("p", input);
    const ad::Var loss = build(tape, p);
    tape.backward(loss);
    const Matrix analytic = tape.gradient(p);
    auto eval = [&](const Matrix& at) {
        ad::Tape t;
        const ad::Var q = t.parameter("p", at);
        return t.scalar(build(t, q));
    };
    return grad_check(eval, input, analytic).max_rel_error;
}

} // namespace

TEST_CASE("matmul examples")
{
    const Matrix eye = Matrix::identity(2);
    const Matrix a { { 3, 4 }, { 5, 6 } };
    CHECK(matmul(eye, a) == a);

    const Matrix rz { { 0.55, 0.45 }, { 0.55, 0.55 } };
    const Matrix e { { 1 }, { 0 } };
    const Matrix out = matmul(transpose(rz), e);
    CHECK(out(0, 0) == doctest::Approx(0.55).epsilon(1e-15));
    CHECK(out(1, 0) == doctest::Approx(0.45).epsilon(1e-15));

    const Matrix z = matmul(Matrix(1, 5), Matrix(5, 1));
    CHECK(z.rows() == 1);
    CHECK(z.cols() == 1);
    CHECK(z(0, 0) == 0.0);
}

TEST_CASE("matmul shape mismatch names both shapes")
{
    try {
        (void)matmul(Matrix(2, 3), Matrix(2, 3));
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("(2x3)") != std::string::npos);
        CHECK(msg.find(" x (2x3)") != std::string::npos);
    }
}

TEST_CASE("identity product is bit-exact and matmul is deterministic")
{
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Matrix a = random_matrix(7, 5, seed);
        CHECK(matmul(Matrix::identity(7), a) == a);
        const Matrix b = random_matrix(5, 9, seed + 100);
        CHECK(matmul(a, b) == matmul(a, b));
    }
}

TEST_CASE("backward of a linear loss is all ones")
{
    ad::Tape tape;
    const ad::Var e = tape.parameter("E", random_matrix(4, 3, 1));
    tape.backward(tape.sum(e));
    CHECK(tape.gradient(e) == Matrix(4, 3, 1.0));
}

TEST_CASE("mse at its minimum has zero gradient")
{
    const Matrix x = random_matrix(5, 4, 2);
    ad::Tape tape;
    const ad::Var e = tape.parameter("E", x);
    const ad::Var loss = tape.mean(tape.square(tape.sub(e, tape.constant(x))));
    tape.backward(loss);
    CHECK(tape.scalar(loss) == 0.0);
    CHECK(frobenius_norm(tape.gradient(e)) == 0.0);
}

TEST_CASE("backward rejects a non-scalar loss")
{
    ad::Tape tape;
    const ad::Var e = tape.parameter("E", Matrix(2, 2, 1.0));
    CHECK_THROWS_AS(tape.backward(tape.square(e)), ContractError);
}

TEST_CASE("backward visits nodes in exact reverse recording order")
{
    ad::Tape tape;
    const ad::Var p = tape.parameter("p", random_matrix(3, 3, 3));
    const ad::Var a = tape.square(p);               // 1
    const ad::Var b = tape.matmul(a, p);            // 2
    const ad::Var c = tape.add(b, a);               // 3
    const ad::Var loss = tape.sum(c);               // 4
    tape.backward(loss);
    const std::vector<std::size_t> expected { loss.id, c.id, b.id, a.id };
    CHECK(tape.backward_order() == expected);
}

TEST_CASE("gradients accumulate across multiple uses")
{
    const Matrix x = random_matrix(3, 2, 4);
    ad::Tape tape;
    const ad::Var p = tape.parameter("p", x);
    tape.backward(tape.sum(tape.hadamard(p, p)));
    CHECK(max_abs_difference(tape.gradient(p), scale(x, 2.0)) < 1e-15);
}

TEST_CASE("parameter gradients come back by name in registration order")
{
    ad::Tape tape;
    const ad::Var a = tape.parameter("first", Matrix(1, 2, 1.0));
    const ad::Var b = tape.parameter("second", Matrix(1, 2, 2.0));
    tape.backward(tape.sum(tape.hadamard(a, b)));
    const auto grads = tape.parameter_gradients();
    REQUIRE(grads.size() == 2);
    CHECK(grads[0].name == "first");
    CHECK(grads[0].gradient == Matrix(1, 2, 2.0));
    CHECK(grads[1].name == "second");
    CHECK(grads[1].gradient == Matrix(1, 2, 1.0));
}

TEST_CASE("every primitive matches central differences")
{
    const Matrix x = random_matrix(4, 5, 11);
    const Matrix w = random_matrix(5, 3, 12);
    const Matrix row = random_matrix(1, 5, 13);
    const Matrix gain_bias = random_matrix(2, 5, 14, 0.5, 1.5);
    const std::vector<std::size_t> labels { 0, 2, 1, 2 };
    const double tol = 1e-4;

    SUBCASE("matmul")
    {
        CHECK(check_op(x, [&](ad::Tape& t, ad::Var p) {
                  return t.sum(t.square(t.matmul(p, t.constant(w))));
              }) < tol);
        CHECK(check_op(w, [&](ad::Tape& t, ad::Var p) {
                  return t.sum(t.square(t.matmul(t.constant(x), p)));
              }) < tol);
    }
    SUBCASE("transpose, add, sub, scale, add_scalar")
    {
        CHECK(check_op(x, [&](ad::Tape& t, ad::Var p) {
                  const ad::Var y = t.add(t.scale(p, 3.0), t.sub(p, t.constant(x)));
                  return t.sum(t.square(t.transpose(t.add_scalar(y, 0.25))));
              }) < tol);
    }
    SUBCASE("hadamard and square")
    {
        CHECK(check_op(x, [&](ad::Tape& t, ad::Var p) {
                  return t.mean(t.hadamard(t.square(p), p));
              }) < tol);
    }
    SUBCASE("relu")
    {
        CHECK(check_op(x, [&](ad::Tape& t, ad::Var p) {
                  return t.sum(t.square(t.relu(t.add_scalar(p, 0.1))));
              }) < tol);
    }
    SUBCASE("row_norm")
    {
        CHECK(check_op(x, [&](ad::Tape& t, ad::Var p) { return t.sum(t.row_norm(p)); }) < tol);
    }
    SUBCASE("softmax_rows")
    {
        CHECK(check_op(x, [&](ad::Tape& t, ad::Var p) {
                  return t.sum(t.hadamard(t.softmax_rows(p), t.constant(x)));
              }) < tol);
    }
    SUBCASE("gather, slice, concat, mean_rows")
    {
        CHECK(check_op(x, [&](ad::Tape& t, ad::Var p) {
                  const ad::Var g = t.gather_rows(p, { 3, 0, 3 });
                  const ad::Var s = t.slice_rows(p, 1, 3);
                  const std::vector<ad::Var> parts { g, s };
                  return t.sum(t.square(t.mean_rows(t.square(t.concat_rows(parts)))));
              }) < tol);
    }
    SUBCASE("add_row_broadcast")
    {
        CHECK(check_op(row, [&](ad::Tape& t, ad::Var p) {
                  return t.sum(t.square(t.add_row_broadcast(t.constant(x), p)));
              }) < tol);
    }
    SUBCASE("layer_norm_rows")
    {
        const Matrix target = random_matrix(4, 5, 15);
        CHECK(check_op(x, [&](ad::Tape& t, ad::Var p) {
                  return t.sum(t.hadamard(t.layer_norm_rows(p, t.constant(gain_bias)),
                                          t.constant(target)));
              }) < tol);
        CHECK(check_op(gain_bias, [&](ad::Tape& t, ad::Var p) {
                  return t.sum(t.hadamard(t.layer_norm_rows(t.constant(x), p), t.constant(target)));
              }) < tol);
    }
    SUBCASE("cross_entropy")
    {
        const Matrix logits = random_matrix(4, 3, 16);
        CHECK(check_op(logits, [&](ad::Tape& t, ad::Var p) { return t.cross_entropy(p, labels); })
              < tol);
    }
}

TEST_CASE("row_norm at a zero row uses a zero subgradient")
{
    ad::Tape tape;
    const ad::Var p = tape.parameter("p", Matrix(2, 3));
    tape.backward(tape.sum(tape.row_norm(p)));
    CHECK(tape.gradient(p) == Matrix(2, 3));
}

TEST_CASE("cross entropy of uniform logits is ln C")
{
    ad::Tape tape;
    const std::vector<std::size_t> labels { 0, 0, 0 };
    const ad::Var loss = tape.cross_entropy(tape.constant(Matrix(3, 4)), labels);
    CHECK(tape.scalar(loss) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
}

TEST_CASE("adam: zero gradient leaves params unchanged and advances the step")
{
    AdamState state;
    Matrix params = random_matrix(3, 3, 5);
    const Matrix before = params;
    adam_step(state, params, Matrix(3, 3));
    CHECK(params == before);
    CHECK(state.step_count() == 1);
    adam_step(state, params, Matrix(3, 3));
    CHECK(state.step_count() == 2);
}

TEST_CASE("adam: first step with a constant gradient moves by about lr")
{
    AdamState state;
    Matrix params(2, 2, 1.0);
    const Matrix grads { { 0.5, -2.0 }, { 3.0, -0.1 } };
    adam_step(state, params, grads);
    const double lr = state.config().lr;
    // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
    CHECK(params(0, 0) == doctest::Approx(1.0 - lr).epsilon(1e-7));
    CHECK(params(0, 1) == doctest::Approx(1.0 + lr).epsilon(1e-7));
    CHECK(params(1, 0) == doctest::Approx(1.0 - lr).epsilon(1e-7));
    CHECK(params(1, 1) == doctest::Approx(1.0 + lr).epsilon(1e-7));
    CHECK(state.first_moment("params").same_shape(params));
    CHECK(state.second_moment("params").same_shape(params));
}

TEST_CASE("adam: identical runs are bit-identical")
{
    auto run = [] {
        AdamState state;
        Matrix params = random_matrix(4, 4, 6);
        for (std::uint64_t s = 0; s < 20; ++s) {
            adam_step(state, params, random_matrix(4, 4, 100 + s));
        }
        return params;
    };
    CHECK(run() == run());
}

TEST_CASE("adam: shape mismatch is a dimension error")
{
    AdamState state;
    Matrix params(2, 2);
    CHECK_THROWS_AS(adam_step(state, params, Matrix(2, 3)), DimensionError);
    CHECK(state.step_count() == 0);
}

TEST_CASE("grad_check on a quadratic")
{
    const Matrix p = random_matrix(3, 4, 7);
    auto loss = [](const Matrix& m) {
        double s = 0.0;
        for (double x : m.data()) {
            s += x * x;
        }
        return s;
    };
    const auto result = grad_check(loss, p, scale(p, 2.0));
    CHECK(result.max_rel_error < 1e-8);
    CHECK(result.coords_checked == 12);
}

TEST_CASE("grad_check on a constant loss")
{
    const Matrix p = random_matrix(2, 2, 8);
    const auto result = grad_check([](const Matrix&) { return 3.0; }, p, Matrix(2, 2));
    CHECK(result.max_abs_numeric == 0.0);
    CHECK(result.max_rel_error == 0.0);
}

TEST_CASE("grad_check samples a bounded number of coordinates and restores params")
{
    Matrix p = random_matrix(10, 10, 9);
    const Matrix before = p;
    Matrix* blocks[] = { &p };
    const Matrix analytic = scale(p, 2.0);
    GradCheckOptions opts;
    opts.max_coords = 7;
    const auto result = grad_check(
        [&] {
            double s = 0.0;
            for (double x : p.data()) {
                s += x * x;
            }
            return s;
        },
        blocks, std::span<const Matrix>(&analytic, 1), opts);
    CHECK(result.coords_checked == 7);
    CHECK(p == before);
    CHECK_THROWS_AS(grad_check([](const Matrix&) { return 0.0; }, p, p, { .epsilon = 0.0 }),
                    ContractError);
}
