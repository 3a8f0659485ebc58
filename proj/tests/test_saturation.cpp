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

#include "groundkit/error.hpp"
#include "groundkit/random.hpp"
#include "groundkit/saturation.hpp"

#include <cmath>
#include <sstream>

using namespace groundkit;

namespace {

auto orthogonality_error(const Matrix& r) -> double
{
    return max_abs_difference(matmul(r, transpose(r)), Matrix::identity(r.rows()));
}

} // namespace

TEST_CASE("normalized_angle examples")
{
    CHECK(normalized_angle(0, 100) == 0.0);
    CHECK(normalized_angle(3, 9) == 0.3);
    CHECK(normalized_angle(30521, 30522) == 30521.0 / 30523.0);
    CHECK(normalized_angle(30521, 30522) == doctest::Approx(0.9999345).epsilon(1e-7));
    CHECK_THROWS_AS(normalized_angle(9, 9), IndexError);
}

TEST_CASE("normalized_angle is strictly increasing and inside [0, 1)")
{
    for (std::size_t v : { 1U, 2U, 17U, 256U }) {
        double prev = -1.0;
        for (std::size_t t = 0; t < v; ++t) {
            const double theta = normalized_angle(t, v);
            CHECK(theta > prev);
            CHECK(theta >= 0.0);
            CHECK(theta < 1.0);
            prev = theta;
        }
    }
}

TEST_CASE("rotation_matrix examples")
{
    // -sin(0) is negative zero, so compare by value.
    CHECK(max_abs_difference(rotation_matrix(0.0, 5), Matrix::identity(5)) == 0.0);

    const Matrix r = rotation_matrix(0.3, 2);
    CHECK(r(0, 0) == doctest::Approx(0.955336).epsilon(1e-6));
    CHECK(r(0, 1) == doctest::Approx(-0.295520).epsilon(1e-5));
    CHECK(r(1, 0) == doctest::Approx(0.295520).epsilon(1e-5));
    CHECK(r(1, 1) == doctest::Approx(0.955336).epsilon(1e-6));
    CHECK(r(0, 0) == std::cos(0.3));
    CHECK(r(1, 0) == std::sin(0.3));

    const Matrix odd = rotation_matrix(0.7, 3);
    CHECK(odd(2, 2) == 1.0);
    CHECK(odd(2, 0) == 0.0);
    CHECK(odd(2, 1) == 0.0);
    CHECK(odd(0, 2) == 0.0);
    CHECK(odd(1, 2) == 0.0);
}

TEST_CASE("rotation_matrix is orthogonal")
{
    Rng rng(123);
    for (int n = 0; n < 100; ++n) {
        const double theta = rng.uniform();
        const std::size_t f = 1 + rng.below(16);
        CHECK(orthogonality_error(rotation_matrix(theta, f)) < 1e-12);
    }
}

TEST_CASE("base_projector examples")
{
    const auto b = base_projector(2, 2, 0.55, 0.45);
    CHECK(b.rz == Matrix { { 0.55, 0.45 }, { 0.55, 0.55 } });

    const auto col = base_projector(3, 1);
    CHECK(col.rz == Matrix { { 0.55 }, { 0.55 }, { 0.55 } });

    CHECK_THROWS_AS(base_projector(4, 2, 0.0, 0.45), ConfigError);
    CHECK_THROWS_AS(base_projector(4, 2, 0.55, 0.0), ConfigError);
    CHECK_THROWS_AS(base_projector(0, 2), ConfigError);

    const auto wide = base_projector(3, 5);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
            CHECK(wide.rz(i, j) == (i >= j ? 0.55 : 0.45));
        }
    }
}

TEST_CASE("token_operator examples")
{
    const auto base = base_projector(2, 2);
    CHECK(token_operator(base, 0, 10).op == base.rz);

    const auto op = token_operator(base, 3, 9);
    const Matrix expected = matmul(Matrix { { 0.55, 0.45 }, { 0.55, 0.55 } },
                                   Matrix { { std::cos(0.3), -std::sin(0.3) },
                                            { std::sin(0.3), std::cos(0.3) } });
    CHECK(op.op == expected);
    // Hand product with the rounded rotation entries.
    CHECK(op.op(0, 0) == doctest::Approx(0.55 * 0.955336 + 0.45 * 0.295520).epsilon(1e-6));
    CHECK(op.op(0, 1) == doctest::Approx(-0.55 * 0.295520 + 0.45 * 0.955336).epsilon(1e-6));
    CHECK(op.op(1, 0) == doctest::Approx(0.55 * 0.955336 + 0.55 * 0.295520).epsilon(1e-6));
    CHECK(op.op(1, 1) == doctest::Approx(-0.55 * 0.295520 + 0.55 * 0.955336).epsilon(1e-6));
}

TEST_CASE("token operators are pairwise distinct")
{
    const auto base = base_projector(8, 6);
    std::vector<Matrix> ops;
    for (std::size_t t = 0; t < 32; ++t) {
        ops.push_back(token_operator(base, t, 32).op);
    }
    for (std::size_t a = 0; a < ops.size(); ++a) {
        for (std::size_t b = a + 1; b < ops.size(); ++b) {
            CHECK(frobenius_norm(subtract(ops[a], ops[b])) > 0.0);
        }
    }
}

TEST_CASE("project examples and linearity")
{
    const auto base = base_projector(2, 2);
    const SaturationOperator op { 0, base.rz };
    const std::vector<double> zero { 0.0, 0.0 };
    CHECK(project(zero, op) == std::vector<double> { 0.0, 0.0 });
    const std::vector<double> e { 1.0, 0.0 };
    const auto p = project(e, op);
    CHECK(p[0] == doctest::Approx(0.55).epsilon(1e-15));
    CHECK(p[1] == doctest::Approx(0.45).epsilon(1e-15));

    const std::vector<double> wrong { 1.0 };
    CHECK_THROWS_AS(project(wrong, op), DimensionError);

    Rng rng(77);
    const auto big = base_projector(7, 5);
    for (int n = 0; n < 20; ++n) {
        const auto top = token_operator(big, rng.below(50), 50);
        std::vector<double> e1(7);
        std::vector<double> e2(7);
        for (std::size_t i = 0; i < 7; ++i) {
            e1[i] = rng.uniform(-1, 1);
            e2[i] = rng.uniform(-1, 1);
        }
        const double a = rng.uniform(-2, 2);
        const double b = rng.uniform(-2, 2);
        std::vector<double> mix(7);
        for (std::size_t i = 0; i < 7; ++i) {
            mix[i] = a * e1[i] + b * e2[i];
        }
        const auto lhs = project(mix, top);
        const auto p1 = project(e1, top);
        const auto p2 = project(e2, top);
        for (std::size_t j = 0; j < 5; ++j) {
            CHECK(std::abs(lhs[j] - (a * p1[j] + b * p2[j])) < 1e-12);
        }
    }
}

TEST_CASE("batched projection equals stacked per-row projection")
{
    Rng rng(5);
    const auto base = base_projector(6, 4);
    Matrix e(5, 6);
    for (double& x : e.data()) {
        x = rng.uniform(-1, 1);
    }
    std::vector<SaturationOperator> ops;
    for (std::size_t t = 0; t < 5; ++t) {
        ops.push_back(token_operator(base, t * 3, 20));
    }
    const Matrix batched = project_rows(e, ops);
    for (std::size_t r = 0; r < 5; ++r) {
        const auto single = project(e.row(r), ops[r]);
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(batched(r, j) == single[j]);
        }
    }
}

TEST_CASE("factored bank matches the materialized operator")
{
    Rng rng(8);
    for (auto [d, f] : { std::pair<std::size_t, std::size_t> { 8, 6 }, { 16, 39 }, { 5, 5 }, { 9, 3 } }) {
        const SaturationBank bank(base_projector(d, f), 40);
        for (std::size_t t : { 0U, 1U, 17U, 39U }) {
            const auto op = bank.materialize(t);
            std::vector<double> e(d);
            for (double& x : e) {
                x = rng.uniform(-1, 1);
            }
            std::vector<double> fast(f);
            bank.project(t, e, fast);
            const auto slow = project(e, op);
            for (std::size_t j = 0; j < f; ++j) {
                CHECK(std::abs(fast[j] - slow[j]) < 1e-12);
            }
            // Adjoint: <op^T e, g> == <e, op g>.
            std::vector<double> g(f);
            for (double& x : g) {
                x = rng.uniform(-1, 1);
            }
            std::vector<double> back(d, 0.0);
            bank.accumulate_adjoint(t, g, back);
            double lhs = 0.0;
            double rhs = 0.0;
            for (std::size_t j = 0; j < f; ++j) {
                lhs += fast[j] * g[j];
            }
            for (std::size_t i = 0; i < d; ++i) {
                rhs += e[i] * back[i];
            }
            CHECK(std::abs(lhs - rhs) < 1e-12);
        }
    }
}

TEST_CASE("operator dump is deterministic 17-digit CSV")
{
    const auto base = base_projector(3, 2);
    const std::vector<std::size_t> tokens { 0, 4 };
    std::ostringstream a;
    std::ostringstream b;
    write_operator_csv(a, base, tokens, 10);
    write_operator_csv(b, base, tokens, 10);
    CHECK(a.str() == b.str());
    std::istringstream in(a.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "token,row,col,value");
    std::getline(in, line);
    CHECK(line == "0,0,0,0.55000000000000004");
    std::size_t count = 0;
    while (std::getline(in, line)) {
        ++count;
    }
    CHECK(count == 2 * 3 * 2 - 1);
}
