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

#include "groundkit/saturation.hpp"

#include "groundkit/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace groundkit {

auto normalized_angle(std::size_t t, std::size_t vocab_size) -> double
{
    if (t >= vocab_size) {
        throw IndexError("normalized_angle: token " + std::to_string(t)
                         + " outside a vocabulary of " + std::to_string(vocab_size));
    }
    return static_cast<double>(t) / static_cast<double>(vocab_size + 1);
}

auto rotation_matrix(double theta, std::size_t f) -> Matrix
{
    Matrix r = Matrix::identity(f);
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    for (std::size_t p = 0; p + 1 < f; p += 2) {
        r(p, p) = c;
        r(p, p + 1) = -s;
        r(p + 1, p) = s;
        r(p + 1, p + 1) = c;
    }
    return r;
}

auto base_projector(std::size_t d, std::size_t f, double lower, double upper) -> BaseProjector
{
    if (d == 0 || f == 0) {
        throw ConfigError("base_projector: dimensions must be positive, got d=" + std::to_string(d)
                          + " f=" + std::to_string(f));
    }
    if (lower == 0.0 || upper == 0.0 || !std::isfinite(lower) || !std::isfinite(upper)) {
        throw ConfigError("base_projector: lower and upper values must be finite and non-zero");
    }
    BaseProjector b;
    b.lower = lower;
    b.upper = upper;
    b.rz = Matrix(d, f);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < f; ++j) {
            b.rz(i, j) = i >= j ? lower : upper;
        }
    }
    return b;
}

auto token_operator(const BaseProjector& base, std::size_t t, std::size_t vocab_size)
    -> SaturationOperator
{
    const double theta = normalized_angle(t, vocab_size);
    return { t, matmul(base.rz, rotation_matrix(theta, base.feature_dim())) };
}

auto project(std::span<const double> e, const SaturationOperator& op) -> std::vector<double>
{
    const std::size_t d = op.op.rows();
    const std::size_t f = op.op.cols();
    if (e.size() != d) {
        throw DimensionError("project: embedding has length " + std::to_string(e.size())
                             + " but the operator is " + op.op.shape_string());
    }
    std::vector<double> out(f, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        const auto row = op.op.row(i);
        for (std::size_t j = 0; j < f; ++j) {
            out[j] += row[j] * e[i];
        }
    }
    return out;
}

auto project_rows(const Matrix& embeddings, std::span<const SaturationOperator> ops) -> Matrix
{
    if (ops.size() != embeddings.rows()) {
        throw DimensionError("project_rows: " + std::to_string(ops.size()) + " operators for "
                             + std::to_string(embeddings.rows()) + " rows");
    }
    if (ops.empty()) {
        return Matrix(0, 0);
    }
    Matrix out(embeddings.rows(), ops.front().op.cols());
    for (std::size_t r = 0; r < embeddings.rows(); ++r) {
        const auto row = project(embeddings.row(r), ops[r]);
        if (row.size() != out.cols()) {
            throw DimensionError("project_rows: operators disagree on feature dimension");
        }
        std::copy(row.begin(), row.end(), out.row(r).begin());
    }
    return out;
}

SaturationBank::SaturationBank(BaseProjector base, std::size_t vocab_size)
    : base_(std::move(base))
    , vocab_size_(vocab_size)
{
    if (vocab_size_ == 0) {
        throw ConfigError("SaturationBank: empty vocabulary");
    }
}

auto SaturationBank::materialize(std::size_t t) const -> SaturationOperator
{
    return token_operator(base_, t, vocab_size_);
}

void SaturationBank::project(std::size_t t, std::span<const double> e, std::span<double> out) const
{
    const std::size_t d = embedding_dim();
    const std::size_t f = feature_dim();
    if (e.size() != d || out.size() != f) {
        throw DimensionError("SaturationBank::project: expected lengths " + std::to_string(d)
                             + " -> " + std::to_string(f));
    }
    const double theta = normalized_angle(t, vocab_size_);
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        const auto row = base_.rz.row(i);
        for (std::size_t j = 0; j < f; ++j) {
            out[j] += row[j] * e[i];
        }
    }
    // R^T on each pair: (c u0 + s u1, -s u0 + c u1).
    for (std::size_t p = 0; p + 1 < f; p += 2) {
        const double u0 = out[p];
        const double u1 = out[p + 1];
        out[p] = c * u0 + s * u1;
        out[p + 1] = -s * u0 + c * u1;
    }
}

void SaturationBank::accumulate_adjoint(std::size_t t, std::span<const double> g,
                                        std::span<double> out) const
{
    const std::size_t d = embedding_dim();
    const std::size_t f = feature_dim();
    if (g.size() != f || out.size() != d) {
        throw DimensionError("SaturationBank::accumulate_adjoint: expected lengths "
                             + std::to_string(f) + " -> " + std::to_string(d));
    }
    const double theta = normalized_angle(t, vocab_size_);
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    std::vector<double> rotated(g.begin(), g.end());
    for (std::size_t p = 0; p + 1 < f; p += 2) {
        rotated[p] = c * g[p] - s * g[p + 1];
        rotated[p + 1] = s * g[p] + c * g[p + 1];
    }
    for (std::size_t i = 0; i < d; ++i) {
        const auto row = base_.rz.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < f; ++j) {
            acc += row[j] * rotated[j];
        }
        out[i] += acc;
    }
}

void write_operator_csv(std::ostream& out, const BaseProjector& base,
                        std::span<const std::size_t> tokens, std::size_t vocab_size)
{
    out << "token,row,col,value\n";
    char buf[64];
    for (std::size_t t : tokens) {
        const auto op = token_operator(base, t, vocab_size);
        for (std::size_t i = 0; i < op.op.rows(); ++i) {
            for (std::size_t j = 0; j < op.op.cols(); ++j) {
                std::snprintf(buf, sizeof buf, "%.17g", op.op(i, j));
                out << t << ',' << i << ',' << j << ',' << buf << '\n';
            }
        }
    }
}

} // namespace groundkit
