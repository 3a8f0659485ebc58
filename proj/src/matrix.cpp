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

#include "groundkit/matrix.hpp"

#include "groundkit/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>

namespace groundkit {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op)
{
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string()
                             + " vs " + b.shape_string());
    }
}

} // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows)
    , cols_(cols)
    , data_(rows * cols, fill)
{
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows)
    , cols_(cols)
    , data_(std::move(data))
{
    if (data_.size() != rows * cols) {
        throw DimensionError("Matrix: payload of " + std::to_string(data_.size())
                             + " values does not fit " + shape_string());
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size())
    , cols_(rows.size() == 0 ? 0 : rows.begin()->size())
{
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) {
            throw DimensionError("Matrix: ragged initializer list");
        }
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

auto Matrix::identity(std::size_t n) -> Matrix
{
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

auto Matrix::row_vector(std::span<const double> values) -> Matrix
{
    return { 1, values.size(), std::vector<double>(values.begin(), values.end()) };
}

auto Matrix::column_vector(std::span<const double> values) -> Matrix
{
    return { values.size(), 1, std::vector<double>(values.begin(), values.end()) };
}

auto Matrix::row(std::size_t r) -> std::span<double>
{
    return std::span<double>(data_).subspan(r * cols_, cols_);
}

auto Matrix::row(std::size_t r) const -> std::span<const double>
{
    return std::span<const double>(data_).subspan(r * cols_, cols_);
}

auto Matrix::all_finite() const noexcept -> bool
{
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

auto Matrix::shape_string() const -> std::string
{
    return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

auto operator==(const Matrix& a, const Matrix& b) -> bool
{
    if (!a.same_shape(b)) {
        return false;
    }
    // Bitwise: distinguishes -0.0 from 0.0 and treats identical NaN
    // payloads as equal.
    const auto lhs = a.data();
    const auto rhs = b.data();
    return std::equal(lhs.begin(), lhs.end(), rhs.begin(), [](double x, double y) {
        return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
    });
}

auto matmul(const Matrix& a, const Matrix& b) -> Matrix
{
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: inner dimensions differ, " + a.shape_string() + " x "
                             + b.shape_string());
    }
    const std::size_t n = a.rows();
    const std::size_t inner = a.cols();
    const std::size_t m = b.cols();
    Matrix c(n, m);
    // i-k-j order: for every output entry the products are summed in
    // ascending k, independent of the blocking of the other loops.
    for (std::size_t i = 0; i < n; ++i) {
        auto out = c.row(i);
        for (std::size_t k = 0; k < inner; ++k) {
            const double aik = a(i, k);
            const auto brow = b.row(k);
            for (std::size_t j = 0; j < m; ++j) {
                out[j] += aik * brow[j];
            }
        }
    }
    return c;
}

auto transpose(const Matrix& a) -> Matrix
{
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            t(j, i) = a(i, j);
        }
    }
    return t;
}

auto add(const Matrix& a, const Matrix& b) -> Matrix
{
    require_same_shape(a, b, "add");
    Matrix c = a;
    add_in_place(c, b);
    return c;
}

auto subtract(const Matrix& a, const Matrix& b) -> Matrix
{
    require_same_shape(a, b, "subtract");
    Matrix c = a;
    auto out = c.data();
    const auto in = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] -= in[i];
    }
    return c;
}

auto scale(const Matrix& a, double factor) -> Matrix
{
    Matrix c = a;
    for (auto& x : c.data()) {
        x *= factor;
    }
    return c;
}

auto hadamard(const Matrix& a, const Matrix& b) -> Matrix
{
    require_same_shape(a, b, "hadamard");
    Matrix c = a;
    auto out = c.data();
    const auto in = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] *= in[i];
    }
    return c;
}

auto sum(const Matrix& a) -> double
{
    double s = 0.0;
    for (double x : a.data()) {
        s += x;
    }
    return s;
}

auto frobenius_norm(const Matrix& a) -> double
{
    double s = 0.0;
    for (double x : a.data()) {
        s += x * x;
    }
    return std::sqrt(s);
}

auto max_abs_difference(const Matrix& a, const Matrix& b) -> double
{
    require_same_shape(a, b, "max_abs_difference");
    double worst = 0.0;
    const auto lhs = a.data();
    const auto rhs = b.data();
    for (std::size_t i = 0; i < lhs.size(); ++i) {
        worst = std::max(worst, std::abs(lhs[i] - rhs[i]));
    }
    return worst;
}

void add_in_place(Matrix& dst, const Matrix& src)
{
    require_same_shape(dst, src, "add_in_place");
    auto out = dst.data();
    const auto in = src.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += in[i];
    }
}

} // namespace groundkit
