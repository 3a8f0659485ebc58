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

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace groundkit {

/// Dense row-major matrix of doubles. Vectors are represented as
/// 1×n or n×1 matrices.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static auto identity(std::size_t n) -> Matrix;
    static auto row_vector(std::span<const double> values) -> Matrix;
    static auto column_vector(std::span<const double> values) -> Matrix;

    [[nodiscard]] auto rows() const noexcept -> std::size_t { return rows_; }
    [[nodiscard]] auto cols() const noexcept -> std::size_t { return cols_; }
    [[nodiscard]] auto size() const noexcept -> std::size_t { return data_.size(); }
    [[nodiscard]] auto empty() const noexcept -> bool { return data_.empty(); }

    auto operator()(std::size_t r, std::size_t c) -> double& { return data_[r * cols_ + c]; }
    auto operator()(std::size_t r, std::size_t c) const -> double
    {
        return data_[r * cols_ + c];
    }

    [[nodiscard]] auto data() noexcept -> std::span<double> { return data_; }
    [[nodiscard]] auto data() const noexcept -> std::span<const double> { return data_; }
    [[nodiscard]] auto row(std::size_t r) -> std::span<double>;
    [[nodiscard]] auto row(std::size_t r) const -> std::span<const double>;

    [[nodiscard]] auto all_finite() const noexcept -> bool;
    [[nodiscard]] auto shape_string() const -> std::string;
    [[nodiscard]] auto same_shape(const Matrix& other) const noexcept -> bool
    {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    /// Bitwise equality of shape and payload.
    friend auto operator==(const Matrix& a, const Matrix& b) -> bool;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Free-function arithmetic. Every reduction runs in a fixed index order,
// so results are reproducible bit for bit.

auto matmul(const Matrix& a, const Matrix& b) -> Matrix;
auto transpose(const Matrix& a) -> Matrix;
auto add(const Matrix& a, const Matrix& b) -> Matrix;
auto subtract(const Matrix& a, const Matrix& b) -> Matrix;
auto scale(const Matrix& a, double factor) -> Matrix;
auto hadamard(const Matrix& a, const Matrix& b) -> Matrix;
auto sum(const Matrix& a) -> double;
auto frobenius_norm(const Matrix& a) -> double;
auto max_abs_difference(const Matrix& a, const Matrix& b) -> double;

/// Accumulates `src` into `dst` in place.
void add_in_place(Matrix& dst, const Matrix& src);

} // namespace groundkit
