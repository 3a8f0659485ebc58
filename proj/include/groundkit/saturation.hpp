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

#include "groundkit/matrix.hpp"

#include <cstddef>
#include <ostream>
#include <span>
#include <vector>

namespace groundkit {

/// Soft-triangular d×f projector: `lower` where row >= col, `upper`
/// strictly above the diagonal.
struct BaseProjector {
    Matrix rz;
    double lower = 0.55;
    double upper = 0.45;

    [[nodiscard]] auto embedding_dim() const noexcept -> std::size_t { return rz.rows(); }
    [[nodiscard]] auto feature_dim() const noexcept -> std::size_t { return rz.cols(); }
};

/// Token-specific operator R_z · R(theta_t), d×f.
struct SaturationOperator {
    std::size_t token = 0;
    Matrix op;
};

/// theta_t = t / (vocab_size + 1), in radians.
auto normalized_angle(std::size_t t, std::size_t vocab_size) -> double;

/// f×f block-diagonal rotation: floor(f/2) copies of the 2×2 rotation by
/// `theta` on coordinate pairs (0,1), (2,3), ...; a trailing 1 when f is
/// odd.
auto rotation_matrix(double theta, std::size_t f) -> Matrix;

auto base_projector(std::size_t d, std::size_t f, double lower = 0.55, double upper = 0.45)
    -> BaseProjector;

auto token_operator(const BaseProjector& base, std::size_t t, std::size_t vocab_size)
    -> SaturationOperator;

/// op^T · e.
auto project(std::span<const double> e, const SaturationOperator& op) -> std::vector<double>;

/// Row-wise projection of an embedding batch; row i uses `ops[i]`.
auto project_rows(const Matrix& embeddings, std::span<const SaturationOperator> ops) -> Matrix;

/// Applies every token operator without materializing it, using
/// R(theta)^T (R_z^T e) and its adjoint R_z (R(theta) g). This is the
/// path the grounding trainer differentiates through.
class SaturationBank {
public:
    SaturationBank(BaseProjector base, std::size_t vocab_size);

    [[nodiscard]] auto base() const noexcept -> const BaseProjector& { return base_; }
    [[nodiscard]] auto vocab_size() const noexcept -> std::size_t { return vocab_size_; }
    [[nodiscard]] auto embedding_dim() const noexcept -> std::size_t
    {
        return base_.embedding_dim();
    }
    [[nodiscard]] auto feature_dim() const noexcept -> std::size_t { return base_.feature_dim(); }

    [[nodiscard]] auto materialize(std::size_t t) const -> SaturationOperator;

    /// out (length f) = op_t^T e (length d).
    void project(std::size_t t, std::span<const double> e, std::span<double> out) const;
    /// out (length d) += op_t g (length f).
    void accumulate_adjoint(std::size_t t, std::span<const double> g, std::span<double> out) const;

private:
    BaseProjector base_;
    std::size_t vocab_size_;
};

/// Debug dump: header "token,row,col,value" then one line per entry,
/// row-major, 17 significant digits.
void write_operator_csv(std::ostream& out, const BaseProjector& base,
                        std::span<const std::size_t> tokens, std::size_t vocab_size);

} // namespace groundkit
