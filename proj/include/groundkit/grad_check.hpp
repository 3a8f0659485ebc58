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
#include <cstdint>
#include <functional>
#include <span>

namespace groundkit {

struct GradCheckOptions {
    double epsilon = 1e-6;
    /// Coordinates sampled per block; 0 checks every coordinate.
    std::size_t max_coords = 0;
    std::uint64_t seed = 0;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t coords_checked = 0;
    double max_abs_analytic = 0.0;
    double max_abs_numeric = 0.0;
};

/// Compares analytic gradients against central differences.
///
/// `blocks` are perturbed in place one coordinate at a time (and restored
/// bit-exactly afterwards); `loss` must read the current block values.
/// The error measure per coordinate is
/// |analytic - numeric| / max(1e-12, |analytic| + |numeric|).
auto grad_check(const std::function<double()>& loss, std::span<Matrix* const> blocks,
                std::span<const Matrix> analytic, const GradCheckOptions& options = {})
    -> GradCheckResult;

/// Single-block form: `loss` receives the perturbed parameters.
auto grad_check(const std::function<double(const Matrix&)>& loss, const Matrix& params,
                const Matrix& analytic, const GradCheckOptions& options = {}) -> GradCheckResult;

} // namespace groundkit
