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

#include "groundkit/grad_check.hpp"

#include "groundkit/error.hpp"
#include "groundkit/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace groundkit {

auto grad_check(const std::function<double()>& loss, std::span<Matrix* const> blocks,
                std::span<const Matrix> analytic, const GradCheckOptions& options)
    -> GradCheckResult
{
    if (options.epsilon <= 0.0) {
        throw ContractError("grad_check: epsilon must be positive");
    }
    if (blocks.size() != analytic.size()) {
        throw DimensionError("grad_check: " + std::to_string(blocks.size()) + " blocks but "
                             + std::to_string(analytic.size()) + " gradients");
    }
    GradCheckResult result;
    Rng rng(options.seed);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        Matrix& params = *blocks[b];
        if (!params.same_shape(analytic[b])) {
            throw DimensionError("grad_check: block " + std::to_string(b) + " is "
                                 + params.shape_string() + " but gradient is "
                                 + analytic[b].shape_string());
        }
        std::vector<std::size_t> coords(params.size());
        std::iota(coords.begin(), coords.end(), std::size_t { 0 });
        if (options.max_coords != 0 && options.max_coords < coords.size()) {
            rng.shuffle(coords);
            coords.resize(options.max_coords);
            std::sort(coords.begin(), coords.end());
        }
        auto data = params.data();
        for (std::size_t idx : coords) {
            const double saved = data[idx];
            data[idx] = saved + options.epsilon;
            const double plus = loss();
            data[idx] = saved - options.epsilon;
            const double minus = loss();
            data[idx] = saved;

            const double numeric = (plus - minus) / (2.0 * options.epsilon);
            const double exact = analytic[b].data()[idx];
            const double denom = std::max(1e-12, std::abs(exact) + std::abs(numeric));
            result.max_rel_error = std::max(result.max_rel_error, std::abs(exact - numeric) / denom);
            result.max_abs_analytic = std::max(result.max_abs_analytic, std::abs(exact));
            result.max_abs_numeric = std::max(result.max_abs_numeric, std::abs(numeric));
            ++result.coords_checked;
        }
    }
    return result;
}

auto grad_check(const std::function<double(const Matrix&)>& loss, const Matrix& params,
                const Matrix& analytic, const GradCheckOptions& options) -> GradCheckResult
{
    Matrix work = params;
    Matrix* block = &work;
    return grad_check([&] { return loss(work); }, std::span<Matrix* const>(&block, 1),
                      std::span<const Matrix>(&analytic, 1), options);
}

} // namespace groundkit
