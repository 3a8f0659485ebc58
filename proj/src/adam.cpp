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

#include "groundkit/adam.hpp"

#include "groundkit/error.hpp"

#include <cmath>

namespace groundkit {

void AdamState::step(std::span<const ParamUpdate> blocks)
{
    for (const auto& b : blocks) {
        if (b.params == nullptr || b.grads == nullptr) {
            throw ContractError("AdamState::step: block '" + b.name + "' has no storage");
        }
        if (!b.params->same_shape(*b.grads)) {
            throw DimensionError("AdamState::step: block '" + b.name + "' params "
                                 + b.params->shape_string() + " vs grads "
                                 + b.grads->shape_string());
        }
        auto it = moments_.find(b.name);
        if (it != moments_.end() && !it->second.m.same_shape(*b.params)) {
            throw DimensionError("AdamState::step: block '" + b.name + "' changed shape to "
                                 + b.params->shape_string());
        }
    }

    ++step_;
    const double t = static_cast<double>(step_);
    const double correction1 = 1.0 - std::pow(config_.beta1, t);
    const double correction2 = 1.0 - std::pow(config_.beta2, t);

    for (const auto& b : blocks) {
        auto [it, inserted] = moments_.try_emplace(b.name);
        if (inserted) {
            it->second.m = Matrix(b.params->rows(), b.params->cols());
            it->second.v = Matrix(b.params->rows(), b.params->cols());
        }
        auto m = it->second.m.data();
        auto v = it->second.v.data();
        auto p = b.params->data();
        const auto g = b.grads->data();
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            p[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
        }
    }
}

auto AdamState::first_moment(const std::string& name) const -> const Matrix&
{
    auto it = moments_.find(name);
    if (it == moments_.end()) {
        throw LookupError("AdamState: no moments for block '" + name + "'");
    }
    return it->second.m;
}

auto AdamState::second_moment(const std::string& name) const -> const Matrix&
{
    auto it = moments_.find(name);
    if (it == moments_.end()) {
        throw LookupError("AdamState: no moments for block '" + name + "'");
    }
    return it->second.v;
}

void adam_step(AdamState& state, Matrix& params, const Matrix& grads)
{
    const ParamUpdate block { "params", &params, &grads };
    state.step(std::span<const ParamUpdate>(&block, 1));
}

} // namespace groundkit
