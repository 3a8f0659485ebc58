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

#include <cstdint>
#include <map>
#include <span>
#include <string>

namespace groundkit {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct ParamUpdate {
    std::string name;
    Matrix* params = nullptr;
    const Matrix* grads = nullptr;
};

/// Adaptive-moment optimizer state. Moment matrices are created lazily
/// on the first update of a block and keep that block's shape.
class AdamState {
public:
    AdamState() = default;
    explicit AdamState(AdamConfig config)
        : config_(config)
    {
    }

    /// One optimizer step over all listed blocks; the step counter
    /// advances by exactly one.
    void step(std::span<const ParamUpdate> blocks);

    [[nodiscard]] auto config() const noexcept -> const AdamConfig& { return config_; }
    void set_lr(double lr) noexcept { config_.lr = lr; }
    [[nodiscard]] auto step_count() const noexcept -> std::uint64_t { return step_; }
    [[nodiscard]] auto first_moment(const std::string& name) const -> const Matrix&;
    [[nodiscard]] auto second_moment(const std::string& name) const -> const Matrix&;

private:
    struct Moments {
        Matrix m;
        Matrix v;
    };

    AdamConfig config_;
    std::uint64_t step_ = 0;
    std::map<std::string, Moments> moments_;
};

/// Single-block convenience wrapper around AdamState::step.
void adam_step(AdamState& state, Matrix& params, const Matrix& grads);

} // namespace groundkit
