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
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace groundkit::ad {

/// Handle to a value recorded on a Tape. Only meaningful for the tape
/// that produced it.
struct Var {
    std::size_t id = 0;
};

struct NamedGradient {
    std::string name;
    Matrix gradient;
};

/// Reverse-mode differentiation over matrix-valued nodes.
///
/// Every operation appends a node holding its forward value; backward()
/// walks the nodes in exact reverse recording order and accumulates
/// adjoints additively into each input. Nodes that do not depend on a
/// parameter are skipped.
class Tape {
public:
    /// Backward rule of a custom node. `inputs_grad[i]` is null when input
    /// i does not need a gradient; otherwise the rule adds into it.
    using CustomBackward =
        std::function<void(const Matrix& out_grad, std::span<Matrix* const> inputs_grad)>;

    auto parameter(std::string name, const Matrix& value) -> Var;
    auto constant(Matrix value) -> Var;

    auto matmul(Var a, Var b) -> Var;
    auto transpose(Var a) -> Var;
    auto add(Var a, Var b) -> Var;
    auto sub(Var a, Var b) -> Var;
    auto scale(Var a, double factor) -> Var;
    auto add_scalar(Var a, double offset) -> Var;
    auto hadamard(Var a, Var b) -> Var;
    auto square(Var a) -> Var;
    /// max(0, x) elementwise; the hinge of every margin term.
    auto relu(Var a) -> Var;
    /// n×1 column of row-wise Euclidean norms. The subgradient at a zero
    /// row is taken as zero.
    auto row_norm(Var a) -> Var;
    auto softmax_rows(Var a) -> Var;
    auto sum(Var a) -> Var;
    auto mean(Var a) -> Var;
    auto mean_rows(Var a) -> Var;
    auto gather_rows(Var a, std::vector<std::size_t> indices) -> Var;
    auto slice_rows(Var a, std::size_t begin, std::size_t end) -> Var;
    auto concat_rows(std::span<const Var> parts) -> Var;
    /// Adds the 1×n row `bias` to every row of `a`.
    auto add_row_broadcast(Var a, Var bias) -> Var;
    /// Row-wise layer normalization. `gain_bias` is 2×n: gain in row 0,
    /// bias in row 1.
    auto layer_norm_rows(Var a, Var gain_bias, double epsilon = 1e-5) -> Var;
    /// Mean softmax cross-entropy of `logits` (B×C) against integer labels.
    auto cross_entropy(Var logits, std::span<const std::size_t> labels) -> Var;
    auto custom(std::vector<Var> inputs, Matrix value, CustomBackward rule) -> Var;

    /// Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be 1×1.
    void backward(Var loss);

    [[nodiscard]] auto value(Var v) const -> const Matrix&;
    [[nodiscard]] auto scalar(Var v) const -> double;
    /// Adjoint of `v` after backward(); a zero matrix when `v` received
    /// no contribution.
    [[nodiscard]] auto gradient(Var v) const -> Matrix;
    /// Gradients of every parameter in registration order.
    [[nodiscard]] auto parameter_gradients() const -> std::vector<NamedGradient>;
    [[nodiscard]] auto size() const noexcept -> std::size_t { return nodes_.size(); }
    /// Node ids in the order the last backward() visited them.
    [[nodiscard]] auto backward_order() const -> const std::vector<std::size_t>&
    {
        return visited_;
    }

private:
    using Rule = std::function<void(Tape&, std::size_t)>;

    struct Node {
        Matrix value;
        Matrix grad;
        std::vector<std::size_t> inputs;
        Rule rule;
        bool needs_grad = false;
        bool has_grad = false;
    };

    auto record(Matrix value, std::vector<std::size_t> inputs, Rule rule) -> Var;
    auto node(Var v) const -> const Node&;
    auto grad_of(std::size_t id) -> Matrix*;

    std::vector<Node> nodes_;
    std::vector<std::pair<std::string, std::size_t>> parameters_;
    std::vector<std::size_t> visited_;
};

} // namespace groundkit::ad
