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

#include "groundkit/tape.hpp"

#include "groundkit/error.hpp"

#include <algorithm>
#include <cmath>

namespace groundkit::ad {

auto Tape::record(Matrix value, std::vector<std::size_t> inputs, Rule rule) -> Var
{
    Node n;
    n.value = std::move(value);
    n.needs_grad = std::any_of(inputs.begin(), inputs.end(),
                               [this](std::size_t i) { return nodes_[i].needs_grad; });
    n.inputs = std::move(inputs);
    n.rule = std::move(rule);
    nodes_.push_back(std::move(n));
    return Var { nodes_.size() - 1 };
}

auto Tape::node(Var v) const -> const Node&
{
    if (v.id >= nodes_.size()) {
        throw ContractError("Tape: variable " + std::to_string(v.id) + " was not recorded here");
    }
    return nodes_[v.id];
}

auto Tape::grad_of(std::size_t id) -> Matrix*
{
    Node& n = nodes_[id];
    if (!n.needs_grad) {
        return nullptr;
    }
    if (!n.has_grad) {
        n.grad = Matrix(n.value.rows(), n.value.cols());
        n.has_grad = true;
    }
    return &n.grad;
}

auto Tape::parameter(std::string name, const Matrix& value) -> Var
{
    Node n;
    n.value = value;
    n.needs_grad = true;
    nodes_.push_back(std::move(n));
    parameters_.emplace_back(std::move(name), nodes_.size() - 1);
    return Var { nodes_.size() - 1 };
}

auto Tape::constant(Matrix value) -> Var
{
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var { nodes_.size() - 1 };
}

auto Tape::matmul(Var a, Var b) -> Var
{
    Matrix out = groundkit::matmul(node(a).value, node(b).value);
    return record(std::move(out), { a.id, b.id }, [](Tape& t, std::size_t self) {
        const Node& n = t.nodes_[self];
        const std::size_t ia = n.inputs[0];
        const std::size_t ib = n.inputs[1];
        if (Matrix* ga = t.grad_of(ia)) {
            add_in_place(*ga, groundkit::matmul(n.grad, groundkit::transpose(t.nodes_[ib].value)));
        }
        if (Matrix* gb = t.grad_of(ib)) {
            add_in_place(*gb, groundkit::matmul(groundkit::transpose(t.nodes_[ia].value), n.grad));
        }
    });
}

auto Tape::transpose(Var a) -> Var
{
    return record(groundkit::transpose(node(a).value), { a.id }, [](Tape& t, std::size_t self) {
        const Node& n = t.nodes_[self];
        if (Matrix* ga = t.grad_of(n.inputs[0])) {
            add_in_place(*ga, groundkit::transpose(n.grad));
        }
    });
}

auto Tape::add(Var a, Var b) -> Var
{
    return record(groundkit::add(node(a).value, node(b).value), { a.id, b.id },
                  [](Tape& t, std::size_t self) {
                      const Node& n = t.nodes_[self];
                      for (std::size_t in : n.inputs) {
                          if (Matrix* g = t.grad_of(in)) {
                              add_in_place(*g, n.grad);
                          }
                      }
                  });
}

auto Tape::sub(Var a, Var b) -> Var
{
    return record(groundkit::subtract(node(a).value, node(b).value), { a.id, b.id },
                  [](Tape& t, std::size_t self) {
                      const Node& n = t.nodes_[self];
                      if (Matrix* ga = t.grad_of(n.inputs[0])) {
                          add_in_place(*ga, n.grad);
                      }
                      if (Matrix* gb = t.grad_of(n.inputs[1])) {
                          add_in_place(*gb, groundkit::scale(n.grad, -1.0));
                      }
                  });
}

auto Tape::scale(Var a, double factor) -> Var
{
    return record(groundkit::scale(node(a).value, factor), { a.id },
                  [factor](Tape& t, std::size_t self) {
                      const Node& n = t.nodes_[self];
                      if (Matrix* g = t.grad_of(n.inputs[0])) {
                          add_in_place(*g, groundkit::scale(n.grad, factor));
                      }
                  });
}

auto Tape::add_scalar(Var a, double offset) -> Var
{
    Matrix out = node(a).value;
    for (double& x : out.data()) {
        x += offset;
    }
    return record(std::move(out), { a.id }, [](Tape& t, std::size_t self) {
        const Node& n = t.nodes_[self];
        if (Matrix* g = t.grad_of(n.inputs[0])) {
            add_in_place(*g, n.grad);
        }
    });
}

auto Tape::hadamard(Var a, Var b) -> Var
{
    return record(groundkit::hadamard(node(a).value, node(b).value), { a.id, b.id },
                  [](Tape& t, std::size_t self) {
                      const Node& n = t.nodes_[self];
                      const std::size_t ia = n.inputs[0];
                      const std::size_t ib = n.inputs[1];
                      if (Matrix* ga = t.grad_of(ia)) {
                          add_in_place(*ga, groundkit::hadamard(n.grad, t.nodes_[ib].value));
                      }
                      if (Matrix* gb = t.grad_of(ib)) {
                          add_in_place(*gb, groundkit::hadamard(n.grad, t.nodes_[ia].value));
                      }
                  });
}

auto Tape::square(Var a) -> Var
{
    const Matrix& x = node(a).value;
    return record(groundkit::hadamard(x, x), { a.id }, [](Tape& t, std::size_t self) {
        const Node& n = t.nodes_[self];
        if (Matrix* g = t.grad_of(n.inputs[0])) {
            const auto x = t.nodes_[n.inputs[0]].value.data();
            const auto up = n.grad.data();
            auto out = g->data();
            for (std::size_t i = 0; i < out.size(); ++i) {
                out[i] += 2.0 * x[i] * up[i];
            }
        }
    });
}

auto Tape::relu(Var a) -> Var
{
    Matrix out = node(a).value;
    for (double& x : out.data()) {
        x = x > 0.0 ? x : 0.0;
    }
    return record(std::move(out), { a.id }, [](Tape& t, std::size_t self) {
        const Node& n = t.nodes_[self];
        if (Matrix* g = t.grad_of(n.inputs[0])) {
            const auto x = t.nodes_[n.inputs[0]].value.data();
            const auto up = n.grad.data();
            auto out = g->data();
            for (std::size_t i = 0; i < out.size(); ++i) {
                if (x[i] > 0.0) {
                    out[i] += up[i];
                }
            }
        }
    });
}

auto Tape::row_norm(Var a) -> Var
{
    const Matrix& x = node(a).value;
    Matrix out(x.rows(), 1);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double s = 0.0;
        for (double v : x.row(r)) {
            s += v * v;
        }
        out(r, 0) = std::sqrt(s);
    }
    return record(std::move(out), { a.id }, [](Tape& t, std::size_t self) {
        const Node& n = t.nodes_[self];
        if (Matrix* g = t.grad_of(n.inputs[0])) {
            const Matrix& x = t.nodes_[n.inputs[0]].value;
            for (std::size_t r = 0; r < x.rows(); ++r) {
                const double norm = n.value(r, 0);
                if (norm == 0.0) {
                    continue;
                }
                const double coeff = n.grad(r, 0) / norm;
                auto gr = g->row(r);
                const auto xr = x.row(r);
                for (std::size_t c = 0; c < gr.size(); ++c) {
                    gr[c] += coeff * xr[c];
                }
            }
        }
    });
}

auto Tape::softmax_rows(Var a) -> Var
{
    Matrix out = node(a).value;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        const double peak = *std::max_element(row.begin(), row.end());
        double total = 0.0;
        for (double& x : row) {
            x = std::exp(x - peak);
            total += x;
        }
        for (double& x : row) {
            x /= total;
        }
    }
    return record(std::move(out), { a.id }, [](Tape& t, std::size_t self) {
        const Node& n = t.nodes_[self];
        if (Matrix* g = t.grad_of(n.inputs[0])) {
            for (std::size_t r = 0; r < n.value.rows(); ++r) {
                const auto s = n.value.row(r);
                const auto up = n.grad.row(r);
                double dot = 0.0;
                for (std::size_t c = 0; c < s.size(); ++c) {
                    dot += up[c] * s[c];
                }
                auto gr = g->row(r);
                for (std::size_t c = 0; c < s.size(); ++c) {
                    gr[c] += s[c] * (up[c] - dot);
                }
            }
        }
    });
}

auto Tape::sum(Var a) -> Var
{
    Matrix out(1, 1, groundkit::sum(node(a).value));
    return record(std::move(out), { a.id }, [](Tape& t, std::size_t self) {
        const Node& n = t.nodes_[self];
        if (Matrix* g = t.grad_of(n.inputs[0])) {
            const double up = n.grad(0, 0);
            for (double& x : g->data()) {
                x += up;
            }
        }
    });
}

auto Tape::mean(Var a) -> Var
{
    const Matrix& x = node(a).value;
    if (x.empty()) {
        throw ContractError("Tape::mean: empty operand");
    }
    return scale(sum(a), 1.0 / static_cast<double>(x.size()));
}

auto Tape::mean_rows(Var a) -> Var
{
    const Matrix& x = node(a).value;
    if (x.rows() == 0) {
        throw ContractError("Tape::mean_rows: operand has no rows");
    }
    Matrix out(1, x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto xr = x.row(r);
        for (std::size_t c = 0; c < x.cols(); ++c) {
            out(0, c) += xr[c];
        }
    }
    const double inv = 1.0 / static_cast<double>(x.rows());
    for (double& v : out.data()) {
        v *= inv;
    }
    return record(std::move(out), { a.id }, [inv](Tape& t, std::size_t self) {
        const Node& n = t.nodes_[self];
        if (Matrix* g = t.grad_of(n.inputs[0])) {
            for (std::size_t r = 0; r < g->rows(); ++r) {
                auto gr = g->row(r);
                for (std::size_t c = 0; c < gr.size(); ++c) {
                    gr[c] += inv * n.grad(0, c);
                }
            }
        }
    });
}

auto Tape::gather_rows(Var a, std::vector<std::size_t> indices) -> Var
{
    const Matrix& x = node(a).value;
    Matrix out(indices.size(), x.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= x.rows()) {
            throw IndexError("gather_rows: row " + std::to_string(indices[i])
                             + " outside operand " + x.shape_string());
        }
        const auto src = x.row(indices[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return record(std::move(out), { a.id },
                  [idx = std::move(indices)](Tape& t, std::size_t self) {
                      const Node& n = t.nodes_[self];
                      if (Matrix* g = t.grad_of(n.inputs[0])) {
                          for (std::size_t i = 0; i < idx.size(); ++i) {
                              auto dst = g->row(idx[i]);
                              const auto up = n.grad.row(i);
                              for (std::size_t c = 0; c < dst.size(); ++c) {
                                  dst[c] += up[c];
                              }
                          }
                      }
                  });
}

auto Tape::slice_rows(Var a, std::size_t begin, std::size_t end) -> Var
{
    const Matrix& x = node(a).value;
    if (begin > end || end > x.rows()) {
        throw IndexError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end)
                         + ") outside operand " + x.shape_string());
    }
    Matrix out(end - begin, x.cols());
    std::copy(x.data().begin() + static_cast<std::ptrdiff_t>(begin * x.cols()),
              x.data().begin() + static_cast<std::ptrdiff_t>(end * x.cols()),
              out.data().begin());
    return record(std::move(out), { a.id }, [begin](Tape& t, std::size_t self) {
        const Node& n = t.nodes_[self];
        if (Matrix* g = t.grad_of(n.inputs[0])) {
            const auto up = n.grad.data();
            auto dst = g->data().subspan(begin * g->cols(), up.size());
            for (std::size_t i = 0; i < up.size(); ++i) {
                dst[i] += up[i];
            }
        }
    });
}

auto Tape::concat_rows(std::span<const Var> parts) -> Var
{
    if (parts.empty()) {
        throw ContractError("concat_rows: no operands");
    }
    const std::size_t cols = node(parts[0]).value.cols();
    std::size_t rows = 0;
    std::vector<std::size_t> inputs;
    for (Var p : parts) {
        const Matrix& v = node(p).value;
        if (v.cols() != cols) {
            throw DimensionError("concat_rows: column counts differ, " + v.shape_string());
        }
        rows += v.rows();
        inputs.push_back(p.id);
    }
    Matrix out(rows, cols);
    std::size_t offset = 0;
    for (Var p : parts) {
        const auto src = node(p).value.data();
        std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset));
        offset += src.size();
    }
    return record(std::move(out), std::move(inputs), [](Tape& t, std::size_t self) {
        const Node& n = t.nodes_[self];
        std::size_t offset = 0;
        for (std::size_t in : n.inputs) {
            const std::size_t count = t.nodes_[in].value.size();
            if (Matrix* g = t.grad_of(in)) {
                const auto up = n.grad.data().subspan(offset, count);
                auto dst = g->data();
                for (std::size_t i = 0; i < count; ++i) {
                    dst[i] += up[i];
                }
            }
            offset += count;
        }
    });
}

auto Tape::add_row_broadcast(Var a, Var bias) -> Var
{
    const Matrix& x = node(a).value;
    const Matrix& b = node(bias).value;
    if (b.rows() != 1 || b.cols() != x.cols()) {
        throw DimensionError("add_row_broadcast: bias " + b.shape_string()
                             + " does not match operand " + x.shape_string());
    }
    Matrix out = x;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            row[c] += b(0, c);
        }
    }
    return record(std::move(out), { a.id, bias.id }, [](Tape& t, std::size_t self) {
        const Node& n = t.nodes_[self];
        if (Matrix* ga = t.grad_of(n.inputs[0])) {
            add_in_place(*ga, n.grad);
        }
        if (Matrix* gb = t.grad_of(n.inputs[1])) {
            for (std::size_t r = 0; r < n.grad.rows(); ++r) {
                const auto up = n.grad.row(r);
                for (std::size_t c = 0; c < up.size(); ++c) {
                    (*gb)(0, c) += up[c];
                }
            }
        }
    });
}

auto Tape::layer_norm_rows(Var a, Var gain_bias, double epsilon) -> Var
{
    const Matrix& x = node(a).value;
    const Matrix& gb = node(gain_bias).value;
    if (gb.rows() != 2 || gb.cols() != x.cols()) {
        throw DimensionError("layer_norm_rows: gain/bias " + gb.shape_string()
                             + " does not match operand " + x.shape_string());
    }
    const std::size_t cols = x.cols();
    Matrix normalized(x.rows(), cols);
    std::vector<double> inv_std(x.rows());
    Matrix out(x.rows(), cols);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto xr = x.row(r);
        double mu = 0.0;
        for (double v : xr) {
            mu += v;
        }
        mu /= static_cast<double>(cols);
        double var = 0.0;
        for (double v : xr) {
            var += (v - mu) * (v - mu);
        }
        var /= static_cast<double>(cols);
        inv_std[r] = 1.0 / std::sqrt(var + epsilon);
        for (std::size_t c = 0; c < cols; ++c) {
            normalized(r, c) = (xr[c] - mu) * inv_std[r];
            out(r, c) = gb(0, c) * normalized(r, c) + gb(1, c);
        }
    }
    return record(std::move(out), { a.id, gain_bias.id },
                  [normalized = std::move(normalized), inv_std = std::move(inv_std)](
                      Tape& t, std::size_t self) {
                      const Node& n = t.nodes_[self];
                      const Matrix& gb = t.nodes_[n.inputs[1]].value;
                      const std::size_t cols = gb.cols();
                      if (Matrix* gx = t.grad_of(n.inputs[0])) {
                          std::vector<double> dxhat(cols);
                          for (std::size_t r = 0; r < n.grad.rows(); ++r) {
                              double mean_d = 0.0;
                              double mean_dx = 0.0;
                              for (std::size_t c = 0; c < cols; ++c) {
                                  dxhat[c] = n.grad(r, c) * gb(0, c);
                                  mean_d += dxhat[c];
                                  mean_dx += dxhat[c] * normalized(r, c);
                              }
                              mean_d /= static_cast<double>(cols);
                              mean_dx /= static_cast<double>(cols);
                              for (std::size_t c = 0; c < cols; ++c) {
                                  (*gx)(r, c) += inv_std[r]
                                      * (dxhat[c] - mean_d - normalized(r, c) * mean_dx);
                              }
                          }
                      }
                      if (Matrix* ggb = t.grad_of(n.inputs[1])) {
                          for (std::size_t r = 0; r < n.grad.rows(); ++r) {
                              for (std::size_t c = 0; c < cols; ++c) {
                                  (*ggb)(0, c) += n.grad(r, c) * normalized(r, c);
                                  (*ggb)(1, c) += n.grad(r, c);
                              }
                          }
                      }
                  });
}

auto Tape::cross_entropy(Var logits, std::span<const std::size_t> labels) -> Var
{
    const Matrix& z = node(logits).value;
    if (labels.size() != z.rows() || z.rows() == 0) {
        throw DimensionError("cross_entropy: " + std::to_string(labels.size())
                             + " labels for logits " + z.shape_string());
    }
    Matrix probs(z.rows(), z.cols());
    double total = 0.0;
    for (std::size_t r = 0; r < z.rows(); ++r) {
        if (labels[r] >= z.cols()) {
            throw IndexError("cross_entropy: label " + std::to_string(labels[r])
                             + " outside " + std::to_string(z.cols()) + " classes");
        }
        const auto zr = z.row(r);
        const double peak = *std::max_element(zr.begin(), zr.end());
        double denom = 0.0;
        for (double v : zr) {
            denom += std::exp(v - peak);
        }
        const double log_denom = std::log(denom) + peak;
        for (std::size_t c = 0; c < zr.size(); ++c) {
            probs(r, c) = std::exp(zr[c] - log_denom);
        }
        total += log_denom - zr[labels[r]];
    }
    const double inv = 1.0 / static_cast<double>(z.rows());
    Matrix out(1, 1, total * inv);
    return record(std::move(out), { logits.id },
                  [probs = std::move(probs), lab = std::vector<std::size_t>(labels.begin(), labels.end()),
                   inv](Tape& t, std::size_t self) {
                      const Node& n = t.nodes_[self];
                      if (Matrix* g = t.grad_of(n.inputs[0])) {
                          const double up = n.grad(0, 0) * inv;
                          for (std::size_t r = 0; r < probs.rows(); ++r) {
                              for (std::size_t c = 0; c < probs.cols(); ++c) {
                                  const double target = c == lab[r] ? 1.0 : 0.0;
                                  (*g)(r, c) += up * (probs(r, c) - target);
                              }
                          }
                      }
                  });
}

auto Tape::custom(std::vector<Var> inputs, Matrix value, CustomBackward rule) -> Var
{
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    for (Var v : inputs) {
        (void)node(v);
        ids.push_back(v.id);
    }
    return record(std::move(value), std::move(ids),
                  [rule = std::move(rule)](Tape& t, std::size_t self) {
                      const std::size_t count = t.nodes_[self].inputs.size();
                      std::vector<Matrix*> grads(count);
                      for (std::size_t i = 0; i < count; ++i) {
                          grads[i] = t.grad_of(t.nodes_[self].inputs[i]);
                      }
                      rule(t.nodes_[self].grad, grads);
                  });
}

void Tape::backward(Var loss)
{
    const Node& root = node(loss);
    if (root.value.rows() != 1 || root.value.cols() != 1) {
        throw ContractError("backward: loss must be a 1x1 scalar, got " + root.value.shape_string());
    }
    for (Node& n : nodes_) {
        n.has_grad = false;
        n.grad = Matrix();
    }
    visited_.clear();
    if (!root.needs_grad) {
        return;
    }
    grad_of(loss.id)->data()[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.has_grad || !n.rule) {
            continue;
        }
        visited_.push_back(i);
        n.rule(*this, i);
    }
}

auto Tape::value(Var v) const -> const Matrix&
{
    return node(v).value;
}

auto Tape::scalar(Var v) const -> double
{
    const Matrix& m = node(v).value;
    if (m.size() != 1) {
        throw ContractError("Tape::scalar: node is " + m.shape_string());
    }
    return m(0, 0);
}

auto Tape::gradient(Var v) const -> Matrix
{
    const Node& n = node(v);
    if (n.has_grad) {
        return n.grad;
    }
    return Matrix(n.value.rows(), n.value.cols());
}

auto Tape::parameter_gradients() const -> std::vector<NamedGradient>
{
    std::vector<NamedGradient> out;
    out.reserve(parameters_.size());
    for (const auto& [name, id] : parameters_) {
        out.push_back({ name, gradient(Var { id }) });
    }
    return out;
}

} // namespace groundkit::ad
