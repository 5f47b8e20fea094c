#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "graphaug/budget.hpp"
#include "graphaug/errors.hpp"

namespace graphaug {

using Shape = std::vector<int>;

inline std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

inline std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

class Tape;

namespace detail {

// One node of the computation graph. Parameters and constants are leaves;
// op results hold a backward closure plus owning links to their parents so
// the graph outlives local temporaries.
struct TensorNode {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
    std::function<void()> backward_fn;
    std::vector<std::shared_ptr<TensorNode>> parents;

    TensorNode(Shape s, std::vector<double> v, bool rg)
        : shape(std::move(s)), values(std::move(v)), requires_grad(rg) {
        MemoryBudget::instance().charge(footprint());
        if (requires_grad) grad.assign(values.size(), 0.0);
    }

    ~TensorNode() { MemoryBudget::instance().release(footprint()); }

    std::size_t footprint() const { return values.size() * 2 * sizeof(double); }
};

}  // namespace detail

/// Handle to a dense 64-bit tensor in the computation graph. Copying the
/// handle aliases the underlying node.
class Tensor {
  public:
    Tensor() = default;

    static Tensor constant(Shape shape, std::vector<double> values) {
        check_values(shape, values);
        return Tensor(std::make_shared<detail::TensorNode>(std::move(shape),
                                                           std::move(values), false));
    }

    static Tensor scalar(double v) { return constant({}, {v}); }

    static Tensor zeros(Shape shape) {
        std::vector<double> values(shape_size(shape), 0.0);
        return Tensor(std::make_shared<detail::TensorNode>(std::move(shape),
                                                           std::move(values), false));
    }

    // A leaf that accumulates gradient; used by ParameterSet.
    static Tensor parameter(Shape shape, std::vector<double> values) {
        check_values(shape, values);
        return Tensor(std::make_shared<detail::TensorNode>(std::move(shape),
                                                           std::move(values), true));
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t size() const { return node_->values.size(); }
    bool requires_grad() const { return node_->requires_grad; }

    // The handle is shared-ownership; mutating the node through a const
    // handle mirrors shared_ptr semantics.
    std::span<const double> values() const { return node_->values; }
    std::span<double> mutable_values() const { return node_->values; }
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad() const { return node_->grad; }

    double operator[](std::size_t i) const { return node_->values[i]; }

    double item() const {
        if (node_->values.size() != 1) {
            throw ContractViolation("item() needs a single-element tensor, got shape " +
                                    shape_string(node_->shape));
        }
        return node_->values[0];
    }

    void zero_grad() const { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

    detail::TensorNode* node() const { return node_.get(); }
    const std::shared_ptr<detail::TensorNode>& node_ptr() const { return node_; }

  private:
    friend class Tape;
    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}

    static void check_values(const Shape& shape, const std::vector<double>& values) {
        if (values.size() != shape_size(shape)) {
            throw ShapeError("value count " + std::to_string(values.size()) +
                             " does not match shape " + shape_string(shape));
        }
    }

    std::shared_ptr<detail::TensorNode> node_;
};

/// Records forward operations in creation (topological) order. Exactly one
/// tape may be active per thread; ops run without recording when none is.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // RAII activation for the current thread.
    class Scope {
      public:
        explicit Scope(Tape& tape) : previous_(active_tape()) { active_tape() = &tape; }
        ~Scope() { active_tape() = previous_; }
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

      private:
        Tape* previous_;
    };

    static Tape* active() { return active_tape(); }

    std::size_t recorded() const { return nodes_.size(); }

    // Emits a new op-result tensor, recording it when grads are needed.
    static Tensor emit(Shape shape, std::vector<double> values,
                       std::vector<Tensor> parents,
                       std::function<void(detail::TensorNode&)> make_backward) {
        for (double v : values) {
            if (!std::isfinite(v)) {
                throw NumericalError("non-finite value in op output of shape " +
                                     shape_string(shape));
            }
        }
        bool needs_grad = false;
        Tape* tape = active();
        if (tape) {
            for (const Tensor& p : parents) needs_grad = needs_grad || p.requires_grad();
        }
        auto node = std::make_shared<detail::TensorNode>(std::move(shape),
                                                         std::move(values), needs_grad);
        if (needs_grad) {
            for (const Tensor& p : parents) node->parents.push_back(p.node_ptr());
            make_backward(*node);
            tape->nodes_.push_back(node);
        }
        return Tensor(node);
    }

    // Reverse pass from a scalar loss; parameter leaves accumulate into
    // their grad buffers. Each recorded node is visited exactly once.
    void backward(const Tensor& loss) {
        if (loss.size() != 1) {
            throw ContractViolation("backward needs a scalar loss, got shape " +
                                    shape_string(loss.shape()));
        }
        if (!loss.requires_grad()) {
            throw ContractViolation(
                "loss does not depend on any tensor that requires gradients");
        }
        loss.node()->grad.assign(1, 1.0);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            detail::TensorNode& node = **it;
            if (node.backward_fn && !node.grad.empty()) node.backward_fn();
        }
    }

    void clear() { nodes_.clear(); }

  private:
    static Tape*& active_tape() {
        static thread_local Tape* active = nullptr;
        return active;
    }

    std::vector<std::shared_ptr<detail::TensorNode>> nodes_;
};

inline void backward(Tape& tape, const Tensor& loss) { tape.backward(loss); }

// ---------------------------------------------------------------------------
// Forward primitives
// ---------------------------------------------------------------------------

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shapes " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()) + " differ");
    }
}

inline std::pair<int, int> matrix_dims(const Tensor& t, const char* op) {
    if (t.shape().size() == 2) return {t.shape()[0], t.shape()[1]};
    if (t.shape().size() == 1) return {t.shape()[0], 1};
    throw ShapeError(std::string(op) + ": expected rank 1 or 2, got shape " +
                     shape_string(t.shape()));
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return Tape::emit(a.shape(), std::move(out), {a, b}, [a, b](detail::TensorNode& n) {
        n.backward_fn = [a, b, &n]() {
            if (a.requires_grad()) {
                for (std::size_t i = 0; i < n.grad.size(); ++i)
                    a.mutable_grad()[i] += n.grad[i];
            }
            if (b.requires_grad()) {
                for (std::size_t i = 0; i < n.grad.size(); ++i)
                    b.mutable_grad()[i] += n.grad[i];
            }
        };
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    return Tape::emit(a.shape(), std::move(out), {a, b}, [a, b](detail::TensorNode& n) {
        n.backward_fn = [a, b, &n]() {
            if (a.requires_grad()) {
                for (std::size_t i = 0; i < n.grad.size(); ++i)
                    a.mutable_grad()[i] += n.grad[i];
            }
            if (b.requires_grad()) {
                for (std::size_t i = 0; i < n.grad.size(); ++i)
                    b.mutable_grad()[i] -= n.grad[i];
            }
        };
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    return Tape::emit(a.shape(), std::move(out), {a, b}, [a, b](detail::TensorNode& n) {
        n.backward_fn = [a, b, &n]() {
            if (a.requires_grad()) {
                for (std::size_t i = 0; i < n.grad.size(); ++i)
                    a.mutable_grad()[i] += n.grad[i] * b[i];
            }
            if (b.requires_grad()) {
                for (std::size_t i = 0; i < n.grad.size(); ++i)
                    b.mutable_grad()[i] += n.grad[i] * a[i];
            }
        };
    });
}

inline Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
    return Tape::emit(a.shape(), std::move(out), {a}, [a, factor](detail::TensorNode& n) {
        n.backward_fn = [a, factor, &n]() {
            if (!a.requires_grad()) return;
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                a.mutable_grad()[i] += n.grad[i] * factor;
        };
    });
}

/// matmul: [m,k] x [k,p] -> [m,p]; a rank-1 right operand is treated as a
/// column vector and yields a rank-1 result.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    auto [m, k] = detail::matrix_dims(a, "matmul");
    auto [k2, p] = detail::matrix_dims(b, "matmul");
    if (a.shape().size() != 2) {
        throw ShapeError("matmul: left operand must be rank 2, got " +
                         shape_string(a.shape()));
    }
    if (k != k2) {
        throw ShapeError("matmul: inner dimensions differ: " + shape_string(a.shape()) +
                         " x " + shape_string(b.shape()));
    }
    bool vector_rhs = b.shape().size() == 1;
    std::vector<double> out(static_cast<std::size_t>(m) * p, 0.0);
    auto av = a.values();
    auto bv = b.values();
    for (int i = 0; i < m; ++i) {
        for (int kk = 0; kk < k; ++kk) {
            double aik = av[i * k + kk];
            if (aik == 0.0) continue;
            const double* brow = &bv[static_cast<std::size_t>(kk) * p];
            double* orow = &out[static_cast<std::size_t>(i) * p];
            for (int j = 0; j < p; ++j) orow[j] += aik * brow[j];
        }
    }
    Shape out_shape = vector_rhs ? Shape{m} : Shape{m, p};
    int pc = p, kc = k, mc = m;
    return Tape::emit(std::move(out_shape), std::move(out), {a, b},
                      [a, b, mc, kc, pc](detail::TensorNode& n) {
                          n.backward_fn = [a, b, mc, kc, pc, &n]() {
                              auto av = a.values();
                              auto bv = b.values();
                              if (a.requires_grad()) {
                                  auto ag = a.mutable_grad();
                                  for (int i = 0; i < mc; ++i)
                                      for (int j = 0; j < pc; ++j) {
                                          double g = n.grad[i * pc + j];
                                          if (g == 0.0) continue;
                                          for (int kk = 0; kk < kc; ++kk)
                                              ag[i * kc + kk] += g * bv[kk * pc + j];
                                      }
                              }
                              if (b.requires_grad()) {
                                  auto bg = b.mutable_grad();
                                  for (int i = 0; i < mc; ++i)
                                      for (int kk = 0; kk < kc; ++kk) {
                                          double aik = av[i * kc + kk];
                                          if (aik == 0.0) continue;
                                          for (int j = 0; j < pc; ++j)
                                              bg[kk * pc + j] += aik * n.grad[i * pc + j];
                                      }
                              }
                          };
                      });
}

/// Concatenates rank-1 tensors into one vector.
inline Tensor concat(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat: needs at least one tensor");
    std::vector<double> out;
    for (const Tensor& t : parts) {
        if (t.shape().size() != 1) {
            throw ShapeError("concat: expects rank-1 tensors, got " +
                             shape_string(t.shape()));
        }
        out.insert(out.end(), t.values().begin(), t.values().end());
    }
    Shape shape{static_cast<int>(out.size())};
    return Tape::emit(std::move(shape), std::move(out), parts,
                      [parts](detail::TensorNode& n) {
                          n.backward_fn = [parts, &n]() {
                              std::size_t offset = 0;
                              for (const Tensor& t : parts) {
                                  if (t.requires_grad()) {
                                      auto tg = t.mutable_grad();
                                      for (std::size_t i = 0; i < t.size(); ++i)
                                          tg[i] += n.grad[offset + i];
                                  }
                                  offset += t.size();
                              }
                          };
                      });
}

namespace detail {

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd dydx) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(a[i]);
    return Tape::emit(a.shape(), std::move(out), {a}, [a, dydx](detail::TensorNode& n) {
        n.backward_fn = [a, dydx, &n]() {
            if (!a.requires_grad()) return;
            auto ag = a.mutable_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                ag[i] += n.grad[i] * dydx(a[i], n.values[i]);
        };
    });
}

}  // namespace detail

inline Tensor sigmoid(const Tensor& a) {
    return detail::unary_op(
        a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh(const Tensor& a) {
    return detail::unary_op(
        a, [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

inline Tensor relu(const Tensor& a) {
    return detail::unary_op(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor log(const Tensor& a) {
    return detail::unary_op(
        a, [](double x) { return std::log(x); },
        [](double x, double) { return 1.0 / x; });
}

/// Row-wise softmax for rank 2, whole-vector softmax for rank 1.
inline Tensor softmax(const Tensor& a) {
    int rows = 1, cols = 0;
    if (a.shape().size() == 1) {
        cols = a.shape()[0];
    } else if (a.shape().size() == 2) {
        rows = a.shape()[0];
        cols = a.shape()[1];
    } else {
        throw ShapeError("softmax: expected rank 1 or 2, got " + shape_string(a.shape()));
    }
    if (cols == 0) throw ShapeError("softmax: empty input");
    std::vector<double> out(a.size());
    for (int r = 0; r < rows; ++r) {
        const double* in_row = &a.values()[static_cast<std::size_t>(r) * cols];
        double* out_row = &out[static_cast<std::size_t>(r) * cols];
        double mx = *std::max_element(in_row, in_row + cols);
        double sum = 0.0;
        for (int c = 0; c < cols; ++c) {
            out_row[c] = std::exp(in_row[c] - mx);
            sum += out_row[c];
        }
        for (int c = 0; c < cols; ++c) out_row[c] /= sum;
    }
    int rc = rows, cc = cols;
    return Tape::emit(a.shape(), std::move(out), {a}, [a, rc, cc](detail::TensorNode& n) {
        n.backward_fn = [a, rc, cc, &n]() {
            if (!a.requires_grad()) return;
            auto ag = a.mutable_grad();
            for (int r = 0; r < rc; ++r) {
                const double* y = &n.values[static_cast<std::size_t>(r) * cc];
                const double* gy = &n.grad[static_cast<std::size_t>(r) * cc];
                double dot = 0.0;
                for (int c = 0; c < cc; ++c) dot += y[c] * gy[c];
                for (int c = 0; c < cc; ++c)
                    ag[static_cast<std::size_t>(r) * cc + c] += y[c] * (gy[c] - dot);
            }
        };
    });
}

inline Tensor sum(const Tensor& a) {
    double total = std::accumulate(a.values().begin(), a.values().end(), 0.0);
    return Tape::emit({}, {total}, {a}, [a](detail::TensorNode& n) {
        n.backward_fn = [a, &n]() {
            if (!a.requires_grad()) return;
            auto ag = a.mutable_grad();
            for (std::size_t i = 0; i < a.size(); ++i) ag[i] += n.grad[0];
        };
    });
}

inline Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw ShapeError("mean: empty tensor");
    double total = std::accumulate(a.values().begin(), a.values().end(), 0.0);
    double inv = 1.0 / static_cast<double>(a.size());
    return Tape::emit({}, {total * inv}, {a}, [a, inv](detail::TensorNode& n) {
        n.backward_fn = [a, inv, &n]() {
            if (!a.requires_grad()) return;
            auto ag = a.mutable_grad();
            for (std::size_t i = 0; i < a.size(); ++i) ag[i] += n.grad[0] * inv;
        };
    });
}

/// Selects rows of a rank-2 tensor: out[r] = a[indices[r]].
inline Tensor gather_rows(const Tensor& a, const std::vector<int>& indices) {
    if (a.shape().size() != 2) {
        throw ShapeError("gather_rows: expected rank 2, got " + shape_string(a.shape()));
    }
    int rows = a.shape()[0], cols = a.shape()[1];
    std::vector<double> out(indices.size() * static_cast<std::size_t>(cols));
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] < 0 || indices[r] >= rows) {
            throw IndexError("gather_rows: row " + std::to_string(indices[r]) +
                             " out of range [0, " + std::to_string(rows) + ")");
        }
        std::copy_n(&a.values()[static_cast<std::size_t>(indices[r]) * cols], cols,
                    &out[r * static_cast<std::size_t>(cols)]);
    }
    Shape shape{static_cast<int>(indices.size()), cols};
    return Tape::emit(std::move(shape), std::move(out), {a},
                      [a, indices, cols](detail::TensorNode& n) {
                          n.backward_fn = [a, indices, cols, &n]() {
                              if (!a.requires_grad()) return;
                              auto ag = a.mutable_grad();
                              for (std::size_t r = 0; r < indices.size(); ++r)
                                  for (int c = 0; c < cols; ++c)
                                      ag[static_cast<std::size_t>(indices[r]) * cols + c] +=
                                          n.grad[r * cols + c];
                          };
                      });
}

/// Adds each row of a into an output of `out_rows` rows at its target index.
inline Tensor scatter_add_rows(const Tensor& a, const std::vector<int>& targets,
                               int out_rows) {
    if (a.shape().size() != 2) {
        throw ShapeError("scatter_add_rows: expected rank 2, got " +
                         shape_string(a.shape()));
    }
    if (static_cast<std::size_t>(a.shape()[0]) != targets.size()) {
        throw ShapeError("scatter_add_rows: row count does not match target count");
    }
    int cols = a.shape()[1];
    std::vector<double> out(static_cast<std::size_t>(out_rows) * cols, 0.0);
    for (std::size_t r = 0; r < targets.size(); ++r) {
        if (targets[r] < 0 || targets[r] >= out_rows) {
            throw IndexError("scatter_add_rows: target " + std::to_string(targets[r]) +
                             " out of range [0, " + std::to_string(out_rows) + ")");
        }
        for (int c = 0; c < cols; ++c)
            out[static_cast<std::size_t>(targets[r]) * cols + c] +=
                a[r * static_cast<std::size_t>(cols) + c];
    }
    return Tape::emit({out_rows, cols}, std::move(out), {a},
                      [a, targets, cols](detail::TensorNode& n) {
                          n.backward_fn = [a, targets, cols, &n]() {
                              if (!a.requires_grad()) return;
                              auto ag = a.mutable_grad();
                              for (std::size_t r = 0; r < targets.size(); ++r)
                                  for (int c = 0; c < cols; ++c)
                                      ag[r * cols + c] +=
                                          n.grad[static_cast<std::size_t>(targets[r]) * cols + c];
                          };
                      });
}

/// Multiplies row r of a rank-2 tensor by weights[r]. Weights may be a
/// constant vector (rank 1 tensor) and receive gradient if required.
inline Tensor scale_rows(const Tensor& a, const Tensor& weights) {
    if (a.shape().size() != 2 || weights.shape().size() != 1 ||
        a.shape()[0] != weights.shape()[0]) {
        throw ShapeError("scale_rows: got " + shape_string(a.shape()) + " and " +
                         shape_string(weights.shape()));
    }
    int rows = a.shape()[0], cols = a.shape()[1];
    std::vector<double> out(a.size());
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            out[static_cast<std::size_t>(r) * cols + c] =
                a[static_cast<std::size_t>(r) * cols + c] * weights[r];
    return Tape::emit(a.shape(), std::move(out), {a, weights},
                      [a, weights, rows, cols](detail::TensorNode& n) {
                          n.backward_fn = [a, weights, rows, cols, &n]() {
                              if (a.requires_grad()) {
                                  auto ag = a.mutable_grad();
                                  for (int r = 0; r < rows; ++r)
                                      for (int c = 0; c < cols; ++c)
                                          ag[static_cast<std::size_t>(r) * cols + c] +=
                                              n.grad[static_cast<std::size_t>(r) * cols + c] *
                                              weights[r];
                              }
                              if (weights.requires_grad()) {
                                  auto wg = weights.mutable_grad();
                                  for (int r = 0; r < rows; ++r) {
                                      double acc = 0.0;
                                      for (int c = 0; c < cols; ++c)
                                          acc += n.grad[static_cast<std::size_t>(r) * cols + c] *
                                                 a[static_cast<std::size_t>(r) * cols + c];
                                      wg[r] += acc;
                                  }
                              }
                          };
                      });
}

/// Softmax over segments of a rank-1 score vector: entries sharing a segment
/// id normalize together. Segment ids must be grouped contiguously or not;
/// both work — normalization is by id, not position.
inline Tensor segment_softmax(const Tensor& scores, const std::vector<int>& segments,
                              int segment_count) {
    if (scores.shape().size() != 1 ||
        static_cast<std::size_t>(scores.shape()[0]) != segments.size()) {
        throw ShapeError("segment_softmax: scores/segments size mismatch");
    }
    for (int s : segments) {
        if (s < 0 || s >= segment_count) {
            throw IndexError("segment_softmax: segment id out of range");
        }
    }
    std::size_t n = segments.size();
    std::vector<double> mx(segment_count, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i)
        mx[segments[i]] = std::max(mx[segments[i]], scores[i]);
    std::vector<double> out(n), denom(segment_count, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::exp(scores[i] - mx[segments[i]]);
        denom[segments[i]] += out[i];
    }
    for (std::size_t i = 0; i < n; ++i) out[i] /= denom[segments[i]];
    return Tape::emit(scores.shape(), std::move(out), {scores},
                      [scores, segments, segment_count](detail::TensorNode& n) {
                          n.backward_fn = [scores, segments, segment_count, &n]() {
                              if (!scores.requires_grad()) return;
                              std::vector<double> dot(segment_count, 0.0);
                              for (std::size_t i = 0; i < segments.size(); ++i)
                                  dot[segments[i]] += n.values[i] * n.grad[i];
                              auto sg = scores.mutable_grad();
                              for (std::size_t i = 0; i < segments.size(); ++i)
                                  sg[i] += n.values[i] * (n.grad[i] - dot[segments[i]]);
                          };
                      });
}

/// Stacks rank-1 tensors as the rows of a rank-2 tensor.
inline Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows: needs at least one row");
    int cols = rows[0].shape().size() == 1 ? rows[0].shape()[0] : -1;
    std::vector<double> out;
    for (const Tensor& r : rows) {
        if (r.shape().size() != 1 || r.shape()[0] != cols) {
            throw ShapeError("stack_rows: rows must be rank 1 of equal length");
        }
        out.insert(out.end(), r.values().begin(), r.values().end());
    }
    Shape shape{static_cast<int>(rows.size()), cols};
    return Tape::emit(std::move(shape), std::move(out), rows,
                      [rows, cols](detail::TensorNode& n) {
                          n.backward_fn = [rows, cols, &n]() {
                              for (std::size_t r = 0; r < rows.size(); ++r) {
                                  if (!rows[r].requires_grad()) continue;
                                  auto rg = rows[r].mutable_grad();
                                  for (int c = 0; c < cols; ++c)
                                      rg[c] += n.grad[r * static_cast<std::size_t>(cols) + c];
                              }
                          };
                      });
}

/// Multiplies every entry of a by a single-element gate tensor.
inline Tensor mul_scalar(const Tensor& a, const Tensor& gate) {
    if (gate.size() != 1) {
        throw ShapeError("mul_scalar: gate must hold one value, got " +
                         shape_string(gate.shape()));
    }
    double s = gate[0];
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
    return Tape::emit(a.shape(), std::move(out), {a, gate},
                      [a, gate](detail::TensorNode& n) {
                          n.backward_fn = [a, gate, &n]() {
                              if (a.requires_grad()) {
                                  auto ag = a.mutable_grad();
                                  for (std::size_t i = 0; i < n.grad.size(); ++i)
                                      ag[i] += n.grad[i] * gate[0];
                              }
                              if (gate.requires_grad()) {
                                  double acc = 0.0;
                                  for (std::size_t i = 0; i < n.grad.size(); ++i)
                                      acc += n.grad[i] * a[i];
                                  gate.mutable_grad()[0] += acc;
                              }
                          };
                      });
}

/// Contiguous slice of a rank-1 tensor.
inline Tensor slice(const Tensor& a, int start, int length) {
    if (a.shape().size() != 1) {
        throw ShapeError("slice: expected rank 1, got " + shape_string(a.shape()));
    }
    if (start < 0 || length < 0 || start + length > a.shape()[0]) {
        throw IndexError("slice: [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") out of range for " +
                         shape_string(a.shape()));
    }
    std::vector<double> out(a.values().begin() + start,
                            a.values().begin() + start + length);
    return Tape::emit({length}, std::move(out), {a},
                      [a, start, length](detail::TensorNode& n) {
                          n.backward_fn = [a, start, length, &n]() {
                              if (!a.requires_grad()) return;
                              auto ag = a.mutable_grad();
                              for (int i = 0; i < length; ++i) ag[start + i] += n.grad[i];
                          };
                      });
}

/// Extracts row r of a rank-2 tensor as a vector.
inline Tensor select_row(const Tensor& a, int row) {
    if (a.shape().size() != 2) {
        throw ShapeError("select_row: expected rank 2, got " + shape_string(a.shape()));
    }
    int rows = a.shape()[0], cols = a.shape()[1];
    if (row < 0 || row >= rows) {
        throw IndexError("select_row: row " + std::to_string(row) + " out of range");
    }
    std::vector<double> out(a.values().begin() + static_cast<std::size_t>(row) * cols,
                            a.values().begin() + static_cast<std::size_t>(row + 1) * cols);
    return Tape::emit({cols}, std::move(out), {a}, [a, row, cols](detail::TensorNode& n) {
        n.backward_fn = [a, row, cols, &n]() {
            if (!a.requires_grad()) return;
            auto ag = a.mutable_grad();
            for (int c = 0; c < cols; ++c)
                ag[static_cast<std::size_t>(row) * cols + c] += n.grad[c];
        };
    });
}

/// Mean over the rows of a rank-2 tensor -> rank-1 of length cols.
inline Tensor mean_rows(const Tensor& a) {
    if (a.shape().size() != 2) {
        throw ShapeError("mean_rows: expected rank 2, got " + shape_string(a.shape()));
    }
    int rows = a.shape()[0], cols = a.shape()[1];
    if (rows == 0) throw ShapeError("mean_rows: zero rows");
    std::vector<double> out(cols, 0.0);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out[c] += a[static_cast<std::size_t>(r) * cols + c];
    double inv = 1.0 / rows;
    for (double& v : out) v *= inv;
    return Tape::emit({cols}, std::move(out), {a},
                      [a, rows, cols, inv](detail::TensorNode& n) {
                          n.backward_fn = [a, rows, cols, inv, &n]() {
                              if (!a.requires_grad()) return;
                              auto ag = a.mutable_grad();
                              for (int r = 0; r < rows; ++r)
                                  for (int c = 0; c < cols; ++c)
                                      ag[static_cast<std::size_t>(r) * cols + c] +=
                                          n.grad[c] * inv;
                          };
                      });
}

}  // namespace graphaug
