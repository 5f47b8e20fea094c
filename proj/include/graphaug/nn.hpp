#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "graphaug/errors.hpp"
#include "graphaug/rng.hpp"
#include "graphaug/tensor.hpp"

namespace graphaug {

inline constexpr double kProbabilityClamp = 1e-7;

/// Named, insertion-ordered collection of trainable tensors. Iteration
/// order is deterministic so training trajectories are reproducible.
class ParameterSet {
  public:
    ParameterSet() = default;
    explicit ParameterSet(std::uint64_t seed) : seed_(seed), rng_(make_rng(seed)) {}

    std::uint64_t seed() const { return seed_; }

    /// Glorot-uniform matrix: entries in +-sqrt(6 / (fan_in + fan_out)).
    Tensor add_matrix(const std::string& name, int rows, int cols) {
        double bound = std::sqrt(6.0 / (rows + cols));
        std::uniform_real_distribution<double> dist(-bound, bound);
        std::vector<double> values(static_cast<std::size_t>(rows) * cols);
        for (double& v : values) v = dist(rng_);
        return insert(name, Tensor::parameter({rows, cols}, std::move(values)));
    }

    /// Glorot-style vector (fan_in = fan_out = n), for learned embeddings.
    Tensor add_embedding(const std::string& name, int n) {
        double bound = std::sqrt(6.0 / (2.0 * n));
        std::uniform_real_distribution<double> dist(-bound, bound);
        std::vector<double> values(n);
        for (double& v : values) v = dist(rng_);
        return insert(name, Tensor::parameter({n}, std::move(values)));
    }

    /// Zero-initialized vector, for biases.
    Tensor add_bias(const std::string& name, int n) {
        return insert(name, Tensor::parameter({n}, std::vector<double>(n, 0.0)));
    }

    Tensor get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) {
            throw ContractViolation("unknown parameter: " + name);
        }
        return entries_[it->second].second;
    }

    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& [name, t] : entries_) n += t.size();
        return n;
    }

    void zero_grad() const {
        for (const auto& [name, t] : entries_) t.zero_grad();
    }

    void check_finite() const {
        for (const auto& [name, t] : entries_) {
            for (double v : t.values()) {
                if (!std::isfinite(v)) {
                    throw NumericalError("parameter " + name + " is not finite");
                }
            }
        }
    }

  private:
    Tensor insert(const std::string& name, Tensor t) {
        if (index_.count(name)) {
            throw ContractViolation("duplicate parameter name: " + name);
        }
        index_[name] = entries_.size();
        entries_.emplace_back(name, t);
        return t;
    }

    std::uint64_t seed_ = 0;
    Rng rng_{0};
    std::vector<std::pair<std::string, Tensor>> entries_;
    std::map<std::string, std::size_t> index_;
};

/// y = W x + b for a rank-1 input.
struct Affine {
    Tensor weight;
    Tensor bias;

    Affine() = default;
    Affine(ParameterSet& params, const std::string& prefix, int in_dim, int out_dim)
        : weight(params.add_matrix(prefix + ".weight", out_dim, in_dim)),
          bias(params.add_bias(prefix + ".bias", out_dim)) {}

    Tensor operator()(const Tensor& x) const { return add(matmul(weight, x), bias); }

    /// Applies the map to every row of a rank-2 input.
    Tensor rows(const Tensor& x) const {
        if (x.shape().size() != 2) {
            throw ShapeError("Affine::rows expects rank 2, got " + shape_string(x.shape()));
        }
        int n = x.shape()[0];
        std::vector<Tensor> out;
        out.reserve(n);
        for (int r = 0; r < n; ++r) out.push_back((*this)(select_row(x, r)));
        return stack_rows(out);
    }
};

/// Standard gated recurrent cell.
///   z = sigmoid(Wz x + Uz h + bz)
///   r = sigmoid(Wr x + Ur h + br)
///   c = tanh(Wc x + Uc (r * h) + bc)
///   h' = (1 - z) * h + z * c
struct GruCell {
    Tensor wz, uz, bz;
    Tensor wr, ur, br;
    Tensor wc, uc, bc;

    GruCell() = default;
    GruCell(ParameterSet& params, const std::string& prefix, int input_dim, int hidden_dim)
        : wz(params.add_matrix(prefix + ".wz", hidden_dim, input_dim)),
          uz(params.add_matrix(prefix + ".uz", hidden_dim, hidden_dim)),
          bz(params.add_bias(prefix + ".bz", hidden_dim)),
          wr(params.add_matrix(prefix + ".wr", hidden_dim, input_dim)),
          ur(params.add_matrix(prefix + ".ur", hidden_dim, hidden_dim)),
          br(params.add_bias(prefix + ".br", hidden_dim)),
          wc(params.add_matrix(prefix + ".wc", hidden_dim, input_dim)),
          uc(params.add_matrix(prefix + ".uc", hidden_dim, hidden_dim)),
          bc(params.add_bias(prefix + ".bc", hidden_dim)) {}

    Tensor step(const Tensor& h_prev, const Tensor& x) const {
        Tensor z = sigmoid(add(add(matmul(wz, x), matmul(uz, h_prev)), bz));
        Tensor r = sigmoid(add(add(matmul(wr, x), matmul(ur, h_prev)), br));
        Tensor c = tanh(add(add(matmul(wc, x), matmul(uc, mul(r, h_prev))), bc));
        Tensor keep = mul(sub(ones_like(z), z), h_prev);
        return add(keep, mul(z, c));
    }

  private:
    static Tensor ones_like(const Tensor& t) {
        return Tensor::constant(t.shape(), std::vector<double>(t.size(), 1.0));
    }
};

inline Tensor gru_cell(const GruCell& cell, const Tensor& h_prev, const Tensor& x) {
    return cell.step(h_prev, x);
}

// [r, c] -> transposed copy recorded on the tape (gradient flows through).
inline Tensor transpose_constant(const Tensor& a) {
    if (a.shape().size() != 2) {
        throw ShapeError("transpose: expected rank 2, got " + shape_string(a.shape()));
    }
    int rows = a.shape()[0], cols = a.shape()[1];
    std::vector<double> out(a.size());
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            out[static_cast<std::size_t>(c) * rows + r] =
                a[static_cast<std::size_t>(r) * cols + c];
    return Tape::emit({cols, rows}, std::move(out), {a},
                      [a, rows, cols](detail::TensorNode& n) {
                          n.backward_fn = [a, rows, cols, &n]() {
                              if (!a.requires_grad()) return;
                              auto ag = a.mutable_grad();
                              for (int r = 0; r < rows; ++r)
                                  for (int c = 0; c < cols; ++c)
                                      ag[static_cast<std::size_t>(r) * cols + c] +=
                                          n.grad[static_cast<std::size_t>(c) * rows + r];
                          };
                      });
}

/// Repeats a rank-1 tensor as the rows of an [n, d] tensor.
inline Tensor broadcast_rows(const Tensor& v, int n) {
    if (v.shape().size() != 1) {
        throw ShapeError("broadcast_rows: expected rank 1, got " + shape_string(v.shape()));
    }
    int d = v.shape()[0];
    std::vector<double> out(static_cast<std::size_t>(n) * d);
    for (int r = 0; r < n; ++r)
        std::copy_n(v.values().begin(), d, out.begin() + static_cast<std::size_t>(r) * d);
    return Tape::emit({n, d}, std::move(out), {v}, [v, n, d](detail::TensorNode& node) {
        node.backward_fn = [v, n, d, &node]() {
            if (!v.requires_grad()) return;
            auto vg = v.mutable_grad();
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < d; ++c)
                    vg[c] += node.grad[static_cast<std::size_t>(r) * d + c];
        };
    });
}

/// Single-head additive attention for one round of message passing:
///   score(i<-j) = v . tanh(Wq h_i + Wk h_j + b)
///   alpha(i<-.) = softmax over i's neighbors
///   h_i' = h_i + sum_j alpha_ij (Wm h_j)
struct AttentionParams {
    Tensor wq, wk, battn, v;
    Tensor wm;

    AttentionParams() = default;
    AttentionParams(ParameterSet& params, const std::string& prefix, int dim)
        : wq(params.add_matrix(prefix + ".wq", dim, dim)),
          wk(params.add_matrix(prefix + ".wk", dim, dim)),
          battn(params.add_bias(prefix + ".b", dim)),
          v(params.add_embedding(prefix + ".v", dim)),
          wm(params.add_matrix(prefix + ".wm", dim, dim)) {}
};

/// One attention round over an undirected edge list; messages flow both
/// directions. Returns the updated [n, d] states; nodes without neighbors
/// keep their state. Optionally reports the attention weights per directed
/// edge (receiver-major, matching the internal directed expansion).
inline Tensor attention_message_pass(const AttentionParams& params, const Tensor& node_states,
                                     const std::vector<std::pair<int, int>>& edges,
                                     std::vector<double>* attention_out = nullptr,
                                     std::vector<int>* receivers_out = nullptr) {
    if (node_states.shape().size() != 2) {
        throw ShapeError("attention_message_pass: node_states must be [n, d]");
    }
    int n = node_states.shape()[0];
    std::vector<int> senders, receivers;
    senders.reserve(edges.size() * 2);
    receivers.reserve(edges.size() * 2);
    for (const auto& [a, b] : edges) {
        if (a < 0 || b < 0 || a >= n || b >= n) {
            throw IndexError("attention_message_pass: edge endpoint out of range");
        }
        senders.push_back(b);
        receivers.push_back(a);
        senders.push_back(a);
        receivers.push_back(b);
    }
    if (senders.empty()) {
        if (attention_out) attention_out->clear();
        if (receivers_out) receivers_out->clear();
        return node_states;
    }

    Tensor recv_states = gather_rows(node_states, receivers);
    Tensor send_states = gather_rows(node_states, senders);
    Tensor q = matmul(recv_states, transpose_constant(params.wq));
    Tensor k = matmul(send_states, transpose_constant(params.wk));
    Tensor pre = tanh(add(add(q, k), broadcast_rows(params.battn,
                                                    static_cast<int>(senders.size()))));
    Tensor scores = matmul(pre, params.v);  // [E]
    Tensor alpha = segment_softmax(scores, receivers, n);
    Tensor messages = matmul(send_states, transpose_constant(params.wm));
    Tensor weighted = scale_rows(messages, alpha);
    Tensor aggregated = scatter_add_rows(weighted, receivers, n);
    if (attention_out) attention_out->assign(alpha.values().begin(), alpha.values().end());
    if (receivers_out) *receivers_out = receivers;
    return add(node_states, aggregated);
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Mean negative log-likelihood of binary targets under given probabilities,
/// clamped to [kProbabilityClamp, 1 - kProbabilityClamp].
inline Tensor bce_loss(const Tensor& probabilities, const std::vector<double>& targets) {
    if (probabilities.size() != targets.size()) {
        throw ShapeError("bce_loss: probability/target count mismatch");
    }
    if (targets.empty()) throw ShapeError("bce_loss: empty input");
    for (double t : targets) {
        if (t != 0.0 && t != 1.0) {
            throw ContractViolation("bce_loss: targets must be 0 or 1");
        }
    }
    std::size_t count = targets.size();
    std::vector<double> out(1, 0.0);
    std::vector<double> clamped(count);
    for (std::size_t i = 0; i < count; ++i) {
        double p = std::clamp(probabilities[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
        clamped[i] = p;
        out[0] -= targets[i] * std::log(p) + (1.0 - targets[i]) * std::log(1.0 - p);
    }
    out[0] /= static_cast<double>(count);
    return Tape::emit({}, std::move(out), {probabilities},
                      [probabilities, targets, clamped](detail::TensorNode& n) {
                          n.backward_fn = [probabilities, targets, clamped, &n]() {
                              if (!probabilities.requires_grad()) return;
                              auto pg = probabilities.mutable_grad();
                              double inv = 1.0 / static_cast<double>(targets.size());
                              for (std::size_t i = 0; i < targets.size(); ++i) {
                                  double p = clamped[i];
                                  bool saturated = probabilities[i] <= kProbabilityClamp ||
                                                   probabilities[i] >= 1.0 - kProbabilityClamp;
                                  if (saturated) continue;  // clamp region has zero slope
                                  pg[i] += n.grad[0] * inv *
                                           (-(targets[i] / p) + (1.0 - targets[i]) / (1.0 - p));
                              }
                          };
                      });
}

/// Sum of Bernoulli negative log-likelihoods straight from logits,
/// numerically stable: nll = softplus(logit) - target * logit.
inline Tensor bernoulli_nll_from_logits(const Tensor& logits,
                                        const std::vector<double>& targets) {
    if (logits.size() != targets.size()) {
        throw ShapeError("bernoulli_nll_from_logits: logit/target count mismatch");
    }
    for (double t : targets) {
        if (t != 0.0 && t != 1.0) {
            throw ContractViolation("bernoulli_nll_from_logits: targets must be 0 or 1");
        }
    }
    auto softplus = [](double x) {
        return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    };
    std::vector<double> out(1, 0.0);
    for (std::size_t i = 0; i < targets.size(); ++i) {
        out[0] += softplus(logits[i]) - targets[i] * logits[i];
    }
    return Tape::emit({}, std::move(out), {logits},
                      [logits, targets](detail::TensorNode& n) {
                          n.backward_fn = [logits, targets, &n]() {
                              if (!logits.requires_grad()) return;
                              auto lg = logits.mutable_grad();
                              for (std::size_t i = 0; i < targets.size(); ++i) {
                                  double p = 1.0 / (1.0 + std::exp(-logits[i]));
                                  lg[i] += n.grad[0] * (p - targets[i]);
                              }
                          };
                      });
}

/// Cross entropy of a single class label against a logit vector.
inline Tensor cross_entropy(const Tensor& logits, int target_class) {
    if (logits.shape().size() != 1) {
        throw ShapeError("cross_entropy: expected rank-1 logits");
    }
    int classes = logits.shape()[0];
    if (target_class < 0 || target_class >= classes) {
        throw ContractViolation("cross_entropy: class " + std::to_string(target_class) +
                                " outside [0, " + std::to_string(classes) + ")");
    }
    double mx = *std::max_element(logits.values().begin(), logits.values().end());
    double lse = 0.0;
    for (double v : logits.values()) lse += std::exp(v - mx);
    lse = mx + std::log(lse);
    std::vector<double> out{lse - logits[target_class]};
    return Tape::emit({}, std::move(out), {logits},
                      [logits, target_class, lse](detail::TensorNode& n) {
                          n.backward_fn = [logits, target_class, lse, &n]() {
                              if (!logits.requires_grad()) return;
                              auto lg = logits.mutable_grad();
                              for (std::size_t i = 0; i < logits.size(); ++i) {
                                  double soft = std::exp(logits[i] - lse);
                                  double indicator =
                                      static_cast<int>(i) == target_class ? 1.0 : 0.0;
                                  lg[i] += n.grad[0] * (soft - indicator);
                              }
                          };
                      });
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

/// Adam with bias correction. Moment buffers are keyed by parameter name so
/// an optimizer follows its ParameterSet across steps.
class Adam {
  public:
    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                  double epsilon = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

    void step(const ParameterSet& params) {
        t_ += 1;
        double bc1 = 1.0 - std::pow(beta1_, t_);
        double bc2 = 1.0 - std::pow(beta2_, t_);
        for (const auto& [name, tensor] : params.entries()) {
            auto& m = moments_[name];
            if (m.first.size() != tensor.size()) {
                m.first.assign(tensor.size(), 0.0);
                m.second.assign(tensor.size(), 0.0);
            }
            auto values = tensor.mutable_values();
            auto grad = tensor.grad();
            for (std::size_t i = 0; i < tensor.size(); ++i) {
                double g = grad[i];
                m.first[i] = beta1_ * m.first[i] + (1.0 - beta1_) * g;
                m.second[i] = beta2_ * m.second[i] + (1.0 - beta2_) * g * g;
                double mhat = m.first[i] / bc1;
                double vhat = m.second[i] / bc2;
                values[i] -= lr_ * mhat / (std::sqrt(vhat) + epsilon_);
            }
        }
    }

    long step_count() const { return t_; }
    double learning_rate() const { return lr_; }

  private:
    double lr_, beta1_, beta2_, epsilon_;
    long t_ = 0;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

}  // namespace graphaug
