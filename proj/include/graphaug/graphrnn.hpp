#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "graphaug/checkpoint.hpp"
#include "graphaug/errors.hpp"
#include "graphaug/graph.hpp"
#include "graphaug/nn.hpp"
#include "graphaug/rng.hpp"
#include "graphaug/tensor.hpp"

namespace graphaug {

/// Shared training knobs for the generators.
struct TrainConfig {
    int epochs = 200;
    double learning_rate = 1e-3;
    int batch_size = 32;
    std::uint64_t seed = 0;
    int early_stop_patience = std::numeric_limits<int>::max();

    void validate() const {
        if (epochs < 0) throw ConfigError("epochs must be non-negative");
        if (learning_rate <= 0) throw ConfigError("learning rate must be positive");
        if (batch_size < 1) throw ConfigError("batch size must be positive");
        if (early_stop_patience < 1) throw ConfigError("patience must be positive");
    }
};

/// Adjacency vectors truncated to the last min(i-1, M) entries, the fixed
/// lookback window the recurrent generator works in. Entry order matches
/// AdjSequence (ascending predecessor index).
struct WindowedSequence {
    int node_count = 0;
    int bandwidth = 1;
    std::vector<std::vector<std::uint8_t>> vectors;
};

inline WindowedSequence truncate_sequence(const AdjSequence& s, int bandwidth) {
    s.validate();
    if (bandwidth < 1) throw ContractViolation("bandwidth must be >= 1");
    WindowedSequence w;
    w.node_count = s.node_count;
    w.bandwidth = bandwidth;
    for (const auto& vec : s.vectors) {
        int keep = std::min<int>(bandwidth, static_cast<int>(vec.size()));
        w.vectors.emplace_back(vec.end() - keep, vec.end());
    }
    return w;
}

inline Graph graph_from_windowed(const WindowedSequence& w) {
    std::vector<std::pair<int, int>> edges;
    for (std::size_t k = 0; k < w.vectors.size(); ++k) {
        int node = static_cast<int>(k) + 1;
        int width = static_cast<int>(w.vectors[k].size());
        for (int idx = 0; idx < width; ++idx) {
            if (w.vectors[k][idx]) edges.emplace_back(node - width + idx, node);
        }
    }
    return Graph(w.node_count, std::move(edges));
}

/// Farthest BFS lookback seen across sampled orderings; bounds the window
/// the recurrent model needs. Always at least 1.
inline int compute_bandwidth(std::span<const Graph> graphs, int samples_per_graph,
                             std::uint64_t seed) {
    if (graphs.empty()) throw EmptyDataset("compute_bandwidth needs graphs");
    Rng rng = make_rng(seed);
    int bandwidth = 1;
    for (const Graph& g : graphs) {
        int n = g.node_count();
        if (n < 2) continue;
        for (int s = 0; s < samples_per_graph; ++s) {
            NodeOrdering order = bfs_ordering(g, NodeOrdering::random(n, rng));
            std::vector<int> position(n);
            for (int i = 0; i < n; ++i) position[order.permutation[i]] = i;
            for (int i = 0; i < n; ++i) {
                int earliest = i;
                for (int u : g.neighbors(order.permutation[i])) {
                    if (position[u] < earliest) earliest = position[u];
                }
                bandwidth = std::max(bandwidth, i - earliest);
            }
        }
    }
    return bandwidth;
}

enum class GraphRnnHead { mlp, rnn };

struct GraphRnnConfig {
    int hidden_dim = 64;
    int bandwidth = 1;          // M: adjacency-vector window
    int max_nodes = 2;
    GraphRnnHead head = GraphRnnHead::mlp;
    int edge_hidden_dim = 16;   // only used by the recurrent head
    std::uint64_t seed = 0;

    void validate() const {
        if (bandwidth < 1) throw ConfigError("bandwidth must be >= 1");
        if (max_nodes < 2) throw ConfigError("max_nodes must be >= 2");
        if (hidden_dim < 1 || edge_hidden_dim < 1) {
            throw ConfigError("hidden dimensions must be positive");
        }
    }
};

/// Recurrent autoregressive generator for small graphs: a graph-level gated
/// cell consumes the previous adjacency window and a head emits a stop logit
/// plus Bernoulli logits for the next window. A sequence ends either at the
/// sampled stop event or at max_nodes.
class GraphRnnModel {
  public:
    explicit GraphRnnModel(const GraphRnnConfig& config)
        : config_(config),
          transition_params_(sub_seed(config.seed, "graphrnn.trans")),
          output_params_(sub_seed(config.seed, "graphrnn.out")) {
        config_.validate();
        transition_ = GruCell(transition_params_, "trans", config_.bandwidth,
                              config_.hidden_dim);
        h_init_ = transition_params_.add_embedding("h_init", config_.hidden_dim);
        stop_head_ = Affine(output_params_, "stop", config_.hidden_dim, 1);
        if (config_.head == GraphRnnHead::mlp) {
            out_hidden_ = Affine(output_params_, "mlp.hidden", config_.hidden_dim,
                                 config_.hidden_dim);
            out_edges_ = Affine(output_params_, "mlp.edges", config_.hidden_dim,
                                config_.bandwidth);
        } else {
            edge_init_ = Affine(output_params_, "edge.init", config_.hidden_dim,
                                config_.edge_hidden_dim);
            edge_cell_ = GruCell(output_params_, "edge.cell", 1, config_.edge_hidden_dim);
            edge_out_ = Affine(output_params_, "edge.out", config_.edge_hidden_dim, 1);
        }
    }

    const GraphRnnConfig& config() const { return config_; }
    const ParameterSet& transition_params() const { return transition_params_; }
    const ParameterSet& output_params() const { return output_params_; }

    Tensor initial_state() const { return h_init_; }

    /// Window encoding: right-aligned, zero-padded at the front, so entry
    /// M - t is the bit for the node t steps back.
    Tensor encode_window(const std::vector<std::uint8_t>& window) const {
        int m = config_.bandwidth;
        std::vector<double> x(m, 0.0);
        int width = static_cast<int>(window.size());
        for (int idx = 0; idx < width; ++idx) x[m - width + idx] = window[idx];
        return Tensor::constant({m}, std::move(x));
    }

    Tensor start_token() const {
        return Tensor::constant({config_.bandwidth},
                                std::vector<double>(config_.bandwidth, 1.0));
    }

    Tensor advance(const Tensor& h, const Tensor& x) const { return transition_.step(h, x); }

    Tensor stop_logit(const Tensor& h) const { return stop_head_(h); }

    /// Bernoulli logits for the `width` window entries of the next node,
    /// ascending predecessor order. Teacher bits are consumed by the
    /// recurrent head; the feed-forward head ignores them.
    Tensor edge_logits(const Tensor& h, int width,
                       const std::vector<std::uint8_t>* teacher_bits = nullptr,
                       Rng* sample_rng = nullptr,
                       std::vector<std::uint8_t>* sampled_out = nullptr) const {
        if (config_.head == GraphRnnHead::mlp) {
            Tensor all = out_edges_(relu(out_hidden_(h)));
            Tensor logits = slice(all, config_.bandwidth - width, width);
            if (sample_rng && sampled_out) {
                sampled_out->resize(width);
                for (int i = 0; i < width; ++i) {
                    double p = 1.0 / (1.0 + std::exp(-logits[i]));
                    (*sampled_out)[i] = std::bernoulli_distribution(p)(*sample_rng) ? 1 : 0;
                }
            }
            return logits;
        }
        // recurrent head: bits are produced nearest-predecessor first, each
        // conditioned on the previous bit
        Tensor state = tanh(edge_init_(h));
        Tensor prev_bit = Tensor::constant({1}, {1.0});
        std::vector<Tensor> logits_desc;
        std::vector<std::uint8_t> sampled_desc;
        for (int t = 0; t < width; ++t) {
            state = edge_cell_.step(state, prev_bit);
            Tensor logit = edge_out_(state);
            logits_desc.push_back(logit);
            double bit;
            if (teacher_bits) {
                bit = (*teacher_bits)[width - 1 - t];
            } else if (sample_rng) {
                double p = 1.0 / (1.0 + std::exp(-logit[0]));
                bit = std::bernoulli_distribution(p)(*sample_rng) ? 1.0 : 0.0;
                sampled_desc.push_back(bit > 0.5 ? 1 : 0);
            } else {
                bit = 0.0;
            }
            prev_bit = Tensor::constant({1}, {bit});
        }
        if (sample_rng && sampled_out) {
            sampled_out->assign(sampled_desc.rbegin(), sampled_desc.rend());
        }
        // reorder to ascending predecessor index to match window encoding
        std::vector<Tensor> logits_asc(logits_desc.rbegin(), logits_desc.rend());
        return concat(logits_asc);
    }

    void zero_grad() const {
        transition_params_.zero_grad();
        output_params_.zero_grad();
    }

    Checkpoint to_checkpoint() const {
        nlohmann::ordered_json meta;
        meta["generator_kind"] = "graphrnn";
        meta["hidden_dim"] = config_.hidden_dim;
        meta["bandwidth"] = config_.bandwidth;
        meta["max_nodes"] = config_.max_nodes;
        meta["head"] = config_.head == GraphRnnHead::mlp ? "mlp" : "rnn";
        meta["edge_hidden_dim"] = config_.edge_hidden_dim;
        Checkpoint ckpt = Checkpoint::from_params(transition_params_, meta);
        auto out_part = Checkpoint::from_params(output_params_, {});
        ckpt.seed = config_.seed;
        for (auto& entry : out_part.parameters) ckpt.parameters.push_back(std::move(entry));
        return ckpt;
    }

    static GraphRnnModel from_checkpoint(const Checkpoint& ckpt) {
        const auto& meta = ckpt.metadata;
        if (!meta.is_object() || meta.value("generator_kind", "") != "graphrnn") {
            throw CorruptFile("checkpoint is not a graphrnn model");
        }
        GraphRnnConfig config;
        config.hidden_dim = meta.at("hidden_dim").get<int>();
        config.bandwidth = meta.at("bandwidth").get<int>();
        config.max_nodes = meta.at("max_nodes").get<int>();
        config.head = meta.at("head").get<std::string>() == "rnn" ? GraphRnnHead::rnn
                                                                  : GraphRnnHead::mlp;
        config.edge_hidden_dim = meta.at("edge_hidden_dim").get<int>();
        config.seed = ckpt.seed;
        GraphRnnModel model(config);
        for (const auto& [name, payload] : ckpt.parameters) {
            const ParameterSet& target = model.transition_params_.contains(name)
                                             ? model.transition_params_
                                             : model.output_params_;
            Tensor t = target.get(name);
            if (t.shape() != payload.first) {
                throw CorruptFile("checkpoint shape mismatch for " + name);
            }
            std::copy(payload.second.begin(), payload.second.end(),
                      t.mutable_values().begin());
        }
        return model;
    }

  private:
    GraphRnnConfig config_;
    ParameterSet transition_params_;
    ParameterSet output_params_;
    GruCell transition_;
    Tensor h_init_;
    Affine stop_head_;
    Affine out_hidden_, out_edges_;   // mlp head
    Affine edge_init_, edge_out_;     // rnn head
    GruCell edge_cell_;
};

namespace detail {

// Teacher-forced negative log-likelihood of a windowed sequence, including
// the continue/stop decisions. Tensor-valued so it can drive training.
inline Tensor graphrnn_sequence_nll(const GraphRnnModel& model, const WindowedSequence& w) {
    const auto& config = model.config();
    int n = w.node_count;
    Tensor h = model.initial_state();
    Tensor x = model.start_token();
    std::vector<Tensor> losses;
    for (int i = 2; i <= n; ++i) {
        h = model.advance(h, x);
        // continue decision (stop bit = 0)
        losses.push_back(bernoulli_nll_from_logits(model.stop_logit(h), {0.0}));
        const auto& bits = w.vectors[i - 2];
        int width = static_cast<int>(bits.size());
        if (width > 0) {
            std::vector<double> targets(bits.begin(), bits.end());
            Tensor logits = model.edge_logits(h, width, &bits);
            losses.push_back(bernoulli_nll_from_logits(logits, targets));
        }
        x = model.encode_window(bits);
    }
    if (n < config.max_nodes) {
        h = model.advance(h, x);
        losses.push_back(bernoulli_nll_from_logits(model.stop_logit(h), {1.0}));
    }
    Tensor total = losses.front();
    for (std::size_t i = 1; i < losses.size(); ++i) total = add(total, losses[i]);
    return total;
}

}  // namespace detail

/// One fresh BFS training view of a graph: random permutation, BFS
/// reordering, sequentialization, window truncation.
inline WindowedSequence training_sequence(const Graph& g, int bandwidth, Rng& rng) {
    if (g.node_count() < 1) {
        throw ContractViolation("training_sequence needs at least one node");
    }
    if (g.node_count() == 1) return WindowedSequence{1, bandwidth, {}};
    NodeOrdering pi = NodeOrdering::random(g.node_count(), rng);
    NodeOrdering order = bfs_ordering(g, pi);
    return truncate_sequence(to_sequence(g, order), bandwidth);
}

/// Teacher-forced maximum-likelihood training. Returns the mean per-graph
/// negative log-likelihood (nats) per epoch.
inline std::vector<double> train(GraphRnnModel& model, std::span<const Graph> graphs,
                                 const TrainConfig& cfg) {
    cfg.validate();
    if (graphs.empty()) throw EmptyDataset("train needs graphs");
    for (std::size_t i = 0; i < graphs.size(); ++i) {
        if (graphs[i].node_count() > model.config().max_nodes) {
            throw GraphTooLarge("graph " + std::to_string(i) + " has " +
                                std::to_string(graphs[i].node_count()) +
                                " nodes, above the max_nodes cap of " +
                                std::to_string(model.config().max_nodes));
        }
    }
    Rng rng = make_rng(sub_seed(cfg.seed, "graphrnn.train"));
    Adam trans_opt(cfg.learning_rate), out_opt(cfg.learning_rate);
    std::vector<double> history;
    double best = std::numeric_limits<double>::infinity();
    int since_best = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_nll = 0.0;
        std::size_t index = 0;
        while (index < graphs.size()) {
            std::size_t batch_end =
                std::min(graphs.size(), index + static_cast<std::size_t>(cfg.batch_size));
            Tape tape;
            Tape::Scope scope(tape);
            model.zero_grad();
            Tensor batch_loss;
            for (std::size_t g = index; g < batch_end; ++g) {
                WindowedSequence w =
                    training_sequence(graphs[g], model.config().bandwidth, rng);
                Tensor nll = detail::graphrnn_sequence_nll(model, w);
                epoch_nll += nll.item();
                batch_loss = batch_loss.defined() ? add(batch_loss, nll) : nll;
            }
            batch_loss = scale(batch_loss, 1.0 / static_cast<double>(batch_end - index));
            tape.backward(batch_loss);
            trans_opt.step(model.transition_params());
            out_opt.step(model.output_params());
            index = batch_end;
        }
        double mean_nll = epoch_nll / static_cast<double>(graphs.size());
        history.push_back(mean_nll);
        if (mean_nll < best) {
            best = mean_nll;
            since_best = 0;
        } else if (++since_best >= cfg.early_stop_patience) {
            break;
        }
    }
    model.transition_params().check_finite();
    model.output_params().check_finite();
    return history;
}

/// Autoregressive sampling; terminates at the stop event or max_nodes.
inline Graph sample(const GraphRnnModel& model, Rng& rng) {
    const auto& config = model.config();
    WindowedSequence w{1, config.bandwidth, {}};
    Tensor h = model.initial_state();
    Tensor x = model.start_token();
    for (int i = 2; i <= config.max_nodes; ++i) {
        h = model.advance(h, x);
        double stop_p = 1.0 / (1.0 + std::exp(-model.stop_logit(h)[0]));
        if (std::bernoulli_distribution(stop_p)(rng)) break;
        int width = std::min(i - 1, config.bandwidth);
        std::vector<std::uint8_t> bits;
        model.edge_logits(h, width, nullptr, &rng, &bits);
        w.vectors.push_back(bits);
        w.node_count = i;
        x = model.encode_window(bits);
    }
    return graph_from_windowed(w);
}

/// Exact log-probability of a full adjacency sequence under the model,
/// teacher-forced, termination included. Sequences carrying an edge beyond
/// the lookback window have probability zero (-inf).
inline double sequence_log_prob(const GraphRnnModel& model, const AdjSequence& s) {
    s.validate();
    const auto& config = model.config();
    if (s.node_count > config.max_nodes) {
        throw GraphTooLarge("sequence encodes " + std::to_string(s.node_count) +
                            " nodes, above the max_nodes cap of " +
                            std::to_string(config.max_nodes));
    }
    if (s.node_count < 1) {
        throw ContractViolation("the generator cannot emit an empty graph");
    }
    for (const auto& vec : s.vectors) {
        int width = static_cast<int>(vec.size());
        for (int j = 0; j < width - config.bandwidth; ++j) {
            if (vec[j]) return -std::numeric_limits<double>::infinity();
        }
    }
    WindowedSequence w = truncate_sequence(s, config.bandwidth);
    return -detail::graphrnn_sequence_nll(model, w).item();
}

}  // namespace graphaug
