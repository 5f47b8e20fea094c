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
#include "graphaug/graphrnn.hpp"  // TrainConfig
#include "graphaug/nn.hpp"
#include "graphaug/rng.hpp"
#include "graphaug/tensor.hpp"

namespace graphaug {

/// Deterministic training ordering: descending degree, ties by discovery
/// position of a BFS from the highest-degree node, remaining ties by index.
inline NodeOrdering canonical_ordering(const Graph& g) {
    int n = g.node_count();
    std::vector<int> discovery(n, std::numeric_limits<int>::max());
    std::vector<bool> visited(n, false);
    int clock = 0;
    auto best_unvisited = [&]() {
        int best = -1;
        for (int v = 0; v < n; ++v) {
            if (visited[v]) continue;
            if (best == -1 || g.degree(v) > g.degree(best)) best = v;
        }
        return best;
    };
    for (int start = best_unvisited(); start != -1; start = best_unvisited()) {
        std::deque<int> queue{start};
        visited[start] = true;
        while (!queue.empty()) {
            int v = queue.front();
            queue.pop_front();
            discovery[v] = clock++;
            for (int u : g.neighbors(v)) {  // neighbors are in ascending index order
                if (!visited[u]) {
                    visited[u] = true;
                    queue.push_back(u);
                }
            }
        }
    }
    NodeOrdering order = NodeOrdering::identity(n);
    std::stable_sort(order.permutation.begin(), order.permutation.end(),
                     [&](int a, int b) {
                         if (g.degree(a) != g.degree(b)) return g.degree(a) > g.degree(b);
                         if (discovery[a] != discovery[b]) return discovery[a] < discovery[b];
                         return a < b;
                     });
    return order;
}

/// One autoregressive step of block-wise generation: the decided prefix,
/// the rows emitted this step, and their candidate lower-triangular pairs.
/// Rows are 1-based to match the row indexing of the lower triangle.
struct BlockStep {
    int step_index = 1;
    Graph prefix;                                   // graph on the first (rows.front()-1) positions
    std::vector<int> rows;                          // ascending, contiguous
    std::vector<std::pair<int, int>> candidate_pairs;  // (i, j), j < i, i in rows

    void validate() const {
        if (rows.empty()) throw ContractViolation("block step has no rows");
        for (std::size_t k = 1; k < rows.size(); ++k) {
            if (rows[k] != rows[k - 1] + 1) {
                throw ContractViolation("block rows must be contiguous ascending");
            }
        }
        if (prefix.node_count() != rows.front() - 1) {
            throw ContractViolation("prefix has " + std::to_string(prefix.node_count()) +
                                    " nodes but the block starts at row " +
                                    std::to_string(rows.front()));
        }
        std::size_t expected = 0;
        for (int i : rows) expected += static_cast<std::size_t>(i - 1);
        if (candidate_pairs.size() != expected) {
            throw ContractViolation("candidate pairs must enumerate the block's "
                                    "lower-triangular entries");
        }
        std::size_t k = 0;
        for (int i : rows) {
            for (int j = 1; j < i; ++j, ++k) {
                if (candidate_pairs[k] != std::make_pair(i, j)) {
                    throw ContractViolation("candidate pair order must be row-major");
                }
            }
        }
    }
};

/// Row coverage plan: step t spans rows [(t-1)*stride + 1, (t-1)*stride + B];
/// each step emits the rows not covered before, so stride = B gives the
/// non-overlapping block partition.
inline std::vector<std::pair<int, int>> block_row_plan(int n, int block_size, int stride) {
    if (block_size < 1) throw InvalidBlockSize("block size must be positive");
    if (stride < 1 || stride > block_size) {
        throw ConfigError("stride must lie in [1, block_size]");
    }
    std::vector<std::pair<int, int>> plan;  // decided (first, last) per step
    int covered = 0;
    for (int t = 1; covered < n; ++t) {
        int block_end = std::min(n, (t - 1) * stride + block_size);
        if (block_end <= covered) continue;
        plan.emplace_back(covered + 1, block_end);
        covered = block_end;
    }
    return plan;
}

struct GranConfig {
    int hidden_dim = 64;
    int block_size = 1;   // B
    int stride = 0;       // rows advanced per step; 0 means match block_size
    int rounds = 2;       // message-passing rounds per block
    int max_nodes = 2;
    std::uint64_t seed = 0;

    void validate() const {
        if (block_size < 1) throw ConfigError("block_size must be >= 1");
        if (stride < 1 || stride > block_size) {
            throw ConfigError("stride must lie in [1, block_size]");
        }
        if (rounds < 1) throw ConfigError("rounds must be >= 1");
        if (max_nodes < 1) throw ConfigError("max_nodes must be >= 1");
        if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
    }
};

struct BlockForwardResult {
    Tensor logits;                      // undefined when there are no candidates
    std::vector<double> probabilities;  // sigmoid of logits, candidate order
};

/// Block-wise generator for larger graphs: each step runs attention message
/// passing over the decided prefix plus the block's nodes (seeded by learned
/// known/unknown embeddings, candidates wired in for message flow), then an
/// edge head scores every candidate pair.
class GranModel {
  public:
    explicit GranModel(const GranConfig& config)
        : config_(config), params_(sub_seed(config.seed, "gran")) {
        if (config_.stride == 0) config_.stride = config_.block_size;
        config_.validate();
        known_embed_ = params_.add_embedding("known_embed", config_.hidden_dim);
        unknown_embed_ = params_.add_embedding("unknown_embed", config_.hidden_dim);
        attention_ = AttentionParams(params_, "attn", config_.hidden_dim);
        edge_hidden_ = Affine(params_, "edge.hidden", 2 * config_.hidden_dim,
                              config_.hidden_dim);
        edge_out_ = Affine(params_, "edge.out", config_.hidden_dim, 1);
    }

    const GranConfig& config() const { return config_; }
    const ParameterSet& gnn_params() const { return params_; }
    void zero_grad() const { params_.zero_grad(); }

    BlockForwardResult block_forward(const BlockStep& step) const {
        step.validate();
        BlockForwardResult result;
        if (step.candidate_pairs.empty()) return result;
        int total_nodes = step.rows.back();
        int prefix_nodes = step.prefix.node_count();

        std::vector<Tensor> state_rows;
        state_rows.reserve(total_nodes);
        for (int v = 0; v < total_nodes; ++v) {
            state_rows.push_back(v < prefix_nodes ? known_embed_ : unknown_embed_);
        }
        Tensor states = stack_rows(state_rows);

        std::vector<std::pair<int, int>> message_edges = step.prefix.edges();
        for (const auto& [i, j] : step.candidate_pairs) {
            message_edges.emplace_back(i - 1, j - 1);  // rows are 1-based
        }
        for (int round = 0; round < config_.rounds; ++round) {
            states = attention_message_pass(attention_, states, message_edges);
        }

        std::vector<Tensor> logit_parts;
        logit_parts.reserve(step.candidate_pairs.size());
        for (const auto& [i, j] : step.candidate_pairs) {
            Tensor pair_state = concat({select_row(states, i - 1), select_row(states, j - 1)});
            logit_parts.push_back(edge_out_(tanh(edge_hidden_(pair_state))));
        }
        result.logits = concat(logit_parts);
        result.probabilities.reserve(result.logits.size());
        for (double l : result.logits.values()) {
            result.probabilities.push_back(1.0 / (1.0 + std::exp(-l)));
        }
        return result;
    }

    Checkpoint to_checkpoint() const {
        nlohmann::ordered_json meta;
        meta["generator_kind"] = "gran";
        meta["hidden_dim"] = config_.hidden_dim;
        meta["block_size"] = config_.block_size;
        meta["stride"] = config_.stride;
        meta["rounds"] = config_.rounds;
        meta["max_nodes"] = config_.max_nodes;
        Checkpoint ckpt = Checkpoint::from_params(params_, meta);
        ckpt.seed = config_.seed;
        return ckpt;
    }

    static GranModel from_checkpoint(const Checkpoint& ckpt) {
        const auto& meta = ckpt.metadata;
        if (!meta.is_object() || meta.value("generator_kind", "") != "gran") {
            throw CorruptFile("checkpoint is not a gran model");
        }
        GranConfig config;
        config.hidden_dim = meta.at("hidden_dim").get<int>();
        config.block_size = meta.at("block_size").get<int>();
        config.stride = meta.at("stride").get<int>();
        config.rounds = meta.at("rounds").get<int>();
        config.max_nodes = meta.at("max_nodes").get<int>();
        config.seed = ckpt.seed;
        GranModel model(config);
        ckpt.restore_into(model.params_);
        return model;
    }

  private:
    GranConfig config_;
    ParameterSet params_;
    Tensor known_embed_, unknown_embed_;
    AttentionParams attention_;
    Affine edge_hidden_, edge_out_;
};

namespace detail {

// Teacher-forced block steps of a graph under the given ordering.
inline std::vector<BlockStep> teacher_steps(const Graph& g, const NodeOrdering& order,
                                            int block_size, int stride) {
    int n = g.node_count();
    auto bit = [&](int i, int j) {  // 1-based rows under the ordering
        return g.has_edge(order.permutation[i - 1], order.permutation[j - 1]);
    };
    std::vector<BlockStep> steps;
    int t = 1;
    for (const auto& [first, last] : block_row_plan(n, block_size, stride)) {
        BlockStep step;
        step.step_index = t++;
        std::vector<std::pair<int, int>> prefix_edges;
        for (int i = 2; i < first; ++i) {
            for (int j = 1; j < i; ++j) {
                if (bit(i, j)) prefix_edges.emplace_back(i - 1, j - 1);
            }
        }
        step.prefix = Graph(first - 1, std::move(prefix_edges));
        for (int i = first; i <= last; ++i) {
            step.rows.push_back(i);
            for (int j = 1; j < i; ++j) step.candidate_pairs.emplace_back(i, j);
        }
        steps.push_back(std::move(step));
    }
    return steps;
}

inline Tensor gran_graph_nll(const GranModel& model, const Graph& g,
                             const NodeOrdering& order) {
    auto steps = teacher_steps(g, order, model.config().block_size,
                               model.config().stride);
    Tensor total;
    for (const auto& step : steps) {
        auto forward = model.block_forward(step);
        if (!forward.logits.defined()) continue;
        std::vector<double> targets;
        targets.reserve(step.candidate_pairs.size());
        for (const auto& [i, j] : step.candidate_pairs) {
            targets.push_back(g.has_edge(order.permutation[i - 1],
                                         order.permutation[j - 1])
                                  ? 1.0
                                  : 0.0);
        }
        Tensor nll = bernoulli_nll_from_logits(forward.logits, targets);
        total = total.defined() ? add(total, nll) : nll;
    }
    if (!total.defined()) total = Tensor::scalar(0.0);
    return total;
}

}  // namespace detail

/// Teacher-forced training over the block factorization under the canonical
/// ordering. Returns mean per-graph negative log-likelihood per epoch.
inline std::vector<double> train(GranModel& model, std::span<const Graph> graphs,
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
    std::vector<NodeOrdering> orderings;
    orderings.reserve(graphs.size());
    for (const Graph& g : graphs) orderings.push_back(canonical_ordering(g));

    Adam opt(cfg.learning_rate);
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
                Tensor nll = detail::gran_graph_nll(model, graphs[g], orderings[g]);
                epoch_nll += nll.item();
                batch_loss = batch_loss.defined() ? add(batch_loss, nll) : nll;
            }
            if (batch_loss.requires_grad()) {
                batch_loss =
                    scale(batch_loss, 1.0 / static_cast<double>(batch_end - index));
                tape.backward(batch_loss);
                opt.step(model.gnn_params());
            }
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
    model.gnn_params().check_finite();
    return history;
}

/// Samples a graph of exactly target_nodes nodes, one block of rows at a
/// time; every lower-triangular entry is one Bernoulli decision.
inline Graph sample(const GranModel& model, Rng& rng, int target_nodes) {
    if (target_nodes < 1 || target_nodes > model.config().max_nodes) {
        throw InvalidTarget("target_nodes " + std::to_string(target_nodes) +
                            " outside [1, " + std::to_string(model.config().max_nodes) +
                            "]");
    }
    std::vector<std::pair<int, int>> decided_edges;  // 0-based positions
    int t = 1;
    for (const auto& [first, last] :
         block_row_plan(target_nodes, model.config().block_size, model.config().stride)) {
        BlockStep step;
        step.step_index = t++;
        step.prefix = Graph(first - 1, decided_edges);
        for (int i = first; i <= last; ++i) {
            step.rows.push_back(i);
            for (int j = 1; j < i; ++j) step.candidate_pairs.emplace_back(i, j);
        }
        auto forward = model.block_forward(step);
        for (std::size_t k = 0; k < step.candidate_pairs.size(); ++k) {
            if (std::bernoulli_distribution(forward.probabilities[k])(rng)) {
                const auto& [i, j] = step.candidate_pairs[k];
                decided_edges.emplace_back(i - 1, j - 1);
            }
        }
    }
    return Graph(target_nodes, std::move(decided_edges));
}

/// Log-probability of g under the block factorization. Defaults to the
/// canonical training ordering; pass an explicit ordering to score a raw
/// lower-triangle outcome (as the exhaustive normalization check does).
inline double graph_log_prob(const GranModel& model, const Graph& g,
                             const NodeOrdering* ordering = nullptr) {
    if (g.node_count() > model.config().max_nodes) {
        throw GraphTooLarge("graph has " + std::to_string(g.node_count()) +
                            " nodes, above the max_nodes cap of " +
                            std::to_string(model.config().max_nodes));
    }
    if (g.node_count() < 1) throw ContractViolation("graph must have at least one node");
    NodeOrdering order = ordering ? *ordering : canonical_ordering(g);
    order.validate(g.node_count());
    return -detail::gran_graph_nll(model, g, order).item();
}

/// Draws a generation size from the empirical node-count distribution.
inline int sample_target_size(std::span<const int> training_sizes, Rng& rng) {
    if (training_sizes.empty()) {
        throw EmptyDataset("sample_target_size needs observed sizes");
    }
    std::uniform_int_distribution<std::size_t> pick(0, training_sizes.size() - 1);
    return training_sizes[pick(rng)];
}

}  // namespace graphaug
