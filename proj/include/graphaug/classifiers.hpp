#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "graphaug/checkpoint.hpp"
#include "graphaug/dataset.hpp"
#include "graphaug/errors.hpp"
#include "graphaug/graph.hpp"
#include "graphaug/nn.hpp"
#include "graphaug/rng.hpp"
#include "graphaug/tensor.hpp"

namespace graphaug {

enum class ClassifierKind { graph_sage, gin0, gin_with_jk, gcn_with_jk, edge_pool };

inline std::string to_string(ClassifierKind kind) {
    switch (kind) {
        case ClassifierKind::graph_sage: return "GraphSAGE";
        case ClassifierKind::gin0: return "GIN0";
        case ClassifierKind::gin_with_jk: return "GINWithJK";
        case ClassifierKind::gcn_with_jk: return "GCNWithJK";
        case ClassifierKind::edge_pool: return "EdgePool";
    }
    return "GraphSAGE";
}

inline ClassifierKind classifier_kind_from_string(const std::string& s) {
    if (s == "GraphSAGE") return ClassifierKind::graph_sage;
    if (s == "GIN0") return ClassifierKind::gin0;
    if (s == "GINWithJK") return ClassifierKind::gin_with_jk;
    if (s == "GCNWithJK") return ClassifierKind::gcn_with_jk;
    if (s == "EdgePool") return ClassifierKind::edge_pool;
    throw ConfigError("unknown classifier kind: " + s);
}

inline const std::vector<ClassifierKind>& all_classifier_kinds() {
    static const std::vector<ClassifierKind> kinds = {
        ClassifierKind::graph_sage, ClassifierKind::gin0, ClassifierKind::gin_with_jk,
        ClassifierKind::gcn_with_jk, ClassifierKind::edge_pool};
    return kinds;
}

/// How raw graphs become input feature rows.
struct FeatureScheme {
    enum class Kind { degree_onehot, node_label_onehot, constant };
    Kind kind = Kind::degree_onehot;
    int degree_cap = 10;              // degrees above the cap share the top bucket
    std::vector<int> label_universe;  // distinct node labels, ascending

    int width() const {
        switch (kind) {
            case Kind::degree_onehot: return degree_cap + 1;
            case Kind::node_label_onehot: return static_cast<int>(label_universe.size());
            case Kind::constant: return 1;
        }
        return 1;
    }

    static FeatureScheme degree(int cap = 10) {
        FeatureScheme s;
        s.kind = Kind::degree_onehot;
        s.degree_cap = cap;
        return s;
    }

    static FeatureScheme constant() {
        FeatureScheme s;
        s.kind = Kind::constant;
        return s;
    }

    static FeatureScheme node_labels(std::vector<int> universe) {
        FeatureScheme s;
        s.kind = Kind::node_label_onehot;
        std::sort(universe.begin(), universe.end());
        universe.erase(std::unique(universe.begin(), universe.end()), universe.end());
        s.label_universe = std::move(universe);
        return s;
    }

    /// Default policy: node-label one-hots when the dataset carries node
    /// labels, otherwise capped degree one-hots.
    static FeatureScheme detect(const LabeledDataset& ds, int cap = 10) {
        bool all_labeled = !ds.graphs.empty();
        std::set<int> universe;
        for (const Graph& g : ds.graphs) {
            if (!g.node_labels()) {
                all_labeled = false;
                break;
            }
            for (int l : *g.node_labels()) universe.insert(l);
        }
        if (all_labeled) {
            return node_labels(std::vector<int>(universe.begin(), universe.end()));
        }
        return degree(cap);
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        switch (kind) {
            case Kind::degree_onehot: j["kind"] = "degree_onehot"; break;
            case Kind::node_label_onehot: j["kind"] = "node_label_onehot"; break;
            case Kind::constant: j["kind"] = "constant"; break;
        }
        j["degree_cap"] = degree_cap;
        j["label_universe"] = label_universe;
        return j;
    }

    static FeatureScheme from_json(const nlohmann::json& j) {
        FeatureScheme s;
        std::string kind = j.at("kind").get<std::string>();
        if (kind == "degree_onehot") {
            s.kind = Kind::degree_onehot;
        } else if (kind == "node_label_onehot") {
            s.kind = Kind::node_label_onehot;
        } else if (kind == "constant") {
            s.kind = Kind::constant;
        } else {
            throw CorruptFile("unknown feature scheme: " + kind);
        }
        s.degree_cap = j.at("degree_cap").get<int>();
        s.label_universe = j.at("label_universe").get<std::vector<int>>();
        return s;
    }
};

/// Builds the [n, f] input feature matrix for one graph.
inline Tensor node_features(const Graph& g, const FeatureScheme& scheme) {
    int n = g.node_count();
    int f = scheme.width();
    std::vector<double> values(static_cast<std::size_t>(n) * f, 0.0);
    switch (scheme.kind) {
        case FeatureScheme::Kind::constant:
            std::fill(values.begin(), values.end(), 1.0);
            break;
        case FeatureScheme::Kind::degree_onehot:
            for (int v = 0; v < n; ++v) {
                int bucket = std::min(g.degree(v), scheme.degree_cap);
                values[static_cast<std::size_t>(v) * f + bucket] = 1.0;
            }
            break;
        case FeatureScheme::Kind::node_label_onehot: {
            if (!g.node_labels()) {
                throw MissingNodeLabels(
                    "node_label_onehot features need node labels on every graph");
            }
            for (int v = 0; v < n; ++v) {
                int label = (*g.node_labels())[v];
                auto it = std::lower_bound(scheme.label_universe.begin(),
                                           scheme.label_universe.end(), label);
                if (it == scheme.label_universe.end() || *it != label) {
                    throw ContractViolation("node label " + std::to_string(label) +
                                            " is outside the feature universe");
                }
                values[static_cast<std::size_t>(v) * f +
                       (it - scheme.label_universe.begin())] = 1.0;
            }
            break;
        }
    }
    return Tensor::constant({n, f}, std::move(values));
}

namespace detail {

// Directed edge expansion with constant per-edge weights, the common core of
// the neighborhood aggregations.
struct EdgeIndex {
    std::vector<int> src, dst;
};

inline EdgeIndex directed_edges(const Graph& g) {
    EdgeIndex idx;
    idx.src.reserve(g.edge_count() * 2);
    idx.dst.reserve(g.edge_count() * 2);
    for (const auto& [u, v] : g.edges()) {
        idx.src.push_back(u);
        idx.dst.push_back(v);
        idx.src.push_back(v);
        idx.dst.push_back(u);
    }
    return idx;
}

inline Tensor rows_affine(const Tensor& x, const Affine& layer) {
    int n = x.shape()[0];
    return add(matmul(x, transpose_constant(layer.weight)),
               broadcast_rows(layer.bias, n));
}

// sum_{u in N(v)} w_e * x_u for constant edge weights.
inline Tensor weighted_neighbor_sum(const Tensor& x, const EdgeIndex& idx,
                                    const std::vector<double>& weights, int n) {
    if (idx.src.empty()) return Tensor::zeros({n, x.shape()[1]});
    Tensor gathered = gather_rows(x, idx.src);
    Tensor weighted = scale_rows(
        gathered, Tensor::constant({static_cast<int>(weights.size())}, weights));
    return scatter_add_rows(weighted, idx.dst, n);
}

}  // namespace detail

/// Greedy edge contraction with explicit scores, used by the EdgePool
/// classifier and directly testable. Edges are contracted highest score
/// first, skipping any edge touching an already-merged node; a merged node's
/// state is the sigmoid-gated sum of the pair. The mapping is total and
/// many-to-one onto the pooled nodes.
struct EdgePoolResult {
    Graph pooled;
    Tensor pooled_states;
    std::vector<int> node_mapping;  // original node -> pooled node
};

inline EdgePoolResult edge_pool_with_scores(const Graph& g, const Tensor& node_states,
                                            const std::vector<Tensor>& edge_scores) {
    int n = g.node_count();
    if (node_states.shape().size() != 2 || node_states.shape()[0] != n) {
        throw ShapeError("edge_pool: node_states must have one row per node");
    }
    if (edge_scores.size() != g.edges().size()) {
        throw ShapeError("edge_pool: one score per edge required");
    }
    // order candidate contractions by score, ties by canonical edge order
    std::vector<std::size_t> order(g.edges().size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        double sa = edge_scores[a][0], sb = edge_scores[b][0];
        if (sa != sb) return sa > sb;
        return g.edges()[a] < g.edges()[b];
    });
    std::vector<int> partner(n, -1);
    std::vector<std::size_t> partner_edge(n, 0);
    for (std::size_t e : order) {
        auto [u, v] = g.edges()[e];
        if (partner[u] == -1 && partner[v] == -1) {
            partner[u] = v;
            partner[v] = u;
            partner_edge[u] = e;
            partner_edge[v] = e;
        }
    }
    // pooled ids in ascending order of each cluster's smallest member
    EdgePoolResult result;
    result.node_mapping.assign(n, -1);
    std::vector<Tensor> pooled_rows;
    for (int v = 0; v < n; ++v) {
        if (result.node_mapping[v] != -1) continue;
        int id = static_cast<int>(pooled_rows.size());
        result.node_mapping[v] = id;
        if (partner[v] != -1) {
            result.node_mapping[partner[v]] = id;
            Tensor gate = sigmoid(edge_scores[partner_edge[v]]);
            pooled_rows.push_back(mul_scalar(
                add(select_row(node_states, v), select_row(node_states, partner[v])),
                gate));
        } else {
            pooled_rows.push_back(select_row(node_states, v));
        }
    }
    result.pooled_states = stack_rows(pooled_rows);
    std::set<std::pair<int, int>> pooled_edges;
    for (const auto& [u, v] : g.edges()) {
        int a = result.node_mapping[u], b = result.node_mapping[v];
        if (a != b) pooled_edges.insert({std::min(a, b), std::max(a, b)});
    }
    result.pooled = Graph(static_cast<int>(pooled_rows.size()),
                          {pooled_edges.begin(), pooled_edges.end()});
    return result;
}

struct ClassifierConfig {
    ClassifierKind kind = ClassifierKind::gin0;
    int num_layers = 3;
    int hidden_dim = 64;
    std::vector<int> class_labels;  // ordered label universe
    FeatureScheme features;
    std::uint64_t seed = 0;

    void validate() const {
        if (num_layers < 1) throw ConfigError("num_layers must be >= 1");
        if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
        if (class_labels.size() < 2) throw ConfigError("need at least two classes");
    }
};

/// The five graph classifiers behind one forward interface: message-passing
/// layers per kind, global mean readout, affine class head. JK variants
/// concatenate every layer's node states before the readout.
class ClassifierModel {
  public:
    explicit ClassifierModel(const ClassifierConfig& config)
        : config_(config), params_(sub_seed(config.seed, "classifier")) {
        config_.validate();
        int in = config_.features.width();
        int h = config_.hidden_dim;
        int classes = static_cast<int>(config_.class_labels.size());
        bool jk = config_.kind == ClassifierKind::gin_with_jk ||
                  config_.kind == ClassifierKind::gcn_with_jk;
        for (int l = 0; l < config_.num_layers; ++l) {
            std::string prefix = "layer" + std::to_string(l);
            int d_in = l == 0 ? in : h;
            switch (config_.kind) {
                case ClassifierKind::graph_sage:
                case ClassifierKind::edge_pool:
                    self_.emplace_back(params_, prefix + ".self", d_in, h);
                    neigh_.emplace_back(params_, prefix + ".neigh", d_in, h);
                    break;
                case ClassifierKind::gin0:
                case ClassifierKind::gin_with_jk:
                    mlp1_.emplace_back(params_, prefix + ".mlp1", d_in, h);
                    mlp2_.emplace_back(params_, prefix + ".mlp2", h, h);
                    break;
                case ClassifierKind::gcn_with_jk:
                    gcn_.emplace_back(params_, prefix + ".gcn", d_in, h);
                    break;
            }
            if (config_.kind == ClassifierKind::edge_pool &&
                l + 1 < config_.num_layers) {
                pool_score_.emplace_back(params_, prefix + ".pool", 2 * h, 1);
            }
        }
        head_ = Affine(params_, "head", jk ? h * config_.num_layers : h, classes);
        if (config_.kind == ClassifierKind::gin0 ||
            config_.kind == ClassifierKind::gin_with_jk) {
            epsilon_ = 0.0;  // GIN0 contract
        }
    }

    const ClassifierConfig& config() const { return config_; }
    const ParameterSet& params() const { return params_; }
    void zero_grad() const { params_.zero_grad(); }

    double epsilon() const { return epsilon_; }
    void set_epsilon(double eps) { epsilon_ = eps; }

    Tensor forward(const Graph& g) const {
        return forward(g, node_features(g, config_.features));
    }

    Tensor forward(const Graph& g, const Tensor& features) const {
        if (features.shape().size() != 2 || features.shape()[0] != g.node_count()) {
            throw ShapeError("features must have one row per node");
        }
        if (features.shape()[1] != config_.features.width()) {
            throw ShapeError("feature width " + std::to_string(features.shape()[1]) +
                             " does not match the scheme width " +
                             std::to_string(config_.features.width()));
        }
        switch (config_.kind) {
            case ClassifierKind::graph_sage: return forward_sage(g, features);
            case ClassifierKind::gin0: return forward_gin(g, features, false);
            case ClassifierKind::gin_with_jk: return forward_gin(g, features, true);
            case ClassifierKind::gcn_with_jk: return forward_gcn_jk(g, features);
            case ClassifierKind::edge_pool: return forward_edge_pool(g, features);
        }
        throw ContractViolation("unreachable classifier kind");
    }

    Checkpoint to_checkpoint() const {
        nlohmann::ordered_json meta;
        meta["classifier_kind"] = to_string(config_.kind);
        meta["num_layers"] = config_.num_layers;
        meta["hidden_dim"] = config_.hidden_dim;
        meta["class_labels"] = config_.class_labels;
        meta["feature_scheme"] = config_.features.to_json();
        Checkpoint ckpt = Checkpoint::from_params(params_, meta);
        ckpt.seed = config_.seed;
        return ckpt;
    }

    static ClassifierModel from_checkpoint(const Checkpoint& ckpt) {
        const auto& meta = ckpt.metadata;
        if (!meta.is_object() || !meta.contains("classifier_kind")) {
            throw CorruptFile("checkpoint is not a classifier model");
        }
        ClassifierConfig config;
        config.kind = classifier_kind_from_string(
            meta.at("classifier_kind").get<std::string>());
        config.num_layers = meta.at("num_layers").get<int>();
        config.hidden_dim = meta.at("hidden_dim").get<int>();
        config.class_labels = meta.at("class_labels").get<std::vector<int>>();
        config.features = FeatureScheme::from_json(meta.at("feature_scheme"));
        config.seed = ckpt.seed;
        ClassifierModel model(config);
        ckpt.restore_into(model.params_);
        return model;
    }

  private:
    Tensor readout(const Tensor& node_states) const {
        return head_(mean_rows(node_states));
    }

    Tensor forward_sage(const Graph& g, const Tensor& features) const {
        auto idx = detail::directed_edges(g);
        std::vector<double> weights(idx.src.size());
        for (std::size_t e = 0; e < idx.src.size(); ++e) {
            weights[e] = 1.0 / g.degree(idx.dst[e]);
        }
        Tensor x = features;
        for (int l = 0; l < config_.num_layers; ++l) {
            Tensor neighbor_mean =
                detail::weighted_neighbor_sum(x, idx, weights, g.node_count());
            x = relu(add(detail::rows_affine(x, self_[l]),
                         detail::rows_affine(neighbor_mean, neigh_[l])));
        }
        return readout(x);
    }

    Tensor forward_gin(const Graph& g, const Tensor& features, bool jk) const {
        auto idx = detail::directed_edges(g);
        std::vector<double> ones(idx.src.size(), 1.0);
        Tensor x = features;
        std::vector<Tensor> per_layer;
        for (int l = 0; l < config_.num_layers; ++l) {
            Tensor neighbor_sum =
                detail::weighted_neighbor_sum(x, idx, ones, g.node_count());
            Tensor combined = add(scale(x, 1.0 + epsilon_), neighbor_sum);
            x = relu(detail::rows_affine(
                relu(detail::rows_affine(combined, mlp1_[l])), mlp2_[l]));
            per_layer.push_back(x);
        }
        if (!jk) return readout(x);
        return readout(concat_columns(per_layer));
    }

    Tensor forward_gcn_jk(const Graph& g, const Tensor& features) const {
        // symmetric normalization with self-loops: c_uv = 1/sqrt(d~u d~v)
        auto idx = detail::directed_edges(g);
        std::vector<double> weights;
        weights.reserve(idx.src.size() + g.node_count());
        for (std::size_t e = 0; e < idx.src.size(); ++e) {
            weights.push_back(1.0 / std::sqrt((g.degree(idx.src[e]) + 1.0) *
                                              (g.degree(idx.dst[e]) + 1.0)));
        }
        for (int v = 0; v < g.node_count(); ++v) {
            idx.src.push_back(v);
            idx.dst.push_back(v);
            weights.push_back(1.0 / (g.degree(v) + 1.0));
        }
        Tensor x = features;
        std::vector<Tensor> per_layer;
        for (int l = 0; l < config_.num_layers; ++l) {
            Tensor propagated =
                detail::weighted_neighbor_sum(x, idx, weights, g.node_count());
            x = relu(detail::rows_affine(propagated, gcn_[l]));
            per_layer.push_back(x);
        }
        return readout(concat_columns(per_layer));
    }

    Tensor forward_edge_pool(const Graph& g, const Tensor& features) const {
        Graph current = g;
        Tensor x = features;
        for (int l = 0; l < config_.num_layers; ++l) {
            auto idx = detail::directed_edges(current);
            std::vector<double> weights(idx.src.size());
            for (std::size_t e = 0; e < idx.src.size(); ++e) {
                weights[e] = 1.0 / current.degree(idx.dst[e]);
            }
            Tensor neighbor_mean =
                detail::weighted_neighbor_sum(x, idx, weights, current.node_count());
            x = relu(add(detail::rows_affine(x, self_[l]),
                         detail::rows_affine(neighbor_mean, neigh_[l])));
            if (l + 1 < config_.num_layers) {
                std::vector<Tensor> scores;
                scores.reserve(current.edges().size());
                for (const auto& [u, v] : current.edges()) {
                    scores.push_back(pool_score_[l](
                        concat({select_row(x, u), select_row(x, v)})));
                }
                auto pooled = edge_pool_with_scores(current, x, scores);
                current = pooled.pooled;
                x = pooled.pooled_states;
            }
        }
        return readout(x);
    }

    static Tensor concat_columns(const std::vector<Tensor>& parts) {
        int n = parts.front().shape()[0];
        std::vector<Tensor> rows;
        rows.reserve(n);
        for (int r = 0; r < n; ++r) {
            std::vector<Tensor> pieces;
            pieces.reserve(parts.size());
            for (const Tensor& p : parts) pieces.push_back(select_row(p, r));
            rows.push_back(concat(pieces));
        }
        return stack_rows(rows);
    }

    ClassifierConfig config_;
    ParameterSet params_;
    std::vector<Affine> self_, neigh_;    // GraphSAGE / EdgePool convs
    std::vector<Affine> mlp1_, mlp2_;     // GIN MLPs
    std::vector<Affine> gcn_;             // GCN layers
    std::vector<Affine> pool_score_;      // EdgePool edge scorers
    Affine head_;
    double epsilon_ = 0.0;
};

/// Index of a graph's class label within the model's label universe.
inline int class_index(const ClassifierModel& model, const Graph& g) {
    const auto& labels = model.config().class_labels;
    auto it = std::find(labels.begin(), labels.end(), *g.class_label());
    if (it == labels.end()) {
        throw ClassMismatch("graph class " + std::to_string(*g.class_label()) +
                            " is unknown to the classifier");
    }
    return static_cast<int>(it - labels.begin());
}

inline int predict_index(const ClassifierModel& model, const Graph& g) {
    Tensor logits = model.forward(g);
    int best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[best]) best = static_cast<int>(i);
    }
    return best;
}

inline int predict_label(const ClassifierModel& model, const Graph& g) {
    return model.config().class_labels[predict_index(model, g)];
}

/// Fraction of argmax-correct predictions on a frozen model.
inline double evaluate(const ClassifierModel& model, const LabeledDataset& ds) {
    if (ds.graphs.empty()) throw EmptyDataset("evaluate needs a non-empty set");
    int correct = 0;
    for (const Graph& g : ds.graphs) {
        if (predict_label(model, g) == *g.class_label()) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.graphs.size());
}

struct ClassifierTrainConfig {
    int epochs = 100;
    double learning_rate = 1e-3;
    int batch_size = 32;
    int patience = 25;  // epochs without a validation improvement
    std::uint64_t seed = 0;

    void validate() const {
        if (epochs < 1) {
            throw ContractViolation("training needs at least one epoch; "
                                    "best_epoch would be undefined");
        }
        if (learning_rate <= 0 || batch_size < 1 || patience < 1) {
            throw ConfigError("learning rate, batch size, and patience must be positive");
        }
    }
};

struct TrainRecord {
    std::vector<double> train_loss;     // per epoch, mean cross entropy
    std::vector<double> val_accuracy;   // per epoch
    int best_epoch = 0;                 // 1-based, earliest maximum
    std::optional<double> test_accuracy_at_best;
};

/// Cross-entropy training with per-epoch validation; the returned model
/// carries the parameters of the earliest best-validation epoch.
inline TrainRecord train_classifier(ClassifierModel& model, const LabeledDataset& train_set,
                                    const LabeledDataset& val_set,
                                    const ClassifierTrainConfig& cfg) {
    cfg.validate();
    if (train_set.graphs.empty() || val_set.graphs.empty()) {
        throw EmptyDataset("train and validation sets must be non-empty");
    }
    std::set<int> train_classes;
    for (const Graph& g : train_set.graphs) train_classes.insert(*g.class_label());
    for (const Graph& g : val_set.graphs) {
        if (!train_classes.count(*g.class_label())) {
            throw ClassMismatch("class " + std::to_string(*g.class_label()) +
                                " appears in validation but not in training");
        }
    }

    Rng rng = make_rng(sub_seed(cfg.seed, "classifier.train"));
    Adam opt(cfg.learning_rate);
    TrainRecord record;
    double best_acc = -1.0;
    std::vector<std::vector<double>> best_values;

    std::vector<std::size_t> order(train_set.graphs.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t index = 0;
        while (index < order.size()) {
            std::size_t batch_end =
                std::min(order.size(), index + static_cast<std::size_t>(cfg.batch_size));
            Tape tape;
            Tape::Scope scope(tape);
            model.zero_grad();
            Tensor batch_loss;
            for (std::size_t k = index; k < batch_end; ++k) {
                const Graph& g = train_set.graphs[order[k]];
                Tensor loss = cross_entropy(model.forward(g), class_index(model, g));
                epoch_loss += loss.item();
                batch_loss = batch_loss.defined() ? add(batch_loss, loss) : loss;
            }
            batch_loss = scale(batch_loss, 1.0 / static_cast<double>(batch_end - index));
            tape.backward(batch_loss);
            opt.step(model.params());
            index = batch_end;
        }
        record.train_loss.push_back(epoch_loss /
                                    static_cast<double>(train_set.graphs.size()));
        double acc = evaluate(model, val_set);
        record.val_accuracy.push_back(acc);
        if (acc > best_acc) {
            best_acc = acc;
            record.best_epoch = epoch + 1;
            best_values.clear();
            for (const auto& [name, t] : model.params().entries()) {
                best_values.emplace_back(t.values().begin(), t.values().end());
            }
        } else if (epoch + 1 - record.best_epoch >= cfg.patience) {
            break;
        }
    }
    // restore the earliest-best parameters
    for (std::size_t p = 0; p < best_values.size(); ++p) {
        auto values = model.params().entries()[p].second.mutable_values();
        std::copy(best_values[p].begin(), best_values[p].end(), values.begin());
    }
    return record;
}

}  // namespace graphaug
