#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "graphaug/errors.hpp"
#include "graphaug/rng.hpp"

namespace graphaug {

/// Immutable simple undirected graph. Edges are stored canonically as
/// (min, max) pairs in ascending order; self-loops and duplicates are
/// rejected at construction.
class Graph {
  public:
    Graph() = default;

    Graph(int node_count, std::vector<std::pair<int, int>> edges,
          std::optional<std::vector<int>> node_labels = std::nullopt,
          std::optional<int> class_label = std::nullopt)
        : node_count_(node_count),
          node_labels_(std::move(node_labels)),
          class_label_(class_label) {
        if (node_count_ < 0) throw InvalidGraph("negative node count");
        if (node_labels_ && static_cast<int>(node_labels_->size()) != node_count_) {
            throw InvalidGraph("node label list length does not match node count");
        }
        for (auto& [u, v] : edges) {
            if (u == v) throw InvalidGraph("self-loop on node " + std::to_string(u));
            if (u < 0 || v < 0 || u >= node_count_ || v >= node_count_) {
                throw InvalidGraph("edge endpoint out of range: (" + std::to_string(u) +
                                   ", " + std::to_string(v) + ")");
            }
            if (u > v) std::swap(u, v);
        }
        std::sort(edges.begin(), edges.end());
        auto dup = std::adjacent_find(edges.begin(), edges.end());
        if (dup != edges.end()) {
            throw InvalidGraph("duplicate edge (" + std::to_string(dup->first) + ", " +
                               std::to_string(dup->second) + ")");
        }
        edges_ = std::move(edges);
        adjacency_.assign(node_count_, {});
        for (const auto& [u, v] : edges_) {
            adjacency_[u].push_back(v);
            adjacency_[v].push_back(u);
        }
        for (auto& nbrs : adjacency_) std::sort(nbrs.begin(), nbrs.end());
    }

    int node_count() const { return node_count_; }
    int edge_count() const { return static_cast<int>(edges_.size()); }
    const std::vector<std::pair<int, int>>& edges() const { return edges_; }
    const std::vector<int>& neighbors(int v) const { return adjacency_[v]; }
    int degree(int v) const { return static_cast<int>(adjacency_[v].size()); }

    bool has_edge(int u, int v) const {
        if (u == v) return false;
        const auto& nbrs = adjacency_[std::min(u, v)];
        return std::binary_search(nbrs.begin(), nbrs.end(), std::max(u, v));
    }

    const std::optional<std::vector<int>>& node_labels() const { return node_labels_; }
    const std::optional<int>& class_label() const { return class_label_; }

    Graph with_class_label(int label) const {
        return Graph(node_count_, edges_, node_labels_, label);
    }

    bool operator==(const Graph& other) const {
        return node_count_ == other.node_count_ && edges_ == other.edges_ &&
               node_labels_ == other.node_labels_ && class_label_ == other.class_label_;
    }

  private:
    int node_count_ = 0;
    std::vector<std::pair<int, int>> edges_;
    std::vector<std::vector<int>> adjacency_;
    std::optional<std::vector<int>> node_labels_;
    std::optional<int> class_label_;
};

/// A node ordering pi: position k in the ordering holds original node
/// index permutation[k].
struct NodeOrdering {
    std::vector<int> permutation;

    static NodeOrdering identity(int n) {
        NodeOrdering pi;
        pi.permutation.resize(n);
        std::iota(pi.permutation.begin(), pi.permutation.end(), 0);
        return pi;
    }

    static NodeOrdering random(int n, Rng& rng) {
        NodeOrdering pi = identity(n);
        std::shuffle(pi.permutation.begin(), pi.permutation.end(), rng);
        return pi;
    }

    void validate(int node_count) const {
        if (static_cast<int>(permutation.size()) != node_count) {
            throw InvalidOrdering("ordering has " + std::to_string(permutation.size()) +
                                  " entries for a graph with " +
                                  std::to_string(node_count) + " nodes");
        }
        std::vector<bool> seen(node_count, false);
        for (int v : permutation) {
            if (v < 0 || v >= node_count || seen[v]) {
                throw InvalidOrdering("ordering is not a bijection on [0, n)");
            }
            seen[v] = true;
        }
    }

    bool operator==(const NodeOrdering& other) const = default;
    bool operator<(const NodeOrdering& other) const {
        return permutation < other.permutation;
    }
};

/// The adjacency-vector sequence of a graph under some ordering: vector k
/// (0-based) holds the k+1 edge bits between ordered node k+2 and its
/// predecessors. node_count is kept explicitly so the empty and one-node
/// graphs stay distinguishable.
struct AdjSequence {
    int node_count = 0;
    std::vector<std::vector<std::uint8_t>> vectors;

    void validate() const {
        int expected = node_count == 0 ? 0 : node_count - 1;
        if (static_cast<int>(vectors.size()) != expected) {
            throw MalformedSequence("sequence for " + std::to_string(node_count) +
                                    " nodes must have " + std::to_string(expected) +
                                    " vectors, got " + std::to_string(vectors.size()));
        }
        for (std::size_t k = 0; k < vectors.size(); ++k) {
            if (vectors[k].size() != k + 1) {
                throw MalformedSequence("vector " + std::to_string(k) + " has length " +
                                        std::to_string(vectors[k].size()) + ", expected " +
                                        std::to_string(k + 1));
            }
            for (auto bit : vectors[k]) {
                if (bit > 1) throw MalformedSequence("sequence entries must be 0 or 1");
            }
        }
    }

    bool operator==(const AdjSequence& other) const = default;
    bool operator<(const AdjSequence& other) const {
        return std::tie(node_count, vectors) < std::tie(other.node_count, other.vectors);
    }
};

/// Row blocks of the lower-triangular adjacency: block t covers rows
/// [first, last] (1-based) with every block of size block_size except
/// possibly the last.
struct LowerTriBlocks {
    int block_size = 1;
    int total_rows = 0;
    std::vector<std::pair<int, int>> blocks;  // inclusive 1-based row ranges
};

using BinaryMatrix = std::vector<std::vector<std::uint8_t>>;

/// A^pi with entry (i, j) = 1 iff (pi(i), pi(j)) is an edge.
inline BinaryMatrix adjacency_matrix(const Graph& g, const NodeOrdering& pi) {
    pi.validate(g.node_count());
    int n = g.node_count();
    BinaryMatrix a(n, std::vector<std::uint8_t>(n, 0));
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (g.has_edge(pi.permutation[i], pi.permutation[j])) {
                a[i][j] = 1;
                a[j][i] = 1;
            }
        }
    }
    return a;
}

/// Sequentializes g under pi: entry j of vector for ordered node i is the
/// edge bit between ordered nodes i and j+1.
inline AdjSequence to_sequence(const Graph& g, const NodeOrdering& pi) {
    pi.validate(g.node_count());
    AdjSequence s;
    s.node_count = g.node_count();
    for (int i = 2; i <= g.node_count(); ++i) {
        std::vector<std::uint8_t> row(i - 1, 0);
        for (int j = 1; j < i; ++j) {
            row[j - 1] = g.has_edge(pi.permutation[i - 1], pi.permutation[j - 1]) ? 1 : 0;
        }
        s.vectors.push_back(std::move(row));
    }
    return s;
}

/// Rebuilds the graph a sequence encodes; inverse of to_sequence up to the
/// relabeling induced by the ordering.
inline Graph from_sequence(const AdjSequence& s) {
    s.validate();
    std::vector<std::pair<int, int>> edges;
    for (std::size_t k = 0; k < s.vectors.size(); ++k) {
        int i = static_cast<int>(k) + 1;  // 0-based index of the node this vector adds
        for (std::size_t j = 0; j < s.vectors[k].size(); ++j) {
            if (s.vectors[k][j]) edges.emplace_back(static_cast<int>(j), i);
        }
    }
    return Graph(s.node_count, std::move(edges));
}

/// Deterministic BFS reordering seeded by pi: starts at pi's first node and
/// enqueues each node's unvisited neighbors in pi order. Components after
/// the first are entered at their earliest remaining node under pi.
inline NodeOrdering bfs_ordering(const Graph& g, const NodeOrdering& pi) {
    pi.validate(g.node_count());
    int n = g.node_count();
    std::vector<int> rank(n);
    for (int pos = 0; pos < n; ++pos) rank[pi.permutation[pos]] = pos;

    NodeOrdering out;
    out.permutation.reserve(n);
    std::vector<bool> visited(n, false);
    std::deque<int> queue;

    for (int start_pos = 0; start_pos < n; ++start_pos) {
        int start = pi.permutation[start_pos];
        if (visited[start]) continue;
        visited[start] = true;
        queue.push_back(start);
        while (!queue.empty()) {
            int v = queue.front();
            queue.pop_front();
            out.permutation.push_back(v);
            std::vector<int> nbrs;
            for (int u : g.neighbors(v)) {
                if (!visited[u]) nbrs.push_back(u);
            }
            std::sort(nbrs.begin(), nbrs.end(),
                      [&](int a, int b) { return rank[a] < rank[b]; });
            for (int u : nbrs) {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    return out;
}

namespace detail {

constexpr int kEnumerationCap = 8;

template <typename Fn>
void for_each_permutation(int n, Fn&& fn) {
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    do {
        fn(perm);
    } while (std::next_permutation(perm.begin(), perm.end()));
}

}  // namespace detail

/// All orderings that produce the same adjacency matrix as pi (brute-force,
/// capped at 8 nodes). Always contains pi itself.
inline std::vector<NodeOrdering> symmetric_permutations(const Graph& g,
                                                        const NodeOrdering& pi) {
    if (g.node_count() > detail::kEnumerationCap) {
        throw TooLargeForEnumeration("symmetric_permutations is capped at " +
                                     std::to_string(detail::kEnumerationCap) + " nodes");
    }
    pi.validate(g.node_count());
    BinaryMatrix reference = adjacency_matrix(g, pi);
    std::vector<NodeOrdering> result;
    detail::for_each_permutation(g.node_count(), [&](const std::vector<int>& perm) {
        NodeOrdering candidate{perm};
        if (adjacency_matrix(g, candidate) == reference) result.push_back(candidate);
    });
    return result;
}

/// Partitions rows 1..n of the lower triangle into ceil(n/b) blocks of b
/// rows (last block possibly shorter).
inline LowerTriBlocks block_partition(int n, int b) {
    if (b <= 0) throw InvalidBlockSize("block size must be positive");
    if (n < 1) throw InvalidBlockSize("row count must be at least 1");
    LowerTriBlocks blocks;
    blocks.block_size = b;
    blocks.total_rows = n;
    for (int first = 1; first <= n; first += b) {
        blocks.blocks.emplace_back(first, std::min(first + b - 1, n));
    }
    return blocks;
}

/// Exhaustive isomorphism test, capped at 8 nodes per side.
inline bool is_isomorphic(const Graph& g1, const Graph& g2) {
    if (g1.node_count() > detail::kEnumerationCap ||
        g2.node_count() > detail::kEnumerationCap) {
        throw TooLargeForEnumeration("is_isomorphic is capped at " +
                                     std::to_string(detail::kEnumerationCap) + " nodes");
    }
    if (g1.node_count() != g2.node_count()) return false;
    if (g1.edge_count() != g2.edge_count()) return false;
    int n = g1.node_count();
    std::vector<int> deg1(n), deg2(n);
    for (int v = 0; v < n; ++v) {
        deg1[v] = g1.degree(v);
        deg2[v] = g2.degree(v);
    }
    {
        auto d1 = deg1, d2 = deg2;
        std::sort(d1.begin(), d1.end());
        std::sort(d2.begin(), d2.end());
        if (d1 != d2) return false;
    }
    bool found = false;
    detail::for_each_permutation(n, [&](const std::vector<int>& perm) {
        if (found) return;
        for (int v = 0; v < n; ++v) {
            if (deg1[v] != deg2[perm[v]]) return;
        }
        for (const auto& [u, v] : g1.edges()) {
            if (!g2.has_edge(perm[u], perm[v])) return;
        }
        found = true;
    });
    return found;
}

/// Cheap isomorphism-invariant signature for graphs beyond the enumeration
/// cap: node count, edge count, triangle count, degree multiset.
struct GraphFingerprint {
    int node_count = 0;
    int edge_count = 0;
    long long triangle_count = 0;
    std::vector<int> degree_multiset;

    bool operator==(const GraphFingerprint&) const = default;
};

inline GraphFingerprint graph_fingerprint(const Graph& g) {
    GraphFingerprint fp;
    fp.node_count = g.node_count();
    fp.edge_count = g.edge_count();
    for (int v = 0; v < g.node_count(); ++v) fp.degree_multiset.push_back(g.degree(v));
    std::sort(fp.degree_multiset.begin(), fp.degree_multiset.end());
    for (const auto& [u, v] : g.edges()) {
        const auto& nu = g.neighbors(u);
        const auto& nv = g.neighbors(v);
        std::size_t i = 0, j = 0;
        while (i < nu.size() && j < nv.size()) {
            if (nu[i] == nv[j]) {
                ++fp.triangle_count;
                ++i;
                ++j;
            } else if (nu[i] < nv[j]) {
                ++i;
            } else {
                ++j;
            }
        }
    }
    fp.triangle_count /= 3;
    return fp;
}

/// Connected components as lists of node indices.
inline std::vector<std::vector<int>> connected_components(const Graph& g) {
    std::vector<std::vector<int>> components;
    std::vector<bool> visited(g.node_count(), false);
    for (int start = 0; start < g.node_count(); ++start) {
        if (visited[start]) continue;
        std::vector<int> component;
        std::deque<int> queue{start};
        visited[start] = true;
        while (!queue.empty()) {
            int v = queue.front();
            queue.pop_front();
            component.push_back(v);
            for (int u : g.neighbors(v)) {
                if (!visited[u]) {
                    visited[u] = true;
                    queue.push_back(u);
                }
            }
        }
        components.push_back(std::move(component));
    }
    return components;
}

namespace detail {

// Diameter of the subgraph induced by one component, by BFS from each node.
inline int component_diameter(const Graph& g, const std::vector<int>& component) {
    int diameter = 0;
    for (int source : component) {
        std::vector<int> dist(g.node_count(), -1);
        std::deque<int> queue{source};
        dist[source] = 0;
        while (!queue.empty()) {
            int v = queue.front();
            queue.pop_front();
            diameter = std::max(diameter, dist[v]);
            for (int u : g.neighbors(v)) {
                if (dist[u] < 0) {
                    dist[u] = dist[v] + 1;
                    queue.push_back(u);
                }
            }
        }
    }
    return diameter;
}

}  // namespace detail

/// Table-style summary statistics of a graph set. Diameter is taken on each
/// graph's largest connected component so disconnected graphs stay finite.
struct DatasetStats {
    int graph_count = 0;
    double avg_nodes = 0.0;
    double avg_edges = 0.0;
    double avg_degree = 0.0;
    double avg_density = 0.0;
    double avg_diameter = 0.0;
    std::map<int, int> class_counts;
    std::map<int, double> class_percentages;
};

inline DatasetStats graph_stats(std::span<const Graph> graphs) {
    if (graphs.empty()) throw EmptyDataset("graph_stats needs a non-empty graph list");
    DatasetStats stats;
    stats.graph_count = static_cast<int>(graphs.size());
    for (const Graph& g : graphs) {
        double n = g.node_count();
        double e = g.edge_count();
        stats.avg_nodes += n;
        stats.avg_edges += e;
        stats.avg_degree += n > 0 ? 2.0 * e / n : 0.0;
        stats.avg_density += n > 1 ? 2.0 * e / (n * (n - 1.0)) : 0.0;
        auto components = connected_components(g);
        const std::vector<int>* largest = nullptr;
        for (const auto& c : components) {
            if (!largest || c.size() > largest->size()) largest = &c;
        }
        stats.avg_diameter += largest ? detail::component_diameter(g, *largest) : 0.0;
        if (g.class_label()) stats.class_counts[*g.class_label()] += 1;
    }
    double count = stats.graph_count;
    stats.avg_nodes /= count;
    stats.avg_edges /= count;
    stats.avg_degree /= count;
    stats.avg_density /= count;
    stats.avg_diameter /= count;
    for (const auto& [label, c] : stats.class_counts) {
        stats.class_percentages[label] = 100.0 * c / count;
    }
    return stats;
}

}  // namespace graphaug
