#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphaug/errors.hpp"
#include "graphaug/graph.hpp"
#include "graphaug/rng.hpp"

namespace graphaug {

enum class DatasetRole { raw, sub_real, test, generated, combined };

inline std::string to_string(DatasetRole role) {
    switch (role) {
        case DatasetRole::raw: return "raw";
        case DatasetRole::sub_real: return "sub_real";
        case DatasetRole::test: return "test";
        case DatasetRole::generated: return "generated";
        case DatasetRole::combined: return "combined";
    }
    return "raw";
}

inline DatasetRole role_from_string(const std::string& s) {
    if (s == "raw") return DatasetRole::raw;
    if (s == "sub_real") return DatasetRole::sub_real;
    if (s == "test") return DatasetRole::test;
    if (s == "generated") return DatasetRole::generated;
    if (s == "combined") return DatasetRole::combined;
    throw CorruptFile("unknown dataset role: " + s);
}

/// A named set of class-labeled graphs with a split role.
struct LabeledDataset {
    std::string name;
    DatasetRole role = DatasetRole::raw;
    std::vector<Graph> graphs;
    std::vector<int> class_set;  // distinct labels, ascending

    void validate() const {
        std::set<int> classes(class_set.begin(), class_set.end());
        if (classes.size() != class_set.size()) {
            throw CorruptDataset("class_set contains duplicates");
        }
        for (const Graph& g : graphs) {
            if (!g.class_label()) {
                throw CorruptDataset("dataset graph is missing its class label");
            }
            if (!classes.count(*g.class_label())) {
                throw CorruptDataset("graph class " + std::to_string(*g.class_label()) +
                                     " is not in the class set");
            }
        }
    }

    std::map<int, int> class_counts() const {
        std::map<int, int> counts;
        for (int c : class_set) counts[c] = 0;
        for (const Graph& g : graphs) counts[*g.class_label()] += 1;
        return counts;
    }

    std::vector<Graph> graphs_of_class(int label) const {
        std::vector<Graph> out;
        for (const Graph& g : graphs) {
            if (*g.class_label() == label) out.push_back(g);
        }
        return out;
    }
};

/// Rough in-memory footprint of a dataset, used for budget accounting.
inline std::size_t approx_dataset_bytes(const LabeledDataset& ds) {
    std::size_t bytes = 0;
    for (const Graph& g : ds.graphs) {
        bytes += sizeof(Graph);
        bytes += static_cast<std::size_t>(g.edge_count()) * 3 * sizeof(int) * 2;
        bytes += static_cast<std::size_t>(g.node_count()) * sizeof(int);
    }
    return bytes;
}

struct SplitSpec {
    double raw_fraction = 0.8;
    double sub_real_fraction = 0.1;
    double test_fraction = 0.1;
    std::uint64_t seed = 0;

    void validate() const {
        auto in_range = [](double f) { return f > 0.0 && f < 1.0; };
        if (!in_range(raw_fraction) || !in_range(sub_real_fraction) ||
            !in_range(test_fraction)) {
            throw ConfigError("split fractions must each lie in (0, 1)");
        }
        double sum = raw_fraction + sub_real_fraction + test_fraction;
        if (std::abs(sum - 1.0) > 1e-12) {
            throw ConfigError("split fractions must sum to 1.0");
        }
    }
};

struct SplitResult {
    LabeledDataset raw;
    LabeledDataset sub_real;
    LabeledDataset test;
};

/// Counts of accepted / repaired rows from a TU load.
struct TuLoadReport {
    int self_loops_dropped = 0;
    int duplicate_edge_rows = 0;  // reversed or repeated rows collapsed
};

namespace detail {

inline std::vector<std::string> read_lines(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw MissingDatasetFile("missing required file: " + file.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

inline long parse_int(const std::string& token, const std::filesystem::path& file,
                      std::size_t line_number) {
    std::size_t pos = 0;
    long value = 0;
    try {
        value = std::stol(token, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    // allow trailing whitespace only
    while (pos < token.size() && std::isspace(static_cast<unsigned char>(token[pos]))) ++pos;
    if (pos != token.size() || token.empty()) {
        throw ParseError("non-integer token '" + token + "' in " + file.filename().string() +
                         " line " + std::to_string(line_number));
    }
    return value;
}

}  // namespace detail

/// Loads a TU-format dataset: `{name}_A.txt` (1-based edge pairs),
/// `{name}_graph_indicator.txt`, `{name}_graph_labels.txt`, and optional
/// `{name}_node_labels.txt`. Reversed/duplicate edge rows collapse to one
/// undirected edge; self-loop rows are dropped and counted.
inline LabeledDataset load_tu(const std::filesystem::path& directory, const std::string& name,
                              TuLoadReport* report = nullptr) {
    auto a_file = directory / (name + "_A.txt");
    auto indicator_file = directory / (name + "_graph_indicator.txt");
    auto labels_file = directory / (name + "_graph_labels.txt");
    auto node_labels_file = directory / (name + "_node_labels.txt");

    auto indicator_lines = detail::read_lines(indicator_file);
    auto label_lines = detail::read_lines(labels_file);
    auto edge_lines = detail::read_lines(a_file);

    // node -> graph id (both 1-based in the files)
    std::vector<long> node_graph(indicator_lines.size() + 1, 0);
    long graph_count = 0;
    for (std::size_t i = 0; i < indicator_lines.size(); ++i) {
        long gid = detail::parse_int(indicator_lines[i], indicator_file, i + 1);
        if (gid < 1) throw CorruptDataset("graph indicator must be >= 1");
        node_graph[i + 1] = gid;
        graph_count = std::max(graph_count, gid);
    }
    if (static_cast<long>(label_lines.size()) != graph_count) {
        throw CorruptDataset("graph label file has " + std::to_string(label_lines.size()) +
                             " lines for " + std::to_string(graph_count) + " graphs");
    }

    // per-graph 0-based node ids, assigned in file order
    std::vector<int> local_index(indicator_lines.size() + 1, -1);
    std::vector<int> graph_size(graph_count + 1, 0);
    for (std::size_t node = 1; node < node_graph.size(); ++node) {
        long gid = node_graph[node];
        local_index[node] = graph_size[gid]++;
    }

    std::vector<std::vector<std::pair<int, int>>> graph_edges(graph_count + 1);
    TuLoadReport local_report;
    for (std::size_t i = 0; i < edge_lines.size(); ++i) {
        if (edge_lines[i].find_first_not_of(" \t") == std::string::npos) continue;
        auto comma = edge_lines[i].find(',');
        if (comma == std::string::npos) {
            throw ParseError("expected 'u, v' in " + a_file.filename().string() + " line " +
                             std::to_string(i + 1));
        }
        long u = detail::parse_int(edge_lines[i].substr(0, comma), a_file, i + 1);
        long v = detail::parse_int(edge_lines[i].substr(comma + 1), a_file, i + 1);
        if (u < 1 || v < 1 || u >= static_cast<long>(node_graph.size()) ||
            v >= static_cast<long>(node_graph.size())) {
            throw CorruptDataset("edge (" + std::to_string(u) + ", " + std::to_string(v) +
                                 ") references a node absent from the indicator");
        }
        if (u == v) {
            local_report.self_loops_dropped += 1;
            continue;
        }
        if (node_graph[u] != node_graph[v]) {
            throw CorruptDataset("edge (" + std::to_string(u) + ", " + std::to_string(v) +
                                 ") crosses graphs");
        }
        int a = local_index[u], b = local_index[v];
        graph_edges[node_graph[u]].emplace_back(std::min(a, b), std::max(a, b));
    }

    std::optional<std::vector<std::vector<int>>> node_labels;
    if (std::filesystem::exists(node_labels_file)) {
        auto node_label_lines = detail::read_lines(node_labels_file);
        if (node_label_lines.size() != indicator_lines.size()) {
            throw CorruptDataset("node label file length does not match the indicator");
        }
        node_labels.emplace(graph_count + 1);
        for (auto& per_graph : *node_labels) per_graph = {};
        for (std::size_t node = 1; node <= node_label_lines.size(); ++node) {
            long label = detail::parse_int(node_label_lines[node - 1], node_labels_file, node);
            (*node_labels)[node_graph[node]].push_back(static_cast<int>(label));
        }
    }

    LabeledDataset ds;
    ds.name = name;
    ds.role = DatasetRole::raw;
    std::set<int> classes;
    for (long gid = 1; gid <= graph_count; ++gid) {
        auto& edges = graph_edges[gid];
        std::sort(edges.begin(), edges.end());
        auto unique_end = std::unique(edges.begin(), edges.end());
        local_report.duplicate_edge_rows +=
            static_cast<int>(std::distance(unique_end, edges.end()));
        edges.erase(unique_end, edges.end());
        int label = static_cast<int>(
            detail::parse_int(label_lines[gid - 1], labels_file, gid));
        classes.insert(label);
        std::optional<std::vector<int>> labels;
        if (node_labels) labels = (*node_labels)[gid];
        ds.graphs.emplace_back(graph_size[gid], std::move(edges), std::move(labels), label);
    }
    ds.class_set.assign(classes.begin(), classes.end());
    ds.validate();
    if (report) *report = local_report;
    return ds;
}

/// Seeded stratified split into raw / sub-real / test. Within each class the
/// graphs are shuffled, then allocated by largest remainder; remainder ties
/// go to the part whose global allocation lags its exact share most.
inline SplitResult stratified_split(const LabeledDataset& ds, const SplitSpec& spec) {
    spec.validate();
    ds.validate();
    const double fractions[3] = {spec.raw_fraction, spec.sub_real_fraction,
                                 spec.test_fraction};
    for (const auto& [label, count] : ds.class_counts()) {
        if (count < 3) {
            throw InsufficientClassSize("class " + std::to_string(label) + " has only " +
                                        std::to_string(count) +
                                        " graphs; the split needs at least 3");
        }
    }

    Rng rng = make_rng(spec.seed);
    double total = static_cast<double>(ds.graphs.size());
    std::vector<std::vector<Graph>> parts(3);
    double allocated[3] = {0, 0, 0};

    for (int label : ds.class_set) {
        std::vector<std::size_t> indices;
        for (std::size_t i = 0; i < ds.graphs.size(); ++i) {
            if (*ds.graphs[i].class_label() == label) indices.push_back(i);
        }
        std::shuffle(indices.begin(), indices.end(), rng);

        double class_size = static_cast<double>(indices.size());
        int counts[3];
        double remainders[3];
        int assigned = 0;
        for (int p = 0; p < 3; ++p) {
            double exact = fractions[p] * class_size;
            counts[p] = static_cast<int>(exact);
            remainders[p] = exact - counts[p];
            assigned += counts[p];
        }
        int leftover = static_cast<int>(indices.size()) - assigned;
        for (int k = 0; k < leftover; ++k) {
            int best = -1;
            for (int p = 0; p < 3; ++p) {
                if (best == -1) {
                    best = p;
                    continue;
                }
                double deficit_p = fractions[p] * total - (allocated[p] + counts[p]);
                double deficit_b = fractions[best] * total - (allocated[best] + counts[best]);
                if (remainders[p] > remainders[best] ||
                    (remainders[p] == remainders[best] && deficit_p > deficit_b)) {
                    best = p;
                }
            }
            counts[best] += 1;
            remainders[best] = -1.0;  // each part takes at most one leftover per class
        }

        std::size_t cursor = 0;
        for (int p = 0; p < 3; ++p) {
            for (int k = 0; k < counts[p]; ++k) {
                parts[p].push_back(ds.graphs[indices[cursor++]]);
            }
            allocated[p] += counts[p];
        }
    }

    SplitResult result;
    LabeledDataset* out[3] = {&result.raw, &result.sub_real, &result.test};
    DatasetRole roles[3] = {DatasetRole::raw, DatasetRole::sub_real, DatasetRole::test};
    for (int p = 0; p < 3; ++p) {
        out[p]->name = ds.name;
        out[p]->role = roles[p];
        out[p]->graphs = std::move(parts[p]);
        out[p]->class_set = ds.class_set;
        out[p]->validate();
    }
    return result;
}

inline constexpr int kDatasetFormatVersion = 1;

inline nlohmann::ordered_json graph_to_json(const Graph& g) {
    nlohmann::ordered_json j;
    j["nodes"] = g.node_count();
    if (g.class_label()) {
        j["class"] = *g.class_label();
    } else {
        j["class"] = nullptr;
    }
    if (g.node_labels()) {
        j["node_labels"] = *g.node_labels();
    } else {
        j["node_labels"] = nullptr;
    }
    auto edges = nlohmann::ordered_json::array();
    for (const auto& [u, v] : g.edges()) edges.push_back({u, v});
    j["edges"] = std::move(edges);
    return j;
}

inline Graph graph_from_json(const nlohmann::json& j) {
    try {
        int n = j.at("nodes").get<int>();
        std::optional<int> class_label;
        if (!j.at("class").is_null()) class_label = j.at("class").get<int>();
        std::optional<std::vector<int>> node_labels;
        if (!j.at("node_labels").is_null()) {
            node_labels = j.at("node_labels").get<std::vector<int>>();
        }
        std::vector<std::pair<int, int>> edges;
        for (const auto& e : j.at("edges")) {
            edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
        }
        return Graph(n, std::move(edges), std::move(node_labels), class_label);
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFile(std::string("malformed graph record: ") + e.what());
    }
}

inline void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path) {
    ds.validate();
    nlohmann::ordered_json j;
    j["format"] = "graphaug.dataset";
    j["version"] = kDatasetFormatVersion;
    j["name"] = ds.name;
    j["role"] = to_string(ds.role);
    j["class_set"] = ds.class_set;
    auto graphs = nlohmann::ordered_json::array();
    for (const Graph& g : ds.graphs) graphs.push_back(graph_to_json(g));
    j["graphs"] = std::move(graphs);
    std::ofstream out(path);
    if (!out) throw IoError("cannot write dataset file: " + path.string());
    out << j.dump(2) << "\n";
}

inline LabeledDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read dataset file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFile("dataset file " + path.string() + " is not valid JSON: " + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "graphaug.dataset") {
            throw CorruptFile("not a dataset file: " + path.string());
        }
        if (j.at("version").get<int>() != kDatasetFormatVersion) {
            throw UnsupportedVersion("dataset file version " +
                                     std::to_string(j.at("version").get<int>()) +
                                     " is not supported (expected " +
                                     std::to_string(kDatasetFormatVersion) + ")");
        }
        LabeledDataset ds;
        ds.name = j.at("name").get<std::string>();
        ds.role = role_from_string(j.at("role").get<std::string>());
        ds.class_set = j.at("class_set").get<std::vector<int>>();
        for (const auto& gj : j.at("graphs")) ds.graphs.push_back(graph_from_json(gj));
        ds.validate();
        return ds;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFile("dataset file " + path.string() + " is truncated or malformed: " +
                          e.what());
    }
}

}  // namespace graphaug
