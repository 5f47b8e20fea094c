#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "graphaug/dataset.hpp"
#include "test_util.hpp"

using namespace graphaug;
using namespace testutil;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("graphaug_test_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p);
    out << content;
}

// Two graphs in TU format: K3 with class 1 (nodes 1..3), P3 with class 2
// (nodes 4..6); edges listed in both directions as the public datasets do.
void write_two_graph_fixture(const fs::path& dir, const std::string& name,
                             bool with_node_labels = false) {
    write_file(dir / (name + "_A.txt"),
               "1, 2\n2, 1\n1, 3\n3, 1\n2, 3\n3, 2\n"
               "4, 5\n5, 4\n5, 6\n6, 5\n");
    write_file(dir / (name + "_graph_indicator.txt"), "1\n1\n1\n2\n2\n2\n");
    write_file(dir / (name + "_graph_labels.txt"), "1\n2\n");
    if (with_node_labels) {
        write_file(dir / (name + "_node_labels.txt"), "0\n0\n1\n1\n0\n1\n");
    }
}

LabeledDataset make_dataset(int class_a, int class_b, std::uint64_t seed = 7) {
    Rng rng = make_rng(seed);
    LabeledDataset ds;
    ds.name = "fixture";
    ds.class_set = {1, 2};
    for (int i = 0; i < class_a; ++i) {
        ds.graphs.push_back(gnp_graph(6, 0.4, rng).with_class_label(1));
    }
    for (int i = 0; i < class_b; ++i) {
        ds.graphs.push_back(gnp_graph(5, 0.5, rng).with_class_label(2));
    }
    return ds;
}

}  // namespace

TEST_CASE("load_tu assembles graphs from the indicator") {
    TempDir tmp;
    write_two_graph_fixture(tmp.path, "TOY");
    auto ds = load_tu(tmp.path, "TOY");
    REQUIRE(ds.graphs.size() == 2);
    REQUIRE(ds.class_set == std::vector<int>{1, 2});
    REQUIRE(is_isomorphic(ds.graphs[0], triangle()));
    REQUIRE(is_isomorphic(ds.graphs[1], path_graph(3)));
    REQUIRE(*ds.graphs[0].class_label() == 1);
    REQUIRE(*ds.graphs[1].class_label() == 2);
    REQUIRE_FALSE(ds.graphs[0].node_labels().has_value());
}

TEST_CASE("load_tu reads optional node labels") {
    TempDir tmp;
    write_two_graph_fixture(tmp.path, "TOY", true);
    auto ds = load_tu(tmp.path, "TOY");
    REQUIRE(ds.graphs[0].node_labels() == std::vector<int>{0, 0, 1});
    REQUIRE(ds.graphs[1].node_labels() == std::vector<int>{1, 0, 1});
}

TEST_CASE("load_tu collapses reversed duplicate edge rows") {
    TempDir tmp;
    write_file(tmp.path / "D_A.txt", "2, 1\n1, 2\n");
    write_file(tmp.path / "D_graph_indicator.txt", "1\n1\n");
    write_file(tmp.path / "D_graph_labels.txt", "1\n");
    TuLoadReport report;
    auto ds = load_tu(tmp.path, "D", &report);
    REQUIRE(ds.graphs[0].edge_count() == 1);
    REQUIRE(report.duplicate_edge_rows == 1);
}

TEST_CASE("load_tu drops self-loop rows with a warning count") {
    TempDir tmp;
    write_file(tmp.path / "S_A.txt", "1, 1\n1, 2\n2, 1\n");
    write_file(tmp.path / "S_graph_indicator.txt", "1\n1\n");
    write_file(tmp.path / "S_graph_labels.txt", "4\n");
    TuLoadReport report;
    auto ds = load_tu(tmp.path, "S", &report);
    REQUIRE(report.self_loops_dropped == 1);
    REQUIRE(ds.graphs[0].edge_count() == 1);
}

TEST_CASE("load_tu errors name the problem") {
    TempDir tmp;
    SECTION("missing file") {
        REQUIRE_THROWS_AS(load_tu(tmp.path, "NOPE"), MissingDatasetFile);
    }
    SECTION("edge references an absent node") {
        write_file(tmp.path / "X_A.txt", "1, 9\n");
        write_file(tmp.path / "X_graph_indicator.txt", "1\n1\n");
        write_file(tmp.path / "X_graph_labels.txt", "1\n");
        REQUIRE_THROWS_AS(load_tu(tmp.path, "X"), CorruptDataset);
    }
    SECTION("non-integer token reports the line") {
        write_file(tmp.path / "X_A.txt", "1, 2\nfoo, 2\n");
        write_file(tmp.path / "X_graph_indicator.txt", "1\n1\n");
        write_file(tmp.path / "X_graph_labels.txt", "1\n");
        try {
            load_tu(tmp.path, "X");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            REQUIRE(std::string(e.what()).find("line 2") != std::string::npos);
        }
    }
}

TEST_CASE("load_tu is idempotent") {
    TempDir tmp;
    write_two_graph_fixture(tmp.path, "TOY", true);
    auto a = load_tu(tmp.path, "TOY");
    auto b = load_tu(tmp.path, "TOY");
    REQUIRE(a.graphs == b.graphs);
    REQUIRE(a.class_set == b.class_set);
}

TEST_CASE("load_tu tolerates whitespace around commas") {
    TempDir tmp;
    write_file(tmp.path / "W_A.txt", " 1 ,  2 \n");
    write_file(tmp.path / "W_graph_indicator.txt", "1\n1\n");
    write_file(tmp.path / "W_graph_labels.txt", "1\n");
    auto ds = load_tu(tmp.path, "W");
    REQUIRE(ds.graphs[0].edge_count() == 1);
}

TEST_CASE("stratified_split sizes follow the fractions") {
    auto ds = make_dataset(5, 5);
    SplitSpec spec;
    spec.seed = 3;
    auto split = stratified_split(ds, spec);
    REQUIRE(split.raw.graphs.size() == 8);
    REQUIRE(split.sub_real.graphs.size() == 1);
    REQUIRE(split.test.graphs.size() == 1);
    // the two off-raw graphs come from different classes
    int off_raw_class_1 = 0;
    for (const auto& g : split.sub_real.graphs) off_raw_class_1 += *g.class_label() == 1;
    for (const auto& g : split.test.graphs) off_raw_class_1 += *g.class_label() == 1;
    REQUIRE(off_raw_class_1 == 1);
}

TEST_CASE("stratified_split is deterministic in the seed") {
    auto ds = make_dataset(12, 9);
    SplitSpec spec;
    spec.seed = 99;
    auto a = stratified_split(ds, spec);
    auto b = stratified_split(ds, spec);
    REQUIRE(a.raw.graphs == b.raw.graphs);
    REQUIRE(a.sub_real.graphs == b.sub_real.graphs);
    REQUIRE(a.test.graphs == b.test.graphs);
    spec.seed = 100;
    auto c = stratified_split(ds, spec);
    REQUIRE(a.raw.graphs != c.raw.graphs);
}

TEST_CASE("stratified_split at MUTAG-like scale stays class-proportional") {
    auto ds = make_dataset(101, 51, 5);  // 152 graphs, ~66/33
    SplitSpec spec;
    spec.seed = 42;
    auto split = stratified_split(ds, spec);
    REQUIRE(split.raw.graphs.size() + split.sub_real.graphs.size() +
                split.test.graphs.size() ==
            152);
    REQUIRE(split.raw.graphs.size() >= 121);
    REQUIRE(split.raw.graphs.size() <= 122);
    REQUIRE(split.sub_real.graphs.size() >= 15);
    REQUIRE(split.sub_real.graphs.size() <= 16);
    REQUIRE(split.test.graphs.size() >= 15);
    REQUIRE(split.test.graphs.size() <= 16);
    // per-class deviation from the exact fraction is under one graph
    const LabeledDataset* parts[3] = {&split.raw, &split.sub_real, &split.test};
    double fractions[3] = {0.8, 0.1, 0.1};
    std::map<int, int> totals = ds.class_counts();
    for (int p = 0; p < 3; ++p) {
        auto counts = parts[p]->class_counts();
        for (const auto& [label, total] : totals) {
            REQUIRE(std::abs(counts[label] - fractions[p] * total) < 1.0);
        }
    }
}

TEST_CASE("stratified_split is a partition by graph identity") {
    auto ds = make_dataset(20, 13, 11);
    // tag graphs with unique ids via class-preserving distinct structures:
    // identity here is positional, so compare multisets of serialized graphs
    SplitSpec spec;
    spec.seed = 1;
    auto split = stratified_split(ds, spec);
    std::multiset<std::string> original, rebuilt;
    auto serialize = [](const Graph& g) { return graph_to_json(g).dump(); };
    for (const auto& g : ds.graphs) original.insert(serialize(g));
    for (const auto* part : {&split.raw, &split.sub_real, &split.test}) {
        for (const auto& g : part->graphs) rebuilt.insert(serialize(g));
    }
    REQUIRE(original == rebuilt);
}

TEST_CASE("stratified_split stratification error bound") {
    auto ds = make_dataset(33, 14, 23);
    SplitSpec spec;
    spec.seed = 8;
    auto split = stratified_split(ds, spec);
    double ds_size = static_cast<double>(ds.graphs.size());
    auto ds_counts = ds.class_counts();
    for (const auto* part : {&split.raw, &split.sub_real, &split.test}) {
        double part_size = static_cast<double>(part->graphs.size());
        auto counts = part->class_counts();
        for (const auto& [label, count] : counts) {
            double diff =
                std::abs(count / part_size - ds_counts[label] / ds_size);
            REQUIRE(diff <= 1.0 / part_size + 1e-12);
        }
    }
}

TEST_CASE("stratified_split rejects classes below three graphs") {
    auto ds = make_dataset(5, 2);
    SplitSpec spec;
    REQUIRE_THROWS_AS(stratified_split(ds, spec), InsufficientClassSize);
}

TEST_CASE("dataset save/load roundtrip is exact and byte-stable") {
    TempDir tmp;
    write_two_graph_fixture(tmp.path, "TOY", true);
    auto ds = load_tu(tmp.path, "TOY");
    auto file_a = tmp.path / "a.json";
    auto file_b = tmp.path / "b.json";
    save_dataset(ds, file_a);
    auto loaded = load_dataset(file_a);
    REQUIRE(loaded.graphs == ds.graphs);
    REQUIRE(loaded.name == ds.name);
    REQUIRE(loaded.role == ds.role);
    REQUIRE(loaded.class_set == ds.class_set);
    save_dataset(loaded, file_b);
    std::ifstream ia(file_a), ib(file_b);
    std::stringstream sa, sb;
    sa << ia.rdbuf();
    sb << ib.rdbuf();
    REQUIRE(sa.str() == sb.str());
    REQUIRE_FALSE(sa.str().empty());
}

TEST_CASE("dataset load preserves role and class counts for generated sets") {
    TempDir tmp;
    auto ds = make_dataset(4, 3);
    ds.role = DatasetRole::generated;
    auto file = tmp.path / "gen.json";
    save_dataset(ds, file);
    auto loaded = load_dataset(file);
    REQUIRE(loaded.role == DatasetRole::generated);
    REQUIRE(loaded.class_counts() == ds.class_counts());
}

TEST_CASE("dataset files with a bumped version are refused") {
    TempDir tmp;
    auto ds = make_dataset(3, 3);
    auto file = tmp.path / "v.json";
    save_dataset(ds, file);
    std::ifstream in(file);
    nlohmann::json j;
    in >> j;
    in.close();
    j["version"] = kDatasetFormatVersion + 1;
    write_file(file, j.dump(2));
    REQUIRE_THROWS_AS(load_dataset(file), UnsupportedVersion);
}

TEST_CASE("truncated dataset files are reported as corrupt") {
    TempDir tmp;
    auto ds = make_dataset(3, 3);
    auto file = tmp.path / "t.json";
    save_dataset(ds, file);
    std::ifstream in(file);
    std::stringstream buf;
    buf << in.rdbuf();
    in.close();
    std::string text = buf.str();
    write_file(file, text.substr(0, text.size() / 2));
    REQUIRE_THROWS_AS(load_dataset(file), CorruptFile);
}

TEST_CASE("split fractions are validated") {
    auto ds = make_dataset(5, 5);
    SplitSpec bad;
    bad.raw_fraction = 0.5;
    bad.sub_real_fraction = 0.2;
    bad.test_fraction = 0.2;
    REQUIRE_THROWS_AS(stratified_split(ds, bad), ConfigError);
}
