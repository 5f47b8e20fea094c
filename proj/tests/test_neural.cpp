#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "graphaug/checkpoint.hpp"
#include "graphaug/gradcheck.hpp"
#include "graphaug/nn.hpp"
#include "graphaug/tensor.hpp"

using namespace graphaug;
namespace fs = std::filesystem;

namespace {

Tensor constant_vector(std::vector<double> v) {
    Shape shape{static_cast<int>(v.size())};
    return Tensor::constant(shape, std::move(v));
}

}  // namespace

TEST_CASE("forward primitives match hand values") {
    Tensor x = constant_vector({0.0});
    REQUIRE(sigmoid(x)[0] == Catch::Approx(0.5));

    Tensor eye = Tensor::constant({2, 2}, {1, 0, 0, 1});
    Tensor m = Tensor::constant({2, 2}, {1, 2, 3, 4});
    Tensor prod = matmul(eye, m);
    REQUIRE(std::vector<double>(prod.values().begin(), prod.values().end()) ==
            std::vector<double>{1, 2, 3, 4});

    Tensor s = softmax(constant_vector({1, 1, 1}));
    for (double v : s.values()) REQUIRE(v == Catch::Approx(1.0 / 3.0));

    Tensor t = tanh(constant_vector({0.5}));
    REQUIRE(t[0] == Catch::Approx(std::tanh(0.5)));
    REQUIRE(relu(constant_vector({-1.0, 2.0}))[0] == 0.0);
    REQUIRE(relu(constant_vector({-1.0, 2.0}))[1] == 2.0);
    REQUIRE(mean(constant_vector({1, 2, 3})).item() == Catch::Approx(2.0));
    REQUIRE(sum(constant_vector({1, 2, 3})).item() == Catch::Approx(6.0));
}

TEST_CASE("shape errors name the offending shapes") {
    Tensor a = Tensor::constant({2, 3}, std::vector<double>(6, 1.0));
    Tensor b = Tensor::constant({2, 2}, std::vector<double>(4, 1.0));
    try {
        matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        std::string msg = e.what();
        REQUIRE(msg.find("[2, 3]") != std::string::npos);
        REQUIRE(msg.find("[2, 2]") != std::string::npos);
    }
    REQUIRE_THROWS_AS(add(a, b), ShapeError);
}

TEST_CASE("non-finite op outputs raise NumericalError") {
    Tensor big = constant_vector({710.0});  // exp overflows double
    REQUIRE_THROWS_AS(detail::unary_op(
                          big, [](double x) { return std::exp(x); },
                          [](double, double y) { return y; }),
                      NumericalError);
    Tensor z = constant_vector({0.0});
    REQUIRE_THROWS_AS(log(z), NumericalError);
}

TEST_CASE("backward of sum is all ones; of quadratic is the point") {
    ParameterSet params(1);
    Tensor w = params.add_matrix("w", 2, 3);
    {
        Tape tape;
        Tape::Scope scope(tape);
        params.zero_grad();
        tape.backward(sum(w));
        for (double g : w.grad()) REQUIRE(g == 1.0);
    }
    {
        Tape tape;
        Tape::Scope scope(tape);
        params.zero_grad();
        tape.backward(scale(sum(mul(w, w)), 0.5));
        for (std::size_t i = 0; i < w.size(); ++i) {
            REQUIRE(w.grad()[i] == Catch::Approx(w.values()[i]));
        }
    }
}

TEST_CASE("backward requires a scalar loss") {
    ParameterSet params(1);
    Tensor w = params.add_matrix("w", 2, 2);
    Tape tape;
    Tape::Scope scope(tape);
    Tensor y = mul(w, w);
    REQUIRE_THROWS_AS(tape.backward(y), ContractViolation);
}

TEST_CASE("unreached parameters keep a zero gradient") {
    ParameterSet params(5);
    Tensor used = params.add_matrix("used", 2, 2);
    Tensor unused = params.add_matrix("unused", 2, 2);
    Tape tape;
    Tape::Scope scope(tape);
    params.zero_grad();
    tape.backward(sum(used));
    for (double g : unused.grad()) REQUIRE(g == 0.0);
}

TEST_CASE("composite chain gradient matches finite differences") {
    ParameterSet params(7);
    Tensor w1 = params.add_matrix("w1", 4, 3);
    Tensor b1 = params.add_bias("b1", 4);
    Tensor w2 = params.add_matrix("w2", 1, 4);
    Tensor x = constant_vector({0.3, -0.7, 1.1});
    auto f = [&]() {
        Tensor h = tanh(add(matmul(w1, x), b1));
        Tensor y = sigmoid(matmul(w2, h));
        return sum(y);
    };
    REQUIRE(grad_check(f, params) < 1e-4);
}

TEST_CASE("linear function gradient error is at machine-epsilon scale") {
    ParameterSet params(3);
    Tensor w = params.add_matrix("w", 1, 5);
    Tensor x = constant_vector({1.0, -2.0, 0.5, 3.0, -1.5});
    auto f = [&]() { return sum(matmul(w, x)); };
    REQUIRE(grad_check(f, params) < 1e-8);
}

TEST_CASE("gather/scatter/segment ops are differentiable") {
    ParameterSet params(11);
    Tensor states = params.add_matrix("states", 4, 3);
    std::vector<int> idx{0, 2, 2, 3};
    std::vector<int> seg{0, 0, 1, 1};
    auto f = [&]() {
        Tensor rows = gather_rows(states, idx);
        Tensor scores = matmul(rows, constant_vector({0.2, -0.4, 0.9}));
        Tensor alpha = segment_softmax(scores, seg, 2);
        Tensor weighted = scale_rows(rows, alpha);
        Tensor out = scatter_add_rows(weighted, seg, 2);
        return sum(tanh(out));
    };
    REQUIRE(grad_check(f, params) < 1e-4);
}

TEST_CASE("softmax rows sum to one within 1e-12") {
    Rng rng = make_rng(3);
    std::uniform_real_distribution<double> dist(-5, 5);
    std::vector<double> values(12);
    for (double& v : values) v = dist(rng);
    Tensor s = softmax(Tensor::constant({3, 4}, values));
    for (int r = 0; r < 3; ++r) {
        double total = 0;
        for (int c = 0; c < 4; ++c) total += s[r * 4 + c];
        REQUIRE(std::abs(total - 1.0) < 1e-12);
    }
}

TEST_CASE("gru_cell with zero weights and zero state stays at zero") {
    ParameterSet params(0);
    GruCell cell(params, "gru", 3, 4);
    for (const auto& [name, t] : params.entries()) {
        std::fill(t.mutable_values().begin(), t.mutable_values().end(), 0.0);
    }
    Tensor h = Tensor::zeros({4});
    Tensor x = constant_vector({1.0, -1.0, 0.5});
    Tensor out = cell.step(h, x);
    for (double v : out.values()) REQUIRE(v == 0.0);
}

TEST_CASE("gru_cell is deterministic and differentiable") {
    ParameterSet params(17);
    GruCell cell(params, "gru", 3, 5);
    Tensor h0 = constant_vector({0.1, -0.2, 0.3, 0.0, 0.5});
    Tensor x = constant_vector({0.7, -0.1, 0.2});
    Tensor a = cell.step(h0, x);
    Tensor b = cell.step(h0, x);
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);

    auto f = [&]() { return sum(cell.step(h0, x)); };
    REQUIRE(grad_check(f, params) < 1e-4);
}

TEST_CASE("gru_cell rejects mismatched dimensions") {
    ParameterSet params(1);
    GruCell cell(params, "gru", 3, 4);
    Tensor h = Tensor::zeros({4});
    Tensor wrong_x = constant_vector({1.0, 2.0});
    REQUIRE_THROWS_AS(cell.step(h, wrong_x), ShapeError);
}

TEST_CASE("attention_message_pass with no edges is the identity") {
    ParameterSet params(2);
    AttentionParams attn(params, "attn", 4);
    Tensor states = Tensor::constant({3, 4}, std::vector<double>(12, 0.25));
    Tensor out = attention_message_pass(attn, states, {});
    for (std::size_t i = 0; i < out.size(); ++i) REQUIRE(out[i] == states[i]);
}

TEST_CASE("attention_message_pass keeps symmetric inputs symmetric") {
    ParameterSet params(4);
    AttentionParams attn(params, "attn", 3);
    std::vector<double> row{0.4, -0.2, 0.9};
    std::vector<double> both;
    both.insert(both.end(), row.begin(), row.end());
    both.insert(both.end(), row.begin(), row.end());
    Tensor states = Tensor::constant({2, 3}, both);
    Tensor out = attention_message_pass(attn, states, {{0, 1}});
    for (int c = 0; c < 3; ++c) REQUIRE(out[c] == Catch::Approx(out[3 + c]));
}

TEST_CASE("attention weights sum to one per receiving node") {
    ParameterSet params(6);
    AttentionParams attn(params, "attn", 4);
    Rng rng = make_rng(21);
    std::uniform_real_distribution<double> dist(-1, 1);
    std::vector<double> values(5 * 4);
    for (double& v : values) v = dist(rng);
    Tensor states = Tensor::constant({5, 4}, values);
    std::vector<double> alpha;
    std::vector<int> receivers;
    attention_message_pass(attn, states, {{0, 1}, {0, 2}, {1, 3}, {2, 4}, {3, 4}},
                           &alpha, &receivers);
    std::map<int, double> per_node;
    for (std::size_t i = 0; i < alpha.size(); ++i) per_node[receivers[i]] += alpha[i];
    REQUIRE(per_node.size() == 5);
    for (const auto& [node, total] : per_node) {
        REQUIRE(std::abs(total - 1.0) < 1e-12);
    }
}

TEST_CASE("attention_message_pass gradient check on a 3-node instance") {
    ParameterSet params(9);
    AttentionParams attn(params, "attn", 3);
    Tensor base = params.add_matrix("states", 3, 3);
    auto f = [&]() {
        Tensor out = attention_message_pass(attn, base, {{0, 1}, {1, 2}});
        return sum(tanh(out));
    };
    REQUIRE(grad_check(f, params) < 1e-4);
}

TEST_CASE("attention_message_pass rejects bad endpoints") {
    ParameterSet params(1);
    AttentionParams attn(params, "attn", 2);
    Tensor states = Tensor::zeros({2, 2});
    REQUIRE_THROWS_AS(attention_message_pass(attn, states, {{0, 5}}), IndexError);
}

TEST_CASE("bce_loss hand values") {
    Tensor half = constant_vector({0.5, 0.5, 0.5});
    REQUIRE(bce_loss(half, {1, 0, 1}).item() == Catch::Approx(std::log(2.0)));

    Tensor exact = constant_vector({1.0, 0.0});
    REQUIRE(bce_loss(exact, {1, 0}).item() ==
            Catch::Approx(-std::log(1.0 - kProbabilityClamp)).margin(1e-12));

    REQUIRE_THROWS_AS(bce_loss(half, {1, 0.5, 1}), ContractViolation);
}

TEST_CASE("bce_loss gradient matches finite differences") {
    ParameterSet params(23);
    Tensor w = params.add_matrix("w", 3, 2);
    Tensor x = constant_vector({0.4, -0.6});
    std::vector<double> targets{1, 0, 1};
    auto f = [&]() { return bce_loss(sigmoid(matmul(w, x)), targets); };
    REQUIRE(grad_check(f, params) < 1e-4);
}

TEST_CASE("bernoulli_nll_from_logits agrees with the probability route") {
    Rng rng = make_rng(5);
    std::uniform_real_distribution<double> dist(-3, 3);
    std::vector<double> logits(6);
    for (double& v : logits) v = dist(rng);
    std::vector<double> targets{1, 0, 0, 1, 1, 0};
    Tensor l = constant_vector(logits);
    double from_logits = bernoulli_nll_from_logits(l, targets).item();
    double from_probs = bce_loss(sigmoid(l), targets).item() * 6.0;
    REQUIRE(from_logits == Catch::Approx(from_probs).epsilon(1e-10));
}

TEST_CASE("cross_entropy hand value and gradient") {
    Tensor logits = constant_vector({0.0, 0.0, 0.0});
    REQUIRE(cross_entropy(logits, 1).item() == Catch::Approx(std::log(3.0)));
    REQUIRE_THROWS_AS(cross_entropy(logits, 3), ContractViolation);

    ParameterSet params(29);
    Tensor w = params.add_matrix("w", 4, 3);
    Tensor x = constant_vector({1.0, -0.5, 0.25});
    auto f = [&]() { return cross_entropy(matmul(w, x), 2); };
    REQUIRE(grad_check(f, params) < 1e-4);
}

TEST_CASE("adam leaves parameters unchanged under zero gradients") {
    ParameterSet params(31);
    Tensor w = params.add_matrix("w", 2, 2);
    std::vector<double> before(w.values().begin(), w.values().end());
    params.zero_grad();
    Adam opt(0.01);
    opt.step(params);
    for (std::size_t i = 0; i < w.size(); ++i) REQUIRE(w[i] == before[i]);
}

TEST_CASE("adam first step moves by about the learning rate") {
    ParameterSet params(37);
    Tensor w = params.add_matrix("w", 1, 4);
    std::vector<double> before(w.values().begin(), w.values().end());
    auto grad = w.mutable_grad();
    std::fill(grad.begin(), grad.end(), 0.37);
    Adam opt(0.05);
    opt.step(params);
    // bias-corrected first step: lr * g / (|g| + eps) ~= lr * sign(g)
    for (std::size_t i = 0; i < w.size(); ++i) {
        REQUIRE(before[i] - w[i] == Catch::Approx(0.05).epsilon(1e-4));
    }
}

TEST_CASE("adam minimizes a quadratic bowl") {
    ParameterSet params(41);
    Tensor w = params.add_matrix("w", 1, 6);
    Adam opt(0.01);
    for (int step = 0; step < 500; ++step) {
        Tape tape;
        Tape::Scope scope(tape);
        params.zero_grad();
        Tensor loss = scale(sum(mul(w, w)), 0.5);
        tape.backward(loss);
        opt.step(params);
    }
    for (double v : w.values()) REQUIRE(std::abs(v) < 1e-3);
}

TEST_CASE("parameter initialization is deterministic per seed") {
    ParameterSet a(123), b(123), c(124);
    Tensor wa = a.add_matrix("w", 4, 4);
    Tensor wb = b.add_matrix("w", 4, 4);
    Tensor wc = c.add_matrix("w", 4, 4);
    for (std::size_t i = 0; i < wa.size(); ++i) {
        REQUIRE(wa[i] == wb[i]);
    }
    bool any_diff = false;
    for (std::size_t i = 0; i < wa.size(); ++i) any_diff = any_diff || wa[i] != wc[i];
    REQUIRE(any_diff);
}

TEST_CASE("checkpoint roundtrip is value-exact") {
    fs::path file = fs::temp_directory_path() / "graphaug_ckpt_test.json";
    ParameterSet params(55);
    params.add_matrix("layer.weight", 3, 4);
    params.add_bias("layer.bias", 3);
    params.add_embedding("embed", 7);

    nlohmann::ordered_json meta;
    meta["generator_kind"] = "graphrnn";
    meta["bandwidth"] = 3;
    meta["max_nodes"] = 9;
    auto ckpt = Checkpoint::from_params(params, meta);
    save_checkpoint(ckpt, file);
    auto loaded = load_checkpoint(file);
    REQUIRE(loaded.seed == 55);
    REQUIRE(loaded.metadata.at("generator_kind") == "graphrnn");
    REQUIRE(loaded.metadata.at("bandwidth") == 3);

    ParameterSet restored(55);
    restored.add_matrix("layer.weight", 3, 4);
    restored.add_bias("layer.bias", 3);
    restored.add_embedding("embed", 7);
    // scramble, then restore
    for (const auto& [name, t] : restored.entries()) {
        std::fill(t.mutable_values().begin(), t.mutable_values().end(), 9.9);
    }
    loaded.restore_into(restored);
    for (std::size_t p = 0; p < params.entries().size(); ++p) {
        auto original = params.entries()[p].second.values();
        auto round = restored.entries()[p].second.values();
        for (std::size_t i = 0; i < original.size(); ++i) {
            REQUIRE(original[i] == round[i]);  // bit-exact
        }
    }
    fs::remove(file);
}

TEST_CASE("checkpoint version bump is refused") {
    fs::path file = fs::temp_directory_path() / "graphaug_ckpt_version.json";
    ParameterSet params(1);
    params.add_bias("b", 2);
    save_checkpoint(Checkpoint::from_params(params, {}), file);
    std::ifstream in(file);
    nlohmann::json j;
    in >> j;
    in.close();
    j["version"] = 999;
    std::ofstream out(file);
    out << j.dump();
    out.close();
    REQUIRE_THROWS_AS(load_checkpoint(file), UnsupportedVersion);
    fs::remove(file);
}

TEST_CASE("memory budget trips inside a scope and recovers outside") {
    REQUIRE_THROWS_AS(
        []() {
            BudgetScope scope(1024);
            Tensor big = Tensor::zeros({1024});  // 16 KiB footprint
            return big;
        }(),
        MemoryBudgetExceeded);
    // no cap outside the scope
    Tensor fine = Tensor::zeros({4096});
    REQUIRE(fine.size() == 4096);
}

TEST_CASE("layer gradient checks across 20 random seeds") {
    for (std::uint64_t seed = 100; seed < 120; ++seed) {
        ParameterSet params(seed);
        GruCell cell(params, "gru", 4, 6);
        AttentionParams attn(params, "attn", 4);
        Tensor states = params.add_matrix("states", 4, 4);
        Rng rng = make_rng(seed);
        std::uniform_real_distribution<double> dist(-1, 1);
        std::vector<double> xv(4), hv(6);
        for (double& v : xv) v = dist(rng);
        for (double& v : hv) v = dist(rng);
        Tensor x = constant_vector(xv);
        Tensor h = constant_vector(hv);
        auto f = [&]() {
            Tensor hidden = cell.step(h, x);
            Tensor passed =
                attention_message_pass(attn, states, {{0, 1}, {1, 2}, {2, 3}, {0, 3}});
            return add(sum(sigmoid(hidden)), sum(tanh(passed)));
        };
        REQUIRE(grad_check(f, params) < 1e-4);
    }
}
