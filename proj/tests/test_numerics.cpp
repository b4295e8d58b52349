#include <doctest.h>

#include <cmath>
#include <functional>

#include "mqmc/numerics/grad_check.hpp"
#include "mqmc/numerics/graph.hpp"
#include "mqmc/numerics/optim.hpp"
#include "mqmc/numerics/random.hpp"

using namespace mqmc::num;

namespace {

Tensor<double> randn(Rng& rng, std::size_t r, std::size_t c, double sd = 1.0) {
    Tensor<double> t = Tensor<double>::matrix(r, c);
    for (double& v : t.values()) v = rng.normal(0.0, sd);
    return t;
}

// Random tensor with every entry at least `gap` away from zero.
Tensor<double> away_from_zero(Rng& rng, std::size_t r, std::size_t c, double gap = 0.05) {
    Tensor<double> t = randn(rng, r, c);
    for (double& v : t.values()) v = v < 0 ? v - gap : v + gap;
    return t;
}

// Wraps `build` into sum(build(...) * R) and grad-checks it over the named inputs.
using Builder = std::function<NodeId(Graph<double>&, std::map<std::string, NodeId>&)>;

GradCheckReport check(const ParamMap& inputs, const Builder& build, std::uint64_t seed) {
    std::optional<Tensor<double>> mix;
    LossFn fn = [&](const ParamMap& p) {
        Graph<double> g;
        std::map<std::string, NodeId> ids;
        for (const auto& [name, t] : p) ids[name] = g.input(name, t, true);
        const NodeId out = build(g, ids);
        if (!mix) {
            Rng r(seed + 99);
            mix = Tensor<double>(g.value(out).shape());
            for (double& v : mix->values()) v = r.normal();
        }
        const NodeId weighted = g.mul(out, g.constant(*mix));
        const NodeId loss = g.sum(weighted);
        LossAndGrad lg;
        lg.loss = g.value(loss)[0];
        lg.grads = g.backward(loss);
        return lg;
    };
    return grad_check(fn, inputs, 1e-5, 1e-4);
}

}  // namespace

TEST_SUITE("numerics") {

TEST_CASE("tensor rejects bad shapes") {
    CHECK_THROWS_AS(Tensor<double>(Shape{0, 3}), NumericsError);
    CHECK_THROWS_AS(Tensor<double>(Shape{2, 2, 2}), NumericsError);
    CHECK_THROWS_AS(Tensor<double>(Shape{2, 2}, std::vector<double>{1, 2, 3}), NumericsError);
}

TEST_CASE("forward examples") {
    Graph<double> g;
    const NodeId x = g.input("x", Tensor<double>::vector({1, 2, 3}));
    g.name_output(x, "y");
    CHECK(g.forward({{"x", Tensor<double>::vector({1, 2, 3})}}).at("y") == Tensor<double>::vector({1, 2, 3}));

    Graph<double> h;
    const NodeId v = h.input("x", Tensor<double>::vector({4, 5, 6}));
    const NodeId out = h.matmul(h.constant(Tensor<double>::identity(3)), v);
    CHECK(h.value(out).values()[0] == 4.0);
    CHECK(h.value(out).values()[1] == 5.0);
    CHECK(h.value(out).values()[2] == 6.0);

    // two-layer MLP with zero weights
    Graph<double> m;
    Rng rng(1);
    const NodeId in = m.input("x", randn(rng, 3, 5));
    const NodeId w1 = m.constant(Tensor<double>::matrix(4, 5));
    const NodeId w2 = m.constant(Tensor<double>::matrix(2, 4));
    const NodeId y = m.matmul(m.leaky_relu(m.matmul(in, w1, false, true), 0.01), w2, false, true);
    for (double z : m.value(y).values()) CHECK(z == 0.0);
}

TEST_CASE("forward rebinding re-evaluates the tape") {
    Graph<double> g;
    const NodeId x = g.input("x", Tensor<double>::vector({1, 2}));
    g.name_output(g.scale(g.exp(x), 2.0), "y");
    const auto out = g.forward({{"x", Tensor<double>::vector({0, 0})}});
    CHECK(out.at("y")[0] == 2.0);
    CHECK_THROWS_AS(g.forward({{"nope", Tensor<double>::vector({0, 0})}}), NumericsError);
}

TEST_CASE("errors report the node id") {
    Graph<double> g;
    const NodeId a = g.input("a", Tensor<double>::matrix(2, 3));
    const NodeId b = g.input("b", Tensor<double>::matrix(2, 3));
    try {
        g.matmul(a, b);
        FAIL("expected a shape error");
    } catch (const NumericsError& e) {
        CHECK(std::string(e.what()).find("node 2") != std::string::npos);
    }
    Graph<double> h;
    const NodeId z = h.input("z", Tensor<double>::vector({0.0}));
    CHECK_THROWS_AS(h.log(z), NumericsError);  // -inf is a hard error
}

TEST_CASE("backward examples") {
    Graph<double> g;
    const NodeId x = g.input("x", Tensor<double>::vector({1, 2}), true);
    const NodeId f = g.sum(g.mul(x, x));
    const auto grads = g.backward(f);
    CHECK(grads.at("x")[0] == doctest::Approx(2.0));
    CHECK(grads.at("x")[1] == doctest::Approx(4.0));

    Graph<double> h;
    const NodeId y = h.input("y", Tensor<double>::vector({-3.0}), true);
    const auto gy = h.backward(h.leaky_relu(y, 0.01));
    CHECK(gy.at("y")[0] == doctest::Approx(0.01));
}

TEST_CASE("backward refuses non-differentiable outputs and unseeded non-scalars") {
    Graph<double> g;
    const NodeId x = g.input("x", Tensor<double>::vector({1, 2}), true);
    CHECK_THROWS_AS(g.backward(g.detach(x)), NumericsError);
    CHECK_THROWS_AS(g.backward(g.exp(x)), NumericsError);
    const auto seeded = g.backward(g.exp(x), Tensor<double>::vector({1, 1}));
    CHECK(seeded.at("x")[0] == doctest::Approx(std::exp(1.0)));
}

TEST_CASE("random 5-parameter matmul+sigmoid graph matches finite differences") {
    Rng rng(5);
    ParamMap p{{"w", randn(rng, 1, 5)}};
    const Tensor<double> x = randn(rng, 5, 1);
    LossFn fn = [&](const ParamMap& m) {
        Graph<double> g;
        const NodeId w = g.input("w", m.at("w"), true);
        const NodeId out = g.sum(g.sigmoid(g.matmul(w, g.constant(x))));
        return LossAndGrad{g.value(out)[0], g.backward(out)};
    };
    CHECK(grad_check(fn, p, 1e-5, 1e-6).max_rel_error < 1e-6);
}

TEST_CASE("every op kind passes finite differences on random shapes") {
    int failures = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        Rng rng(seed);
        const std::size_t r = 2 + rng.index(15), c = 1 + rng.index(16), k = 1 + rng.index(16);
        std::vector<std::pair<ParamMap, Builder>> cases;
        cases.push_back({{{"a", randn(rng, r, k)}, {"b", randn(rng, k, c)}},
                         [](auto& g, auto& in) { return g.matmul(in["a"], in["b"]); }});
        cases.push_back({{{"a", randn(rng, k, r)}, {"b", randn(rng, c, k)}},
                         [](auto& g, auto& in) { return g.matmul(in["a"], in["b"], true, true); }});
        cases.push_back({{{"a", randn(rng, r, c)}, {"b", randn(rng, r, c)}},
                         [](auto& g, auto& in) { return g.add(in["a"], g.mul(in["a"], in["b"])); }});
        cases.push_back({{{"a", randn(rng, r, c)}}, [](auto& g, auto& in) { return g.scale(in["a"], -1.7); }});
        cases.push_back({{{"a", away_from_zero(rng, r, c)}},
                         [](auto& g, auto& in) { return g.leaky_relu(in["a"], 0.01); }});
        cases.push_back({{{"a", randn(rng, r, c)}}, [](auto& g, auto& in) { return g.sigmoid(in["a"]); }});
        cases.push_back({{{"a", randn(rng, r, c, 0.5)}}, [](auto& g, auto& in) { return g.exp(in["a"]); }});
        cases.push_back({{{"a", randn(rng, r, c)}},
                         [](auto& g, auto& in) { return g.log(g.add(g.exp(in["a"]), g.exp(in["a"]))); }});
        cases.push_back({{{"a", randn(rng, r, c)}}, [](auto& g, auto& in) { return g.row_norm(in["a"]); }});
        cases.push_back({{{"a", randn(rng, r, c)}, {"b", randn(rng, r, c)}},
                         [](auto& g, auto& in) { return g.div(in["a"], g.exp(in["b"])); }});
        cases.push_back({{{"a", randn(rng, r, c)}, {"b", randn(rng, r, 1)}},
                         [](auto& g, auto& in) { return g.div(in["a"], g.exp(in["b"])); }});
        cases.push_back({{{"a", randn(rng, r, c)}, {"b", randn(rng, 1, 1)}},
                         [](auto& g, auto& in) { return g.div(in["a"], g.exp(in["b"])); }});
        for (Axis ax : {Axis::All, Axis::Rows, Axis::Cols}) {
            cases.push_back({{{"a", randn(rng, r, c)}}, [ax](auto& g, auto& in) { return g.sum(in["a"], ax); }});
            cases.push_back({{{"a", randn(rng, r, c)}}, [ax](auto& g, auto& in) { return g.mean(in["a"], ax); }});
        }
        cases.push_back({{{"a", randn(rng, r, c)}, {"b", randn(rng, k, c)}},
                         [](auto& g, auto& in) { return g.concat({in["a"], in["b"]}, 0); }});
        cases.push_back({{{"a", randn(rng, r, c)}, {"b", randn(rng, r, k)}},
                         [](auto& g, auto& in) { return g.concat({in["a"], in["b"]}, 1); }});
        {
            Tensor<double> w = Tensor<double>::matrix(r, c);
            for (double& v : w.values()) v = rng.uniform(0.1, 2.0);
            cases.push_back({{{"a", randn(rng, r, c)}},
                             [w](auto& g, auto& in) { return g.logsumexp(in["a"], w); }});
        }
        cases.push_back({{{"x", randn(rng, r + 2, c)}, {"gamma", randn(rng, 1, c)}, {"beta", randn(rng, 1, c)}},
                         [](auto& g, auto& in) { return g.batch_norm(in["x"], in["gamma"], in["beta"], 1e-5); }});
        {
            Tensor<double> mean = randn(rng, 1, c);
            Tensor<double> var = Tensor<double>::matrix(1, c);
            for (double& v : var.values()) v = rng.uniform(0.5, 2.0);
            cases.push_back(
                {{{"x", randn(rng, r, c)}, {"gamma", randn(rng, 1, c)}, {"beta", randn(rng, 1, c)}},
                 [mean, var](auto& g, auto& in) {
                     return g.batch_norm_frozen(in["x"], in["gamma"], in["beta"], mean, var, 1e-5);
                 }});
        }
        for (std::size_t i = 0; i < cases.size(); ++i) {
            const GradCheckReport rep = check(cases[i].first, cases[i].second, seed * 100 + i);
            worst = std::max(worst, rep.max_rel_error);
            if (!rep.passed) {
                ++failures;
                MESSAGE("seed " << seed << " case " << i << ": " << rep.max_rel_error << " at " << rep.worst_param);
            }
        }
    }
    CHECK(failures == 0);
    MESSAGE("worst relative error " << worst);
}

TEST_CASE("leaky_relu examples") {
    CHECK(leaky_relu(0.0, 0.01) == 0.0);
    CHECK(leaky_relu(2.5, 0.01) == 2.5);
    CHECK(leaky_relu(-2.0, 0.01) == doctest::Approx(-0.02));
    Graph<double> g;
    CHECK_THROWS_AS(g.leaky_relu(g.input("x", Tensor<double>::vector({1})), 1.5), NumericsError);
}

TEST_CASE("cosine_similarity examples and properties") {
    const std::vector<double> a{0.3, -1.2, 4.0};
    CHECK(cosine_similarity<double>(a, a) == doctest::Approx(1.0));
    const std::vector<double> x{1, 0}, y{0, 1}, z{1, 1}, zero{0, 0};
    CHECK(cosine_similarity<double>(x, y) == 0.0);
    CHECK(cosine_similarity<double>(x, z) == doctest::Approx(0.70710678).epsilon(1e-8));
    CHECK_THROWS_AS(cosine_similarity<double>(x, zero), NumericsError);
    CHECK_THROWS_AS(cosine_similarity<double>(x, a), NumericsError);

    Rng rng(2);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> p(7), q(7);
        for (double& v : p) v = rng.normal();
        for (double& v : q) v = rng.normal();
        const double lambda = rng.uniform(0.01, 100.0);
        std::vector<double> ps = p;
        for (double& v : ps) v *= lambda;
        const double c = cosine_similarity<double>(p, q);
        CHECK(c == cosine_similarity<double>(q, p));
        CHECK(std::abs(c - cosine_similarity<double>(ps, q)) < 1e-12);
        CHECK(c >= -1.0);
        CHECK(c <= 1.0);
    }
}

TEST_CASE("adam_step examples") {
    Tensor<double> p = Tensor<double>::vector({1.0, -2.0});
    AdamState<double> s(p.shape());
    adam_step(p, Tensor<double>::vector({0.0, 0.0}), s, 0.1, 0.0);
    CHECK(p == Tensor<double>::vector({1.0, -2.0}));

    Tensor<double> q = Tensor<double>::vector({0.5});
    AdamState<double> sq(q.shape());
    adam_step(q, Tensor<double>::vector({3.0}), sq, 0.0, 0.001);
    CHECK(q[0] == 0.5);
    CHECK(sq.first[0] == doctest::Approx(0.3));
    CHECK(sq.second[0] == doctest::Approx(0.009));
    CHECK(sq.step == 1);

    // one hand-traced step: m_hat = g, v_hat = g^2, so delta = lr * g / (|g| + eps)
    Tensor<double> r = Tensor<double>::vector({1.0});
    AdamState<double> sr(r.shape());
    adam_step(r, Tensor<double>::vector({1.0}), sr, 0.1, 0.0);
    CHECK(r[0] == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-14));

    // decoupled decay scales the parameter before the moment step
    Tensor<double> d = Tensor<double>::vector({2.0});
    AdamState<double> sd(d.shape());
    adam_step(d, Tensor<double>::vector({0.0}), sd, 0.1, 0.5);
    CHECK(d[0] == doctest::Approx(2.0 * (1.0 - 0.05)));

    CHECK_THROWS_AS(adam_step(d, Tensor<double>::vector({NAN}), sd, 0.1, 0.0), NumericsError);
    CHECK_THROWS_AS(adam_step(d, Tensor<double>::vector({1.0, 2.0}), sd, 0.1, 0.0), NumericsError);
}

TEST_CASE("cosine_lr examples and monotonicity") {
    CHECK(cosine_lr(0, 100, 0.3) == doctest::Approx(0.3));
    CHECK(cosine_lr(100, 100, 0.3) == doctest::Approx(0.0));
    CHECK(cosine_lr(50, 100, 0.3) == doctest::Approx(0.15));
    CHECK(cosine_lr(500, 100, 0.3) == cosine_lr(100, 100, 0.3));
    CHECK_THROWS_AS(cosine_lr(0, 0, 0.3), NumericsError);
    double prev = cosine_lr(0, 977, 1e-4);
    for (std::uint64_t s = 1; s <= 977; ++s) {
        const double lr = cosine_lr(s, 977, 1e-4);
        CHECK(lr <= prev);
        CHECK(lr >= 0.0);
        prev = lr;
    }
    LrSchedule sched{1.0, 2, 0};
    sched.advance();
    sched.advance();
    sched.advance();
    CHECK(sched.current == 2);
}

TEST_CASE("grad_check examples") {
    Rng rng(4);
    const Tensor<double> x = randn(rng, 6, 1);
    ParamMap p{{"w", randn(rng, 1, 6)}};
    LossFn linear = [&](const ParamMap& m) {
        Graph<double> g;
        const NodeId w = g.input("w", m.at("w"), true);
        const NodeId out = g.matmul(w, g.constant(x));
        return LossAndGrad{g.value(out)[0], g.backward(out)};
    };
    CHECK(grad_check(linear, p, 1e-5, 1e-4).max_rel_error < 1e-10);

    // doubling every analytic gradient: |2c - c| / max(|2c|, |c|) = 1/2
    LossFn corrupted = [&](const ParamMap& m) {
        LossAndGrad lg = linear(m);
        for (double& v : lg.grads.at("w").values()) v *= 2.0;
        return lg;
    };
    const GradCheckReport bad = grad_check(corrupted, p, 1e-5, 1e-4);
    CHECK(bad.max_rel_error == doctest::Approx(0.5).epsilon(1e-6));
    CHECK_FALSE(bad.passed);
}

TEST_CASE("forward is deterministic") {
    Rng rng(8);
    const Tensor<float> a = randn(rng, 9, 13).cast<float>();
    const Tensor<float> b = randn(rng, 13, 4).cast<float>();
    auto run = [&] {
        Graph<float> g;
        return g.value(g.logsumexp(g.sigmoid(g.matmul(g.constant(a), g.constant(b)))));
    };
    CHECK(run() == run());
}

TEST_CASE("batch norm statistics and frozen mode") {
    Graph<double> g;
    const Tensor<double> x(Shape{4, 2}, std::vector<double>{1, 10, 2, 20, 3, 30, 4, 40});
    const NodeId gamma = g.constant(Tensor<double>::matrix(1, 2, 1.0));
    const NodeId beta = g.constant(Tensor<double>::matrix(1, 2, 0.0));
    const NodeId bn = g.batch_norm(g.constant(x), gamma, beta, 0.0);
    const auto [mean, var] = g.batch_stats(bn);
    CHECK(mean[0] == doctest::Approx(2.5));
    CHECK(var[1] == doctest::Approx(125.0));
    double col = 0.0;
    for (std::size_t r = 0; r < 4; ++r) col += g.value(bn)(r, 0);
    CHECK(col == doctest::Approx(0.0));
    const NodeId frozen = g.batch_norm_frozen(g.constant(x), gamma, beta, Tensor<double>::matrix(1, 2, 1.0),
                                              Tensor<double>::matrix(1, 2, 4.0), 0.0);
    CHECK(g.value(frozen)(3, 0) == doctest::Approx(1.5));
    CHECK_THROWS_AS(g.batch_stats(frozen), NumericsError);
}

TEST_CASE("rng is reproducible") {
    Rng a(9), b(9);
    for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
    CHECK(mix_seed(1, 2) != mix_seed(1, 3));
    std::vector<int> v{1, 2, 3, 4, 5, 6};
    Rng c(3);
    c.shuffle(v);
    std::sort(v.begin(), v.end());
    CHECK(v == std::vector<int>{1, 2, 3, 4, 5, 6});
}


TEST_CASE("logsumexp matches the naive exponent sum for large logits") {
    Rng rng(12);
    for (int t = 0; t < 50; ++t) {
        Tensor<double> a = Tensor<double>::matrix(3, 9);
        Tensor<double> w = Tensor<double>::matrix(3, 9);
        for (double& v : a.values()) v = rng.uniform(-15.0, 15.0);
        for (double& v : w.values()) v = rng.uniform(0.0, 1.0);
        Graph<double> g;
        const Tensor<double>& out = g.value(g.logsumexp(g.constant(a), w));
        for (std::size_t r = 0; r < 3; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < 9; ++c) s += w(r, c) * std::exp(a(r, c));
            CHECK(std::abs(out[r] - std::log(s)) < 1e-10);
        }
    }
    Graph<double> g;
    CHECK_THROWS_AS(g.logsumexp(g.constant(Tensor<double>::matrix(1, 2)), Tensor<double>::matrix(1, 2)),
                    NumericsError);
}

}  // TEST_SUITE
