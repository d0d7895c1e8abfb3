#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "forward_oracle.hpp"
#include "tsarch/errors.hpp"
#include "tsarch/graph.hpp"
#include "tsarch/model.hpp"
#include "tsarch/rng.hpp"

using namespace tsarch;
using namespace tsarch::nn;

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)}); }

ArchitectureSpec make_spec(std::vector<BlockKind> blocks, int h, int heads, int lookback = 16, int horizon = 4) {
    ArchitectureSpec s;
    s.blocks = std::move(blocks);
    s.hidden_dim = h;
    s.lookback = lookback;
    s.horizon = horizon;
    s.heads = heads;
    return s;
}

// Central finite differences over every model parameter.
void model_gradcheck(const ArchitectureSpec& spec, std::uint64_t seed) {
    Model m = Model::init(spec, seed);
    Rng rng(seed + 101);
    const Tensor window = random_tensor(rng, {2, 5, 1});
    const Tensor w = random_tensor(rng, {2, spec.horizon, 1}, 0.5, 1.5);

    Graph g;
    auto fb = m.build_forward(g, window);
    Value loss = g.sum_all(g.mul(fb.output, g.input(w)));
    g.backward(loss);

    auto eval = [&](const Model& mm) {
        const Tensor y = mm.forward(window);
        double s = 0.0;
        for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * w.data[i];
        return s;
    };

    const double eps = 1e-5;
    for (std::size_t pi = 0; pi < m.params().size(); ++pi) {
        const Tensor& grad = g.grad(fb.param_nodes[pi]);
        for (std::size_t ei = 0; ei < m.params()[pi].value.data.size(); ++ei) {
            Model plus = m, minus = m;
            plus.params()[pi].value.data[ei] += eps;
            minus.params()[pi].value.data[ei] -= eps;
            const double fd = (eval(plus) - eval(minus)) / (2.0 * eps);
            const double ad = grad.data[ei];
            // floor 1e-6: below it the comparison is absolute at 1e-10, an order above
            // the ~1e-11 central-difference noise of eps=1e-5 on an O(1) loss
            const double rel = std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1e-6});
            CHECK(rel < 1e-4);
        }
    }
}

}  // namespace

TEST_CASE("forward matches the straight-line oracle on a mixed stack") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        ArchitectureSpec spec = make_spec(
            {BlockKind::GRU, BlockKind::ATTENTION, BlockKind::SSM, BlockKind::LSTM}, 8, 2, 16, 4);
        Model m = Model::init(spec, seed);
        Rng rng(seed + 50);
        const Tensor window = random_tensor(rng, {2, 16, 1});
        const Tensor got = m.forward(window);
        const Tensor want = forward_oracle::forward(m, window);
        REQUIRE(got.shape == want.shape);
        for (std::size_t i = 0; i < got.data.size(); ++i) CHECK(close(got.data[i], want.data[i], 1e-12));
    }
}

TEST_CASE("forward matches the oracle for each single-block architecture") {
    const std::vector<std::pair<BlockKind, int>> cases = {
        {BlockKind::GRU, 1}, {BlockKind::LSTM, 1}, {BlockKind::ATTENTION, 4}, {BlockKind::SSM, 1}};
    for (const auto& [kind, heads] : cases) {
        ArchitectureSpec spec = make_spec({kind}, 8, heads, 12, 3);
        Model m = Model::init(spec, 9);
        Rng rng(99);
        const Tensor window = random_tensor(rng, {3, 12, 1});
        const Tensor got = m.forward(window);
        const Tensor want = forward_oracle::forward(m, window);
        for (std::size_t i = 0; i < got.data.size(); ++i) CHECK(close(got.data[i], want.data[i], 1e-12));
    }
}

TEST_CASE("forward is batch decomposable") {
    ArchitectureSpec spec = make_spec({BlockKind::SSM, BlockKind::GRU}, 8, 2, 10, 4);
    Model m = Model::init(spec, 21);
    Rng rng(22);
    const Tensor row0 = random_tensor(rng, {1, 10, 1});
    const Tensor row1 = random_tensor(rng, {1, 10, 1});
    Tensor stacked = Tensor::zeros({2, 10, 1});
    std::copy(row0.data.begin(), row0.data.end(), stacked.data.begin());
    std::copy(row1.data.begin(), row1.data.end(), stacked.data.begin() + 10);

    const Tensor y0 = m.forward(row0);
    const Tensor y1 = m.forward(row1);
    const Tensor ys = m.forward(stacked);
    for (int j = 0; j < 4; ++j) {
        CHECK(close(ys.data[static_cast<std::size_t>(j)], y0.data[static_cast<std::size_t>(j)], 1e-12));
        CHECK(close(ys.data[static_cast<std::size_t>(4 + j)], y1.data[static_cast<std::size_t>(j)], 1e-12));
    }

    // duplicated row gives identical outputs per row
    Tensor dup = Tensor::zeros({2, 10, 1});
    std::copy(row0.data.begin(), row0.data.end(), dup.data.begin());
    std::copy(row0.data.begin(), row0.data.end(), dup.data.begin() + 10);
    const Tensor yd = m.forward(dup);
    for (int j = 0; j < 4; ++j)
        CHECK(yd.data[static_cast<std::size_t>(j)] == yd.data[static_cast<std::size_t>(4 + j)]);
}

TEST_CASE("zero head maps any window to a zero forecast") {
    ArchitectureSpec spec = make_spec({BlockKind::GRU}, 8, 1, 12, 5);
    Model m = Model::init(spec, 5);
    for (auto& p : m.params()) {
        if (p.name == "head.W" || p.name == "head.b") std::fill(p.value.data.begin(), p.value.data.end(), 0.0);
    }
    Rng rng(6);
    const Tensor y = m.forward(random_tensor(rng, {2, 12, 1}));
    for (double v : y.data) CHECK(v == 0.0);
}

TEST_CASE("head bias gradient of a summed forecast is all ones") {
    ArchitectureSpec spec = make_spec({BlockKind::GRU}, 4, 1, 8, 3);
    Model m = Model::init(spec, 7);
    Rng rng(8);
    Graph g;
    auto fb = m.build_forward(g, random_tensor(rng, {1, 8, 1}));
    g.backward(g.sum_all(fb.output));
    for (std::size_t pi = 0; pi < m.params().size(); ++pi) {
        if (m.params()[pi].name == "head.b") {
            for (double v : g.grad(fb.param_nodes[pi]).data) CHECK(v == doctest::Approx(1.0));
        }
    }
}

TEST_CASE("autodiff matches finite differences for every block kind") {
    // h in {2,4} per kind; heads chosen to divide h
    model_gradcheck(make_spec({BlockKind::GRU}, 2, 1, 5, 3), 31);
    model_gradcheck(make_spec({BlockKind::GRU}, 4, 1, 5, 3), 32);
    model_gradcheck(make_spec({BlockKind::LSTM}, 2, 1, 5, 3), 33);
    model_gradcheck(make_spec({BlockKind::LSTM}, 4, 1, 5, 3), 34);
    model_gradcheck(make_spec({BlockKind::ATTENTION}, 2, 2, 5, 3), 35);
    model_gradcheck(make_spec({BlockKind::ATTENTION}, 4, 2, 5, 3), 36);
    model_gradcheck(make_spec({BlockKind::SSM}, 2, 1, 5, 3), 37);
    model_gradcheck(make_spec({BlockKind::SSM}, 4, 1, 5, 3), 38);
}

TEST_CASE("analytic parameter count equals the runtime tensor walk") {
    // [GRU]: 6h^2+6h + (1*h + h) + (h*horizon + horizon)
    {
        ArchitectureSpec s = make_spec({BlockKind::GRU}, 16, 4, 96, 24);
        const std::int64_t h = 16, H = 24;
        CHECK(parameter_count(s) == 6 * h * h + 6 * h + (h + h) + (h * H + H));
    }

    Rng rng(44);
    const BlockKind kinds[4] = {BlockKind::GRU, BlockKind::LSTM, BlockKind::ATTENTION, BlockKind::SSM};
    for (int trial = 0; trial < 20; ++trial) {
        ArchitectureSpec s;
        const int nblocks = 1 + static_cast<int>(rng.below(5));
        for (int i = 0; i < nblocks; ++i) s.blocks.push_back(kinds[rng.below(4)]);
        s.hidden_dim = 2 << rng.below(4);  // 2..16
        s.heads = (s.hidden_dim >= 4 && rng.below(2)) ? 2 : 1;
        s.lookback = 8;
        s.horizon = 1 + static_cast<int>(rng.below(8));
        s.ffn_expansion = 1 + static_cast<int>(rng.below(4));
        Model m = Model::init(s, 1000 + static_cast<std::uint64_t>(trial));
        CHECK(parameter_count(s) == m.runtime_parameter_count());
    }
}

TEST_CASE("parameter count is additive and strictly monotone in block counts") {
    ArchitectureSpec base = make_spec({BlockKind::GRU}, 16, 4, 96, 24);
    ArchitectureSpec more = base;
    more.blocks.push_back(BlockKind::GRU);
    CHECK(parameter_count(more) - parameter_count(base) == 6 * 16 * 16 + 6 * 16);

    const BlockKind kinds[4] = {BlockKind::GRU, BlockKind::LSTM, BlockKind::ATTENTION, BlockKind::SSM};
    for (BlockKind extra : kinds) {
        ArchitectureSpec grown = base;
        grown.blocks.push_back(extra);
        CHECK(parameter_count(grown) > parameter_count(base));
    }
}

TEST_CASE("ssm_scan matches the geometric-series closed form on constant input") {
    const int h = 3, T = 12, B = 1;
    Graph g;
    Rng rng(55);
    Tensor a = random_tensor(rng, {h}, -0.5, 0.5);
    Tensor delta = random_tensor(rng, {h}, -0.5, 0.5);
    Tensor Bv = random_tensor(rng, {h}, -1.0, 1.0);
    Tensor Cv = random_tensor(rng, {h}, -1.0, 1.0);
    Tensor Dv = random_tensor(rng, {h}, -1.0, 1.0);
    Tensor x0 = random_tensor(rng, {h}, -1.0, 1.0);

    Tensor x = Tensor::zeros({B, T, h});
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < h; ++j) x.data[static_cast<std::size_t>(t) * h + j] = x0.data[static_cast<std::size_t>(j)];

    Value y = ssm_scan(g, g.input(x), g.input(a), g.input(delta), g.input(Bv), g.input(Cv), g.input(Dv));
    const Tensor& out = g.value(y);

    for (int j = 0; j < h; ++j) {
        const double A = -std::exp(a.data[static_cast<std::size_t>(j)]);
        const double dt = std::exp(delta.data[static_cast<std::size_t>(j)]);
        const double abar = std::exp(dt * A);
        const double bbar = (abar - 1.0) / A * Bv.data[static_cast<std::size_t>(j)];
        const double xc = x0.data[static_cast<std::size_t>(j)];
        for (int t = 0; t < T; ++t) {
            // s_t = bbar * x * (1 - abar^(t+1)) / (1 - abar)
            const double st = bbar * xc * (1.0 - std::pow(abar, t + 1)) / (1.0 - abar);
            const double want = Cv.data[static_cast<std::size_t>(j)] * st + Dv.data[static_cast<std::size_t>(j)] * xc;
            CHECK(std::abs(out.data[static_cast<std::size_t>(t) * h + j] - want) < 1e-10);
        }
    }
}

TEST_CASE("ssm_scan is memoryless in the fast-decay limit and exact at one step") {
    const int h = 2, B = 1;
    Rng rng(56);
    Tensor a = Tensor::full({h}, 5.0);  // A = -exp(5), abar ~ 5e-65
    Tensor delta = Tensor::zeros({h});
    Tensor Bv = random_tensor(rng, {h}), Cv = random_tensor(rng, {h}), Dv = random_tensor(rng, {h});

    Tensor x = random_tensor(rng, {B, 6, h});
    Graph g;
    const Tensor& y = g.value(
        ssm_scan(g, g.input(x), g.input(a), g.input(delta), g.input(Bv), g.input(Cv), g.input(Dv)));
    for (int t = 0; t < 6; ++t)
        for (int j = 0; j < h; ++j) {
            const double A = -std::exp(5.0);
            const double abar = std::exp(A);
            const double bbar = (abar - 1.0) / A * Bv.data[static_cast<std::size_t>(j)];
            const double xv = x.data[static_cast<std::size_t>(t) * h + j];
            const double want =
                Cv.data[static_cast<std::size_t>(j)] * bbar * xv + Dv.data[static_cast<std::size_t>(j)] * xv;
            CHECK(std::abs(y.data[static_cast<std::size_t>(t) * h + j] - want) < 1e-12);
        }

    // T = 1: y_1 = C.bbar.x_1 + D.x_1 regardless of decay rate
    Tensor a2 = random_tensor(rng, {h}, -0.5, 0.5);
    Tensor x1 = random_tensor(rng, {B, 1, h});
    Graph g2;
    const Tensor& y1 = g2.value(
        ssm_scan(g2, g2.input(x1), g2.input(a2), g2.input(delta), g2.input(Bv), g2.input(Cv), g2.input(Dv)));
    for (int j = 0; j < h; ++j) {
        const double A = -std::exp(a2.data[static_cast<std::size_t>(j)]);
        const double abar = std::exp(A);
        const double bbar = (abar - 1.0) / A * Bv.data[static_cast<std::size_t>(j)];
        const double xv = x1.data[static_cast<std::size_t>(j)];
        const double want =
            Cv.data[static_cast<std::size_t>(j)] * bbar * xv + Dv.data[static_cast<std::size_t>(j)] * xv;
        CHECK(std::abs(y1.data[static_cast<std::size_t>(j)] - want) < 1e-13);
    }
}

TEST_CASE("attention block with zero value projection reduces to x + FFN(LN(x))") {
    const int B = 2, T = 5, h = 4, heads = 2;
    Rng rng(57);
    const Tensor x = random_tensor(rng, {B, T, h});
    const Tensor ln_g = Tensor::full({h}, 1.0), ln_b = Tensor::zeros({h});
    const Tensor Wq = random_tensor(rng, {h, h}), Wk = random_tensor(rng, {h, h});
    const Tensor Wo = random_tensor(rng, {h, h});
    const Tensor zeroM = Tensor::zeros({h, h}), zeroV = Tensor::zeros({h});
    const Tensor W1 = random_tensor(rng, {h, 4 * h}), W2 = random_tensor(rng, {4 * h, h});
    const Tensor b1 = random_tensor(rng, {4 * h}), b2 = random_tensor(rng, {h});

    Graph g;
    AttentionNodes n{g.input(ln_g), g.input(ln_b), g.input(Wq),   g.input(zeroV), g.input(Wk),
                     g.input(zeroV), g.input(zeroM), g.input(zeroV), g.input(Wo),   g.input(zeroV),
                     g.input(ln_g), g.input(ln_b), g.input(W1),   g.input(b1),    g.input(W2),
                     g.input(b2)};
    Value xin = g.input(x);
    const Tensor got = g.value(attention_block(g, xin, n, heads));

    Graph g2;
    Value x2 = g2.input(x);
    Value v = g2.layer_norm(x2, g2.input(ln_g), g2.input(ln_b));
    Value f = g2.bias_add(
        g2.matmul(g2.gelu(g2.bias_add(g2.matmul(g2.reshape(v, {B * T, h}), g2.input(W1)), g2.input(b1))),
                  g2.input(W2)),
        g2.input(b2));
    const Tensor want = g2.value(g2.add(x2, g2.reshape(f, {B, T, h})));

    for (std::size_t i = 0; i < got.data.size(); ++i) CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
}

TEST_CASE("model init is deterministic in the seed") {
    ArchitectureSpec spec = make_spec({BlockKind::ATTENTION, BlockKind::GRU}, 8, 2);
    Model a = Model::init(spec, 77), b = Model::init(spec, 77), c = Model::init(spec, 78);
    REQUIRE(a.params().size() == b.params().size());
    bool any_diff = false;
    for (std::size_t i = 0; i < a.params().size(); ++i) {
        CHECK(a.params()[i].value.data == b.params()[i].value.data);
        if (a.params()[i].value.data != c.params()[i].value.data) any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("checkpoint round trip preserves key, spec and every tensor") {
    ArchitectureSpec spec = make_spec({BlockKind::SSM, BlockKind::LSTM}, 8, 2, 24, 6);
    spec.downsample_stride = 2;
    Model m = Model::init(spec, 123);
    const std::string key = canonical_key(spec);
    const std::filesystem::path path = std::filesystem::temp_directory_path() / "tsarch_ckpt_test.bin";
    save_checkpoint(path, key, m);
    auto [loaded_key, loaded] = load_checkpoint(path);
    std::filesystem::remove(path);

    CHECK(loaded_key == key);
    CHECK(loaded.spec().blocks == spec.blocks);
    CHECK(loaded.spec().downsample_stride == 2);
    REQUIRE(loaded.params().size() == m.params().size());
    for (std::size_t i = 0; i < m.params().size(); ++i) {
        CHECK(loaded.params()[i].name == m.params()[i].name);
        CHECK(loaded.params()[i].value.data == m.params()[i].value.data);
    }
}
