#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "tsarch/errors.hpp"
#include "tsarch/graph.hpp"
#include "tsarch/rng.hpp"

using namespace tsarch;
using namespace tsarch::nn;

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

using Builder = std::function<Value(Graph&, const std::vector<Value>&)>;

// Central finite differences against the tape, elementwise relative error < tol.
void check_op_gradients(const std::vector<Tensor>& leaves, const Builder& build, double fd_eps = 1e-5,
                        double tol = 1e-4) {
    Graph g;
    std::vector<Value> nodes;
    nodes.reserve(leaves.size());
    for (const Tensor& t : leaves) nodes.push_back(g.param(t));
    Value loss = build(g, nodes);
    g.backward(loss);
    std::vector<Tensor> grads;
    grads.reserve(nodes.size());
    for (Value v : nodes) grads.push_back(g.grad(v));

    auto eval = [&](const std::vector<Tensor>& pts) {
        Graph gg;
        std::vector<Value> ns;
        ns.reserve(pts.size());
        for (const Tensor& t : pts) ns.push_back(gg.input(t));
        return gg.value(build(gg, ns)).data[0];
    };

    for (std::size_t li = 0; li < leaves.size(); ++li) {
        for (std::size_t ei = 0; ei < leaves[li].data.size(); ++ei) {
            std::vector<Tensor> plus = leaves, minus = leaves;
            plus[li].data[ei] += fd_eps;
            minus[li].data[ei] -= fd_eps;
            const double fd = (eval(plus) - eval(minus)) / (2.0 * fd_eps);
            const double ad = grads[li].data[ei];
            // floor 1e-6: below it the comparison is absolute at 1e-10, an order above
            // the ~1e-11 central-difference noise of eps=1e-5 on an O(1) loss
            const double rel = std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1e-6});
            CHECK(rel < tol);
        }
    }
}

// Scalar loss with non-uniform weights so gradients are exercised per element.
Value weighted_sum(Graph& g, Value y, const Tensor& w) { return g.sum_all(g.mul(y, g.input(w))); }

}  // namespace

TEST_CASE("elementwise op gradients match finite differences") {
    Rng rng(11);
    const std::vector<int> shape{3, 4};
    Tensor a = random_tensor(rng, shape), b = random_tensor(rng, shape);
    for (double& v : b.data) v += (v >= 0 ? 1.5 : -1.5);  // keep div well away from zero
    Tensor w = random_tensor(rng, shape, 0.5, 1.5);

    check_op_gradients({a, b}, [&](Graph& g, const std::vector<Value>& n) {
        return weighted_sum(g, g.add(n[0], n[1]), w);
    });
    check_op_gradients({a, b}, [&](Graph& g, const std::vector<Value>& n) {
        return weighted_sum(g, g.sub(n[0], n[1]), w);
    });
    check_op_gradients({a, b}, [&](Graph& g, const std::vector<Value>& n) {
        return weighted_sum(g, g.mul(n[0], n[1]), w);
    });
    check_op_gradients({a, b}, [&](Graph& g, const std::vector<Value>& n) {
        return weighted_sum(g, g.div(n[0], n[1]), w);
    });
    check_op_gradients({a}, [&](Graph& g, const std::vector<Value>& n) {
        return weighted_sum(g, g.scalar_affine(n[0], -2.5, 0.75), w);
    });
    check_op_gradients({a}, [&](Graph& g, const std::vector<Value>& n) {
        return weighted_sum(g, g.sigmoid(n[0]), w);
    });
    check_op_gradients({a}, [&](Graph& g, const std::vector<Value>& n) {
        return weighted_sum(g, g.tanh_(n[0]), w);
    });
    check_op_gradients({a}, [&](Graph& g, const std::vector<Value>& n) {
        return weighted_sum(g, g.gelu(n[0]), w);
    });
    check_op_gradients({a}, [&](Graph& g, const std::vector<Value>& n) {
        return weighted_sum(g, g.exp_(n[0]), w);
    });
}

TEST_CASE("matmul and bmm gradients match finite differences") {
    Rng rng(12);
    Tensor a = random_tensor(rng, {3, 4});
    Tensor b = random_tensor(rng, {4, 5});
    Tensor w = random_tensor(rng, {3, 5}, 0.5, 1.5);
    check_op_gradients({a, b}, [&](Graph& g, const std::vector<Value>& n) {
        return weighted_sum(g, g.matmul(n[0], n[1]), w);
    });

    Tensor ba = random_tensor(rng, {2, 3, 4});
    Tensor bb = random_tensor(rng, {2, 4, 5});
    Tensor bw = random_tensor(rng, {2, 3, 5}, 0.5, 1.5);
    check_op_gradients({ba, bb}, [&](Graph& g, const std::vector<Value>& n) {
        return weighted_sum(g, g.bmm(n[0], n[1]), bw);
    });

    Tensor bt = random_tensor(rng, {2, 5, 4});  // used transposed
    check_op_gradients({ba, bt}, [&](Graph& g, const std::vector<Value>& n) {
        return weighted_sum(g, g.bmm(n[0], n[1], true), bw);
    });
}

TEST_CASE("broadcast, norm and softmax gradients match finite differences") {
    Rng rng(13);
    Tensor x = random_tensor(rng, {4, 6});
    Tensor vec = random_tensor(rng, {6});
    Tensor gamma = random_tensor(rng, {6}, 0.5, 1.5);
    Tensor beta = random_tensor(rng, {6});
    Tensor w = random_tensor(rng, {4, 6}, 0.5, 1.5);

    check_op_gradients({x, vec}, [&](Graph& g, const std::vector<Value>& n) {
        return weighted_sum(g, g.bias_add(n[0], n[1]), w);
    });
    check_op_gradients({x, vec}, [&](Graph& g, const std::vector<Value>& n) {
        return weighted_sum(g, g.vec_mul(n[0], n[1]), w);
    });
    check_op_gradients({x, gamma, beta}, [&](Graph& g, const std::vector<Value>& n) {
        return weighted_sum(g, g.layer_norm(n[0], n[1], n[2]), w);
    });
    check_op_gradients({x}, [&](Graph& g, const std::vector<Value>& n) {
        return weighted_sum(g, g.layer_norm_plain(n[0]), w);
    });
    check_op_gradients({x}, [&](Graph& g, const std::vector<Value>& n) {
        return weighted_sum(g, g.softmax_last(n[0]), w);
    });
}

TEST_CASE("data movement gradients match finite differences") {
    Rng rng(14);
    Tensor x3 = random_tensor(rng, {2, 3, 4});
    Tensor w2 = random_tensor(rng, {2, 4}, 0.5, 1.5);
    check_op_gradients({x3}, [&](Graph& g, const std::vector<Value>& n) {
        return weighted_sum(g, g.slice_time(n[0], 1), w2);
    });

    Tensor x4 = random_tensor(rng, {2, 3, 2, 2});
    Tensor w4 = random_tensor(rng, {2, 2, 3, 2}, 0.5, 1.5);
    check_op_gradients({x4}, [&](Graph& g, const std::vector<Value>& n) {
        return weighted_sum(g, g.permute_0213(n[0]), w4);
    });

    Tensor x2 = random_tensor(rng, {3, 6});
    Tensor wc = random_tensor(rng, {3, 2}, 0.5, 1.5);
    check_op_gradients({x2}, [&](Graph& g, const std::vector<Value>& n) {
        return weighted_sum(g, g.slice_cols(n[0], 2, 4), wc);
    });

    Tensor s0 = random_tensor(rng, {2, 3}), s1 = random_tensor(rng, {2, 3});
    Tensor ws = random_tensor(rng, {2, 2, 3}, 0.5, 1.5);
    check_op_gradients({s0, s1}, [&](Graph& g, const std::vector<Value>& n) {
        return weighted_sum(g, g.stack_time({n[0], n[1]}), ws);
    });

    Tensor wr = random_tensor(rng, {6, 3}, 0.5, 1.5);
    check_op_gradients({x2}, [&](Graph& g, const std::vector<Value>& n) {
        return weighted_sum(g, g.reshape(n[0], {6, 3}), wr);
    });

    check_op_gradients({x2}, [&](Graph& g, const std::vector<Value>& n) { return g.mean_all(n[0]); });
}

TEST_CASE("layer norm output is standardized before scale and shift") {
    Rng rng(15);
    Graph g;
    Value x = g.input(random_tensor(rng, {32, 16}, -3.0, 3.0));
    Value y = g.layer_norm_plain(x);
    const Tensor& t = g.value(y);
    const int k = 16;
    for (int row = 0; row < 32; ++row) {
        double mean = 0.0, var = 0.0;
        for (int j = 0; j < k; ++j) mean += t.data[static_cast<std::size_t>(row) * k + j];
        mean /= k;
        for (int j = 0; j < k; ++j) {
            const double d = t.data[static_cast<std::size_t>(row) * k + j] - mean;
            var += d * d;
        }
        var /= k;
        CHECK(std::abs(mean) < 1e-10);
        CHECK(std::abs(var - 1.0) < 1e-8);
    }
}

TEST_CASE("softmax rows sum to one") {
    Rng rng(16);
    Graph g;
    Value x = g.input(random_tensor(rng, {10, 7}, -5.0, 5.0));
    const Tensor& y = g.value(g.softmax_last(x));
    for (int row = 0; row < 10; ++row) {
        double s = 0.0;
        for (int j = 0; j < 7; ++j) s += y.data[static_cast<std::size_t>(row) * 7 + j];
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
    // softmax of a singleton is exactly 1
    Graph g2;
    const Tensor& y1 = g2.value(g2.softmax_last(g2.input(Tensor({1, 1}, {3.7}))));
    CHECK(y1.data[0] == 1.0);
}

TEST_CASE("tape is single use") {
    Graph g;
    Value a = g.param(Tensor::scalar(2.0));
    Value loss = g.mul(a, a);
    g.backward(loss);
    CHECK(g.grad(a).data[0] == doctest::Approx(4.0));
    CHECK_THROWS_AS(g.backward(loss), GraphReuse);
}

TEST_CASE("unused parameter has zero gradient") {
    Graph g;
    Value used = g.param(Tensor::scalar(3.0));
    Value detached = g.param(Tensor({2}, {1.0, 2.0}));
    g.backward(g.mul(used, used));
    for (double v : g.grad(detached).data) CHECK(v == 0.0);
}

TEST_CASE("non-finite results are trapped") {
    Graph g;
    Value a = g.input(Tensor::scalar(1e10));
    CHECK_THROWS_AS(g.exp_(a), NumericOverflow);
    Value z = g.input(Tensor::scalar(0.0));
    Value one = g.input(Tensor::scalar(1.0));
    CHECK_THROWS_AS(g.div(one, z), NumericOverflow);
}

TEST_CASE("shape mismatches are rejected") {
    Graph g;
    Value a = g.input(Tensor::zeros({2, 3}));
    Value b = g.input(Tensor::zeros({3, 2}));
    CHECK_THROWS_AS(g.add(a, b), ShapeMismatch);
    CHECK_THROWS_AS(g.matmul(a, a), ShapeMismatch);
    CHECK_THROWS_AS(g.backward(a), ShapeMismatch);  // non-scalar loss
}
