#pragma once

#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace tsarch::nn {

/// Dense row-major tensor of 64-bit floats.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {}

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double v);
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    std::int64_t size() const {
        std::int64_t n = 1;
        for (int d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }
    int dim(std::size_t i) const { return shape.at(i); }
    int last_dim() const { return shape.back(); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

/// Handle to a node on a Graph tape.
struct Value {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Reverse-mode autodiff tape over dense tensors.
///
/// Nodes are appended in topological order; backward() replays the tape once
/// and then marks it consumed. Every op traps non-finite outputs
/// (NumericOverflow). Inputs are constants; params accumulate gradients.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Value input(Tensor v);
    Value param(Tensor v);

    const Tensor& value(Value v) const;
    const Tensor& grad(Value v) const;

    // elementwise, equal shapes
    Value add(Value a, Value b);
    Value sub(Value a, Value b);
    Value mul(Value a, Value b);
    Value div(Value a, Value b);
    // alpha * x + beta
    Value scalar_affine(Value a, double alpha, double beta);
    Value sigmoid(Value a);
    Value tanh_(Value a);
    Value gelu(Value a);
    Value exp_(Value a);

    // [n,k] x [k,m] -> [n,m]
    Value matmul(Value a, Value b);
    // [N,p,q] x [N,q,r] -> [N,p,r]; with transpose_b, b is [N,r,q] used as its transpose
    Value bmm(Value a, Value b, bool transpose_b = false);

    // broadcast over the last dimension: b and s have shape [k]
    Value bias_add(Value x, Value b);
    Value vec_mul(Value x, Value s);

    // per-position layer norm over the last dimension
    Value layer_norm(Value x, Value gamma, Value beta, double eps = kLayerNormEps);
    Value layer_norm_plain(Value x, double eps = kLayerNormEps);

    Value softmax_last(Value x);

    // data movement
    Value reshape(Value x, std::vector<int> shape);
    Value permute_0213(Value x);             // [d0,d1,d2,d3] -> [d0,d2,d1,d3]
    Value slice_time(Value x, int t);        // [B,T,k] -> [B,k]
    Value stack_time(const std::vector<Value>& steps);  // T x [B,k] -> [B,T,k]
    Value slice_cols(Value x, int c0, int c1);          // [n,k] -> [n,c1-c0]

    // reductions to scalar shape [1]
    Value sum_all(Value x);
    Value mean_all(Value x);

    /// Backpropagate from a scalar loss. The tape is single-use.
    void backward(Value loss);

    std::size_t node_count() const { return nodes_.size(); }

    // Small enough that unit-variance inputs normalize to variance 1 within 1e-8.
    static constexpr double kLayerNormEps = 1e-10;

private:
    struct Node {
        Tensor val;
        Tensor grad;
        std::function<void()> back;  // empty for leaves
    };

    std::vector<Node> nodes_;
    bool consumed_ = false;

    Value emplace(Tensor val, std::function<void()> back, const char* op);
    Tensor& grad_ref(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }
    const Tensor& val_ref(int id) const { return nodes_[static_cast<std::size_t>(id)].val; }
    void check(Value v) const;
};

}  // namespace tsarch::nn
