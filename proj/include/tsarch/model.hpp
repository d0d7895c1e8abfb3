#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tsarch/arch_space.hpp"
#include "tsarch/graph.hpp"

namespace tsarch::nn {

// Forward conventions (normative for every implementation of this model,
// including test oracles):
//
//   embedding   e_t = x_t * W_e + b_e + PE[t], PE the sinusoidal table
//               PE[t, 2i] = sin(t * w_i), PE[t, 2i+1] = cos(t * w_i),
//               w_i = 10000^(-2i/h), t counted from 0.
//   GRU         h_0 = 0; gate chunks [r|z|n] of x_t*W_ih + b_ih and h*W_hh + b_hh;
//               r = sigmoid(xr + hr); z = sigmoid(xz + hz);
//               n = tanh(xn + r . hn); h' = (1 - z) . n + z . h. Output is h_t.
//   LSTM        h_0 = c_0 = 0; chunks [i|f|g|o]; i,f,o sigmoid, g tanh;
//               c' = f . c + i . g; h' = o . tanh(c').
//   attention   pre-LN residual pair: y1 = x + MHA(LN(x)); y = y1 + FFN(LN(y1)).
//               MHA: full (non-causal) self-attention, scores scaled by 1/sqrt(h/heads).
//               FFN: W2 * gelu(W1 * v + b1) + b2 with gelu in exact erf form.
//   SSM         same residual wrapper with a per-channel linear scan in place of MHA:
//               A = -exp(a), dt = exp(delta), abar = exp(dt * A),
//               bbar = ((abar - 1) / A) * B (zero-order hold), s_0 = 0,
//               s_t = abar . s_{t-1} + bbar . u_t, y_t = C . s_t + D . u_t.
//   output      parameter-free layer norm of the last time-step representation,
//               then the affine head h -> horizon.
//
// Layer norms use biased variance and eps = Graph::kLayerNormEps.
//
// Initialization (fixed draw order = parameter order): weight matrices
// uniform(-1/sqrt(h), 1/sqrt(h)), biases zero, LN scale 1 / shift 0,
// SSM a = delta = 0, B and C uniform like matrices, D = 1.

struct NamedTensor {
    std::string name;
    Tensor value;
};

struct AttentionNodes {
    Value ln1_g, ln1_b, Wq, bq, Wk, bk, Wv, bv, Wo, bo, ln2_g, ln2_b, W1, b1, W2, b2;
};

struct SsmNodes {
    Value ln1_g, ln1_b, a, delta, B, C, D, ln2_g, ln2_b, W1, b1, W2, b2;
};

Value gru_block(Graph& g, Value seq, Value Wih, Value Whh, Value bih, Value bhh);
Value lstm_block(Graph& g, Value seq, Value Wih, Value Whh, Value bih, Value bhh);
Value attention_block(Graph& g, Value seq, const AttentionNodes& p, int heads);
Value ssm_scan(Graph& g, Value x, Value a, Value delta, Value B, Value C, Value D);
Value ssm_block(Graph& g, Value seq, const SsmNodes& p);

/// Sinusoidal positional table, shape [T, h].
Tensor positional_encoding(int T, int h);

/// A realized architecture with its parameter tensors.
class Model {
public:
    static Model init(const ArchitectureSpec& spec, std::uint64_t seed, int input_dim = 1);

    struct GraphBuild {
        std::vector<Value> param_nodes;  // same order as params()
        Value output;                    // [B, horizon, 1]
    };

    /// Append the full forward computation to a graph. window is [B, T, input_dim]
    /// where T is the (already downsampled) lookback length.
    GraphBuild build_forward(Graph& g, const Tensor& window) const;

    /// Evaluation-only forward pass.
    Tensor forward(const Tensor& window) const;

    const ArchitectureSpec& spec() const { return spec_; }
    int input_dim() const { return input_dim_; }
    std::vector<NamedTensor>& params() { return params_; }
    const std::vector<NamedTensor>& params() const { return params_; }

    /// Total element count over all parameter tensors.
    std::int64_t runtime_parameter_count() const;

private:
    ArchitectureSpec spec_;
    int input_dim_ = 1;
    std::vector<NamedTensor> params_;

    int param_index(const std::string& name) const;
};

/// Closed-form parameter count; must agree with Model::runtime_parameter_count.
std::int64_t parameter_count(const ArchitectureSpec& spec, int input_dim = 1);

/// Checkpoint: one JSON header line (key, spec, tensor manifest) followed by
/// raw little-endian doubles in manifest order.
void save_checkpoint(const std::filesystem::path& path, const std::string& key, const Model& model);
std::pair<std::string, Model> load_checkpoint(const std::filesystem::path& path);

}  // namespace tsarch::nn
