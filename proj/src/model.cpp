#include "tsarch/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "tsarch/errors.hpp"
#include "tsarch/rng.hpp"

namespace tsarch::nn {

using nlohmann::json;

Value gru_block(Graph& g, Value seq, Value Wih, Value Whh, Value bih, Value bhh) {
    const std::vector<int> shape = g.value(seq).shape;
    if (shape.size() != 3) throw ShapeMismatch("gru_block expects [B,T,h]");
    const int T = shape[1], h = shape[2];
    Value state = g.input(Tensor::zeros({shape[0], h}));
    std::vector<Value> outs;
    outs.reserve(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        Value xt = g.slice_time(seq, t);
        Value gi = g.bias_add(g.matmul(xt, Wih), bih);
        Value gh = g.bias_add(g.matmul(state, Whh), bhh);
        Value r = g.sigmoid(g.add(g.slice_cols(gi, 0, h), g.slice_cols(gh, 0, h)));
        Value z = g.sigmoid(g.add(g.slice_cols(gi, h, 2 * h), g.slice_cols(gh, h, 2 * h)));
        Value n = g.tanh_(g.add(g.slice_cols(gi, 2 * h, 3 * h), g.mul(r, g.slice_cols(gh, 2 * h, 3 * h))));
        // h' = (1 - z) . n + z . h
        state = g.add(g.sub(n, g.mul(z, n)), g.mul(z, state));
        outs.push_back(state);
    }
    return g.stack_time(outs);
}

Value lstm_block(Graph& g, Value seq, Value Wih, Value Whh, Value bih, Value bhh) {
    const std::vector<int> shape = g.value(seq).shape;
    if (shape.size() != 3) throw ShapeMismatch("lstm_block expects [B,T,h]");
    const int T = shape[1], h = shape[2];
    Value state = g.input(Tensor::zeros({shape[0], h}));
    Value cell = g.input(Tensor::zeros({shape[0], h}));
    std::vector<Value> outs;
    outs.reserve(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        Value xt = g.slice_time(seq, t);
        Value gi = g.bias_add(g.matmul(xt, Wih), bih);
        Value gh = g.bias_add(g.matmul(state, Whh), bhh);
        Value pre = g.add(gi, gh);
        Value i_g = g.sigmoid(g.slice_cols(pre, 0, h));
        Value f_g = g.sigmoid(g.slice_cols(pre, h, 2 * h));
        Value g_g = g.tanh_(g.slice_cols(pre, 2 * h, 3 * h));
        Value o_g = g.sigmoid(g.slice_cols(pre, 3 * h, 4 * h));
        cell = g.add(g.mul(f_g, cell), g.mul(i_g, g_g));
        state = g.mul(o_g, g.tanh_(cell));
        outs.push_back(state);
    }
    return g.stack_time(outs);
}

namespace {

Value ffn(Graph& g, Value x2d, Value W1, Value b1, Value W2, Value b2) {
    Value hdn = g.gelu(g.bias_add(g.matmul(x2d, W1), b1));
    return g.bias_add(g.matmul(hdn, W2), b2);
}

}  // namespace

Value attention_block(Graph& g, Value seq, const AttentionNodes& p, int heads) {
    const std::vector<int> shape = g.value(seq).shape;
    if (shape.size() != 3) throw ShapeMismatch("attention_block expects [B,T,h]");
    const int B = shape[0], T = shape[1], h = shape[2];
    if (h % heads != 0) throw ShapeMismatch("hidden dim not divisible by heads");
    const int dh = h / heads;

    Value u = g.layer_norm(seq, p.ln1_g, p.ln1_b);
    Value uf = g.reshape(u, {B * T, h});
    auto split_heads = [&](Value proj) {
        Value four = g.reshape(proj, {B, T, heads, dh});
        return g.reshape(g.permute_0213(four), {B * heads, T, dh});
    };
    Value Q = split_heads(g.bias_add(g.matmul(uf, p.Wq), p.bq));
    Value K = split_heads(g.bias_add(g.matmul(uf, p.Wk), p.bk));
    Value V = split_heads(g.bias_add(g.matmul(uf, p.Wv), p.bv));

    Value scores = g.scalar_affine(g.bmm(Q, K, /*transpose_b=*/true), 1.0 / std::sqrt(double(dh)), 0.0);
    Value att = g.softmax_last(scores);
    Value ctx = g.bmm(att, V);
    Value merged = g.reshape(g.permute_0213(g.reshape(ctx, {B, heads, T, dh})), {B * T, h});
    Value proj = g.bias_add(g.matmul(merged, p.Wo), p.bo);
    Value y1 = g.add(seq, g.reshape(proj, {B, T, h}));

    Value v = g.layer_norm(y1, p.ln2_g, p.ln2_b);
    Value f = ffn(g, g.reshape(v, {B * T, h}), p.W1, p.b1, p.W2, p.b2);
    return g.add(y1, g.reshape(f, {B, T, h}));
}

Value ssm_scan(Graph& g, Value x, Value a, Value delta, Value B, Value C, Value D) {
    // copy dims up front: g.value() references are invalidated by later op insertions
    const std::vector<int> xshape = g.value(x).shape;
    if (xshape.size() != 3) throw ShapeMismatch("ssm_scan expects [B,T,h]");
    const int T = xshape[1];
    // A = -exp(a) < 0, dt = exp(delta); zero-order hold:
    //   abar = exp(dt*A) = exp(-exp(delta + a))
    //   bbar = ((abar - 1)/A) * B = (1 - abar) * exp(-a) * B
    Value dtA = g.exp_(g.add(delta, a));
    Value abar = g.exp_(g.scalar_affine(dtA, -1.0, 0.0));
    Value inv_negA = g.exp_(g.scalar_affine(a, -1.0, 0.0));
    Value bbar = g.mul(g.mul(g.scalar_affine(abar, -1.0, 1.0), inv_negA), B);

    Value state = g.input(Tensor::zeros({xshape[0], xshape[2]}));
    std::vector<Value> outs;
    outs.reserve(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        Value xt = g.slice_time(x, t);
        state = g.add(g.vec_mul(state, abar), g.vec_mul(xt, bbar));
        outs.push_back(g.add(g.vec_mul(state, C), g.vec_mul(xt, D)));
    }
    return g.stack_time(outs);
}

Value ssm_block(Graph& g, Value seq, const SsmNodes& p) {
    const std::vector<int> shape = g.value(seq).shape;
    if (shape.size() != 3) throw ShapeMismatch("ssm_block expects [B,T,h]");
    const int B = shape[0], T = shape[1], h = shape[2];
    Value u = g.layer_norm(seq, p.ln1_g, p.ln1_b);
    Value scan = ssm_scan(g, u, p.a, p.delta, p.B, p.C, p.D);
    Value y1 = g.add(seq, scan);
    Value v = g.layer_norm(y1, p.ln2_g, p.ln2_b);
    Value f = ffn(g, g.reshape(v, {B * T, h}), p.W1, p.b1, p.W2, p.b2);
    return g.add(y1, g.reshape(f, {B, T, h}));
}

Tensor positional_encoding(int T, int h) {
    Tensor pe = Tensor::zeros({T, h});
    for (int t = 0; t < T; ++t) {
        for (int j = 0; j < h; ++j) {
            const int i = j / 2;
            const double w = std::pow(10000.0, -2.0 * i / h);
            pe.data[static_cast<std::size_t>(t) * h + j] = (j % 2 == 0) ? std::sin(t * w) : std::cos(t * w);
        }
    }
    return pe;
}

namespace {

Tensor uniform_matrix(Rng& rng, std::vector<int> shape, double bound) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

}  // namespace

Model Model::init(const ArchitectureSpec& spec, std::uint64_t seed, int input_dim) {
    spec.validate();
    if (input_dim < 1) throw ShapeMismatch("input_dim must be positive");
    Model m;
    m.spec_ = spec;
    m.input_dim_ = input_dim;
    Rng rng(seed);
    const int h = spec.hidden_dim;
    const double bound = 1.0 / std::sqrt(static_cast<double>(h));
    const int e = spec.ffn_expansion;

    auto mat = [&](const std::string& name, std::vector<int> shape) {
        m.params_.push_back({name, uniform_matrix(rng, std::move(shape), bound)});
    };
    auto fill = [&](const std::string& name, std::vector<int> shape, double v) {
        m.params_.push_back({name, Tensor::full(std::move(shape), v)});
    };

    mat("embed.W", {input_dim, h});
    fill("embed.b", {h}, 0.0);

    for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
        const std::string pre = "block" + std::to_string(i) + ".";
        switch (spec.blocks[i]) {
            case BlockKind::GRU:
                mat(pre + "gru.W_ih", {h, 3 * h});
                mat(pre + "gru.W_hh", {h, 3 * h});
                fill(pre + "gru.b_ih", {3 * h}, 0.0);
                fill(pre + "gru.b_hh", {3 * h}, 0.0);
                break;
            case BlockKind::LSTM:
                mat(pre + "lstm.W_ih", {h, 4 * h});
                mat(pre + "lstm.W_hh", {h, 4 * h});
                fill(pre + "lstm.b_ih", {4 * h}, 0.0);
                fill(pre + "lstm.b_hh", {4 * h}, 0.0);
                break;
            case BlockKind::ATTENTION:
                fill(pre + "attn.ln1_g", {h}, 1.0);
                fill(pre + "attn.ln1_b", {h}, 0.0);
                mat(pre + "attn.Wq", {h, h});
                fill(pre + "attn.bq", {h}, 0.0);
                mat(pre + "attn.Wk", {h, h});
                fill(pre + "attn.bk", {h}, 0.0);
                mat(pre + "attn.Wv", {h, h});
                fill(pre + "attn.bv", {h}, 0.0);
                mat(pre + "attn.Wo", {h, h});
                fill(pre + "attn.bo", {h}, 0.0);
                fill(pre + "attn.ln2_g", {h}, 1.0);
                fill(pre + "attn.ln2_b", {h}, 0.0);
                mat(pre + "attn.ffn.W1", {h, e * h});
                fill(pre + "attn.ffn.b1", {e * h}, 0.0);
                mat(pre + "attn.ffn.W2", {e * h, h});
                fill(pre + "attn.ffn.b2", {h}, 0.0);
                break;
            case BlockKind::SSM:
                fill(pre + "ssm.ln1_g", {h}, 1.0);
                fill(pre + "ssm.ln1_b", {h}, 0.0);
                fill(pre + "ssm.a", {h}, 0.0);
                fill(pre + "ssm.delta", {h}, 0.0);
                mat(pre + "ssm.B", {h});
                mat(pre + "ssm.C", {h});
                fill(pre + "ssm.D", {h}, 1.0);
                fill(pre + "ssm.ln2_g", {h}, 1.0);
                fill(pre + "ssm.ln2_b", {h}, 0.0);
                mat(pre + "ssm.ffn.W1", {h, e * h});
                fill(pre + "ssm.ffn.b1", {e * h}, 0.0);
                mat(pre + "ssm.ffn.W2", {e * h, h});
                fill(pre + "ssm.ffn.b2", {h}, 0.0);
                break;
        }
    }

    mat("head.W", {h, spec.horizon});
    fill("head.b", {spec.horizon}, 0.0);
    return m;
}

int Model::param_index(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
        if (params_[i].name == name) return static_cast<int>(i);
    throw std::logic_error("unknown parameter " + name);
}

Model::GraphBuild Model::build_forward(Graph& g, const Tensor& window) const {
    if (window.shape.size() != 3 || window.shape[2] != input_dim_)
        throw ShapeMismatch("window must be [B,T,input_dim]");
    const int B = window.shape[0], T = window.shape[1];
    const int h = spec_.hidden_dim;

    GraphBuild build;
    build.param_nodes.reserve(params_.size());
    for (const NamedTensor& p : params_) build.param_nodes.push_back(g.param(p.value));
    auto P = [&](const std::string& name) { return build.param_nodes[static_cast<std::size_t>(param_index(name))]; };

    Value x = g.input(Tensor({B * T, input_dim_}, window.data));
    Value emb = g.bias_add(g.matmul(x, P("embed.W")), P("embed.b"));

    Tensor pe = positional_encoding(T, h);
    Tensor pe_tiled = Tensor::zeros({B * T, h});
    for (int b = 0; b < B; ++b)
        std::copy(pe.data.begin(), pe.data.end(),
                  pe_tiled.data.begin() + static_cast<std::size_t>(b) * pe.data.size());
    emb = g.add(emb, g.input(std::move(pe_tiled)));

    Value seq = g.reshape(emb, {B, T, h});
    for (std::size_t i = 0; i < spec_.blocks.size(); ++i) {
        const std::string pre = "block" + std::to_string(i) + ".";
        switch (spec_.blocks[i]) {
            case BlockKind::GRU:
                seq = gru_block(g, seq, P(pre + "gru.W_ih"), P(pre + "gru.W_hh"), P(pre + "gru.b_ih"),
                                P(pre + "gru.b_hh"));
                break;
            case BlockKind::LSTM:
                seq = lstm_block(g, seq, P(pre + "lstm.W_ih"), P(pre + "lstm.W_hh"), P(pre + "lstm.b_ih"),
                                 P(pre + "lstm.b_hh"));
                break;
            case BlockKind::ATTENTION: {
                AttentionNodes n{P(pre + "attn.ln1_g"), P(pre + "attn.ln1_b"), P(pre + "attn.Wq"),
                                 P(pre + "attn.bq"),    P(pre + "attn.Wk"),    P(pre + "attn.bk"),
                                 P(pre + "attn.Wv"),    P(pre + "attn.bv"),    P(pre + "attn.Wo"),
                                 P(pre + "attn.bo"),    P(pre + "attn.ln2_g"), P(pre + "attn.ln2_b"),
                                 P(pre + "attn.ffn.W1"), P(pre + "attn.ffn.b1"), P(pre + "attn.ffn.W2"),
                                 P(pre + "attn.ffn.b2")};
                seq = attention_block(g, seq, n, spec_.heads);
                break;
            }
            case BlockKind::SSM: {
                SsmNodes n{P(pre + "ssm.ln1_g"), P(pre + "ssm.ln1_b"), P(pre + "ssm.a"),
                           P(pre + "ssm.delta"), P(pre + "ssm.B"),     P(pre + "ssm.C"),
                           P(pre + "ssm.D"),     P(pre + "ssm.ln2_g"), P(pre + "ssm.ln2_b"),
                           P(pre + "ssm.ffn.W1"), P(pre + "ssm.ffn.b1"), P(pre + "ssm.ffn.W2"),
                           P(pre + "ssm.ffn.b2")};
                seq = ssm_block(g, seq, n);
                break;
            }
        }
    }

    Value last = g.slice_time(seq, T - 1);
    Value normed = g.layer_norm_plain(last);
    Value out = g.bias_add(g.matmul(normed, P("head.W")), P("head.b"));
    build.output = g.reshape(out, {B, spec_.horizon, 1});
    return build;
}

Tensor Model::forward(const Tensor& window) const {
    Graph g;
    GraphBuild build = build_forward(g, window);
    return g.value(build.output);
}

std::int64_t Model::runtime_parameter_count() const {
    std::int64_t n = 0;
    for (const NamedTensor& p : params_) n += p.value.size();
    return n;
}

std::int64_t parameter_count(const ArchitectureSpec& spec, int input_dim) {
    spec.validate();
    const std::int64_t h = spec.hidden_dim;
    const std::int64_t e = spec.ffn_expansion;
    const std::int64_t ffn = 2 * e * h * h + e * h + h;
    std::int64_t total = input_dim * h + h;  // embedding
    for (BlockKind kind : spec.blocks) {
        switch (kind) {
            case BlockKind::GRU: total += 6 * h * h + 6 * h; break;
            case BlockKind::LSTM: total += 8 * h * h + 8 * h; break;
            case BlockKind::ATTENTION: total += 4 * h /*norms*/ + 4 * (h * h + h) /*QKVO*/ + ffn; break;
            case BlockKind::SSM: total += 4 * h /*norms*/ + 5 * h /*a,delta,B,C,D*/ + ffn; break;
        }
    }
    total += h * spec.horizon + spec.horizon;  // head
    return total;
}

void save_checkpoint(const std::filesystem::path& path, const std::string& key, const Model& model) {
    json header;
    header["format"] = "tsarch-checkpoint-v1";
    header["key"] = key;
    json spec;
    std::vector<std::string> blocks;
    for (BlockKind b : model.spec().blocks) blocks.emplace_back(to_string(b));
    spec["blocks"] = blocks;
    spec["hidden_dim"] = model.spec().hidden_dim;
    spec["lookback"] = model.spec().lookback;
    spec["horizon"] = model.spec().horizon;
    spec["downsample_stride"] = model.spec().downsample_stride;
    spec["heads"] = model.spec().heads;
    spec["ffn_expansion"] = model.spec().ffn_expansion;
    header["spec"] = spec;
    header["input_dim"] = model.input_dim();
    json manifest = json::array();
    for (const NamedTensor& p : model.params()) {
        manifest.push_back({{"name", p.name}, {"shape", p.value.shape}});
    }
    header["tensors"] = manifest;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
    out << header.dump() << '\n';
    for (const NamedTensor& p : model.params()) {
        out.write(reinterpret_cast<const char*>(p.value.data.data()),
                  static_cast<std::streamsize>(p.value.data.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

std::pair<std::string, Model> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
    std::string header_line;
    if (!std::getline(in, header_line)) throw std::runtime_error("checkpoint missing header: " + path.string());
    json header = json::parse(header_line);
    if (header.value("format", "") != "tsarch-checkpoint-v1")
        throw std::runtime_error("unrecognized checkpoint format in " + path.string());

    ArchitectureSpec spec;
    spec.blocks.clear();
    for (const auto& b : header["spec"]["blocks"]) spec.blocks.push_back(block_kind_from(b.get<std::string>()));
    spec.hidden_dim = header["spec"]["hidden_dim"].get<int>();
    spec.lookback = header["spec"]["lookback"].get<int>();
    spec.horizon = header["spec"]["horizon"].get<int>();
    spec.downsample_stride = header["spec"]["downsample_stride"].get<int>();
    spec.heads = header["spec"]["heads"].get<int>();
    spec.ffn_expansion = header["spec"]["ffn_expansion"].get<int>();

    Model model = Model::init(spec, /*seed=*/0, header["input_dim"].get<int>());
    if (header["tensors"].size() != model.params().size())
        throw std::runtime_error("checkpoint manifest does not match architecture");
    for (std::size_t i = 0; i < model.params().size(); ++i) {
        const json& entry = header["tensors"][i];
        NamedTensor& p = model.params()[i];
        if (entry["name"].get<std::string>() != p.name)
            throw std::runtime_error("checkpoint tensor order mismatch at " + p.name);
        const std::vector<int> shape = entry["shape"].get<std::vector<int>>();
        if (shape != p.value.shape) throw std::runtime_error("checkpoint tensor shape mismatch at " + p.name);
        in.read(reinterpret_cast<char*>(p.value.data.data()),
                static_cast<std::streamsize>(p.value.data.size() * sizeof(double)));
        if (!in) throw std::runtime_error("checkpoint truncated at " + p.name);
    }
    return {header["key"].get<std::string>(), std::move(model)};
}

}  // namespace tsarch::nn
