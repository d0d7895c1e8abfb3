#include "tsarch/graph.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "tsarch/errors.hpp"

namespace tsarch::nn {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

void check_finite(const Tensor& t, const char* op) {
    for (double v : t.data) {
        if (!std::isfinite(v)) throw NumericOverflow(std::string(op) + " produced NaN/Inf");
    }
}

// c[n,m] += a[n,k] * b[k,m]
void mm_nn_acc(const double* a, const double* b, double* c, int n, int k, int m) {
    for (int i = 0; i < n; ++i) {
        const double* ai = a + static_cast<std::size_t>(i) * k;
        double* ci = c + static_cast<std::size_t>(i) * m;
        for (int kk = 0; kk < k; ++kk) {
            const double av = ai[kk];
            const double* bk = b + static_cast<std::size_t>(kk) * m;
            for (int j = 0; j < m; ++j) ci[j] += av * bk[j];
        }
    }
}

// c[n,m] += a[n,k] * b[m,k]^T
void mm_nt_acc(const double* a, const double* b, double* c, int n, int k, int m) {
    for (int i = 0; i < n; ++i) {
        const double* ai = a + static_cast<std::size_t>(i) * k;
        double* ci = c + static_cast<std::size_t>(i) * m;
        for (int j = 0; j < m; ++j) {
            const double* bj = b + static_cast<std::size_t>(j) * k;
            double acc = 0.0;
            for (int kk = 0; kk < k; ++kk) acc += ai[kk] * bj[kk];
            ci[j] += acc;
        }
    }
}

// c[n,m] += a[k,n]^T * b[k,m]
void mm_tn_acc(const double* a, const double* b, double* c, int n, int k, int m) {
    for (int kk = 0; kk < k; ++kk) {
        const double* ak = a + static_cast<std::size_t>(kk) * n;
        const double* bk = b + static_cast<std::size_t>(kk) * m;
        for (int i = 0; i < n; ++i) {
            const double av = ak[i];
            double* ci = c + static_cast<std::size_t>(i) * m;
            for (int j = 0; j < m; ++j) ci[j] += av * bk[j];
        }
    }
}

struct LnRow {
    double mean;
    double inv_std;
};

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape) {
    Tensor t;
    t.shape = std::move(shape);
    std::int64_t n = 1;
    for (int d : t.shape) {
        if (d < 1) throw ShapeMismatch("non-positive dimension");
        n *= d;
    }
    t.data.assign(static_cast<std::size_t>(n), 0.0);
    return t;
}

Tensor Tensor::full(std::vector<int> shape, double v) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
}

Value Graph::emplace(Tensor val, std::function<void()> back, const char* op) {
    check_finite(val, op);
    nodes_.push_back(Node{std::move(val), Tensor{}, std::move(back)});
    return Value{static_cast<int>(nodes_.size()) - 1};
}

void Graph::check(Value v) const {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
        throw std::logic_error("dangling Value handle");
}

Value Graph::input(Tensor v) { return emplace(std::move(v), nullptr, "input"); }
Value Graph::param(Tensor v) { return emplace(std::move(v), nullptr, "param"); }

const Tensor& Graph::value(Value v) const {
    check(v);
    return val_ref(v.id);
}

const Tensor& Graph::grad(Value v) const {
    check(v);
    const Tensor& g = nodes_[static_cast<std::size_t>(v.id)].grad;
    if (g.shape.empty()) throw std::logic_error("gradient not populated; call backward() first");
    return g;
}

Value Graph::add(Value a, Value b) {
    check(a);
    check(b);
    const Tensor& ta = val_ref(a.id);
    const Tensor& tb = val_ref(b.id);
    if (!ta.same_shape(tb)) throw ShapeMismatch("add operands differ");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
    const int ia = a.id, ib = b.id, rid = static_cast<int>(nodes_.size());
    return emplace(std::move(out),
                   [this, ia, ib, rid]() {
                       const Tensor& g = grad_ref(rid);
                       Tensor& ga = grad_ref(ia);
                       Tensor& gb = grad_ref(ib);
                       for (std::size_t i = 0; i < g.data.size(); ++i) {
                           ga.data[i] += g.data[i];
                           gb.data[i] += g.data[i];
                       }
                   },
                   "add");
}

Value Graph::sub(Value a, Value b) {
    check(a);
    check(b);
    const Tensor& ta = val_ref(a.id);
    const Tensor& tb = val_ref(b.id);
    if (!ta.same_shape(tb)) throw ShapeMismatch("sub operands differ");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= tb.data[i];
    const int ia = a.id, ib = b.id, rid = static_cast<int>(nodes_.size());
    return emplace(std::move(out),
                   [this, ia, ib, rid]() {
                       const Tensor& g = grad_ref(rid);
                       Tensor& ga = grad_ref(ia);
                       Tensor& gb = grad_ref(ib);
                       for (std::size_t i = 0; i < g.data.size(); ++i) {
                           ga.data[i] += g.data[i];
                           gb.data[i] -= g.data[i];
                       }
                   },
                   "sub");
}

Value Graph::mul(Value a, Value b) {
    check(a);
    check(b);
    const Tensor& ta = val_ref(a.id);
    const Tensor& tb = val_ref(b.id);
    if (!ta.same_shape(tb)) throw ShapeMismatch("mul operands differ");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
    const int ia = a.id, ib = b.id, rid = static_cast<int>(nodes_.size());
    return emplace(std::move(out),
                   [this, ia, ib, rid]() {
                       const Tensor& g = grad_ref(rid);
                       const Tensor& va = val_ref(ia);
                       const Tensor& vb = val_ref(ib);
                       Tensor& ga = grad_ref(ia);
                       Tensor& gb = grad_ref(ib);
                       for (std::size_t i = 0; i < g.data.size(); ++i) {
                           ga.data[i] += g.data[i] * vb.data[i];
                           gb.data[i] += g.data[i] * va.data[i];
                       }
                   },
                   "mul");
}

Value Graph::div(Value a, Value b) {
    check(a);
    check(b);
    const Tensor& ta = val_ref(a.id);
    const Tensor& tb = val_ref(b.id);
    if (!ta.same_shape(tb)) throw ShapeMismatch("div operands differ");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] /= tb.data[i];
    const int ia = a.id, ib = b.id, rid = static_cast<int>(nodes_.size());
    return emplace(std::move(out),
                   [this, ia, ib, rid]() {
                       const Tensor& g = grad_ref(rid);
                       const Tensor& vb = val_ref(ib);
                       const Tensor& vo = val_ref(rid);
                       Tensor& ga = grad_ref(ia);
                       Tensor& gb = grad_ref(ib);
                       for (std::size_t i = 0; i < g.data.size(); ++i) {
                           ga.data[i] += g.data[i] / vb.data[i];
                           gb.data[i] -= g.data[i] * vo.data[i] / vb.data[i];
                       }
                   },
                   "div");
}

Value Graph::scalar_affine(Value a, double alpha, double beta) {
    check(a);
    Tensor out = val_ref(a.id);
    for (double& v : out.data) v = alpha * v + beta;
    const int ia = a.id, rid = static_cast<int>(nodes_.size());
    return emplace(std::move(out),
                   [this, ia, alpha, rid]() {
                       const Tensor& g = grad_ref(rid);
                       Tensor& ga = grad_ref(ia);
                       for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += alpha * g.data[i];
                   },
                   "scalar_affine");
}

Value Graph::sigmoid(Value a) {
    check(a);
    Tensor out = val_ref(a.id);
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    const int ia = a.id, rid = static_cast<int>(nodes_.size());
    return emplace(std::move(out),
                   [this, ia, rid]() {
                       const Tensor& g = grad_ref(rid);
                       const Tensor& y = val_ref(rid);
                       Tensor& ga = grad_ref(ia);
                       for (std::size_t i = 0; i < g.data.size(); ++i)
                           ga.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
                   },
                   "sigmoid");
}

Value Graph::tanh_(Value a) {
    check(a);
    Tensor out = val_ref(a.id);
    for (double& v : out.data) v = std::tanh(v);
    const int ia = a.id, rid = static_cast<int>(nodes_.size());
    return emplace(std::move(out),
                   [this, ia, rid]() {
                       const Tensor& g = grad_ref(rid);
                       const Tensor& y = val_ref(rid);
                       Tensor& ga = grad_ref(ia);
                       for (std::size_t i = 0; i < g.data.size(); ++i)
                           ga.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
                   },
                   "tanh");
}

Value Graph::gelu(Value a) {
    check(a);
    // exact erf form: gelu(x) = x * Phi(x)
    Tensor out = val_ref(a.id);
    for (double& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    const int ia = a.id, rid = static_cast<int>(nodes_.size());
    return emplace(std::move(out),
                   [this, ia, rid]() {
                       const Tensor& g = grad_ref(rid);
                       const Tensor& x = val_ref(ia);
                       Tensor& ga = grad_ref(ia);
                       for (std::size_t i = 0; i < g.data.size(); ++i) {
                           const double xv = x.data[i];
                           const double cdf = 0.5 * (1.0 + std::erf(xv * kInvSqrt2));
                           const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xv * xv);
                           ga.data[i] += g.data[i] * (cdf + xv * pdf);
                       }
                   },
                   "gelu");
}

Value Graph::exp_(Value a) {
    check(a);
    Tensor out = val_ref(a.id);
    for (double& v : out.data) v = std::exp(v);
    const int ia = a.id, rid = static_cast<int>(nodes_.size());
    return emplace(std::move(out),
                   [this, ia, rid]() {
                       const Tensor& g = grad_ref(rid);
                       const Tensor& y = val_ref(rid);
                       Tensor& ga = grad_ref(ia);
                       for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * y.data[i];
                   },
                   "exp");
}

Value Graph::matmul(Value a, Value b) {
    check(a);
    check(b);
    const Tensor& ta = val_ref(a.id);
    const Tensor& tb = val_ref(b.id);
    if (ta.shape.size() != 2 || tb.shape.size() != 2 || ta.shape[1] != tb.shape[0])
        throw ShapeMismatch("matmul requires [n,k] x [k,m]");
    const int n = ta.shape[0], k = ta.shape[1], m = tb.shape[1];
    Tensor out = Tensor::zeros({n, m});
    mm_nn_acc(ta.data.data(), tb.data.data(), out.data.data(), n, k, m);
    const int ia = a.id, ib = b.id, rid = static_cast<int>(nodes_.size());
    return emplace(std::move(out),
                   [this, ia, ib, rid, n, k, m]() {
                       const Tensor& g = grad_ref(rid);
                       const Tensor& va = val_ref(ia);
                       const Tensor& vb = val_ref(ib);
                       // dA += G * B^T ; dB += A^T * G
                       mm_nt_acc(g.data.data(), vb.data.data(), grad_ref(ia).data.data(), n, m, k);
                       mm_tn_acc(va.data.data(), g.data.data(), grad_ref(ib).data.data(), k, n, m);
                   },
                   "matmul");
}

Value Graph::bmm(Value a, Value b, bool transpose_b) {
    check(a);
    check(b);
    const Tensor& ta = val_ref(a.id);
    const Tensor& tb = val_ref(b.id);
    if (ta.shape.size() != 3 || tb.shape.size() != 3 || ta.shape[0] != tb.shape[0])
        throw ShapeMismatch("bmm requires [N,p,q] x [N,.,.]");
    const int N = ta.shape[0], p = ta.shape[1], q = ta.shape[2];
    const int r_dim = transpose_b ? tb.shape[1] : tb.shape[2];
    const int q_b = transpose_b ? tb.shape[2] : tb.shape[1];
    if (q_b != q) throw ShapeMismatch("bmm inner dimensions differ");
    Tensor out = Tensor::zeros({N, p, r_dim});
    const std::size_t sa = static_cast<std::size_t>(p) * q;
    const std::size_t sb = static_cast<std::size_t>(tb.shape[1]) * tb.shape[2];
    const std::size_t so = static_cast<std::size_t>(p) * r_dim;
    for (int nn = 0; nn < N; ++nn) {
        const double* pa = ta.data.data() + nn * sa;
        const double* pb = tb.data.data() + nn * sb;
        double* po = out.data.data() + nn * so;
        if (transpose_b)
            mm_nt_acc(pa, pb, po, p, q, r_dim);
        else
            mm_nn_acc(pa, pb, po, p, q, r_dim);
    }
    const int ia = a.id, ib = b.id, rid = static_cast<int>(nodes_.size());
    return emplace(std::move(out),
                   [this, ia, ib, rid, N, p, q, r_dim, sa, sb, so, transpose_b]() {
                       const Tensor& g = grad_ref(rid);
                       const Tensor& va = val_ref(ia);
                       const Tensor& vb = val_ref(ib);
                       Tensor& ga = grad_ref(ia);
                       Tensor& gb = grad_ref(ib);
                       for (int nn = 0; nn < N; ++nn) {
                           const double* pg = g.data.data() + nn * so;
                           const double* pa = va.data.data() + nn * sa;
                           const double* pb = vb.data.data() + nn * sb;
                           double* pga = ga.data.data() + nn * sa;
                           double* pgb = gb.data.data() + nn * sb;
                           if (transpose_b) {
                               // Y = A * B^T with B [r,q]: dA += G*B ; dB += G^T*A
                               mm_nn_acc(pg, pb, pga, p, r_dim, q);
                               mm_tn_acc(pg, pa, pgb, r_dim, p, q);
                           } else {
                               mm_nt_acc(pg, pb, pga, p, r_dim, q);
                               mm_tn_acc(pa, pg, pgb, q, p, r_dim);
                           }
                       }
                   },
                   "bmm");
}

Value Graph::bias_add(Value x, Value b) {
    check(x);
    check(b);
    const Tensor& tx = val_ref(x.id);
    const Tensor& tb = val_ref(b.id);
    if (tb.shape.size() != 1 || tb.shape[0] != tx.last_dim())
        throw ShapeMismatch("bias_add vector must match last dimension");
    const int k = tb.shape[0];
    Tensor out = tx;
    const std::size_t rows = out.data.size() / static_cast<std::size_t>(k);
    for (std::size_t row = 0; row < rows; ++row)
        for (int j = 0; j < k; ++j) out.data[row * k + j] += tb.data[static_cast<std::size_t>(j)];
    const int ix = x.id, ib = b.id, rid = static_cast<int>(nodes_.size());
    return emplace(std::move(out),
                   [this, ix, ib, rid, k, rows]() {
                       const Tensor& g = grad_ref(rid);
                       Tensor& gx = grad_ref(ix);
                       Tensor& gb = grad_ref(ib);
                       for (std::size_t row = 0; row < rows; ++row)
                           for (int j = 0; j < k; ++j) {
                               const double gv = g.data[row * k + j];
                               gx.data[row * k + j] += gv;
                               gb.data[static_cast<std::size_t>(j)] += gv;
                           }
                   },
                   "bias_add");
}

Value Graph::vec_mul(Value x, Value s) {
    check(x);
    check(s);
    const Tensor& tx = val_ref(x.id);
    const Tensor& ts = val_ref(s.id);
    if (ts.shape.size() != 1 || ts.shape[0] != tx.last_dim())
        throw ShapeMismatch("vec_mul vector must match last dimension");
    const int k = ts.shape[0];
    Tensor out = tx;
    const std::size_t rows = out.data.size() / static_cast<std::size_t>(k);
    for (std::size_t row = 0; row < rows; ++row)
        for (int j = 0; j < k; ++j) out.data[row * k + j] *= ts.data[static_cast<std::size_t>(j)];
    const int ix = x.id, is = s.id, rid = static_cast<int>(nodes_.size());
    return emplace(std::move(out),
                   [this, ix, is, rid, k, rows]() {
                       const Tensor& g = grad_ref(rid);
                       const Tensor& vx = val_ref(ix);
                       const Tensor& vs = val_ref(is);
                       Tensor& gx = grad_ref(ix);
                       Tensor& gs = grad_ref(is);
                       for (std::size_t row = 0; row < rows; ++row)
                           for (int j = 0; j < k; ++j) {
                               const double gv = g.data[row * k + j];
                               gx.data[row * k + j] += gv * vs.data[static_cast<std::size_t>(j)];
                               gs.data[static_cast<std::size_t>(j)] += gv * vx.data[row * k + j];
                           }
                   },
                   "vec_mul");
}

Value Graph::layer_norm(Value x, Value gamma, Value beta, double eps) {
    check(x);
    check(gamma);
    check(beta);
    const Tensor& tx = val_ref(x.id);
    const Tensor& tg = val_ref(gamma.id);
    const Tensor& tb = val_ref(beta.id);
    const int k = tx.last_dim();
    if (tg.shape != std::vector<int>{k} || tb.shape != std::vector<int>{k})
        throw ShapeMismatch("layer_norm scale/shift must match last dimension");
    const std::size_t rows = tx.data.size() / static_cast<std::size_t>(k);
    Tensor out = tx;
    auto stats = std::make_shared<std::vector<LnRow>>(rows);
    for (std::size_t row = 0; row < rows; ++row) {
        const double* px = tx.data.data() + row * k;
        double mean = 0.0;
        for (int j = 0; j < k; ++j) mean += px[j];
        mean /= k;
        double var = 0.0;
        for (int j = 0; j < k; ++j) var += (px[j] - mean) * (px[j] - mean);
        var /= k;
        const double inv_std = 1.0 / std::sqrt(var + eps);
        (*stats)[row] = {mean, inv_std};
        double* po = out.data.data() + row * k;
        for (int j = 0; j < k; ++j)
            po[j] = tg.data[static_cast<std::size_t>(j)] * ((px[j] - mean) * inv_std) +
                    tb.data[static_cast<std::size_t>(j)];
    }
    const int ix = x.id, ig = gamma.id, ibt = beta.id, rid = static_cast<int>(nodes_.size());
    return emplace(std::move(out),
                   [this, ix, ig, ibt, rid, k, rows, stats]() {
                       const Tensor& g = grad_ref(rid);
                       const Tensor& vx = val_ref(ix);
                       const Tensor& vg = val_ref(ig);
                       Tensor& gx = grad_ref(ix);
                       Tensor& gg = grad_ref(ig);
                       Tensor& gb = grad_ref(ibt);
                       for (std::size_t row = 0; row < rows; ++row) {
                           const double* px = vx.data.data() + row * k;
                           const double* pg = g.data.data() + row * k;
                           double* pgx = gx.data.data() + row * k;
                           const auto [mean, inv_std] = (*stats)[row];
                           double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                           for (int j = 0; j < k; ++j) {
                               const double xhat = (px[j] - mean) * inv_std;
                               const double dxhat = pg[j] * vg.data[static_cast<std::size_t>(j)];
                               gg.data[static_cast<std::size_t>(j)] += pg[j] * xhat;
                               gb.data[static_cast<std::size_t>(j)] += pg[j];
                               sum_dxhat += dxhat;
                               sum_dxhat_xhat += dxhat * xhat;
                           }
                           for (int j = 0; j < k; ++j) {
                               const double xhat = (px[j] - mean) * inv_std;
                               const double dxhat = pg[j] * vg.data[static_cast<std::size_t>(j)];
                               pgx[j] += inv_std * (dxhat - sum_dxhat / k - xhat * sum_dxhat_xhat / k);
                           }
                       }
                   },
                   "layer_norm");
}

Value Graph::layer_norm_plain(Value x, double eps) {
    check(x);
    const Tensor& tx = val_ref(x.id);
    const int k = tx.last_dim();
    const std::size_t rows = tx.data.size() / static_cast<std::size_t>(k);
    Tensor out = tx;
    auto stats = std::make_shared<std::vector<LnRow>>(rows);
    for (std::size_t row = 0; row < rows; ++row) {
        const double* px = tx.data.data() + row * k;
        double mean = 0.0;
        for (int j = 0; j < k; ++j) mean += px[j];
        mean /= k;
        double var = 0.0;
        for (int j = 0; j < k; ++j) var += (px[j] - mean) * (px[j] - mean);
        var /= k;
        const double inv_std = 1.0 / std::sqrt(var + eps);
        (*stats)[row] = {mean, inv_std};
        double* po = out.data.data() + row * k;
        for (int j = 0; j < k; ++j) po[j] = (px[j] - mean) * inv_std;
    }
    const int ix = x.id, rid = static_cast<int>(nodes_.size());
    return emplace(std::move(out),
                   [this, ix, rid, k, rows, stats]() {
                       const Tensor& g = grad_ref(rid);
                       const Tensor& vx = val_ref(ix);
                       Tensor& gx = grad_ref(ix);
                       for (std::size_t row = 0; row < rows; ++row) {
                           const double* px = vx.data.data() + row * k;
                           const double* pg = g.data.data() + row * k;
                           double* pgx = gx.data.data() + row * k;
                           const auto [mean, inv_std] = (*stats)[row];
                           double sum_g = 0.0, sum_g_xhat = 0.0;
                           for (int j = 0; j < k; ++j) {
                               const double xhat = (px[j] - mean) * inv_std;
                               sum_g += pg[j];
                               sum_g_xhat += pg[j] * xhat;
                           }
                           for (int j = 0; j < k; ++j) {
                               const double xhat = (px[j] - mean) * inv_std;
                               pgx[j] += inv_std * (pg[j] - sum_g / k - xhat * sum_g_xhat / k);
                           }
                       }
                   },
                   "layer_norm_plain");
}

Value Graph::softmax_last(Value x) {
    check(x);
    const Tensor& tx = val_ref(x.id);
    const int k = tx.last_dim();
    const std::size_t rows = tx.data.size() / static_cast<std::size_t>(k);
    Tensor out = tx;
    for (std::size_t row = 0; row < rows; ++row) {
        double* p = out.data.data() + row * k;
        double mx = p[0];
        for (int j = 1; j < k; ++j) mx = std::max(mx, p[j]);
        double sum = 0.0;
        for (int j = 0; j < k; ++j) {
            p[j] = std::exp(p[j] - mx);
            sum += p[j];
        }
        for (int j = 0; j < k; ++j) p[j] /= sum;
    }
    const int ix = x.id, rid = static_cast<int>(nodes_.size());
    return emplace(std::move(out),
                   [this, ix, rid, k, rows]() {
                       const Tensor& g = grad_ref(rid);
                       const Tensor& y = val_ref(rid);
                       Tensor& gx = grad_ref(ix);
                       for (std::size_t row = 0; row < rows; ++row) {
                           const double* py = y.data.data() + row * k;
                           const double* pg = g.data.data() + row * k;
                           double* pgx = gx.data.data() + row * k;
                           double dot = 0.0;
                           for (int j = 0; j < k; ++j) dot += pg[j] * py[j];
                           for (int j = 0; j < k; ++j) pgx[j] += py[j] * (pg[j] - dot);
                       }
                   },
                   "softmax");
}

Value Graph::reshape(Value x, std::vector<int> shape) {
    check(x);
    const Tensor& tx = val_ref(x.id);
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    if (n != tx.size()) throw ShapeMismatch("reshape changes element count");
    Tensor out(std::move(shape), tx.data);
    const int ix = x.id, rid = static_cast<int>(nodes_.size());
    return emplace(std::move(out),
                   [this, ix, rid]() {
                       const Tensor& g = grad_ref(rid);
                       Tensor& gx = grad_ref(ix);
                       for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i];
                   },
                   "reshape");
}

Value Graph::permute_0213(Value x) {
    check(x);
    const Tensor& tx = val_ref(x.id);
    if (tx.shape.size() != 4) throw ShapeMismatch("permute_0213 requires rank-4 input");
    const int d0 = tx.shape[0], d1 = tx.shape[1], d2 = tx.shape[2], d3 = tx.shape[3];
    Tensor out = Tensor::zeros({d0, d2, d1, d3});
    auto idx = std::make_shared<std::vector<std::size_t>>(out.data.size());
    std::size_t o = 0;
    for (int a = 0; a < d0; ++a)
        for (int c = 0; c < d2; ++c)
            for (int b = 0; b < d1; ++b)
                for (int e = 0; e < d3; ++e) {
                    const std::size_t src = ((static_cast<std::size_t>(a) * d1 + b) * d2 + c) * d3 + e;
                    (*idx)[o] = src;
                    out.data[o] = tx.data[src];
                    ++o;
                }
    const int ix = x.id, rid = static_cast<int>(nodes_.size());
    return emplace(std::move(out),
                   [this, ix, rid, idx]() {
                       const Tensor& g = grad_ref(rid);
                       Tensor& gx = grad_ref(ix);
                       for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[(*idx)[i]] += g.data[i];
                   },
                   "permute_0213");
}

Value Graph::slice_time(Value x, int t) {
    check(x);
    const Tensor& tx = val_ref(x.id);
    if (tx.shape.size() != 3) throw ShapeMismatch("slice_time requires [B,T,k]");
    const int B = tx.shape[0], T = tx.shape[1], k = tx.shape[2];
    if (t < 0 || t >= T) throw ShapeMismatch("slice_time index out of range");
    Tensor out = Tensor::zeros({B, k});
    for (int b = 0; b < B; ++b)
        for (int j = 0; j < k; ++j)
            out.data[static_cast<std::size_t>(b) * k + j] =
                tx.data[(static_cast<std::size_t>(b) * T + t) * k + j];
    const int ix = x.id, rid = static_cast<int>(nodes_.size());
    return emplace(std::move(out),
                   [this, ix, rid, B, T, k, t]() {
                       const Tensor& g = grad_ref(rid);
                       Tensor& gx = grad_ref(ix);
                       for (int b = 0; b < B; ++b)
                           for (int j = 0; j < k; ++j)
                               gx.data[(static_cast<std::size_t>(b) * T + t) * k + j] +=
                                   g.data[static_cast<std::size_t>(b) * k + j];
                   },
                   "slice_time");
}

Value Graph::stack_time(const std::vector<Value>& steps) {
    if (steps.empty()) throw ShapeMismatch("stack_time of zero steps");
    for (Value v : steps) check(v);
    const Tensor& first = val_ref(steps[0].id);
    if (first.shape.size() != 2) throw ShapeMismatch("stack_time expects [B,k] steps");
    const int B = first.shape[0], k = first.shape[1];
    const int T = static_cast<int>(steps.size());
    Tensor out = Tensor::zeros({B, T, k});
    for (int t = 0; t < T; ++t) {
        const Tensor& st = val_ref(steps[static_cast<std::size_t>(t)].id);
        if (!st.same_shape(first)) throw ShapeMismatch("stack_time steps differ in shape");
        for (int b = 0; b < B; ++b)
            for (int j = 0; j < k; ++j)
                out.data[(static_cast<std::size_t>(b) * T + t) * k + j] =
                    st.data[static_cast<std::size_t>(b) * k + j];
    }
    auto ids = std::make_shared<std::vector<int>>();
    ids->reserve(steps.size());
    for (Value v : steps) ids->push_back(v.id);
    const int rid = static_cast<int>(nodes_.size());
    return emplace(std::move(out),
                   [this, rid, ids, B, T, k]() {
                       const Tensor& g = grad_ref(rid);
                       for (int t = 0; t < T; ++t) {
                           Tensor& gs = grad_ref((*ids)[static_cast<std::size_t>(t)]);
                           for (int b = 0; b < B; ++b)
                               for (int j = 0; j < k; ++j)
                                   gs.data[static_cast<std::size_t>(b) * k + j] +=
                                       g.data[(static_cast<std::size_t>(b) * T + t) * k + j];
                       }
                   },
                   "stack_time");
}

Value Graph::slice_cols(Value x, int c0, int c1) {
    check(x);
    const Tensor& tx = val_ref(x.id);
    if (tx.shape.size() != 2) throw ShapeMismatch("slice_cols requires [n,k]");
    const int n = tx.shape[0], k = tx.shape[1];
    if (c0 < 0 || c1 > k || c0 >= c1) throw ShapeMismatch("slice_cols range invalid");
    const int w = c1 - c0;
    Tensor out = Tensor::zeros({n, w});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < w; ++j)
            out.data[static_cast<std::size_t>(i) * w + j] = tx.data[static_cast<std::size_t>(i) * k + c0 + j];
    const int ix = x.id, rid = static_cast<int>(nodes_.size());
    return emplace(std::move(out),
                   [this, ix, rid, n, k, c0, w]() {
                       const Tensor& g = grad_ref(rid);
                       Tensor& gx = grad_ref(ix);
                       for (int i = 0; i < n; ++i)
                           for (int j = 0; j < w; ++j)
                               gx.data[static_cast<std::size_t>(i) * k + c0 + j] +=
                                   g.data[static_cast<std::size_t>(i) * w + j];
                   },
                   "slice_cols");
}

Value Graph::sum_all(Value x) {
    check(x);
    const Tensor& tx = val_ref(x.id);
    double s = 0.0;
    for (double v : tx.data) s += v;
    const int ix = x.id, rid = static_cast<int>(nodes_.size());
    return emplace(Tensor::scalar(s),
                   [this, ix, rid]() {
                       const double g = grad_ref(rid).data[0];
                       Tensor& gx = grad_ref(ix);
                       for (double& v : gx.data) v += g;
                   },
                   "sum_all");
}

Value Graph::mean_all(Value x) {
    check(x);
    const Tensor& tx = val_ref(x.id);
    const double inv = 1.0 / static_cast<double>(tx.data.size());
    double s = 0.0;
    for (double v : tx.data) s += v;
    const int ix = x.id, rid = static_cast<int>(nodes_.size());
    return emplace(Tensor::scalar(s * inv),
                   [this, ix, rid, inv]() {
                       const double g = grad_ref(rid).data[0] * inv;
                       Tensor& gx = grad_ref(ix);
                       for (double& v : gx.data) v += g;
                   },
                   "mean_all");
}

void Graph::backward(Value loss) {
    check(loss);
    if (consumed_) throw GraphReuse();
    consumed_ = true;
    const Tensor& lv = val_ref(loss.id);
    if (lv.size() != 1) throw ShapeMismatch("backward requires a scalar loss");
    for (Node& n : nodes_) n.grad = Tensor::zeros(n.val.shape);
    nodes_[static_cast<std::size_t>(loss.id)].grad.data[0] = 1.0;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.back) n.back();
    }
}

}  // namespace tsarch::nn
