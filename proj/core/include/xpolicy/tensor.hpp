#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "xpolicy/error.hpp"

namespace xpolicy {

using Shape = std::vector<long>;

inline long shape_numel(const Shape& s) {
    long n = 1;
    for (long d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

namespace detail {
template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> value;
    bool requires_grad = false;
};
}  // namespace detail

/// Dense row-major tensor handle. Copies share the underlying node.
/// Values are immutable once the tensor participates in a taped graph;
/// gradients live on the tape, not on the tensor.
template <typename T>
class Tensor {
public:
    using Node = detail::TensorNode<T>;

    Tensor() : n_(std::make_shared<Node>()) {}

    static Tensor zeros(Shape shape) {
        Tensor t;
        t.n_->value.assign(shape_numel(shape), T(0));
        t.n_->shape = std::move(shape);
        return t;
    }

    static Tensor full(Shape shape, T v) {
        Tensor t = zeros(std::move(shape));
        std::fill(t.n_->value.begin(), t.n_->value.end(), v);
        return t;
    }

    static Tensor from(Shape shape, std::vector<T> data) {
        if (shape_numel(shape) != static_cast<long>(data.size()))
            throw shape_error("from: " + shape_str(shape) + " vs " + std::to_string(data.size()) + " values");
        Tensor t;
        t.n_->shape = std::move(shape);
        t.n_->value = std::move(data);
        return t;
    }

    static Tensor scalar(T v) { return from({1}, {v}); }

    const Shape& shape() const { return n_->shape; }
    long numel() const { return static_cast<long>(n_->value.size()); }
    long dim(int i) const { return n_->shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(n_->shape.size()); }

    std::vector<T>& data() { return n_->value; }
    const std::vector<T>& data() const { return n_->value; }

    bool requires_grad() const { return n_->requires_grad; }
    Tensor& set_requires_grad(bool b) {
        n_->requires_grad = b;
        return *this;
    }

    T item() const {
        if (numel() != 1) throw shape_error("item() on tensor of shape " + shape_str(shape()));
        return n_->value[0];
    }

    const Node* node() const { return n_.get(); }
    std::shared_ptr<Node> node_ptr() const { return n_; }

    /// Fresh node with the same values; does not carry requires_grad.
    Tensor detached_copy() const { return from(n_->shape, n_->value); }

    bool all_finite() const {
        for (T v : n_->value)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

private:
    std::shared_ptr<Node> n_;
};

/// Records primitive applications in execution order; replaying the records
/// in reverse accumulates gradients for every requires_grad input exactly
/// once. One tape per logical thread.
template <typename T>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// RAII activation on the current thread.
    struct Scope {
        explicit Scope(Tape& t) : prev_(active_), tape_(&t) { active_ = &t; }
        ~Scope() { active_ = prev_; }
        Scope(const Scope&) = delete;

    private:
        Tape* prev_;
        Tape* tape_;
    };

    static Tape* active() { return active_; }

    void record(std::function<void()> fn) { steps_.push_back(std::move(fn)); }
    size_t size() const { return steps_.size(); }

    /// Gradient buffer for a node, created zeroed on first touch.
    std::vector<T>& grad_buf(const detail::TensorNode<T>* node) {
        auto& g = grads_[node];
        if (g.size() != node->value.size()) g.assign(node->value.size(), T(0));
        return g;
    }

    /// Gradient of a tensor after backward(); null if it never received one.
    const std::vector<T>* grad(const Tensor<T>& t) const {
        auto it = grads_.find(t.node());
        return it == grads_.end() ? nullptr : &it->second;
    }

    void zero_grads() {
        for (auto& [k, v] : grads_) std::fill(v.begin(), v.end(), T(0));
    }

    /// Reverse replay from a scalar loss. Idempotent: grads are zeroed first,
    /// so running it twice yields bit-identical results.
    void backward(const Tensor<T>& loss) {
        if (loss.numel() != 1) throw shape_error("backward() needs a scalar loss, got " + shape_str(loss.shape()));
        zero_grads();
        grad_buf(loss.node())[0] = T(1);
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
    }

private:
    static thread_local Tape* active_;
    std::vector<std::function<void()>> steps_;
    std::unordered_map<const detail::TensorNode<T>*, std::vector<T>> grads_;
};

template <typename T>
thread_local Tape<T>* Tape<T>::active_ = nullptr;

namespace detail {

template <typename T>
bool want_grad(std::initializer_list<const Tensor<T>*> inputs) {
    if (!Tape<T>::active()) return false;
    for (const Tensor<T>* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

// ---- matmul kernels (row major) ----

template <typename T>
void mm(const T* a, const T* b, T* c, long M, long K, long N) {
    for (long i = 0; i < M; ++i) {
        T* ci = c + i * N;
        for (long k = 0; k < K; ++k) {
            const T aik = a[i * K + k];
            const T* bk = b + k * N;
            for (long j = 0; j < N; ++j) ci[j] += aik * bk[j];
        }
    }
}

// c(M,N) += a(M,K) * b(N,K)^T. Transposes b into a scratch and reuses the
// vectorizable kernel; the dot-product form defeats autovectorization.
template <typename T>
void mm_nt(const T* a, const T* b, T* c, long M, long K, long N) {
    static thread_local std::vector<T> bt;
    bt.resize(static_cast<size_t>(K * N));
    for (long j = 0; j < N; ++j)
        for (long k = 0; k < K; ++k) bt[static_cast<size_t>(k * N + j)] = b[j * K + k];
    mm(a, bt.data(), c, M, K, N);
}

// c(K,N) += a(M,K)^T * b(M,N)
template <typename T>
void mm_tn(const T* a, const T* b, T* c, long M, long K, long N) {
    for (long i = 0; i < M; ++i) {
        const T* ai = a + i * K;
        const T* bi = b + i * N;
        for (long k = 0; k < K; ++k) {
            const T aik = ai[k];
            T* ck = c + k * N;
            for (long j = 0; j < N; ++j) ck[j] += aik * bi[j];
        }
    }
}

inline long leading(const Shape& s, size_t upto) {
    long n = 1;
    for (size_t i = 0; i < upto; ++i) n *= s[i];
    return n;
}

// Row-major walk of a permuted copy; sstr holds source strides in output
// axis order. Add=false gathers src into contiguous dst; Add=true
// scatter-adds contiguous src into strided dst (the gradient direction).
template <typename T, bool Add>
void permute_walk(T* dst, const T* src, const Shape& os, const std::vector<long>& sstr) {
    const int r = static_cast<int>(os.size());
    const long inner = os[static_cast<size_t>(r - 1)];
    const long istr = sstr[static_cast<size_t>(r - 1)];
    long outer = 1;
    for (int i = 0; i < r - 1; ++i) outer *= os[static_cast<size_t>(i)];
    std::vector<long> idx(static_cast<size_t>(r > 0 ? r - 1 : 0), 0);
    long s = 0;
    for (long row = 0; row < outer; ++row) {
        if constexpr (Add) {
            if (istr == 1)
                for (long j = 0; j < inner; ++j) dst[s + j] += src[row * inner + j];
            else
                for (long j = 0; j < inner; ++j) dst[s + j * istr] += src[row * inner + j];
        } else {
            if (istr == 1)
                std::memcpy(dst + row * inner, src + s, static_cast<size_t>(inner) * sizeof(T));
            else
                for (long j = 0; j < inner; ++j) dst[row * inner + j] = src[s + j * istr];
        }
        for (int i = r - 2; i >= 0; --i) {
            s += sstr[static_cast<size_t>(i)];
            if (++idx[static_cast<size_t>(i)] < os[static_cast<size_t>(i)]) break;
            idx[static_cast<size_t>(i)] = 0;
            s -= sstr[static_cast<size_t>(i)] * os[static_cast<size_t>(i)];
        }
    }
}

inline float gauss_cdf(float v) { return 0.5f * (1.0f + std::erf(v * 0.70710678f)); }
inline double gauss_cdf(double v) { return 0.5 * (1.0 + std::erf(v * 0.7071067811865475244)); }
inline float gauss_pdf(float v) { return 0.39894228f * std::exp(-0.5f * v * v); }
inline double gauss_pdf(double v) { return 0.3989422804014327 * std::exp(-0.5 * v * v); }

}  // namespace detail

// ---- primitives ----

/// Matrix product. Accepts (M,K)x(K,N), batched (...,M,K)x(...,K,N) with equal
/// leading dims, and (...,M,K)x(K,N) broadcasting the right operand.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    const int ra = a.rank(), rb = b.rank();
    if (ra < 2 || rb < 2) throw shape_error("matmul: ranks " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const long M = a.dim(ra - 2), K = a.dim(ra - 1);
    const long Kb = b.dim(rb - 2), N = b.dim(rb - 1);
    const bool broadcast_b = (rb == 2 && ra > 2);
    if (K != Kb || (!broadcast_b && ra != rb))
        throw shape_error("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const long B = detail::leading(a.shape(), static_cast<size_t>(ra - 2));
    if (!broadcast_b && ra > 2 && detail::leading(b.shape(), static_cast<size_t>(rb - 2)) != B)
        throw shape_error("matmul batch dims: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));

    Shape out_shape(a.shape().begin(), a.shape().end() - 1);
    out_shape.push_back(N);
    Tensor<T> out = Tensor<T>::zeros(out_shape);
    for (long g = 0; g < B; ++g)
        detail::mm(a.data().data() + g * M * K, b.data().data() + (broadcast_b ? 0 : g * K * N),
                   out.data().data() + g * M * N, M, K, N);

    if (detail::want_grad<T>({&a, &b})) {
        out.set_requires_grad(true);
        auto* tape = Tape<T>::active();
        auto an = a.node_ptr(), bn = b.node_ptr(), on = out.node_ptr();
        const bool ga = a.requires_grad(), gb = b.requires_grad();
        tape->record([=, tp = tape]() {
            const auto& go = tp->grad_buf(on.get());
            if (ga) {
                auto& gra = tp->grad_buf(an.get());
                for (long g = 0; g < B; ++g)
                    detail::mm_nt(go.data() + g * M * N, bn->value.data() + (broadcast_b ? 0 : g * K * N),
                                  gra.data() + g * M * K, M, N, K);
            }
            if (gb) {
                auto& grb = tp->grad_buf(bn.get());
                for (long g = 0; g < B; ++g)
                    detail::mm_tn(an->value.data() + g * M * K, go.data() + g * M * N,
                                  grb.data() + (broadcast_b ? 0 : g * K * N), M, K, N);
            }
        });
    }
    return out;
}

/// a x b^T over the last two axes: (...,M,K) x (...,N,K) -> (...,M,N).
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
    const int ra = a.rank(), rb = b.rank();
    if (ra < 2 || rb != ra) throw shape_error("matmul_nt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const long M = a.dim(ra - 2), K = a.dim(ra - 1);
    const long N = b.dim(rb - 2);
    if (b.dim(rb - 1) != K) throw shape_error("matmul_nt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const long B = detail::leading(a.shape(), static_cast<size_t>(ra - 2));
    if (detail::leading(b.shape(), static_cast<size_t>(rb - 2)) != B)
        throw shape_error("matmul_nt batch dims: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));

    Shape out_shape(a.shape().begin(), a.shape().end() - 1);
    out_shape.push_back(N);
    Tensor<T> out = Tensor<T>::zeros(out_shape);
    for (long g = 0; g < B; ++g)
        detail::mm_nt(a.data().data() + g * M * K, b.data().data() + g * N * K, out.data().data() + g * M * N, M, K,
                      N);

    if (detail::want_grad<T>({&a, &b})) {
        out.set_requires_grad(true);
        auto* tape = Tape<T>::active();
        auto an = a.node_ptr(), bn = b.node_ptr(), on = out.node_ptr();
        const bool ga = a.requires_grad(), gb = b.requires_grad();
        tape->record([=, tp = tape]() {
            const auto& go = tp->grad_buf(on.get());
            if (ga) {  // dA = dC * B
                auto& gra = tp->grad_buf(an.get());
                for (long g = 0; g < B; ++g)
                    detail::mm(go.data() + g * M * N, bn->value.data() + g * N * K, gra.data() + g * M * K, M, N, K);
            }
            if (gb) {  // dB = dC^T * A
                auto& grb = tp->grad_buf(bn.get());
                for (long g = 0; g < B; ++g)
                    detail::mm_tn(go.data() + g * M * N, an->value.data() + g * M * K, grb.data() + g * N * K, M, N,
                                  K);
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw shape_error("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
    Tensor<T> out = Tensor<T>::from(std::move(shape), x.data());
    if (detail::want_grad<T>({&x})) {
        out.set_requires_grad(true);
        auto* tape = Tape<T>::active();
        auto xn = x.node_ptr(), on = out.node_ptr();
        tape->record([=, tp = tape]() {
            const auto& go = tp->grad_buf(on.get());
            auto& gx = tp->grad_buf(xn.get());
            for (size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
        });
    }
    return out;
}

/// Swap two axes.
template <typename T>
Tensor<T> transpose(const Tensor<T>& x, int axis_a, int axis_b) {
    const int r = x.rank();
    if (axis_a < 0) axis_a += r;
    if (axis_b < 0) axis_b += r;
    if (axis_a < 0 || axis_a >= r || axis_b < 0 || axis_b >= r)
        throw shape_error("transpose axes out of range for " + shape_str(x.shape()));
    Shape os = x.shape();
    std::swap(os[static_cast<size_t>(axis_a)], os[static_cast<size_t>(axis_b)]);

    const Shape& is = x.shape();
    std::vector<long> istr(static_cast<size_t>(r)), ostr(static_cast<size_t>(r));
    long acc = 1;
    for (int i = r - 1; i >= 0; --i) {
        istr[static_cast<size_t>(i)] = acc;
        acc *= is[static_cast<size_t>(i)];
    }
    acc = 1;
    for (int i = r - 1; i >= 0; --i) {
        ostr[static_cast<size_t>(i)] = acc;
        acc *= os[static_cast<size_t>(i)];
    }
    // source strides in output axis order
    std::vector<long> sstr = istr;
    std::swap(sstr[static_cast<size_t>(axis_a)], sstr[static_cast<size_t>(axis_b)]);

    Tensor<T> out = Tensor<T>::zeros(os);
    detail::permute_walk<T, false>(out.data().data(), x.data().data(), os, sstr);

    if (detail::want_grad<T>({&x})) {
        out.set_requires_grad(true);
        auto* tape = Tape<T>::active();
        auto xn = x.node_ptr(), on = out.node_ptr();
        tape->record([=, tp = tape]() {
            const auto& go = tp->grad_buf(on.get());
            auto& gx = tp->grad_buf(xn.get());
            detail::permute_walk<T, true>(gx.data(), go.data(), os, sstr);
        });
    }
    return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) throw shape_error("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    for (long i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
    if (detail::want_grad<T>({&a, &b})) {
        out.set_requires_grad(true);
        auto* tape = Tape<T>::active();
        auto an = a.node_ptr(), bn = b.node_ptr(), on = out.node_ptr();
        const bool ga = a.requires_grad(), gb = b.requires_grad();
        tape->record([=, tp = tape]() {
            const auto& go = tp->grad_buf(on.get());
            if (ga) {
                auto& g = tp->grad_buf(an.get());
                for (size_t i = 0; i < g.size(); ++i) g[i] += go[i];
            }
            if (gb) {
                auto& g = tp->grad_buf(bn.get());
                for (size_t i = 0; i < g.size(); ++i) g[i] += go[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) throw shape_error("sub: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    for (long i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
    if (detail::want_grad<T>({&a, &b})) {
        out.set_requires_grad(true);
        auto* tape = Tape<T>::active();
        auto an = a.node_ptr(), bn = b.node_ptr(), on = out.node_ptr();
        const bool ga = a.requires_grad(), gb = b.requires_grad();
        tape->record([=, tp = tape]() {
            const auto& go = tp->grad_buf(on.get());
            if (ga) {
                auto& g = tp->grad_buf(an.get());
                for (size_t i = 0; i < g.size(); ++i) g[i] += go[i];
            }
            if (gb) {
                auto& g = tp->grad_buf(bn.get());
                for (size_t i = 0; i < g.size(); ++i) g[i] -= go[i];
            }
        });
    }
    return out;
}

/// Elementwise (Hadamard) product.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) throw shape_error("mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    for (long i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    if (detail::want_grad<T>({&a, &b})) {
        out.set_requires_grad(true);
        auto* tape = Tape<T>::active();
        auto an = a.node_ptr(), bn = b.node_ptr(), on = out.node_ptr();
        const bool ga = a.requires_grad(), gb = b.requires_grad();
        tape->record([=, tp = tape]() {
            const auto& go = tp->grad_buf(on.get());
            if (ga) {
                auto& g = tp->grad_buf(an.get());
                for (size_t i = 0; i < g.size(); ++i) g[i] += go[i] * bn->value[i];
            }
            if (gb) {
                auto& g = tp->grad_buf(bn.get());
                for (size_t i = 0; i < g.size(); ++i) g[i] += go[i] * an->value[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    for (long i = 0; i < x.numel(); ++i) out.data()[i] = c * x.data()[i];
    if (detail::want_grad<T>({&x})) {
        out.set_requires_grad(true);
        auto* tape = Tape<T>::active();
        auto xn = x.node_ptr(), on = out.node_ptr();
        tape->record([=, tp = tape]() {
            const auto& go = tp->grad_buf(on.get());
            auto& g = tp->grad_buf(xn.get());
            for (size_t i = 0; i < g.size(); ++i) g[i] += c * go[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    for (long i = 0; i < x.numel(); ++i) out.data()[i] = x.data()[i] + c;
    if (detail::want_grad<T>({&x})) {
        out.set_requires_grad(true);
        auto* tape = Tape<T>::active();
        auto xn = x.node_ptr(), on = out.node_ptr();
        tape->record([=, tp = tape]() {
            const auto& go = tp->grad_buf(on.get());
            auto& g = tp->grad_buf(xn.get());
            for (size_t i = 0; i < g.size(); ++i) g[i] += go[i];
        });
    }
    return out;
}

namespace detail {
// b broadcasts over x's last axis: either b is (C,), or b matches x's shape
// with the second-to-last axis removed (per-row vectors per leading batch).
template <typename T>
void bias_layout(const Tensor<T>& x, const Tensor<T>& b, long& rows, long& C, long& batch, bool& per_batch,
                 const char* who) {
    const int r = x.rank();
    if (r < 2) throw shape_error(std::string(who) + ": x rank < 2, " + shape_str(x.shape()));
    C = x.dim(r - 1);
    rows = x.dim(r - 2);
    batch = leading(x.shape(), static_cast<size_t>(r - 2));
    if (b.rank() == 1 && b.dim(0) == C) {
        per_batch = false;
        return;
    }
    Shape want(x.shape());
    want.erase(want.end() - 2);
    if (b.shape() == want) {
        per_batch = true;
        return;
    }
    throw shape_error(std::string(who) + ": " + shape_str(x.shape()) + " with " + shape_str(b.shape()));
}
}  // namespace detail

/// x + b with b broadcast over rows; the affine part of a linear layer.
template <typename T>
Tensor<T> bias_add(const Tensor<T>& x, const Tensor<T>& b) {
    long rows, C, batch;
    bool per_batch;
    detail::bias_layout(x, b, rows, C, batch, per_batch, "bias_add");
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    for (long g = 0; g < batch; ++g) {
        const T* bv = b.data().data() + (per_batch ? g * C : 0);
        for (long i = 0; i < rows; ++i) {
            const long off = (g * rows + i) * C;
            for (long j = 0; j < C; ++j) out.data()[off + j] = x.data()[off + j] + bv[j];
        }
    }
    if (detail::want_grad<T>({&x, &b})) {
        out.set_requires_grad(true);
        auto* tape = Tape<T>::active();
        auto xn = x.node_ptr(), bn = b.node_ptr(), on = out.node_ptr();
        const bool gx = x.requires_grad(), gb = b.requires_grad();
        tape->record([=, tp = tape]() {
            const auto& go = tp->grad_buf(on.get());
            if (gx) {
                auto& g = tp->grad_buf(xn.get());
                for (size_t i = 0; i < g.size(); ++i) g[i] += go[i];
            }
            if (gb) {
                auto& g = tp->grad_buf(bn.get());
                for (long gi = 0; gi < batch; ++gi) {
                    T* bv = g.data() + (per_batch ? gi * C : 0);
                    for (long i = 0; i < rows; ++i) {
                        const long off = (gi * rows + i) * C;
                        for (long j = 0; j < C; ++j) bv[j] += go[off + j];
                    }
                }
            }
        });
    }
    return out;
}

/// x * s with s broadcast over rows (same layouts as bias_add).
template <typename T>
Tensor<T> row_scale(const Tensor<T>& x, const Tensor<T>& s) {
    long rows, C, batch;
    bool per_batch;
    detail::bias_layout(x, s, rows, C, batch, per_batch, "row_scale");
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    for (long g = 0; g < batch; ++g) {
        const T* sv = s.data().data() + (per_batch ? g * C : 0);
        for (long i = 0; i < rows; ++i) {
            const long off = (g * rows + i) * C;
            for (long j = 0; j < C; ++j) out.data()[off + j] = x.data()[off + j] * sv[j];
        }
    }
    if (detail::want_grad<T>({&x, &s})) {
        out.set_requires_grad(true);
        auto* tape = Tape<T>::active();
        auto xn = x.node_ptr(), sn = s.node_ptr(), on = out.node_ptr();
        const bool gx = x.requires_grad(), gs = s.requires_grad();
        tape->record([=, tp = tape]() {
            const auto& go = tp->grad_buf(on.get());
            if (gx) {
                auto& g = tp->grad_buf(xn.get());
                for (long gi = 0; gi < batch; ++gi) {
                    const T* sv = sn->value.data() + (per_batch ? gi * C : 0);
                    for (long i = 0; i < rows; ++i) {
                        const long off = (gi * rows + i) * C;
                        for (long j = 0; j < C; ++j) g[off + j] += go[off + j] * sv[j];
                    }
                }
            }
            if (gs) {
                auto& g = tp->grad_buf(sn.get());
                for (long gi = 0; gi < batch; ++gi) {
                    T* sv = g.data() + (per_batch ? gi * C : 0);
                    for (long i = 0; i < rows; ++i) {
                        const long off = (gi * rows + i) * C;
                        for (long j = 0; j < C; ++j) sv[j] += go[off + j] * xn->value[off + j];
                    }
                }
            }
        });
    }
    return out;
}

/// Scales slab h (mod H) of the leading axis by temps[h]; used for per-head
/// attention temperatures on (B*H, N, d) layouts.
template <typename T>
Tensor<T> head_scale(const Tensor<T>& x, const Tensor<T>& temps, long H) {
    if (x.rank() < 2 || x.dim(0) % H != 0 || temps.numel() != H)
        throw shape_error("head_scale: " + shape_str(x.shape()) + " with H=" + std::to_string(H));
    const long slabs = x.dim(0);
    const long slab_n = x.numel() / slabs;
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    for (long s = 0; s < slabs; ++s) {
        const T t = temps.data()[s % H];
        const long off = s * slab_n;
        for (long i = 0; i < slab_n; ++i) out.data()[off + i] = t * x.data()[off + i];
    }
    if (detail::want_grad<T>({&x, &temps})) {
        out.set_requires_grad(true);
        auto* tape = Tape<T>::active();
        auto xn = x.node_ptr(), tn = temps.node_ptr(), on = out.node_ptr();
        const bool gx = x.requires_grad(), gt = temps.requires_grad();
        tape->record([=, tp = tape]() {
            const auto& go = tp->grad_buf(on.get());
            if (gx) {
                auto& g = tp->grad_buf(xn.get());
                for (long s = 0; s < slabs; ++s) {
                    const T t = tn->value[s % H];
                    const long off = s * slab_n;
                    for (long i = 0; i < slab_n; ++i) g[off + i] += t * go[off + i];
                }
            }
            if (gt) {
                auto& g = tp->grad_buf(tn.get());
                for (long s = 0; s < slabs; ++s) {
                    const long off = s * slab_n;
                    T acc = 0;
                    for (long i = 0; i < slab_n; ++i) acc += go[off + i] * xn->value[off + i];
                    g[s % H] += acc;
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
    if (parts.empty()) throw shape_error("concat: no inputs");
    const int r = parts[0].rank();
    if (axis < 0) axis += r;
    Shape os = parts[0].shape();
    long axis_total = 0;
    for (const auto& p : parts) {
        if (p.rank() != r) throw shape_error("concat: rank mismatch");
        for (int i = 0; i < r; ++i)
            if (i != axis && p.dim(i) != os[static_cast<size_t>(i)])
                throw shape_error("concat: " + shape_str(p.shape()) + " vs " + shape_str(os));
        axis_total += p.dim(axis);
    }
    os[static_cast<size_t>(axis)] = axis_total;
    Tensor<T> out = Tensor<T>::zeros(os);

    long outer = detail::leading(os, static_cast<size_t>(axis));
    long inner = 1;
    for (int i = axis + 1; i < r; ++i) inner *= os[static_cast<size_t>(i)];
    const long ostride = axis_total * inner;

    std::vector<long> offsets;
    long off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        const long pa = p.dim(axis);
        for (long o = 0; o < outer; ++o)
            std::copy_n(p.data().data() + o * pa * inner, pa * inner, out.data().data() + o * ostride + off * inner);
        off += pa;
    }

    bool any = false;
    for (const auto& p : parts) any = any || p.requires_grad();
    if (Tape<T>::active() && any) {
        out.set_requires_grad(true);
        auto* tape = Tape<T>::active();
        auto on = out.node_ptr();
        std::vector<std::shared_ptr<detail::TensorNode<T>>> nodes;
        std::vector<bool> wants;
        std::vector<long> axes;
        for (const auto& p : parts) {
            nodes.push_back(p.node_ptr());
            wants.push_back(p.requires_grad());
            axes.push_back(p.dim(axis));
        }
        tape->record([=, tp = tape]() {
            const auto& go = tp->grad_buf(on.get());
            for (size_t pi = 0; pi < nodes.size(); ++pi) {
                if (!wants[pi]) continue;
                auto& g = tp->grad_buf(nodes[pi].get());
                const long pa = axes[pi];
                for (long o = 0; o < outer; ++o) {
                    const T* src = go.data() + o * ostride + offsets[pi] * inner;
                    T* dst = g.data() + o * pa * inner;
                    for (long i = 0; i < pa * inner; ++i) dst[i] += src[i];
                }
            }
        });
    }
    return out;
}

/// Contiguous range [start, start+len) along an axis.
template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, long start, long len) {
    const int r = x.rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r || start < 0 || len < 0 || start + len > x.dim(axis))
        throw shape_error("slice [" + std::to_string(start) + "," + std::to_string(start + len) + ") axis " +
                          std::to_string(axis) + " of " + shape_str(x.shape()));
    Shape os = x.shape();
    os[static_cast<size_t>(axis)] = len;
    const long outer = detail::leading(x.shape(), static_cast<size_t>(axis));
    long inner = 1;
    for (int i = axis + 1; i < r; ++i) inner *= x.dim(i);
    const long xstride = x.dim(axis) * inner;

    Tensor<T> out = Tensor<T>::zeros(os);
    for (long o = 0; o < outer; ++o)
        std::copy_n(x.data().data() + o * xstride + start * inner, len * inner, out.data().data() + o * len * inner);

    if (detail::want_grad<T>({&x})) {
        out.set_requires_grad(true);
        auto* tape = Tape<T>::active();
        auto xn = x.node_ptr(), on = out.node_ptr();
        tape->record([=, tp = tape]() {
            const auto& go = tp->grad_buf(on.get());
            auto& g = tp->grad_buf(xn.get());
            for (long o = 0; o < outer; ++o) {
                const T* src = go.data() + o * len * inner;
                T* dst = g.data() + o * xstride + start * inner;
                for (long i = 0; i < len * inner; ++i) dst[i] += src[i];
            }
        });
    }
    return out;
}

/// Numerically stable softmax over the last axis (max subtraction).
template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
    const int r = x.rank();
    if (r < 1 || x.dim(r - 1) < 1) throw shape_error("softmax_lastdim on " + shape_str(x.shape()));
    const long C = x.dim(r - 1);
    const long rows = x.numel() / C;
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    const T neg_inf = -std::numeric_limits<T>::infinity();
    for (long i = 0; i < rows; ++i) {
        const T* xi = x.data().data() + i * C;
        T* oi = out.data().data() + i * C;
        T mx = neg_inf;
        for (long j = 0; j < C; ++j) {
            const T v = xi[j];
            // -inf is a legitimate additive mask; NaN and +inf are not
            if (v != v || v == std::numeric_limits<T>::infinity())
                throw numeric_error("softmax_lastdim: non-finite input");
            mx = std::max(mx, v);
        }
        if (mx == neg_inf) throw numeric_error("softmax_lastdim: row with every entry masked");
        T sum = 0;
        for (long j = 0; j < C; ++j) {
            oi[j] = std::exp(xi[j] - mx);
            sum += oi[j];
        }
        for (long j = 0; j < C; ++j) oi[j] /= sum;
    }
    if (detail::want_grad<T>({&x})) {
        out.set_requires_grad(true);
        auto* tape = Tape<T>::active();
        auto xn = x.node_ptr(), on = out.node_ptr();
        tape->record([=, tp = tape]() {
            const auto& go = tp->grad_buf(on.get());
            auto& g = tp->grad_buf(xn.get());
            for (long i = 0; i < rows; ++i) {
                const T* y = on->value.data() + i * C;
                const T* dy = go.data() + i * C;
                T dot = 0;
                for (long j = 0; j < C; ++j) dot += dy[j] * y[j];
                T* gx = g.data() + i * C;
                for (long j = 0; j < C; ++j) gx[j] += (dy[j] - dot) * y[j];
            }
        });
    }
    return out;
}

inline constexpr double kNormEps = 1e-6;

/// x / sqrt(mean(x^2) + eps) * gain over the last axis.
template <typename T>
Tensor<T> rms_norm(const Tensor<T>& x, const Tensor<T>& gain) {
    const int r = x.rank();
    const long C = x.dim(r - 1);
    if (gain.rank() != 1 || gain.dim(0) != C)
        throw shape_error("rms_norm: gain " + shape_str(gain.shape()) + " vs " + shape_str(x.shape()));
    const long rows = x.numel() / C;
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    std::vector<T> inv(static_cast<size_t>(rows));
    for (long i = 0; i < rows; ++i) {
        const T* xi = x.data().data() + i * C;
        T m = 0;
        for (long j = 0; j < C; ++j) m += xi[j] * xi[j];
        m /= static_cast<T>(C);
        inv[static_cast<size_t>(i)] = T(1) / std::sqrt(m + static_cast<T>(kNormEps));
        T* oi = out.data().data() + i * C;
        for (long j = 0; j < C; ++j) oi[j] = xi[j] * inv[static_cast<size_t>(i)] * gain.data()[j];
    }
    if (detail::want_grad<T>({&x, &gain})) {
        out.set_requires_grad(true);
        auto* tape = Tape<T>::active();
        auto xn = x.node_ptr(), gn = gain.node_ptr(), on = out.node_ptr();
        const bool gx = x.requires_grad(), gg = gain.requires_grad();
        tape->record([=, tp = tape, inv = std::move(inv)]() {
            const auto& go = tp->grad_buf(on.get());
            for (long i = 0; i < rows; ++i) {
                const T* xi = xn->value.data() + i * C;
                const T* dy = go.data() + i * C;
                const T iv = inv[static_cast<size_t>(i)];
                if (gx) {
                    auto& g = tp->grad_buf(xn.get());
                    T dot = 0;
                    for (long j = 0; j < C; ++j) dot += dy[j] * gn->value[j] * xi[j];
                    const T k = iv * iv * iv * dot / static_cast<T>(C);
                    T* gxi = g.data() + i * C;
                    for (long j = 0; j < C; ++j) gxi[j] += dy[j] * gn->value[j] * iv - xi[j] * k;
                }
                if (gg) {
                    auto& g = tp->grad_buf(gn.get());
                    for (long j = 0; j < C; ++j) g[j] += dy[j] * xi[j] * iv;
                }
            }
        });
    }
    return out;
}

/// Row-wise L2 normalization over the last axis; the "QK" half of QKNorm.
template <typename T>
Tensor<T> l2_normalize_lastdim(const Tensor<T>& x) {
    const int r = x.rank();
    const long C = x.dim(r - 1);
    const long rows = x.numel() / C;
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    std::vector<T> inv(static_cast<size_t>(rows));
    for (long i = 0; i < rows; ++i) {
        const T* xi = x.data().data() + i * C;
        T s = 0;
        for (long j = 0; j < C; ++j) s += xi[j] * xi[j];
        inv[static_cast<size_t>(i)] = T(1) / std::sqrt(s + static_cast<T>(kNormEps));
        T* oi = out.data().data() + i * C;
        for (long j = 0; j < C; ++j) oi[j] = xi[j] * inv[static_cast<size_t>(i)];
    }
    if (detail::want_grad<T>({&x})) {
        out.set_requires_grad(true);
        auto* tape = Tape<T>::active();
        auto xn = x.node_ptr(), on = out.node_ptr();
        tape->record([=, tp = tape, inv = std::move(inv)]() {
            const auto& go = tp->grad_buf(on.get());
            auto& g = tp->grad_buf(xn.get());
            for (long i = 0; i < rows; ++i) {
                const T* xi = xn->value.data() + i * C;
                const T* dy = go.data() + i * C;
                const T iv = inv[static_cast<size_t>(i)];
                T dot = 0;
                for (long j = 0; j < C; ++j) dot += dy[j] * xi[j];
                T* gxi = g.data() + i * C;
                for (long j = 0; j < C; ++j) gxi[j] += dy[j] * iv - xi[j] * dot * iv * iv * iv;
            }
        });
    }
    return out;
}

/// Exact Gaussian-CDF GELU, erf form.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    for (long i = 0; i < x.numel(); ++i) {
        const T v = x.data()[i];
        out.data()[i] = v * detail::gauss_cdf(v);
    }
    if (detail::want_grad<T>({&x})) {
        out.set_requires_grad(true);
        auto* tape = Tape<T>::active();
        auto xn = x.node_ptr(), on = out.node_ptr();
        tape->record([=, tp = tape]() {
            const auto& go = tp->grad_buf(on.get());
            auto& g = tp->grad_buf(xn.get());
            for (size_t i = 0; i < g.size(); ++i) {
                const T v = xn->value[i];
                g[i] += go[i] * (detail::gauss_cdf(v) + v * detail::gauss_pdf(v));
            }
        });
    }
    return out;
}

/// Boolean allow-matrix over the last two axes of a score tensor.
struct BoolMat {
    long rows = 0, cols = 0;
    std::vector<uint8_t> v;  // 1 = allowed

    BoolMat() = default;
    BoolMat(long r, long c, bool init = false) : rows(r), cols(c), v(static_cast<size_t>(r * c), init ? 1 : 0) {}

    uint8_t& at(long r, long c) { return v[static_cast<size_t>(r * cols + c)]; }
    uint8_t at(long r, long c) const { return v[static_cast<size_t>(r * cols + c)]; }

    long count_allowed() const {
        long n = 0;
        for (uint8_t b : v) n += b;
        return n;
    }

    bool any_empty_row() const {
        for (long r = 0; r < rows; ++r) {
            bool any = false;
            for (long c = 0; c < cols; ++c) any = any || at(r, c);
            if (!any) return true;
        }
        return false;
    }
};

/// Writes fill_value where the mask disallows; the mask broadcasts over
/// leading axes. Gradient passes only through allowed positions.
template <typename T>
Tensor<T> masked_fill(const Tensor<T>& x, const BoolMat& allow, T fill_value) {
    const int r = x.rank();
    if (r < 2 || x.dim(r - 2) != allow.rows || x.dim(r - 1) != allow.cols)
        throw shape_error("masked_fill: " + shape_str(x.shape()) + " vs mask " + std::to_string(allow.rows) + "x" +
                          std::to_string(allow.cols));
    if (fill_value == -std::numeric_limits<T>::infinity() && allow.any_empty_row())
        throw layout_error("masked_fill: attention row with no allowed positions");
    const long plane = allow.rows * allow.cols;
    const long batch = x.numel() / plane;
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    for (long g = 0; g < batch; ++g) {
        const long off = g * plane;
        for (long i = 0; i < plane; ++i) out.data()[off + i] = allow.v[static_cast<size_t>(i)] ? x.data()[off + i] : fill_value;
    }
    if (detail::want_grad<T>({&x})) {
        out.set_requires_grad(true);
        auto* tape = Tape<T>::active();
        auto xn = x.node_ptr(), on = out.node_ptr();
        auto mask = std::make_shared<BoolMat>(allow);
        tape->record([=, tp = tape]() {
            const auto& go = tp->grad_buf(on.get());
            auto& g = tp->grad_buf(xn.get());
            for (long gi = 0; gi < batch; ++gi) {
                const long off = gi * plane;
                for (long i = 0; i < plane; ++i)
                    if (mask->v[static_cast<size_t>(i)]) g[off + i] += go[off + i];
            }
        });
    }
    return out;
}

/// Gathers rows of a (V, E) table; gradient scatter-adds into the table.
template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, const std::vector<long>& indices) {
    if (table.rank() != 2) throw shape_error("embedding_lookup: table " + shape_str(table.shape()));
    const long V = table.dim(0), E = table.dim(1);
    for (long ix : indices)
        if (ix < 0 || ix >= V) throw shape_error("embedding_lookup: index " + std::to_string(ix) + " out of [0," + std::to_string(V) + ")");
    Tensor<T> out = Tensor<T>::zeros({static_cast<long>(indices.size()), E});
    for (size_t i = 0; i < indices.size(); ++i)
        std::copy_n(table.data().data() + indices[i] * E, E, out.data().data() + static_cast<long>(i) * E);
    if (detail::want_grad<T>({&table})) {
        out.set_requires_grad(true);
        auto* tape = Tape<T>::active();
        auto tn = table.node_ptr(), on = out.node_ptr();
        tape->record([=, tp = tape]() {
            const auto& go = tp->grad_buf(on.get());
            auto& g = tp->grad_buf(tn.get());
            for (size_t i = 0; i < indices.size(); ++i) {
                const T* src = go.data() + static_cast<long>(i) * E;
                T* dst = g.data() + indices[i] * E;
                for (long j = 0; j < E; ++j) dst[j] += src[j];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    T s = 0;
    for (T v : x.data()) s += v;
    Tensor<T> out = Tensor<T>::scalar(s);
    if (detail::want_grad<T>({&x})) {
        out.set_requires_grad(true);
        auto* tape = Tape<T>::active();
        auto xn = x.node_ptr(), on = out.node_ptr();
        tape->record([=, tp = tape]() {
            const T go = tp->grad_buf(on.get())[0];
            auto& g = tp->grad_buf(xn.get());
            for (auto& v : g) v += go;
        });
    }
    return out;
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
    const T n = static_cast<T>(x.numel());
    T s = 0;
    for (T v : x.data()) s += v;
    Tensor<T> out = Tensor<T>::scalar(s / n);
    if (detail::want_grad<T>({&x})) {
        out.set_requires_grad(true);
        auto* tape = Tape<T>::active();
        auto xn = x.node_ptr(), on = out.node_ptr();
        tape->record([=, tp = tape]() {
            const T go = tp->grad_buf(on.get())[0] / n;
            auto& g = tp->grad_buf(xn.get());
            for (auto& v : g) v += go;
        });
    }
    return out;
}

/// Affine map x W + b; the last axis of x contracts with W's first.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    return bias_add(matmul(x, w), b);
}

/// Mean squared error between same-shape tensors.
template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
    Tensor<T> d = sub(a, b);
    return mean_all(mul(d, d));
}

}  // namespace xpolicy
