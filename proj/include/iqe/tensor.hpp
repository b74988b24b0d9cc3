#pragma once
// Dense row-major tensors over float (training) or double (verification),
// with a thread-confined reverse-mode autodiff tape. All reductions run
// sequentially left-to-right so identical inputs give bit-identical results.

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace iqe {

using Shape = std::vector<int>;

inline long numel(const Shape& s) {
    long n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// Deterministic RNG: mt19937_64 core with hand-rolled mappings so results
// do not depend on the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : s_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    uint64_t next_u64() {
        // splitmix64
        uint64_t z = (s_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    double uniform() { return (next_u64() >> 11) * (1.0 / 9007199254740992.0); }  // [0,1)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() {
        // Box-Muller, one value per call
        double u1 = uniform(), u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }
    int uniform_int(int lo, int hi) {  // inclusive
        uint64_t span = (uint64_t)(hi - lo) + 1;
        return lo + (int)(next_u64() % span);
    }

private:
    uint64_t s_;
};

inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

template <typename S>
struct TensorStorage {
    Shape shape;
    std::vector<S> v;
    std::vector<S> g;  // empty until a gradient is accumulated
    bool requires_grad = false;
};

template <typename S>
class TapeT;

template <typename S>
class TensorT {
public:
    TensorT() = default;
    explicit TensorT(Shape shape, S fill = S(0)) : d_(std::make_shared<TensorStorage<S>>()) {
        check_shape(shape);
        d_->shape = std::move(shape);
        d_->v.assign((size_t)numel(d_->shape), fill);
    }
    TensorT(Shape shape, std::vector<S> data) : d_(std::make_shared<TensorStorage<S>>()) {
        check_shape(shape);
        if ((long)data.size() != numel(shape))
            throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(shape));
        d_->shape = std::move(shape);
        d_->v = std::move(data);
    }
    static TensorT scalar(S v) { return TensorT({1}, std::vector<S>{v}); }
    static TensorT uniform(Shape shape, Rng& rng, double lo, double hi) {
        TensorT t(std::move(shape));
        for (auto& x : t.d_->v) x = (S)rng.uniform(lo, hi);
        return t;
    }

    bool defined() const { return (bool)d_; }
    const Shape& shape() const { return d_->shape; }
    int rank() const { return (int)d_->shape.size(); }
    int dim(int i) const { return d_->shape[(size_t)i]; }
    long size() const { return (long)d_->v.size(); }
    int rows() const { require_rank2(); return d_->shape[0]; }
    int cols() const { require_rank2(); return d_->shape[1]; }

    const std::vector<S>& values() const { return d_->v; }
    std::vector<S>& values() { return d_->v; }
    const S* data() const { return d_->v.data(); }
    S* data() { return d_->v.data(); }

    S item() const {
        if (size() != 1) throw std::logic_error("item() on non-scalar tensor " + shape_str(shape()));
        return d_->v[0];
    }
    S at(int i) const { return d_->v[(size_t)i]; }
    S at(int i, int j) const { require_rank2(); return d_->v[(size_t)i * cols() + j]; }

    bool requires_grad() const { return d_ && d_->requires_grad; }
    TensorT& set_requires_grad(bool b) {
        d_->requires_grad = b;
        return *this;
    }
    bool has_grad() const { return d_ && !d_->g.empty(); }
    // Gradient accumulator, zero-initialized on first access.
    std::vector<S>& grad() {
        if (d_->g.empty()) d_->g.assign(d_->v.size(), S(0));
        return d_->g;
    }
    const std::vector<S>* grad_if() const { return (d_ && !d_->g.empty()) ? &d_->g : nullptr; }
    void zero_grad() {
        if (d_) d_->g.clear();
    }

    std::shared_ptr<TensorStorage<S>> storage() const { return d_; }

private:
    static void check_shape(const Shape& s) {
        if (s.empty()) throw std::invalid_argument("empty shape");
        for (int d : s)
            if (d <= 0) throw std::invalid_argument("non-positive dimension in shape " + shape_str(s));
    }
    void require_rank2() const {
        if (rank() != 2) throw std::logic_error("expected rank-2 tensor, got " + shape_str(shape()));
    }
    std::shared_ptr<TensorStorage<S>> d_;
};

// Reverse-mode tape. Construction makes it the active tape for this thread;
// ops record backward closures while any input requires a gradient. One
// backward() pass per tape; closures run in reverse recording order, which
// is a topological order by construction.
template <typename S>
class TapeT {
public:
    TapeT() : prev_(current_) { current_ = this; }
    ~TapeT() { current_ = prev_; }
    TapeT(const TapeT&) = delete;
    TapeT& operator=(const TapeT&) = delete;

    static TapeT* current() { return current_; }

    void record(std::function<void()> back) { nodes_.push_back(std::move(back)); }
    size_t size() const { return nodes_.size(); }

    void backward(TensorT<S> root) {
        if (consumed_) throw std::logic_error("backward() called twice on one tape");
        if (root.size() != 1) throw std::invalid_argument("backward root must be scalar");
        consumed_ = true;
        root.grad()[0] += S(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    }

private:
    std::vector<std::function<void()>> nodes_;
    TapeT* prev_ = nullptr;
    bool consumed_ = false;
    static thread_local TapeT* current_;
};

template <typename S>
thread_local TapeT<S>* TapeT<S>::current_ = nullptr;

using Tensor = TensorT<float>;
using Tape = TapeT<float>;

namespace detail {

template <typename S>
inline void ensure_finite(const TensorT<S>& t, const char* op) {
    for (S x : t.values())
        if (!std::isfinite((double)x))
            throw std::runtime_error(std::string(op) + ": non-finite value in output");
}

template <typename S>
inline TapeT<S>* recording_tape(std::initializer_list<const TensorT<S>*> ins) {
    TapeT<S>* t = TapeT<S>::current();
    if (!t) return nullptr;
    for (const TensorT<S>* p : ins)
        if (p->defined() && p->requires_grad()) return t;
    return nullptr;
}

// out[m x n] += a[m x k] * b[k x n]
template <typename S>
inline void mm_nn(const S* a, const S* b, S* out, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const S* arow = a + (size_t)i * k;
        S* orow = out + (size_t)i * n;
        for (int p = 0; p < k; ++p) {
            const S aip = arow[p];
            const S* brow = b + (size_t)p * n;
            for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
}

// out[m x k] += a[m x n] * b[k x n]^T
template <typename S>
inline void mm_nt(const S* a, const S* b, S* out, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        const S* arow = a + (size_t)i * n;
        S* orow = out + (size_t)i * k;
        for (int p = 0; p < k; ++p) {
            const S* brow = b + (size_t)p * n;
            S acc = S(0);
            for (int j = 0; j < n; ++j) acc += arow[j] * brow[j];
            orow[p] += acc;
        }
    }
}

// out[k x n] += a[m x k]^T * b[m x n]
template <typename S>
inline void mm_tn(const S* a, const S* b, S* out, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const S* arow = a + (size_t)i * k;
        const S* brow = b + (size_t)i * n;
        for (int p = 0; p < k; ++p) {
            const S aip = arow[p];
            S* orow = out + (size_t)p * n;
            for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
}

}  // namespace detail

// ---- elementwise and shape ops ---------------------------------------------

template <typename S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
        throw std::invalid_argument("matmul shape mismatch " + shape_str(a.shape()) + " x " +
                                    shape_str(b.shape()));
    const int m = a.rows(), k = a.cols(), n = b.cols();
    TensorT<S> out({m, n});
    detail::mm_nn(a.data(), b.data(), out.data(), m, k, n);
    detail::ensure_finite(out, "matmul");
    if (auto* tape = detail::recording_tape<S>({&a, &b})) {
        out.set_requires_grad(true);
        TensorT<S> ta = a, tb = b, to = out;
        tape->record([ta, tb, to, m, k, n]() mutable {
            const auto* og = to.grad_if();
            if (!og) return;
            if (ta.requires_grad()) detail::mm_nt(og->data(), tb.data(), ta.grad().data(), m, n, k);
            if (tb.requires_grad()) detail::mm_tn(ta.data(), og->data(), tb.grad().data(), m, k, n);
        });
    }
    return out;
}

template <typename S>
TensorT<S> transpose(const TensorT<S>& a) {
    if (a.rank() != 2) throw std::invalid_argument("transpose expects rank-2, got " + shape_str(a.shape()));
    const int m = a.rows(), n = a.cols();
    TensorT<S> out({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.data()[(size_t)j * m + i] = a.data()[(size_t)i * n + j];
    if (auto* tape = detail::recording_tape<S>({&a})) {
        out.set_requires_grad(true);
        TensorT<S> ta = a, to = out;
        tape->record([ta, to, m, n]() mutable {
            const auto* og = to.grad_if();
            if (!og) return;
            auto& ag = ta.grad();
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < m; ++i) ag[(size_t)i * n + j] += (*og)[(size_t)j * m + i];
        });
    }
    return out;
}

// add(a, b): same shape, or b is a vector broadcast across the rows of 2-D a.
template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    const bool rowvec = (b.rank() == 1 && a.rank() == 2 && b.dim(0) == a.cols());
    if (!rowvec && a.shape() != b.shape())
        throw std::invalid_argument("add shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    TensorT<S> out(a.shape());
    if (rowvec) {
        const int m = a.rows(), n = a.cols();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                out.data()[(size_t)i * n + j] = a.data()[(size_t)i * n + j] + b.data()[j];
    } else {
        for (long i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
    }
    detail::ensure_finite(out, "add");
    if (auto* tape = detail::recording_tape<S>({&a, &b})) {
        out.set_requires_grad(true);
        TensorT<S> ta = a, tb = b, to = out;
        tape->record([ta, tb, to, rowvec]() mutable {
            const auto* og = to.grad_if();
            if (!og) return;
            if (ta.requires_grad()) {
                auto& ag = ta.grad();
                for (size_t i = 0; i < og->size(); ++i) ag[i] += (*og)[i];
            }
            if (tb.requires_grad()) {
                auto& bg = tb.grad();
                if (rowvec) {
                    const int m = ta.rows(), n = ta.cols();
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < n; ++j) bg[(size_t)j] += (*og)[(size_t)i * n + j];
                } else {
                    for (size_t i = 0; i < og->size(); ++i) bg[i] += (*og)[i];
                }
            }
        });
    }
    return out;
}

template <typename S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("sub shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    TensorT<S> out(a.shape());
    for (long i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
    detail::ensure_finite(out, "sub");
    if (auto* tape = detail::recording_tape<S>({&a, &b})) {
        out.set_requires_grad(true);
        TensorT<S> ta = a, tb = b, to = out;
        tape->record([ta, tb, to]() mutable {
            const auto* og = to.grad_if();
            if (!og) return;
            if (ta.requires_grad()) {
                auto& ag = ta.grad();
                for (size_t i = 0; i < og->size(); ++i) ag[i] += (*og)[i];
            }
            if (tb.requires_grad()) {
                auto& bg = tb.grad();
                for (size_t i = 0; i < og->size(); ++i) bg[i] -= (*og)[i];
            }
        });
    }
    return out;
}

// mul(a, b): elementwise; b may be a vector broadcast across rows of 2-D a.
template <typename S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
    const bool rowvec = (b.rank() == 1 && a.rank() == 2 && b.dim(0) == a.cols());
    if (!rowvec && a.shape() != b.shape())
        throw std::invalid_argument("mul shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    TensorT<S> out(a.shape());
    if (rowvec) {
        const int m = a.rows(), n = a.cols();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                out.data()[(size_t)i * n + j] = a.data()[(size_t)i * n + j] * b.data()[j];
    } else {
        for (long i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    }
    detail::ensure_finite(out, "mul");
    if (auto* tape = detail::recording_tape<S>({&a, &b})) {
        out.set_requires_grad(true);
        TensorT<S> ta = a, tb = b, to = out;
        tape->record([ta, tb, to, rowvec]() mutable {
            const auto* og = to.grad_if();
            if (!og) return;
            if (rowvec) {
                const int m = ta.rows(), n = ta.cols();
                if (ta.requires_grad()) {
                    auto& ag = ta.grad();
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < n; ++j)
                            ag[(size_t)i * n + j] += (*og)[(size_t)i * n + j] * tb.data()[j];
                }
                if (tb.requires_grad()) {
                    auto& bg = tb.grad();
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < n; ++j)
                            bg[(size_t)j] += (*og)[(size_t)i * n + j] * ta.data()[(size_t)i * n + j];
                }
            } else {
                if (ta.requires_grad()) {
                    auto& ag = ta.grad();
                    for (size_t i = 0; i < og->size(); ++i) ag[i] += (*og)[i] * tb.data()[i];
                }
                if (tb.requires_grad()) {
                    auto& bg = tb.grad();
                    for (size_t i = 0; i < og->size(); ++i) bg[i] += (*og)[i] * ta.data()[i];
                }
            }
        });
    }
    return out;
}

template <typename S>
TensorT<S> div(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("div shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    TensorT<S> out(a.shape());
    for (long i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] / b.data()[i];
    detail::ensure_finite(out, "div");
    if (auto* tape = detail::recording_tape<S>({&a, &b})) {
        out.set_requires_grad(true);
        TensorT<S> ta = a, tb = b, to = out;
        tape->record([ta, tb, to]() mutable {
            const auto* og = to.grad_if();
            if (!og) return;
            if (ta.requires_grad()) {
                auto& ag = ta.grad();
                for (size_t i = 0; i < og->size(); ++i) ag[i] += (*og)[i] / tb.data()[(long)i];
            }
            if (tb.requires_grad()) {
                auto& bg = tb.grad();
                for (size_t i = 0; i < og->size(); ++i) {
                    const double bi = (double)tb.data()[(long)i];
                    bg[i] -= (S)((double)(*og)[i] * (double)ta.data()[(long)i] / (bi * bi));
                }
            }
        });
    }
    return out;
}

// affine(a, k, c) = k*a + c with scalar constants; scale() is the c = 0 case.
template <typename S>
TensorT<S> affine(const TensorT<S>& a, double k, double c) {
    TensorT<S> out(a.shape());
    for (long i = 0; i < a.size(); ++i) out.data()[i] = (S)(k * a.data()[i] + c);
    detail::ensure_finite(out, "affine");
    if (auto* tape = detail::recording_tape<S>({&a})) {
        out.set_requires_grad(true);
        TensorT<S> ta = a, to = out;
        tape->record([ta, to, k]() mutable {
            const auto* og = to.grad_if();
            if (!og) return;
            auto& ag = ta.grad();
            for (size_t i = 0; i < og->size(); ++i) ag[i] += (S)(k * (*og)[i]);
        });
    }
    return out;
}

template <typename S>
TensorT<S> scale(const TensorT<S>& a, double k) {
    return affine(a, k, 0.0);
}

namespace detail {

// Shared plumbing for unary elementwise ops: fwd(x) -> y, dfdx(x, y) -> slope.
template <typename S, typename F, typename D>
TensorT<S> unary_op(const TensorT<S>& a, const char* name, F fwd, D dfdx) {
    TensorT<S> out(a.shape());
    for (long i = 0; i < a.size(); ++i) out.data()[i] = fwd(a.data()[i]);
    ensure_finite(out, name);
    if (auto* tape = recording_tape<S>({&a})) {
        out.set_requires_grad(true);
        TensorT<S> ta = a, to = out;
        tape->record([ta, to, dfdx]() mutable {
            const auto* og = to.grad_if();
            if (!og) return;
            auto& ag = ta.grad();
            for (size_t i = 0; i < og->size(); ++i) ag[i] += (*og)[i] * dfdx(ta.data()[i], to.data()[i]);
        });
    }
    return out;
}

}  // namespace detail

template <typename S>
TensorT<S> relu(const TensorT<S>& a) {
    return detail::unary_op(
        a, "relu", [](S x) { return x > S(0) ? x : S(0); },
        [](S x, S) { return x > S(0) ? S(1) : S(0); });
}

template <typename S>
TensorT<S> exp_op(const TensorT<S>& a) {
    return detail::unary_op(
        a, "exp", [](S x) { return (S)std::exp((double)x); }, [](S, S y) { return y; });
}

inline constexpr double kLogFloor = 1e-7;

// log with inputs clamped at 1e-7 so saturated probabilities stay finite.
template <typename S>
TensorT<S> log_op(const TensorT<S>& a) {
    return detail::unary_op(
        a, "log", [](S x) { return (S)std::log(std::max((double)x, kLogFloor)); },
        [](S x, S) { return (double)x > kLogFloor ? S(1.0 / (double)x) : S(0); });
}

template <typename S>
TensorT<S> sigmoid(const TensorT<S>& a) {
    return detail::unary_op(
        a, "sigmoid",
        [](S x) {
            double v = (double)x;
            return (S)(v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)));
        },
        [](S, S y) { return (S)((double)y * (1.0 - (double)y)); });
}

template <typename S>
TensorT<S> clamp(const TensorT<S>& a, double lo, double hi) {
    return detail::unary_op(
        a, "clamp",
        [lo, hi](S x) { return (S)std::min(hi, std::max(lo, (double)x)); },
        [lo, hi](S x, S) { return ((double)x > lo && (double)x < hi) ? S(1) : S(0); });
}

// pow_const(a, p) for a >= 0, used by the focal modulating factor.
template <typename S>
TensorT<S> pow_const(const TensorT<S>& a, double p) {
    for (long i = 0; i < a.size(); ++i)
        if (a.data()[i] < S(0)) throw std::invalid_argument("pow_const: negative base");
    return detail::unary_op(
        a, "pow_const", [p](S x) { return (S)std::pow((double)x, p); },
        [p](S x, S) {
            if ((double)x <= 0.0) return S(0);
            return (S)(p * std::pow((double)x, p - 1.0));
        });
}

template <typename S>
TensorT<S> sum(const TensorT<S>& a) {
    double acc = 0;
    for (long i = 0; i < a.size(); ++i) acc += (double)a.data()[i];
    TensorT<S> out = TensorT<S>::scalar((S)acc);
    detail::ensure_finite(out, "sum");
    if (auto* tape = detail::recording_tape<S>({&a})) {
        out.set_requires_grad(true);
        TensorT<S> ta = a, to = out;
        tape->record([ta, to]() mutable {
            const auto* og = to.grad_if();
            if (!og) return;
            auto& ag = ta.grad();
            const S g = (*og)[0];
            for (auto& x : ag) x += g;
        });
    }
    return out;
}

template <typename S>
TensorT<S> mean(const TensorT<S>& a) {
    const double inv = 1.0 / (double)a.size();
    double acc = 0;
    for (long i = 0; i < a.size(); ++i) acc += (double)a.data()[i];
    TensorT<S> out = TensorT<S>::scalar((S)(acc * inv));
    detail::ensure_finite(out, "mean");
    if (auto* tape = detail::recording_tape<S>({&a})) {
        out.set_requires_grad(true);
        TensorT<S> ta = a, to = out;
        tape->record([ta, to, inv]() mutable {
            const auto* og = to.grad_if();
            if (!og) return;
            auto& ag = ta.grad();
            const S g = (S)((*og)[0] * inv);
            for (auto& x : ag) x += g;
        });
    }
    return out;
}

// Max over all elements; the subgradient goes to the first maximal element.
template <typename S>
TensorT<S> max_reduce(const TensorT<S>& a) {
    long arg = 0;
    S best = a.data()[0];
    for (long i = 1; i < a.size(); ++i)
        if (a.data()[i] > best) { best = a.data()[i]; arg = i; }
    TensorT<S> out = TensorT<S>::scalar(best);
    detail::ensure_finite(out, "max_reduce");
    if (auto* tape = detail::recording_tape<S>({&a})) {
        out.set_requires_grad(true);
        TensorT<S> ta = a, to = out;
        tape->record([ta, to, arg]() mutable {
            const auto* og = to.grad_if();
            if (!og) return;
            ta.grad()[(size_t)arg] += (*og)[0];
        });
    }
    return out;
}

template <typename S>
TensorT<S> reshape(const TensorT<S>& a, Shape shape) {
    if (numel(shape) != a.size())
        throw std::invalid_argument("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape) +
                                    " changes element count");
    TensorT<S> out(std::move(shape), a.values());
    if (auto* tape = detail::recording_tape<S>({&a})) {
        out.set_requires_grad(true);
        TensorT<S> ta = a, to = out;
        tape->record([ta, to]() mutable {
            const auto* og = to.grad_if();
            if (!og) return;
            auto& ag = ta.grad();
            for (size_t i = 0; i < og->size(); ++i) ag[i] += (*og)[i];
        });
    }
    return out;
}

template <typename S>
TensorT<S> slice_rows(const TensorT<S>& a, int r0, int r1) {
    if (a.rank() != 2 || r0 < 0 || r1 > a.rows() || r0 >= r1)
        throw std::invalid_argument("slice_rows bounds [" + std::to_string(r0) + "," + std::to_string(r1) +
                                    ") on " + shape_str(a.shape()));
    const int n = a.cols();
    TensorT<S> out({r1 - r0, n});
    std::copy(a.data() + (size_t)r0 * n, a.data() + (size_t)r1 * n, out.data());
    if (auto* tape = detail::recording_tape<S>({&a})) {
        out.set_requires_grad(true);
        TensorT<S> ta = a, to = out;
        tape->record([ta, to, r0, n]() mutable {
            const auto* og = to.grad_if();
            if (!og) return;
            auto& ag = ta.grad();
            for (size_t i = 0; i < og->size(); ++i) ag[(size_t)r0 * n + i] += (*og)[i];
        });
    }
    return out;
}

template <typename S>
TensorT<S> slice_cols(const TensorT<S>& a, int c0, int c1) {
    if (a.rank() != 2 || c0 < 0 || c1 > a.cols() || c0 >= c1)
        throw std::invalid_argument("slice_cols bounds [" + std::to_string(c0) + "," + std::to_string(c1) +
                                    ") on " + shape_str(a.shape()));
    const int m = a.rows(), n = a.cols(), w = c1 - c0;
    TensorT<S> out({m, w});
    for (int i = 0; i < m; ++i)
        std::copy(a.data() + (size_t)i * n + c0, a.data() + (size_t)i * n + c1, out.data() + (size_t)i * w);
    if (auto* tape = detail::recording_tape<S>({&a})) {
        out.set_requires_grad(true);
        TensorT<S> ta = a, to = out;
        tape->record([ta, to, c0, m, n, w]() mutable {
            const auto* og = to.grad_if();
            if (!og) return;
            auto& ag = ta.grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < w; ++j) ag[(size_t)i * n + c0 + j] += (*og)[(size_t)i * w + j];
        });
    }
    return out;
}

template <typename S>
TensorT<S> concat_rows(const std::vector<TensorT<S>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty list");
    const int n = parts[0].cols();
    int m = 0;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.cols() != n) throw std::invalid_argument("concat_rows: column mismatch");
        m += p.rows();
    }
    TensorT<S> out({m, n});
    size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.data(), p.data() + p.size(), out.data() + off);
        off += (size_t)p.size();
    }
    bool any_grad = false;
    for (const auto& p : parts) any_grad = any_grad || p.requires_grad();
    if (auto* tape = TapeT<S>::current(); tape && any_grad) {
        out.set_requires_grad(true);
        std::vector<TensorT<S>> held = parts;
        TensorT<S> to = out;
        tape->record([held, to]() mutable {
            const auto* og = to.grad_if();
            if (!og) return;
            size_t off = 0;
            for (auto& p : held) {
                if (p.requires_grad()) {
                    auto& pg = p.grad();
                    for (long i = 0; i < p.size(); ++i) pg[(size_t)i] += (*og)[off + (size_t)i];
                }
                off += (size_t)p.size();
            }
        });
    }
    return out;
}

template <typename S>
TensorT<S> concat_cols(const std::vector<TensorT<S>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty list");
    const int m = parts[0].rows();
    int n = 0;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.rows() != m) throw std::invalid_argument("concat_cols: row mismatch");
        n += p.cols();
    }
    TensorT<S> out({m, n});
    int coff = 0;
    for (const auto& p : parts) {
        const int w = p.cols();
        for (int i = 0; i < m; ++i)
            std::copy(p.data() + (size_t)i * w, p.data() + (size_t)(i + 1) * w,
                      out.data() + (size_t)i * n + coff);
        coff += w;
    }
    bool any_grad = false;
    for (const auto& p : parts) any_grad = any_grad || p.requires_grad();
    if (auto* tape = TapeT<S>::current(); tape && any_grad) {
        out.set_requires_grad(true);
        std::vector<TensorT<S>> held = parts;
        TensorT<S> to = out;
        tape->record([held, to, m, n]() mutable {
            const auto* og = to.grad_if();
            if (!og) return;
            int coff = 0;
            for (auto& p : held) {
                const int w = p.cols();
                if (p.requires_grad()) {
                    auto& pg = p.grad();
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < w; ++j)
                            pg[(size_t)i * w + j] += (*og)[(size_t)i * n + coff + j];
                }
                coff += w;
            }
        });
    }
    return out;
}

// Row gather (embedding lookup).
template <typename S>
TensorT<S> take_rows(const TensorT<S>& a, const std::vector<int>& idx) {
    if (a.rank() != 2) throw std::invalid_argument("take_rows expects rank-2");
    for (int i : idx)
        if (i < 0 || i >= a.rows()) throw std::out_of_range("take_rows index " + std::to_string(i));
    const int n = a.cols();
    TensorT<S> out({(int)idx.size(), n});
    for (size_t r = 0; r < idx.size(); ++r)
        std::copy(a.data() + (size_t)idx[r] * n, a.data() + (size_t)(idx[r] + 1) * n,
                  out.data() + r * (size_t)n);
    if (auto* tape = detail::recording_tape<S>({&a})) {
        out.set_requires_grad(true);
        TensorT<S> ta = a, to = out;
        tape->record([ta, to, idx, n]() mutable {
            const auto* og = to.grad_if();
            if (!og) return;
            auto& ag = ta.grad();
            for (size_t r = 0; r < idx.size(); ++r)
                for (int j = 0; j < n; ++j) ag[(size_t)idx[r] * n + j] += (*og)[r * (size_t)n + j];
        });
    }
    return out;
}

template <typename S>
TensorT<S> softmax_rows(const TensorT<S>& a) {
    if (a.rank() != 2) throw std::invalid_argument("softmax_rows expects rank-2");
    const int m = a.rows(), n = a.cols();
    TensorT<S> out({m, n});
    for (int i = 0; i < m; ++i) {
        const S* x = a.data() + (size_t)i * n;
        S* y = out.data() + (size_t)i * n;
        double mx = (double)x[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, (double)x[j]);
        double z = 0;
        for (int j = 0; j < n; ++j) {
            double e = std::exp((double)x[j] - mx);
            y[j] = (S)e;
            z += e;
        }
        const double inv = 1.0 / z;
        for (int j = 0; j < n; ++j) y[j] = (S)((double)y[j] * inv);
    }
    detail::ensure_finite(out, "softmax");
    if (auto* tape = detail::recording_tape<S>({&a})) {
        out.set_requires_grad(true);
        TensorT<S> ta = a, to = out;
        tape->record([ta, to, m, n]() mutable {
            const auto* og = to.grad_if();
            if (!og) return;
            auto& ag = ta.grad();
            for (int i = 0; i < m; ++i) {
                const S* y = to.data() + (size_t)i * n;
                const S* dy = og->data() + (size_t)i * n;
                double dot = 0;
                for (int j = 0; j < n; ++j) dot += (double)dy[j] * (double)y[j];
                for (int j = 0; j < n; ++j)
                    ag[(size_t)i * n + j] += (S)((double)y[j] * ((double)dy[j] - dot));
            }
        });
    }
    return out;
}

inline constexpr double kLayerNormEps = 1e-5;

// Per-row standardization (x - mean) / sqrt(var + eps), no affine part.
template <typename S>
TensorT<S> layer_norm_rows(const TensorT<S>& a) {
    if (a.rank() != 2) throw std::invalid_argument("layer_norm_rows expects rank-2");
    const int m = a.rows(), n = a.cols();
    TensorT<S> out({m, n});
    std::vector<double> inv_std((size_t)m);
    for (int i = 0; i < m; ++i) {
        const S* x = a.data() + (size_t)i * n;
        double mu = 0;
        for (int j = 0; j < n; ++j) mu += (double)x[j];
        mu /= n;
        double var = 0;
        for (int j = 0; j < n; ++j) {
            double d = (double)x[j] - mu;
            var += d * d;
        }
        var /= n;
        const double is = 1.0 / std::sqrt(var + kLayerNormEps);
        inv_std[(size_t)i] = is;
        S* y = out.data() + (size_t)i * n;
        for (int j = 0; j < n; ++j) y[j] = (S)(((double)x[j] - mu) * is);
    }
    detail::ensure_finite(out, "layer_norm");
    if (auto* tape = detail::recording_tape<S>({&a})) {
        out.set_requires_grad(true);
        TensorT<S> ta = a, to = out;
        tape->record([ta, to, m, n, inv_std]() mutable {
            const auto* og = to.grad_if();
            if (!og) return;
            auto& ag = ta.grad();
            for (int i = 0; i < m; ++i) {
                const S* y = to.data() + (size_t)i * n;
                const S* dy = og->data() + (size_t)i * n;
                double mdy = 0, mdyy = 0;
                for (int j = 0; j < n; ++j) {
                    mdy += (double)dy[j];
                    mdyy += (double)dy[j] * (double)y[j];
                }
                mdy /= n;
                mdyy /= n;
                for (int j = 0; j < n; ++j)
                    ag[(size_t)i * n + j] +=
                        (S)(inv_std[(size_t)i] * ((double)dy[j] - mdy - (double)y[j] * mdyy));
            }
        });
    }
    return out;
}

inline constexpr double kL2Eps = 1e-4;

// Rows scaled to unit L2 norm along the last axis; rank-1 treated as one row.
// Rows with norm below the floor are scaled by the constant 1/kL2Eps instead:
// a near-zero feature has no usable direction, and the constant scale keeps
// both the value and the gradient smooth through the origin.
template <typename S>
TensorT<S> l2_normalize_rows(const TensorT<S>& a) {
    const int m = a.rank() == 1 ? 1 : a.rows();
    const int n = a.rank() == 1 ? a.dim(0) : a.cols();
    if (a.rank() > 2) throw std::invalid_argument("l2_normalize_rows expects rank-1 or rank-2");
    TensorT<S> out(a.shape());
    std::vector<double> inv_norm((size_t)m);
    std::vector<char> floored((size_t)m);
    for (int i = 0; i < m; ++i) {
        const S* x = a.data() + (size_t)i * n;
        double s = 0;
        for (int j = 0; j < n; ++j) s += (double)x[j] * (double)x[j];
        const double norm = std::sqrt(s);
        floored[(size_t)i] = norm < kL2Eps;
        const double inv = 1.0 / std::max(norm, kL2Eps);
        inv_norm[(size_t)i] = inv;
        S* y = out.data() + (size_t)i * n;
        for (int j = 0; j < n; ++j) y[j] = (S)((double)x[j] * inv);
    }
    detail::ensure_finite(out, "l2_normalize");
    if (auto* tape = detail::recording_tape<S>({&a})) {
        out.set_requires_grad(true);
        TensorT<S> ta = a, to = out;
        tape->record([ta, to, m, n, inv_norm, floored]() mutable {
            const auto* og = to.grad_if();
            if (!og) return;
            auto& ag = ta.grad();
            for (int i = 0; i < m; ++i) {
                const S* y = to.data() + (size_t)i * n;
                const S* dy = og->data() + (size_t)i * n;
                if (floored[(size_t)i]) {
                    // constant-scale region: plain linear map
                    for (int j = 0; j < n; ++j)
                        ag[(size_t)i * n + j] += (S)((double)dy[j] * inv_norm[(size_t)i]);
                    continue;
                }
                double dot = 0;
                for (int j = 0; j < n; ++j) dot += (double)dy[j] * (double)y[j];
                for (int j = 0; j < n; ++j)
                    ag[(size_t)i * n + j] += (S)(inv_norm[(size_t)i] * ((double)dy[j] - (double)y[j] * dot));
            }
        });
    }
    return out;
}

// Cosine similarity along the last axis for equal-shaped inputs: [m] for
// rank-2 inputs, scalar for rank-1.
template <typename S>
TensorT<S> cosine_similarity(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("cosine_similarity shape mismatch");
    if (a.rank() > 2) throw std::invalid_argument("cosine_similarity expects rank-1 or rank-2");
    const int m = a.rank() == 1 ? 1 : a.rows();
    const int n = a.rank() == 1 ? a.dim(0) : a.cols();
    TensorT<S> out(Shape{m});
    std::vector<double> na((size_t)m), nb((size_t)m);
    std::vector<char> fa((size_t)m), fb((size_t)m);
    for (int i = 0; i < m; ++i) {
        const S* xa = a.data() + (size_t)i * n;
        const S* xb = b.data() + (size_t)i * n;
        double sa = 0, sb = 0, dot = 0;
        for (int j = 0; j < n; ++j) {
            sa += (double)xa[j] * (double)xa[j];
            sb += (double)xb[j] * (double)xb[j];
            dot += (double)xa[j] * (double)xb[j];
        }
        fa[(size_t)i] = std::sqrt(sa) < kL2Eps;
        fb[(size_t)i] = std::sqrt(sb) < kL2Eps;
        na[(size_t)i] = std::max(std::sqrt(sa), kL2Eps);
        nb[(size_t)i] = std::max(std::sqrt(sb), kL2Eps);
        out.data()[i] = (S)(dot / (na[(size_t)i] * nb[(size_t)i]));
    }
    detail::ensure_finite(out, "cosine_similarity");
    if (auto* tape = detail::recording_tape<S>({&a, &b})) {
        out.set_requires_grad(true);
        TensorT<S> ta = a, tb = b, to = out;
        tape->record([ta, tb, to, m, n, na, nb, fa, fb]() mutable {
            const auto* og = to.grad_if();
            if (!og) return;
            for (int i = 0; i < m; ++i) {
                const double g = (double)(*og)[(size_t)i];
                if (g == 0) continue;
                const S* xa = ta.data() + (size_t)i * n;
                const S* xb = tb.data() + (size_t)i * n;
                const double c = (double)to.data()[i];
                const double ia = 1.0 / na[(size_t)i], ib = 1.0 / nb[(size_t)i];
                if (ta.requires_grad()) {
                    auto& ag = ta.grad();
                    for (int j = 0; j < n; ++j) {
                        const double proj = fa[(size_t)i] ? 0.0 : c * (double)xa[j] * ia * ia;
                        ag[(size_t)i * n + j] += (S)(g * ((double)xb[j] * ia * ib - proj));
                    }
                }
                if (tb.requires_grad()) {
                    auto& bg = tb.grad();
                    for (int j = 0; j < n; ++j) {
                        const double proj = fb[(size_t)i] ? 0.0 : c * (double)xb[j] * ib * ib;
                        bg[(size_t)i * n + j] += (S)(g * ((double)xa[j] * ia * ib - proj));
                    }
                }
            }
        });
    }
    return out;
}

// Align-corners bilinear interpolation of a grid onto (H, W).
template <typename S>
TensorT<S> bilinear_upsample(const TensorT<S>& grid, int H, int W) {
    if (grid.rank() != 2) throw std::invalid_argument("bilinear_upsample expects rank-2 grid");
    const int gh = grid.rows(), gw = grid.cols();
    if (gh < 2 || gw < 2) throw std::invalid_argument("bilinear_upsample: grid must be at least 2x2");
    if (H < gh || W < gw) throw std::invalid_argument("bilinear_upsample: target smaller than grid");
    TensorT<S> out({H, W});
    const double sy = H > 1 ? (double)(gh - 1) / (H - 1) : 0.0;
    const double sx = W > 1 ? (double)(gw - 1) / (W - 1) : 0.0;
    struct Corner { int y0, x0; double fy, fx; };
    std::vector<int> ys0((size_t)H), xs0((size_t)W);
    std::vector<double> fys((size_t)H), fxs((size_t)W);
    for (int y = 0; y < H; ++y) {
        double v = y * sy;
        int y0 = std::min((int)v, gh - 2);
        ys0[(size_t)y] = y0;
        fys[(size_t)y] = v - y0;
    }
    for (int x = 0; x < W; ++x) {
        double v = x * sx;
        int x0 = std::min((int)v, gw - 2);
        xs0[(size_t)x] = x0;
        fxs[(size_t)x] = v - x0;
    }
    for (int y = 0; y < H; ++y) {
        const int y0 = ys0[(size_t)y];
        const double fy = fys[(size_t)y];
        const S* g0 = grid.data() + (size_t)y0 * gw;
        const S* g1 = grid.data() + (size_t)(y0 + 1) * gw;
        S* o = out.data() + (size_t)y * W;
        for (int x = 0; x < W; ++x) {
            const int x0 = xs0[(size_t)x];
            const double fx = fxs[(size_t)x];
            o[x] = (S)((1 - fy) * ((1 - fx) * (double)g0[x0] + fx * (double)g0[x0 + 1]) +
                       fy * ((1 - fx) * (double)g1[x0] + fx * (double)g1[x0 + 1]));
        }
    }
    detail::ensure_finite(out, "bilinear_upsample");
    if (auto* tape = detail::recording_tape<S>({&grid})) {
        out.set_requires_grad(true);
        TensorT<S> tg = grid, to = out;
        tape->record([tg, to, H, W, gw, ys0, xs0, fys, fxs]() mutable {
            const auto* og = to.grad_if();
            if (!og) return;
            auto& gg = tg.grad();
            for (int y = 0; y < H; ++y) {
                const int y0 = ys0[(size_t)y];
                const double fy = fys[(size_t)y];
                for (int x = 0; x < W; ++x) {
                    const int x0 = xs0[(size_t)x];
                    const double fx = fxs[(size_t)x];
                    const double g = (double)(*og)[(size_t)y * W + x];
                    gg[(size_t)y0 * gw + x0] += (S)(g * (1 - fy) * (1 - fx));
                    gg[(size_t)y0 * gw + x0 + 1] += (S)(g * (1 - fy) * fx);
                    gg[(size_t)(y0 + 1) * gw + x0] += (S)(g * fy * (1 - fx));
                    gg[(size_t)(y0 + 1) * gw + x0 + 1] += (S)(g * fy * fx);
                }
            }
        });
    }
    return out;
}

}  // namespace iqe
