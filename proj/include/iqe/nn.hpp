#pragma once
// Composite blocks on top of the tensor ops: linear layers, multi-head
// attention with an additive per-layer bias table, pre-norm FFN, and Adam.

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "iqe/tensor.hpp"

namespace iqe {

template <typename S>
struct ParamRef {
    std::string name;
    TensorT<S> tensor;
    bool trainable = false;
};

template <typename S>
using ParamList = std::vector<ParamRef<S>>;

// FNV-1a over the raw value bytes; used by freeze checks and determinism tests.
template <typename S>
inline uint64_t value_checksum(const TensorT<S>& t) {
    uint64_t h = 1469598103934665603ull;
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
    for (size_t i = 0; i < t.values().size() * sizeof(S); ++i) {
        h ^= bytes[i];
        h *= 1099511628211ull;
    }
    return h;
}

template <typename S>
inline uint64_t group_checksum(const ParamList<S>& params) {
    uint64_t h = 1469598103934665603ull;
    for (const auto& p : params) {
        uint64_t c = value_checksum(p.tensor);
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

template <typename S>
struct LinearT {
    TensorT<S> weight;  // [in x out]
    TensorT<S> bias;    // [out]

    LinearT() = default;
    LinearT(int in, int out, Rng& rng, bool trainable) {
        const double bound = 1.0 / std::sqrt((double)in);
        weight = TensorT<S>::uniform({in, out}, rng, -bound, bound);
        bias = TensorT<S>({out});
        weight.set_requires_grad(trainable);
        bias.set_requires_grad(trainable);
    }

    int in_dim() const { return weight.dim(0); }
    int out_dim() const { return weight.dim(1); }

    TensorT<S> forward(const TensorT<S>& x) const {
        if (x.rank() == 1) {
            auto y = add(matmul(reshape(x, {1, x.dim(0)}), weight), bias);
            return reshape(y, {out_dim()});
        }
        return add(matmul(x, weight), bias);
    }

    void collect(const std::string& prefix, ParamList<S>& out) const {
        out.push_back({prefix + ".weight", weight, weight.requires_grad()});
        out.push_back({prefix + ".bias", bias, bias.requires_grad()});
    }
};

template <typename S>
struct LayerNormT {
    TensorT<S> gamma, beta;  // [dim]

    LayerNormT() = default;
    LayerNormT(int dim, bool trainable) {
        gamma = TensorT<S>({dim}, S(1));
        beta = TensorT<S>({dim});
        gamma.set_requires_grad(trainable);
        beta.set_requires_grad(trainable);
    }

    TensorT<S> forward(const TensorT<S>& x) const { return add(mul(layer_norm_rows(x), gamma), beta); }

    void collect(const std::string& prefix, ParamList<S>& out) const {
        out.push_back({prefix + ".gamma", gamma, gamma.requires_grad()});
        out.push_back({prefix + ".beta", beta, beta.requires_grad()});
    }
};

// Scaled dot-product attention over full sequences. The additive bias table
// is sliced to (len_q, len_k) and applied to the logits of every head before
// the 1/sqrt(C) scaling, matching the attention form used throughout.
template <typename S>
struct AttentionT {
    int heads = 1;
    int model_dim = 0;
    LinearT<S> q, k, v, out;
    TensorT<S> bias;  // [max_q x max_k]

    AttentionT() = default;
    AttentionT(int dim, int num_heads, int max_q, int max_k, Rng& rng, bool trainable)
        : heads(num_heads),
          model_dim(dim),
          q(dim, dim, rng, trainable),
          k(dim, dim, rng, trainable),
          v(dim, dim, rng, trainable),
          out(dim, dim, rng, trainable) {
        if (dim % num_heads != 0)
            throw std::invalid_argument("attention: model dim not divisible by heads");
        bias = TensorT<S>({max_q, max_k});
        bias.set_requires_grad(trainable);
    }

    TensorT<S> forward(const TensorT<S>& qx, const TensorT<S>& kx, const TensorT<S>& vx) const {
        if (qx.cols() != model_dim || kx.cols() != model_dim || vx.cols() != model_dim ||
            kx.rows() != vx.rows())
            throw std::invalid_argument("attention input shape mismatch");
        const int lq = qx.rows(), lk = kx.rows();
        if (lq > bias.rows() || lk > bias.cols())
            throw std::invalid_argument("attention bias table smaller than sequence");
        auto Q = q.forward(qx);
        auto K = k.forward(kx);
        auto V = v.forward(vx);
        auto b = slice_rows(slice_cols(bias, 0, lk), 0, lq);
        const int hd = model_dim / heads;
        const double inv_scale = 1.0 / std::sqrt((double)model_dim);
        std::vector<TensorT<S>> head_outs;
        head_outs.reserve((size_t)heads);
        for (int h = 0; h < heads; ++h) {
            auto Qh = slice_cols(Q, h * hd, (h + 1) * hd);
            auto Kh = slice_cols(K, h * hd, (h + 1) * hd);
            auto Vh = slice_cols(V, h * hd, (h + 1) * hd);
            auto logits = scale(add(matmul(Qh, transpose(Kh)), b), inv_scale);
            head_outs.push_back(matmul(softmax_rows(logits), Vh));
        }
        return out.forward(concat_cols(head_outs));
    }

    // Post-softmax weights of one head, for tests probing the bias pathway.
    TensorT<S> attention_weights(const TensorT<S>& qx, const TensorT<S>& kx, int head) const {
        auto Q = q.forward(qx);
        auto K = k.forward(kx);
        const int hd = model_dim / heads;
        auto b = slice_rows(slice_cols(bias, 0, kx.rows()), 0, qx.rows());
        auto Qh = slice_cols(Q, head * hd, (head + 1) * hd);
        auto Kh = slice_cols(K, head * hd, (head + 1) * hd);
        return softmax_rows(scale(add(matmul(Qh, transpose(Kh)), b), 1.0 / std::sqrt((double)model_dim)));
    }

    void collect(const std::string& prefix, ParamList<S>& out_list) const {
        q.collect(prefix + ".q", out_list);
        k.collect(prefix + ".k", out_list);
        v.collect(prefix + ".v", out_list);
        out.collect(prefix + ".out", out_list);
        out_list.push_back({prefix + ".bias_table", bias, bias.requires_grad()});
    }
};

// Pre-norm feed-forward: residual + fc2(relu(fc1(layernorm(x)))). The second
// argument is the residual source, which may differ from x.
template <typename S>
struct FfnT {
    LayerNormT<S> ln;
    LinearT<S> fc1, fc2;

    FfnT() = default;
    FfnT(int dim, int hidden, Rng& rng, bool trainable)
        : ln(dim, trainable), fc1(dim, hidden, rng, trainable), fc2(hidden, dim, rng, trainable) {}

    TensorT<S> forward(const TensorT<S>& x, const TensorT<S>& residual) const {
        if (x.shape() != residual.shape())
            throw std::invalid_argument("ffn: input and residual shapes differ");
        return add(residual, fc2.forward(relu(fc1.forward(ln.forward(x)))));
    }

    void collect(const std::string& prefix, ParamList<S>& out) const {
        ln.collect(prefix + ".ln", out);
        fc1.collect(prefix + ".fc1", out);
        fc2.collect(prefix + ".fc2", out);
    }
};

// Bias-corrected Adam. Parameters that never received a gradient this step
// are left untouched (their moments stay zero, so the update would be zero
// anyway); non-finite gradients abort the whole step.
template <typename S>
struct AdamT {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step_count = 0;

    explicit AdamT(double learning_rate = 1e-3) : lr(learning_rate) {}

    void step(ParamList<S>& params) {
        for (const auto& p : params) {
            if (!p.trainable || !p.tensor.has_grad()) continue;
            for (S g : *p.tensor.grad_if())
                if (!std::isfinite((double)g))
                    throw std::runtime_error("adam: non-finite gradient for parameter " + p.name);
        }
        ++step_count;
        const double bc1 = 1.0 - std::pow(beta1, (double)step_count);
        const double bc2 = 1.0 - std::pow(beta2, (double)step_count);
        for (auto& p : params) {
            if (!p.trainable || !p.tensor.has_grad()) continue;
            auto& slot = slots_[p.name];
            if (slot.m.empty()) {
                slot.m.assign((size_t)p.tensor.size(), S(0));
                slot.v.assign((size_t)p.tensor.size(), S(0));
            }
            const auto& g = *p.tensor.grad_if();
            auto& val = p.tensor.values();
            for (size_t i = 0; i < g.size(); ++i) {
                const double gi = (double)g[i];
                const double m = beta1 * (double)slot.m[i] + (1.0 - beta1) * gi;
                const double v = beta2 * (double)slot.v[i] + (1.0 - beta2) * gi * gi;
                slot.m[i] = (S)m;
                slot.v[i] = (S)v;
                val[i] = (S)((double)val[i] - lr * (m / bc1) / (std::sqrt(v / bc2) + eps));
            }
        }
    }

private:
    struct Slot {
        std::vector<S> m, v;
    };
    std::unordered_map<std::string, Slot> slots_;
};

template <typename S>
inline void zero_grads(ParamList<S>& params) {
    for (auto& p : params) p.tensor.zero_grad();
}

}  // namespace iqe
