#pragma once
// Instance-aware query module: a 2-row query stream (normal, abnormal) is
// initialized from a position embedding plus a class-feature projection, then
// refined by N blocks of self-attention, text cross-attention, and image
// cross-attention, each followed by an FFN. Block k attends image stage k.

#include <vector>

#include "iqe/nn.hpp"

namespace iqe {

template <typename S>
class QueryInitT {
public:
    QueryInitT() = default;
    QueryInitT(int width, Rng& rng, bool disable_class)
        : width_(width), disable_class_(disable_class), head_(width, width, rng, true) {
        if (width % 2 != 0) throw std::invalid_argument("query init requires even width");
        pos_ = TensorT<S>::uniform({2, width / 2}, rng, -0.5, 0.5);
        pos_.set_requires_grad(true);
    }

    // [2 x C]: each row is the row's position embedding concatenated with its
    // half of the projected class feature. Disabling the class pathway zeroes
    // that half, leaving only positional content.
    TensorT<S> forward(const TensorT<S>& trunk_out) const {
        TensorT<S> class_half;
        if (disable_class_) {
            class_half = TensorT<S>({2, width_ / 2});
        } else {
            class_half = reshape(head_.forward(trunk_out), {2, width_ / 2});
        }
        return concat_cols<S>({pos_, class_half});
    }

    void collect(const std::string& prefix, ParamList<S>& out) const {
        out.push_back({prefix + ".pos", pos_, pos_.requires_grad()});
        head_.collect(prefix + ".head", out);
    }

private:
    int width_ = 0;
    bool disable_class_ = false;
    TensorT<S> pos_;
    LinearT<S> head_;
};

// Per-stage projection of encoder features into the query space: a linear
// map to width C, relu, then a bottleneck adapter.
template <typename S>
struct QueryAdapterT {
    LinearT<S> w, a1, a2;

    QueryAdapterT() = default;
    QueryAdapterT(int in_dim, int width, Rng& rng)
        : w(in_dim, width, rng, true),
          a1(width, width / 2, rng, true),
          a2(width / 2, width, rng, true) {}

    TensorT<S> forward(const TensorT<S>& stage) const {
        if (stage.cols() != w.in_dim())
            throw std::invalid_argument("query adapter: stage feature dim " +
                                        std::to_string(stage.cols()) + " does not match " +
                                        std::to_string(w.in_dim()));
        return a2.forward(relu(a1.forward(relu(w.forward(stage)))));
    }

    void collect(const std::string& prefix, ParamList<S>& out) const {
        w.collect(prefix + ".w", out);
        a1.collect(prefix + ".a1", out);
        a2.collect(prefix + ".a2", out);
    }
};

struct IqmOptions {
    int blocks = 4;
    int heads = 4;
    int ffn_hidden = 128;
    bool disable_text_xattn = false;
    bool disable_image_xattn = false;
};

template <typename S>
struct IqmBlockT {
    AttentionT<S> self_attn, text_attn, img_attn;
    FfnT<S> self_ffn, text_ffn, img_ffn;

    IqmBlockT() = default;
    IqmBlockT(int width, int heads, int ffn_hidden, int max_tokens, Rng& rng)
        : self_attn(width, heads, 2, 2, rng, true),
          text_attn(width, heads, 2, 2, rng, true),
          img_attn(width, heads, 2, max_tokens, rng, true),
          self_ffn(width, ffn_hidden, rng, true),
          text_ffn(width, ffn_hidden, rng, true),
          img_ffn(width, ffn_hidden, rng, true) {}

    // One refinement round: the image cross-attention queries the
    // self-attended stream while its FFN residual is the text-attended one.
    TensorT<S> forward(const TensorT<S>& query, const TensorT<S>& text_emb,
                       const TensorT<S>& stage, const IqmOptions& opt) const {
        auto a = self_ffn.forward(self_attn.forward(query, query, query), query);
        auto b = a;
        if (!opt.disable_text_xattn)
            b = text_ffn.forward(text_attn.forward(a, text_emb, text_emb), a);
        if (opt.disable_image_xattn) return b;
        return img_ffn.forward(img_attn.forward(a, stage, stage), b);
    }

    void collect(const std::string& prefix, ParamList<S>& out) const {
        self_attn.collect(prefix + ".self_attn", out);
        self_ffn.collect(prefix + ".self_ffn", out);
        text_attn.collect(prefix + ".text_attn", out);
        text_ffn.collect(prefix + ".text_ffn", out);
        img_attn.collect(prefix + ".img_attn", out);
        img_ffn.collect(prefix + ".img_ffn", out);
    }
};

template <typename S>
class IqmT {
public:
    IqmT() = default;
    IqmT(int width, const IqmOptions& opt, int max_stage_tokens, Rng& rng) : opt_(opt) {
        blocks_.reserve((size_t)opt.blocks);
        for (int b = 0; b < opt.blocks; ++b)
            blocks_.emplace_back(width, opt.heads, opt.ffn_hidden, max_stage_tokens, rng);
    }

    TensorT<S> run(const TensorT<S>& q0, const TensorT<S>& text_emb,
                   const std::vector<TensorT<S>>& adapted_stages) const {
        if (blocks_.size() != adapted_stages.size())
            throw std::invalid_argument("iqm: block count " + std::to_string(blocks_.size()) +
                                        " does not match stage count " +
                                        std::to_string(adapted_stages.size()));
        auto q = q0;
        for (size_t b = 0; b < blocks_.size(); ++b)
            q = blocks_[b].forward(q, text_emb, adapted_stages[b], opt_);
        return q;
    }

    std::vector<IqmBlockT<S>>& blocks() { return blocks_; }
    const IqmOptions& options() const { return opt_; }

    void collect(const std::string& prefix, ParamList<S>& out) const {
        for (size_t b = 0; b < blocks_.size(); ++b)
            blocks_[b].collect(prefix + ".blk" + std::to_string(b), out);
    }

private:
    IqmOptions opt_;
    std::vector<IqmBlockT<S>> blocks_;
};

}  // namespace iqe
