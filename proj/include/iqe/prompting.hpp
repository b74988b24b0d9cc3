#pragma once
// Prompt construction and encoding. A prompt is the fixed word template, a
// state word (normal/abnormal), the class word, and r context slots holding
// the shared learnable context plus image-conditioned tokens projected from
// the class feature.

#include <array>
#include <string>
#include <vector>

#include "iqe/encoders.hpp"
#include "iqe/nn.hpp"

namespace iqe {

struct PromptConfig {
    int context_len = 8;  // r
    int lpt_len = 4;      // tokens injected per layer (M)
    int lpt_depth = 3;    // layers receiving injections (D)
    bool disable_cpt = false;
    bool disable_lpt = false;
    std::string prefix = "a photo of a";
    std::array<std::string, 2> states = {"normal", "abnormal"};
};

template <typename S>
class PromptingT {
public:
    PromptingT() = default;
    PromptingT(const PromptConfig& cfg, int width, Rng& rng) : cfg_(cfg), width_(width) {
        ctx_ = TensorT<S>::uniform({cfg_.context_len, width}, rng, -0.05, 0.05);
        ctx_.set_requires_grad(true);
        cpt_head_ = LinearT<S>(width, cfg_.context_len * width, rng, true);
        lpt_.reserve((size_t)cfg_.lpt_depth);
        for (int l = 0; l < cfg_.lpt_depth; ++l) {
            lpt_.push_back(TensorT<S>::uniform({cfg_.lpt_len, width}, rng, -0.05, 0.05));
            lpt_.back().set_requires_grad(true);
        }
    }

    const PromptConfig& config() const { return cfg_; }
    const TensorT<S>& context() const { return ctx_; }
    const LinearT<S>& cpt_head() const { return cpt_head_; }
    const std::vector<TensorT<S>>& lpt_tokens() const { return lpt_; }

    int state_index(const std::string& state) const {
        for (size_t i = 0; i < cfg_.states.size(); ++i)
            if (cfg_.states[i] == state) return (int)i;
        throw std::invalid_argument("unknown prompt state: " + state);
    }

    // Embedded token sequence for one (state, class) prompt. trunk_out is the
    // shared-MLP projection of the image class feature; context slot i holds
    // cpt_i + ctx_i (or ctx_i alone when class-based tokens are disabled).
    TensorT<S> build_prompt(int state_idx, const std::string& class_word, const TensorT<S>& trunk_out,
                            const Tokenizer& tok, const TextEncoderT<S>& txt) const {
        if (state_idx < 0 || state_idx >= (int)cfg_.states.size())
            throw std::invalid_argument("prompt state index out of range");
        const std::string text = cfg_.prefix + " " + cfg_.states[(size_t)state_idx] + " " + class_word;
        const int cap = txt.config().context_cap - cfg_.context_len;
        auto words = txt.embed(tok.tokenize(text, cap));
        TensorT<S> slots;
        if (cfg_.disable_cpt) {
            slots = ctx_;
        } else {
            auto cpt = reshape(cpt_head_.forward(trunk_out), {cfg_.context_len, width_});
            slots = add(cpt, ctx_);
        }
        return concat_rows<S>({words, slots});
    }

    // Both state prompts encoded and pooled at the class-token position,
    // stacked as rows (normal, abnormal).
    TensorT<S> encode_prompts(const TensorT<S>& trunk_out, const std::string& class_word,
                              const Tokenizer& tok, const TextEncoderT<S>& txt) const {
        const std::vector<TensorT<S>>* inject = cfg_.disable_lpt ? nullptr : &lpt_;
        std::vector<TensorT<S>> pooled;
        pooled.reserve(2);
        for (int s = 0; s < 2; ++s) {
            auto seq = build_prompt(s, class_word, trunk_out, tok, txt);
            auto h = txt.encode(seq, inject);
            pooled.push_back(slice_rows(h, 0, 1));
        }
        return concat_rows<S>(pooled);
    }

    void collect(const std::string& prefix, ParamList<S>& out) const {
        out.push_back({prefix + ".ctx", ctx_, ctx_.requires_grad()});
        cpt_head_.collect(prefix + ".cpt_head", out);
        for (size_t l = 0; l < lpt_.size(); ++l)
            out.push_back({prefix + ".lpt" + std::to_string(l), lpt_[l], lpt_[l].requires_grad()});
    }

private:
    PromptConfig cfg_;
    int width_ = 0;
    TensorT<S> ctx_;
    LinearT<S> cpt_head_;
    std::vector<TensorT<S>> lpt_;
};

}  // namespace iqe
