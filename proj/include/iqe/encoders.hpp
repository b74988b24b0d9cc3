#pragma once
// Frozen backbone encoders. Both are randomly initialized from a dedicated
// backbone seed and never trained; they only provide a fixed deep feature
// space for the trainable modules downstream.

#include <array>
#include <string>
#include <unordered_map>
#include <vector>

#include "iqe/nn.hpp"
#include "iqe/tensor.hpp"

namespace iqe {

// Whitespace tokenizer over a fixed word list. Ids: PAD=0, UNK=1, CLS=2,
// then file line index + 3.
class Tokenizer {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kCls = 2;

    static Tokenizer from_words(std::vector<std::string> words);
    static Tokenizer load(const std::string& path);
    static const std::vector<std::string>& builtin_words();

    int vocab_size() const { return 3 + (int)words_.size(); }
    bool has_word(const std::string& w) const { return ids_.count(w) > 0; }
    int id_of(const std::string& w) const;  // kUnk when absent

    // [CLS] followed by per-word ids; throws when the result exceeds max_len.
    std::vector<int> tokenize(const std::string& text, int max_len) const;

    void save(const std::string& path) const;

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> ids_;
};

// Pre-norm transformer block: x + attn(ln1(x)), then the FFN with its own norm.
template <typename S>
struct TransformerBlockT {
    LayerNormT<S> ln1;
    AttentionT<S> attn;
    FfnT<S> ffn;

    TransformerBlockT() = default;
    TransformerBlockT(int dim, int heads, int hidden, int max_seq, Rng& rng, bool trainable)
        : ln1(dim, trainable), attn(dim, heads, max_seq, max_seq, rng, trainable),
          ffn(dim, hidden, rng, trainable) {}

    TensorT<S> forward(const TensorT<S>& x) const {
        auto h = ln1.forward(x);
        auto y = add(x, attn.forward(h, h, h));
        return ffn.forward(y, y);
    }

    void collect(const std::string& prefix, ParamList<S>& out) const {
        ln1.collect(prefix + ".ln1", out);
        attn.collect(prefix + ".attn", out);
        ffn.collect(prefix + ".ffn", out);
    }
};

struct ImageEncoderConfig {
    int image_size = 64;
    int patch = 8;
    int chans = 3;
    int layers = 8;
    int width = 64;
    int heads = 4;
    int ffn_hidden = 128;
    std::vector<int> taps = {2, 4, 6, 8};

    int grid_side() const { return image_size / patch; }
    int grid() const { return grid_side() * grid_side(); }

    void validate() const {
        if (image_size % patch != 0) throw std::invalid_argument("image size not divisible by patch");
        if (taps.empty() || taps.back() != layers)
            throw std::invalid_argument("last tap layer must equal the layer count");
        for (size_t i = 1; i < taps.size(); ++i)
            if (taps[i] <= taps[i - 1]) throw std::invalid_argument("tap layers must strictly increase");
        if (width % heads != 0) throw std::invalid_argument("width not divisible by heads");
    }
};

template <typename S>
struct StageFeaturesT {
    std::vector<TensorT<S>> stages;  // one [G x d] tensor per tap layer
    TensorT<S> x_cls;                // [d]
};

using StageFeatures = StageFeaturesT<float>;

// Rearranges an [H x W] or [H x W x chans] image into flat per-patch rows.
// Grayscale input is replicated across the encoder's channel width. Images
// are constants here, so this is a plain value transform with no tape node.
template <typename S>
TensorT<S> patchify(const TensorT<S>& image, int patch, int chans) {
    const int rank = image.rank();
    if (rank != 2 && rank != 3) throw std::invalid_argument("patchify: expected HxW or HxWxC");
    const int H = image.dim(0), W = image.dim(1);
    const int in_chans = rank == 3 ? image.dim(2) : 1;
    if (rank == 3 && in_chans != chans && in_chans != 1)
        throw std::invalid_argument("patchify: unsupported channel count");
    if (H % patch != 0 || W % patch != 0)
        throw std::invalid_argument("patchify: image size not divisible by patch");
    const int gy = H / patch, gx = W / patch;
    TensorT<S> out({gy * gx, patch * patch * chans});
    S* o = out.data();
    for (int by = 0; by < gy; ++by)
        for (int bx = 0; bx < gx; ++bx)
            for (int py = 0; py < patch; ++py)
                for (int px = 0; px < patch; ++px) {
                    const int y = by * patch + py, x = bx * patch + px;
                    for (int c = 0; c < chans; ++c) {
                        const int sc = (in_chans == 1) ? 0 : c;
                        const size_t src = rank == 3
                                               ? ((size_t)y * W + x) * in_chans + sc
                                               : (size_t)y * W + x;
                        *o++ = image.data()[src];
                    }
                }
    return out;
}

template <typename S>
class ImageEncoderT {
public:
    ImageEncoderT() = default;
    ImageEncoderT(const ImageEncoderConfig& cfg, uint64_t backbone_seed) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(mix_seed(backbone_seed, 0x1a6e));
        patch_proj_ = LinearT<S>(cfg_.patch * cfg_.patch * cfg_.chans, cfg_.width, rng, false);
        cls_ = TensorT<S>::uniform({1, cfg_.width}, rng, -0.02, 0.02);
        pos_ = TensorT<S>::uniform({1 + cfg_.grid(), cfg_.width}, rng, -0.02, 0.02);
        const int max_seq = 1 + cfg_.grid();
        blocks_.reserve((size_t)cfg_.layers);
        for (int l = 0; l < cfg_.layers; ++l)
            blocks_.emplace_back(cfg_.width, cfg_.heads, cfg_.ffn_hidden, max_seq, rng, false);
    }

    const ImageEncoderConfig& config() const { return cfg_; }

    StageFeaturesT<S> forward(const TensorT<S>& image) const {
        if (image.dim(0) != cfg_.image_size || image.dim(1) != cfg_.image_size)
            throw std::invalid_argument("encode_image: expected " + std::to_string(cfg_.image_size) +
                                        "x" + std::to_string(cfg_.image_size) + " input, got " +
                                        shape_str(image.shape()));
        auto tokens = patch_proj_.forward(patchify(image, cfg_.patch, cfg_.chans));
        auto x = add(concat_rows<S>({cls_, tokens}), pos_);
        StageFeaturesT<S> out;
        size_t next_tap = 0;
        for (int l = 0; l < cfg_.layers; ++l) {
            x = blocks_[(size_t)l].forward(x);
            if (next_tap < cfg_.taps.size() && cfg_.taps[next_tap] == l + 1) {
                out.stages.push_back(slice_rows(x, 1, 1 + cfg_.grid()));
                ++next_tap;
            }
        }
        out.x_cls = reshape(slice_rows(x, 0, 1), {cfg_.width});
        return out;
    }

    void collect(const std::string& prefix, ParamList<S>& out) const {
        patch_proj_.collect(prefix + ".patch_proj", out);
        out.push_back({prefix + ".cls_token", cls_, false});
        out.push_back({prefix + ".pos", pos_, false});
        for (size_t l = 0; l < blocks_.size(); ++l)
            blocks_[l].collect(prefix + ".blk" + std::to_string(l), out);
    }

private:
    ImageEncoderConfig cfg_;
    LinearT<S> patch_proj_;
    TensorT<S> cls_, pos_;
    std::vector<TransformerBlockT<S>> blocks_;
};

struct TextEncoderConfig {
    int layers = 6;
    int width = 64;
    int heads = 4;
    int ffn_hidden = 128;
    int context_cap = 32;
    int lpt_depth = 3;   // layers that accept injected tokens
    int max_inject = 8;  // sizing headroom for the attention tables

    void validate() const {
        if (lpt_depth >= layers) throw std::invalid_argument("lpt depth must be below the layer count");
        if (width % heads != 0) throw std::invalid_argument("width not divisible by heads");
    }
};

template <typename S>
class TextEncoderT {
public:
    TextEncoderT() = default;
    TextEncoderT(const TextEncoderConfig& cfg, int vocab_size, uint64_t backbone_seed) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(mix_seed(backbone_seed, 0x7e47));
        tok_table_ = TensorT<S>::uniform({vocab_size, cfg_.width}, rng, -0.5, 0.5);
        pos_ = TensorT<S>::uniform({cfg_.context_cap, cfg_.width}, rng, -0.02, 0.02);
        const int max_seq = cfg_.context_cap + cfg_.max_inject;
        blocks_.reserve((size_t)cfg_.layers);
        for (int l = 0; l < cfg_.layers; ++l)
            blocks_.emplace_back(cfg_.width, cfg_.heads, cfg_.ffn_hidden, max_seq, rng, false);
    }

    const TextEncoderConfig& config() const { return cfg_; }
    int vocab_size() const { return tok_table_.rows(); }

    TensorT<S> embed(const std::vector<int>& ids) const { return take_rows(tok_table_, ids); }

    // Runs the prompt embeddings through all layers. For the first lpt_depth
    // layers a fresh injected block is prepended, processed, and discarded;
    // the returned sequence always has the input length.
    TensorT<S> encode(const TensorT<S>& embedded, const std::vector<TensorT<S>>* inject) const {
        const int n = embedded.rows();
        if (n > cfg_.context_cap) throw std::invalid_argument("prompt longer than context capacity");
        if (inject && (int)inject->size() != cfg_.lpt_depth)
            throw std::invalid_argument("injection list length must equal lpt depth");
        auto h = add(embedded, slice_rows(pos_, 0, n));
        for (int l = 0; l < cfg_.layers; ++l) {
            if (inject && l < cfg_.lpt_depth) {
                const auto& extra = (*inject)[(size_t)l];
                auto s = blocks_[(size_t)l].forward(concat_rows<S>({extra, h}));
                h = slice_rows(s, extra.rows(), extra.rows() + n);
            } else {
                h = blocks_[(size_t)l].forward(h);
            }
        }
        return h;
    }

    void collect(const std::string& prefix, ParamList<S>& out) const {
        out.push_back({prefix + ".tok_table", tok_table_, false});
        out.push_back({prefix + ".pos", pos_, false});
        for (size_t l = 0; l < blocks_.size(); ++l)
            blocks_[l].collect(prefix + ".blk" + std::to_string(l), out);
    }

private:
    TextEncoderConfig cfg_;
    TensorT<S> tok_table_, pos_;
    std::vector<TransformerBlockT<S>> blocks_;
};

}  // namespace iqe
