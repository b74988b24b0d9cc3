#pragma once
// Full model: frozen encoders, the shared projection trunk, prompt tuning,
// query adapters, the query module, and per-stage anomaly maps.

#include <map>
#include <string>
#include <vector>

#include "iqe/config.hpp"
#include "iqe/encoders.hpp"
#include "iqe/iqm.hpp"
#include "iqe/prompting.hpp"
#include "iqe/scoring.hpp"

namespace iqe {

template <typename S>
struct ForwardResultT {
    std::vector<TensorT<S>> maps_text;   // four [H x W] maps
    std::vector<TensorT<S>> maps_query;  // empty when the query branch is disabled
    TensorT<S> text_emb;                 // [2 x C]
    TensorT<S> query_emb;                // [2 x C], undefined when disabled
};

using ForwardResult = ForwardResultT<float>;

template <typename S>
class ModelT {
public:
    static constexpr int kStages = 4;

    ModelT(const RunConfig& cfg, Tokenizer tok) : cfg_(cfg), tok_(std::move(tok)) {
        cfg_.validate();

        ImageEncoderConfig img_cfg;
        img_cfg.image_size = cfg_.image_size;
        img_cfg.patch = cfg_.patch;
        img_cfg.layers = cfg_.img_layers;
        img_cfg.width = cfg_.C;
        img_cfg.heads = cfg_.heads;
        img_cfg.ffn_hidden = 2 * cfg_.C;
        img_cfg.taps = {cfg_.img_layers / 4, cfg_.img_layers / 2, 3 * cfg_.img_layers / 4,
                        cfg_.img_layers};
        img_ = ImageEncoderT<S>(img_cfg, cfg_.backbone_seed);

        TextEncoderConfig txt_cfg;
        txt_cfg.layers = cfg_.txt_layers;
        txt_cfg.width = cfg_.C;
        txt_cfg.heads = cfg_.heads;
        txt_cfg.ffn_hidden = 2 * cfg_.C;
        txt_cfg.context_cap = cfg_.context_cap;
        txt_cfg.lpt_depth = cfg_.D;
        txt_cfg.max_inject = cfg_.M;
        txt_ = TextEncoderT<S>(txt_cfg, tok_.vocab_size(), cfg_.backbone_seed);

        Rng rng(mix_seed(cfg_.seed, 0x5eed));
        trunk_ = LinearT<S>(cfg_.C, cfg_.C, rng, true);

        PromptConfig pcfg;
        pcfg.context_len = cfg_.r;
        pcfg.lpt_len = cfg_.M;
        pcfg.lpt_depth = cfg_.D;
        pcfg.disable_cpt = cfg_.disable_cpt;
        pcfg.disable_lpt = cfg_.disable_lpt;
        prompt_ = PromptingT<S>(pcfg, cfg_.C, rng);

        qinit_ = QueryInitT<S>(cfg_.C, rng, cfg_.disable_query_init);
        adapters_.clear();
        adapters_.reserve(kStages);
        for (int i = 0; i < kStages; ++i) adapters_.emplace_back(cfg_.C, cfg_.C, rng);

        IqmOptions opt;
        opt.blocks = cfg_.iqm_blocks;
        opt.heads = cfg_.heads;
        opt.ffn_hidden = 2 * cfg_.C;
        opt.disable_text_xattn = cfg_.disable_text_xattn;
        opt.disable_image_xattn = cfg_.disable_image_xattn;
        iqm_ = IqmT<S>(cfg_.C, opt, img_cfg.grid(), rng);
    }

    const RunConfig& config() const { return cfg_; }
    const Tokenizer& tokenizer() const { return tok_; }
    const ImageEncoderT<S>& image_encoder() const { return img_; }
    const TextEncoderT<S>& text_encoder() const { return txt_; }
    const PromptingT<S>& prompting() const { return prompt_; }
    IqmT<S>& iqm() { return iqm_; }

    StageFeaturesT<S> encode_image(const TensorT<S>& image) const { return img_.forward(image); }

    ForwardResultT<S> forward(const StageFeaturesT<S>& feats, const std::string& class_word) const {
        if ((int)feats.stages.size() != kStages)
            throw std::invalid_argument("forward: expected four stage features");
        ForwardResultT<S> out;
        auto trunk_out = relu(trunk_.forward(feats.x_cls));
        out.text_emb = prompt_.encode_prompts(trunk_out, class_word, tok_, txt_);

        std::vector<TensorT<S>> adapted;
        adapted.reserve(kStages);
        for (int i = 0; i < kStages; ++i) adapted.push_back(adapters_[(size_t)i].forward(feats.stages[i]));

        const int H = cfg_.image_size, W = cfg_.image_size;
        for (int i = 0; i < kStages; ++i)
            out.maps_text.push_back(layer_map(adapted[(size_t)i], out.text_emb, H, W));

        if (!cfg_.disable_iqm) {
            auto q0 = qinit_.forward(trunk_out);
            out.query_emb = iqm_.run(q0, out.text_emb, adapted);
            for (int i = 0; i < kStages; ++i)
                out.maps_query.push_back(layer_map(adapted[(size_t)i], out.query_emb, H, W));
        }
        return out;
    }

    TensorT<S> fused_map(const ForwardResultT<S>& r, double map_alpha) const {
        return fuse_maps(r.maps_query, r.maps_text, cfg_.disable_iqm ? 0.0 : map_alpha);
    }
    TensorT<S> fused_map(const ForwardResultT<S>& r) const {
        return fused_map(r, cfg_.map_alpha);
    }

    // All parameters in fixed registration order (checkpoint order).
    ParamList<S> params() const {
        ParamList<S> out;
        img_.collect("img", out);
        txt_.collect("txt", out);
        out.push_back({"trunk.weight", trunk_.weight, trunk_.weight.requires_grad()});
        out.push_back({"trunk.bias", trunk_.bias, trunk_.bias.requires_grad()});
        prompt_.collect("prompt", out);
        qinit_.collect("query_init", out);
        for (size_t i = 0; i < adapters_.size(); ++i)
            adapters_[i].collect("adapter" + std::to_string(i), out);
        iqm_.collect("iqm", out);
        return out;
    }

    ParamList<S> trainable_params() const {
        ParamList<S> out, all = params();
        for (auto& p : all)
            if (p.trainable) out.push_back(p);
        return out;
    }

    // Named parameter groups used by freeze and gradient-flow checks. The
    // bias tables of the query-module attentions form their own group.
    std::map<std::string, ParamList<S>> param_groups() const {
        std::map<std::string, ParamList<S>> g;
        for (auto& p : params()) {
            std::string key;
            if (p.name.rfind("img.", 0) == 0) key = "image_encoder";
            else if (p.name.rfind("txt.", 0) == 0) key = "text_encoder";
            else if (p.name == "prompt.ctx") key = "learnable_context";
            else if (p.name.rfind("trunk.", 0) == 0 || p.name.rfind("prompt.cpt_head", 0) == 0)
                key = "cpt_mlp";
            else if (p.name.rfind("prompt.lpt", 0) == 0) key = "lpt_tokens";
            else if (p.name.rfind("query_init.", 0) == 0) key = "query_init";
            else if (p.name.rfind("adapter", 0) == 0) key = "query_adapters";
            else if (p.name.rfind("iqm.", 0) == 0 &&
                     p.name.size() > 11 && p.name.rfind(".bias_table") == p.name.size() - 11)
                key = "bias_tables";
            else if (p.name.rfind("iqm.", 0) == 0) key = "iqm_blocks";
            else throw std::logic_error("unclassified parameter: " + p.name);
            g[key].push_back(p);
        }
        return g;
    }

    // name -> whether a gradient has been accumulated; diagnostic for
    // gradient-flow tests.
    std::map<std::string, bool> grad_presence() const {
        std::map<std::string, bool> out;
        for (const auto& p : params()) out[p.name] = p.tensor.has_grad();
        return out;
    }

private:
    RunConfig cfg_;
    Tokenizer tok_;
    ImageEncoderT<S> img_;
    TextEncoderT<S> txt_;
    LinearT<S> trunk_;
    PromptingT<S> prompt_;
    QueryInitT<S> qinit_;
    std::vector<QueryAdapterT<S>> adapters_;
    IqmT<S> iqm_;
};

using Model = ModelT<float>;

}  // namespace iqe
