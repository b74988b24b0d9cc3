#pragma once
// Run configuration: plain `key = value` lines with `#` comments. Unknown
// keys are rejected so stale configs fail loudly. dump() emits a canonical
// form whose re-parse reproduces the exact run.

#include <cstdint>
#include <string>

namespace iqe {

struct RunConfig {
    uint64_t seed = 0;
    uint64_t backbone_seed = 1234;  // frozen-encoder init; independent of the run seed
    int image_size = 64;
    int patch = 8;
    int C = 64;  // shared embedding width of encoders, prompts, and queries
    int heads = 4;
    int img_layers = 8;
    int txt_layers = 6;
    int iqm_blocks = 4;
    int r = 8;            // learnable context length
    int M = 4;            // injected tokens per prompt-tuned layer
    int D = 3;            // text layers receiving injected tokens
    int context_cap = 32;
    double map_alpha = 0.8;   // query-branch weight in map fusion
    double loss_alpha = 0.8;  // text-branch weight in the training objective
    int epochs = 50;
    int batch = 32;
    double lr = 0.001;
    int adapt_epochs = 10;
    double focal_gamma = 2.0;
    double focal_balance = 0.25;
    double dice_eps = 1.0;
    std::string few_shot_mode = "finetune";  // or "joint"
    bool disable_cpt = false;
    bool disable_lpt = false;
    bool disable_iqm = false;
    bool disable_query_init = false;
    bool disable_text_xattn = false;
    bool disable_image_xattn = false;

    // The query branch is removed as a whole: maps fuse with alpha 0 and the
    // loss falls back to the text branch alone.
    double effective_map_alpha() const { return disable_iqm ? 0.0 : map_alpha; }
    double effective_loss_alpha() const { return disable_iqm ? 1.0 : loss_alpha; }

    void validate() const;
    std::string dump() const;

    static RunConfig parse_text(const std::string& text);
    static RunConfig parse_file(const std::string& path);
};

}  // namespace iqe
