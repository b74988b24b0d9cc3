#pragma once
// Shared fixtures for the unit tests: a reduced model geometry that keeps
// forward passes cheap, and deterministic random images.

#include "iqe/config.hpp"
#include "iqe/model.hpp"

namespace iqe::testing {

inline RunConfig small_config() {
    RunConfig cfg;
    cfg.image_size = 32;
    cfg.patch = 8;  // 4x4 patch grid
    cfg.C = 32;
    cfg.heads = 4;
    cfg.img_layers = 4;
    cfg.txt_layers = 2;
    cfg.D = 1;
    cfg.M = 2;
    cfg.r = 4;
    cfg.epochs = 2;
    cfg.batch = 4;
    return cfg;
}

template <typename S = float>
inline TensorT<S> make_image(uint64_t seed, int size) {
    Rng rng(mix_seed(seed, 0xf00d));
    return TensorT<S>::uniform({size, size}, rng, 0.0, 1.0);
}

template <typename S = float>
inline ModelT<S> small_model(RunConfig cfg = small_config()) {
    return ModelT<S>(cfg, Tokenizer::from_words(Tokenizer::builtin_words()));
}

}  // namespace iqe::testing
