#pragma once
// Training and evaluation orchestration. The frozen encoders make per-image
// features constants of the backbone seed, so they are computed once per
// image and cached across epochs, seeds, and configurations.

#include <chrono>
#include <functional>
#include <ostream>
#include <unordered_map>

#include "iqe/checkpoint.hpp"
#include "iqe/data.hpp"
#include "iqe/losses.hpp"
#include "iqe/metrics.hpp"
#include "iqe/model.hpp"

namespace iqe {

class FeatureCache {
public:
    // Valid for one backbone (seed + geometry); keys are domain-qualified ids.
    const StageFeatures& get(const Model& model, const std::string& domain,
                             const LoadedSample& sample) {
        const std::string key = domain + "/" + sample.id + "/" + std::to_string(sample.label);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        auto feats = model.encode_image(sample.image);
        return cache_.emplace(key, std::move(feats)).first->second;
    }
    size_t size() const { return cache_.size(); }

private:
    std::unordered_map<std::string, StageFeatures> cache_;
};

struct SampleRef {
    const LoadedDomain* domain = nullptr;
    const LoadedSample* sample = nullptr;
};

struct TrainLog {
    std::vector<double> epoch_mean_loss;
};

namespace detail_pipeline {

inline TensorT<float> run_sample_loss(Model& model, FeatureCache& cache, const SampleRef& ref,
                                      const LossConfig& lcfg) {
    const auto& feats = cache.get(model, ref.domain->name, *ref.sample);
    auto out = model.forward(feats, ref.domain->class_word);
    const Tensor* mask = ref.sample->has_mask ? &ref.sample->mask : nullptr;
    return total_loss(out.maps_text, out.maps_query, mask, ref.sample->label, lcfg);
}

// One optimization pass over `order`; every batch additionally carries the
// `extra` samples once. Returns the mean per-sample loss.
inline double run_epoch(Model& model, FeatureCache& cache, const std::vector<SampleRef>& order,
                        const std::vector<SampleRef>& extra, AdamT<float>& adam,
                        ParamList<float>& trainable, const LossConfig& lcfg, int batch_size) {
    double loss_sum = 0.0;
    long loss_count = 0;
    for (size_t start = 0; start < order.size(); start += (size_t)batch_size) {
        const size_t end = std::min(order.size(), start + (size_t)batch_size);
        const double denom = (double)(end - start + extra.size());
        auto step_sample = [&](const SampleRef& ref) {
            Tape tape;
            auto loss = run_sample_loss(model, cache, ref, lcfg);
            loss_sum += (double)loss.item();
            ++loss_count;
            tape.backward(scale(loss, 1.0 / denom));
        };
        for (size_t i = start; i < end; ++i) step_sample(order[i]);
        for (const auto& ref : extra) step_sample(ref);
        adam.step(trainable);
        zero_grads(trainable);
    }
    return loss_count ? loss_sum / (double)loss_count : 0.0;
}

inline void shuffle_refs(std::vector<SampleRef>& refs, Rng& rng) {
    for (size_t i = refs.size(); i > 1; --i)
        std::swap(refs[i - 1], refs[(size_t)rng.uniform_int(0, (int)i - 1)]);
}

}  // namespace detail_pipeline

// Leave-one-out training: every train sample outside the held-out domain,
// shuffled per epoch from the run seed.
inline TrainLog train_zero_shot(Model& model, const Dataset& data, const std::string& holdout,
                                FeatureCache& cache, std::ostream* loss_log = nullptr) {
    const RunConfig& cfg = model.config();
    if (!data.find(holdout)) throw std::runtime_error("held-out domain not found: " + holdout);
    std::vector<SampleRef> pool;
    for (const auto& dom : data.domains) {
        if (dom.name == holdout) continue;
        for (const auto& s : dom.train) pool.push_back({&dom, &s});
    }
    if (pool.empty()) throw std::runtime_error("training set is empty");

    LossConfig lcfg{cfg.focal_gamma, cfg.focal_balance, cfg.dice_eps, cfg.effective_loss_alpha()};
    AdamT<float> adam(cfg.lr);
    auto trainable = model.trainable_params();
    zero_grads(trainable);
    Rng shuffle_rng(mix_seed(cfg.seed, 0x0e90c4));

    TrainLog log;
    if (loss_log) *loss_log << "epoch,mean_loss\n";
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        detail_pipeline::shuffle_refs(pool, shuffle_rng);
        const double mean_loss =
            detail_pipeline::run_epoch(model, cache, pool, {}, adam, trainable, lcfg, cfg.batch);
        log.epoch_mean_loss.push_back(mean_loss);
        if (loss_log) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%d,%.9f\n", epoch + 1, mean_loss);
            *loss_log << buf;
        }
    }
    return log;
}

// Few-shot adaptation. In finetune mode the model continues from its current
// weights for adapt_epochs; in joint mode the caller passes a freshly
// initialized model and the full epoch budget is used. The K target samples
// ride along in every batch.
inline TrainLog few_shot_adapt(Model& model, const Dataset& data, const std::string& target, int k,
                               FeatureCache& cache, std::ostream* loss_log = nullptr) {
    const RunConfig& cfg = model.config();
    const LoadedDomain* tgt = data.find(target);
    if (!tgt) throw std::runtime_error("target domain not found: " + target);
    TrainLog log;
    if (k == 0) return log;  // adaptation degenerates to the incoming weights

    auto ids = sample_few_shot(*tgt, k, cfg.seed);
    std::vector<SampleRef> extra;
    for (const auto& id : ids)
        for (const auto& s : tgt->train)
            if (s.id == id) extra.push_back({tgt, &s});

    std::vector<SampleRef> pool;
    for (const auto& dom : data.domains) {
        if (dom.name == target) continue;
        for (const auto& s : dom.train) pool.push_back({&dom, &s});
    }
    if (pool.empty()) throw std::runtime_error("source training set is empty");

    LossConfig lcfg{cfg.focal_gamma, cfg.focal_balance, cfg.dice_eps, cfg.effective_loss_alpha()};
    AdamT<float> adam(cfg.lr);
    auto trainable = model.trainable_params();
    zero_grads(trainable);
    Rng shuffle_rng(mix_seed(cfg.seed, 0xada9d));

    const int epochs = cfg.few_shot_mode == "joint" ? cfg.epochs : cfg.adapt_epochs;
    if (loss_log) *loss_log << "epoch,mean_loss\n";
    for (int epoch = 0; epoch < epochs; ++epoch) {
        detail_pipeline::shuffle_refs(pool, shuffle_rng);
        const double mean_loss =
            detail_pipeline::run_epoch(model, cache, pool, extra, adam, trainable, lcfg, cfg.batch);
        log.epoch_mean_loss.push_back(mean_loss);
        if (loss_log) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%d,%.9f\n", epoch + 1, mean_loss);
            *loss_log << buf;
        }
    }
    return log;
}

// Scores every test image of the domain: the map maximum for the image-level
// metric and pooled per-pixel values against the masks for the pixel-level
// one (omitted when any mask is missing).
inline EvalRow evaluate_domain(const Model& model, const LoadedDomain& domain, FeatureCache& cache,
                               double map_alpha) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> img_scores;
    std::vector<int> img_labels;
    std::vector<double> px_scores;
    std::vector<int> px_labels;
    bool all_masks = true;
    for (const auto& s : domain.test) {
        const auto& feats = cache.get(model, domain.name, s);
        auto out = model.forward(feats, domain.class_word);
        auto fused = model.fused_map(out, map_alpha);
        img_scores.push_back(anomaly_score(fused));
        img_labels.push_back(s.label);
        if (s.has_mask) {
            for (long i = 0; i < fused.size(); ++i) {
                px_scores.push_back((double)fused.data()[i]);
                px_labels.push_back(s.mask.data()[i] > 0.5f ? 1 : 0);
            }
        } else {
            all_masks = false;
        }
    }
    EvalRow row;
    row.domain = domain.name;
    row.n_images = (long)img_scores.size();
    row.ac_auroc = auroc(img_scores, img_labels);
    if (all_masks && !px_scores.empty()) {
        row.as_auroc = auroc(px_scores, px_labels);
        row.has_as = true;
        row.n_pixels = (long)px_scores.size();
    }
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return row;
}

}  // namespace iqe
