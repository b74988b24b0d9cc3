#pragma once
// Segmentation objective: focal + dice on the per-layer map against the
// pixel mask, plus BCE between the map maximum and the image label. The
// total objective weights the text branch by loss_alpha and the query branch
// by its complement, summed over the four stages.

#include <vector>

#include "iqe/tensor.hpp"

namespace iqe {

struct LossConfig {
    double focal_gamma = 2.0;
    double focal_balance = 0.25;  // weight of the positive class
    double dice_eps = 1.0;
    double loss_alpha = 0.8;
};

template <typename S>
struct SegLosses {
    TensorT<S> focal, dice, bce;  // scalars; focal/dice undefined without a mask
    bool has_pixel_terms = false;
};

// mask may be null for image-level-only samples; then only BCE applies.
template <typename S>
SegLosses<S> segmentation_losses(const TensorT<S>& map, const TensorT<S>* mask, int label,
                                 const LossConfig& cfg) {
    SegLosses<S> out;
    auto pm = clamp(max_reduce(map), kLogFloor, 1.0 - kLogFloor);
    out.bce = label ? scale(log_op(pm), -1.0) : scale(log_op(affine(pm, -1.0, 1.0)), -1.0);
    if (!mask) return out;

    if (mask->shape() != map.shape())
        throw std::invalid_argument("segmentation loss: map " + shape_str(map.shape()) +
                                    " vs mask " + shape_str(mask->shape()));
    out.has_pixel_terms = true;

    auto p = clamp(map, kLogFloor, 1.0 - kLogFloor);
    // p_t = G*p + (1-G)*(1-p); alpha_t = balance*G + (1-balance)*(1-G)
    auto pt = add(mul(*mask, p), mul(affine(*mask, -1.0, 1.0), affine(p, -1.0, 1.0)));
    auto at = affine(*mask, 2.0 * cfg.focal_balance - 1.0, 1.0 - cfg.focal_balance);
    out.focal = scale(mean(mul(at, mul(pow_const(affine(pt, -1.0, 1.0), cfg.focal_gamma), log_op(pt)))),
                      -1.0);

    // dice on the raw map so a perfect binary prediction scores exactly zero
    auto inter = sum(mul(map, *mask));
    auto eps = TensorT<S>::scalar((S)cfg.dice_eps);
    auto num = add(scale(inter, 2.0), eps);
    auto den = add(add(sum(map), sum(*mask)), eps);
    out.dice = affine(div(num, den), -1.0, 1.0);
    return out;
}

template <typename S>
TensorT<S> seg_loss_total(const SegLosses<S>& l) {
    if (!l.has_pixel_terms) return l.bce;
    return add(add(l.focal, l.dice), l.bce);
}

// Sum over stages of loss_alpha * L(text map) + (1 - loss_alpha) * L(query map).
// Zero-weight branches are skipped outright, so their maps may be absent.
template <typename S>
TensorT<S> total_loss(const std::vector<TensorT<S>>& maps_text,
                      const std::vector<TensorT<S>>& maps_query, const TensorT<S>* mask, int label,
                      const LossConfig& cfg) {
    const double a = cfg.loss_alpha;
    if (a < 0.0 || a > 1.0) throw std::invalid_argument("total loss: loss_alpha outside [0,1]");
    const bool use_text = a > 0.0;
    const bool use_query = a < 1.0;
    if (use_text && maps_text.empty()) throw std::invalid_argument("total loss: text maps missing");
    if (use_query && maps_query.empty())
        throw std::invalid_argument("total loss: query maps missing while loss_alpha < 1");
    if (use_text && use_query && maps_text.size() != maps_query.size())
        throw std::invalid_argument("total loss: branch stage counts differ");

    TensorT<S> total;
    auto accumulate = [&](TensorT<S> term) {
        total = total.defined() ? add(total, term) : term;
    };
    const size_t stages = use_text ? maps_text.size() : maps_query.size();
    for (size_t i = 0; i < stages; ++i) {
        if (use_text)
            accumulate(scale(seg_loss_total(segmentation_losses(maps_text[i], mask, label, cfg)), a));
        if (use_query)
            accumulate(
                scale(seg_loss_total(segmentation_losses(maps_query[i], mask, label, cfg)), 1.0 - a));
    }
    return total;
}

}  // namespace iqe
