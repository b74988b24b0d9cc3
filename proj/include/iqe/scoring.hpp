#pragma once
// Anomaly maps: per-token two-way softmax over cosine similarities against a
// (normal, abnormal) embedding pair, reshaped to the patch grid and
// bilinearly upsampled. Maps from the four stages are summed per branch and
// fused with weight alpha on the query branch.

#include <cmath>
#include <vector>

#include "iqe/tensor.hpp"

namespace iqe {

// adapted: [G x C] stage tokens, emb: [2 x C] rows ordered (normal, abnormal).
// Returns the per-pixel abnormal probability in (0, 1) at (H, W).
template <typename S>
TensorT<S> layer_map(const TensorT<S>& adapted, const TensorT<S>& emb, int H, int W) {
    if (emb.rank() != 2 || emb.rows() != 2 || emb.cols() != adapted.cols())
        throw std::invalid_argument("layer_map: embedding must be 2 x feature-dim");
    const int g = (int)std::lround(std::sqrt((double)adapted.rows()));
    if (g * g != adapted.rows())
        throw std::invalid_argument("layer_map: token count " + std::to_string(adapted.rows()) +
                                    " is not a perfect square");
    auto tokens = l2_normalize_rows(adapted);
    auto rows = l2_normalize_rows(emb);
    auto sims = matmul(tokens, transpose(rows));        // [G x 2] cosine similarities
    auto probs = softmax_rows(sims);                    // exp-normalized two-way softmax
    auto abnormal = reshape(slice_cols(probs, 1, 2), {g, g});
    return bilinear_upsample(abnormal, H, W);
}

// alpha weights the query branch; each branch is the sum of its per-stage
// maps. An absent branch contributes zero.
template <typename S>
TensorT<S> fuse_maps(const std::vector<TensorT<S>>& maps_query,
                     const std::vector<TensorT<S>>& maps_text, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("fuse: alpha outside [0,1]");
    if (maps_query.empty() && maps_text.empty())
        throw std::invalid_argument("fuse: no maps");
    auto branch_sum = [](const std::vector<TensorT<S>>& maps) {
        auto acc = maps[0];
        for (size_t i = 1; i < maps.size(); ++i) {
            if (maps[i].shape() != acc.shape()) throw std::invalid_argument("fuse: map shape mismatch");
            acc = add(acc, maps[i]);
        }
        return acc;
    };
    if (maps_query.empty()) return scale(branch_sum(maps_text), 1.0 - alpha);
    if (maps_text.empty()) return scale(branch_sum(maps_query), alpha);
    auto q = branch_sum(maps_query);
    auto t = branch_sum(maps_text);
    if (q.shape() != t.shape()) throw std::invalid_argument("fuse: branch shape mismatch");
    return add(scale(q, alpha), scale(t, 1.0 - alpha));
}

template <typename S>
double anomaly_score(const TensorT<S>& fused) {
    double best = (double)fused.data()[0];
    for (long i = 1; i < fused.size(); ++i) best = std::max(best, (double)fused.data()[i]);
    return best;
}

// Min-max normalization for human-readable map export; scoring never uses it.
template <typename S>
std::vector<float> minmax_normalize(const TensorT<S>& map) {
    double lo = (double)map.data()[0], hi = lo;
    for (long i = 1; i < map.size(); ++i) {
        lo = std::min(lo, (double)map.data()[i]);
        hi = std::max(hi, (double)map.data()[i]);
    }
    const double span = hi - lo;
    std::vector<float> out((size_t)map.size());
    for (long i = 0; i < map.size(); ++i)
        out[(size_t)i] = span > 0 ? (float)(((double)map.data()[i] - lo) / span) : 0.0f;
    return out;
}

}  // namespace iqe
