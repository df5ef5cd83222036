#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "panoptic/conv.hpp"
#include "panoptic/tensor.hpp"

namespace pk {

/// Partially filled 2x-upsampled features plus the mask of pixels that found
/// a matching source. correction[i,j] == 0 implies features[.,.,i,j] == 0.
template <typename T>
struct AlignResult {
    Tensor<T> features;
    BinaryMask<T> correction;
};

/// Source pixel chosen for each upsampled position, or (-1,-1) for a hole.
struct AlignRouting {
    Plane<std::int32_t> src_row;
    Plane<std::int32_t> src_col;
};

namespace detail {

inline void check_upsample_maps(const PanopticMap& p_d, const PanopticMap& p_u, const char* what) {
    if (p_u.height() != 2 * p_d.height() || p_u.width() != 2 * p_d.width())
        throw std::invalid_argument(std::string(what) + ": expected 2x map pair, got " +
                                    std::to_string(p_d.height()) + "x" + std::to_string(p_d.width()) + " and " +
                                    std::to_string(p_u.height()) + "x" + std::to_string(p_u.width()));
}

}  // namespace detail

/// Resolve each upsampled pixel to the first of its four candidate source
/// pixels whose low-resolution id matches, scanning candidates in the order
/// (i/2, j/2), (i/2+1, j/2), (i/2, j/2+1), (i/2+1, j/2+1). Candidates beyond
/// the bottom/right edge are skipped. Pixels with no match are holes.
/// Only +1 neighbors are ever consulted, so a matching id up or to the left
/// does not prevent a hole.
inline AlignRouting compute_align_routing(const PanopticMap& p_d, const PanopticMap& p_u) {
    detail::check_upsample_maps(p_d, p_u, "compute_align_routing");
    const int H = p_d.height();
    const int W = p_d.width();
    AlignRouting routing{Plane<std::int32_t>(2 * H, 2 * W, -1), Plane<std::int32_t>(2 * H, 2 * W, -1)};
    // Four full passes in candidate order; a pixel is claimed by the earliest
    // matching pass and later passes leave it untouched.
    const int offsets[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
    for (const auto& off : offsets)
        for (int i = 0; i < 2 * H; ++i)
            for (int j = 0; j < 2 * W; ++j) {
                if (routing.src_row.at(i, j) >= 0) continue;
                const int si = i / 2 + off[0];
                const int sj = j / 2 + off[1];
                if (si >= H || sj >= W) continue;
                if (p_d.at(si, sj) == p_u.at(i, j)) {
                    routing.src_row.at(i, j) = si;
                    routing.src_col.at(i, j) = sj;
                }
            }
    return routing;
}

/// Upsampling alignment correction: copy low-resolution feature vectors to
/// the 2x grid wherever a candidate source shares the pixel's panoptic id.
/// Unmatched pixels stay zero with correction 0; with a constant map this
/// degenerates to nearest-neighbor upsampling.
template <typename T>
AlignResult<T> align_upsample(const Tensor<T>& f_d, const PanopticMap& p_d, const PanopticMap& p_u) {
    detail::check_upsample_maps(p_d, p_u, "align_upsample");
    if (f_d.h() != p_d.height() || f_d.w() != p_d.width())
        throw std::invalid_argument("align_upsample: features " + f_d.shape_string() + " vs map " +
                                    std::to_string(p_d.height()) + "x" + std::to_string(p_d.width()));
    const AlignRouting routing = compute_align_routing(p_d, p_u);
    AlignResult<T> result{Tensor<T>(f_d.n(), f_d.c(), 2 * f_d.h(), 2 * f_d.w(), T(0)),
                          BinaryMask<T>(2 * f_d.h(), 2 * f_d.w(), T(0))};
    for (int i = 0; i < result.correction.h; ++i)
        for (int j = 0; j < result.correction.w; ++j) {
            const int si = routing.src_row.at(i, j);
            if (si < 0) continue;
            const int sj = routing.src_col.at(i, j);
            result.correction.at(i, j) = T(1);
            for (int n = 0; n < f_d.n(); ++n)
                for (int c = 0; c < f_d.c(); ++c) result.features(n, c, i, j) = f_d(n, c, si, sj);
        }
    return result;
}

/// Transpose of the copy routing: every routed destination pixel adds its
/// gradient back onto its source. Routing is recomputed from the maps, so
/// the result is a pure function of (grad_out, p_d, p_u). Hole pixels carry
/// no gradient toward f_d; their gradient belongs to the hole-filling
/// parameters (see panoptic_upsample_backward).
template <typename T>
Tensor<T> align_upsample_backward(const Tensor<T>& grad_out, const PanopticMap& p_d, const PanopticMap& p_u) {
    detail::check_upsample_maps(p_d, p_u, "align_upsample_backward");
    if (grad_out.h() != p_u.height() || grad_out.w() != p_u.width())
        throw std::invalid_argument("align_upsample_backward: grad " + grad_out.shape_string() +
                                    " inconsistent with routing maps " + std::to_string(p_u.height()) + "x" +
                                    std::to_string(p_u.width()));
    const AlignRouting routing = compute_align_routing(p_d, p_u);
    Tensor<T> grad_f(grad_out.n(), grad_out.c(), p_d.height(), p_d.width(), T(0));
    for (int i = 0; i < p_u.height(); ++i)
        for (int j = 0; j < p_u.width(); ++j) {
            const int si = routing.src_row.at(i, j);
            if (si < 0) continue;
            const int sj = routing.src_col.at(i, j);
            for (int n = 0; n < grad_out.n(); ++n)
                for (int c = 0; c < grad_out.c(); ++c) grad_f(n, c, si, sj) += grad_out(n, c, i, j);
        }
    return grad_f;
}

/// Hole-filling parameters: the shared first-layer semantic encoder
/// (K -> C, panoptic-aware) and the per-stage 1x1 reducer (C -> c).
template <typename T>
struct HoleFillParams {
    ConvParams<T> encoder;
    ConvParams<T> reducer;

    HoleFillParams(ConvParams<T> enc, ConvParams<T> red) : encoder(std::move(enc)), reducer(std::move(red)) {
        if (reducer.kernel() != 1) throw std::invalid_argument("HoleFillParams: reducer kernel size must be 1");
        if (reducer.in_channels() != encoder.out_channels())
            throw std::invalid_argument("HoleFillParams: reducer input channels must match encoder output");
    }
};

/// Features encoded from the semantic map for hole filling: the panoptic-
/// aware encoder applied to the one-hot semantic map, then the 1x1 reducer.
template <typename T>
Tensor<T> hole_fill_features(const SemanticMap& s_u, const PanopticMap& p_u, const HoleFillParams<T>& params) {
    const Tensor<T> onehot = one_hot<T>(s_u, params.encoder.in_channels());
    const Tensor<T> encoded = panoptic_conv_forward(onehot, p_u, params.encoder);
    return standard_conv_forward(encoded, params.reducer);
}

/// Complete the aligned feature map: output = aligned + (1 - correction) *
/// hole features. Pixels that found a source pass through bit-unchanged.
template <typename T>
Tensor<T> hole_fill(const AlignResult<T>& aligned, const SemanticMap& s_u, const PanopticMap& p_u,
                    const HoleFillParams<T>& params, int num_classes) {
    if (params.encoder.in_channels() != num_classes)
        throw std::invalid_argument("hole_fill: encoder expects " + std::to_string(params.encoder.in_channels()) +
                                    " classes, got " + std::to_string(num_classes));
    if (aligned.features.h() != p_u.height() || aligned.features.w() != p_u.width() ||
        s_u.height() != p_u.height() || s_u.width() != p_u.width())
        throw std::invalid_argument("hole_fill: aligned/semantic/panoptic spatial dimensions disagree");
    if (params.reducer.out_channels() != aligned.features.c())
        throw std::invalid_argument("hole_fill: reducer emits " + std::to_string(params.reducer.out_channels()) +
                                    " channels, aligned features have " + std::to_string(aligned.features.c()));
    const Tensor<T> f_hole = hole_fill_features(s_u, p_u, params);
    Tensor<T> out = aligned.features;
    for (int i = 0; i < p_u.height(); ++i)
        for (int j = 0; j < p_u.width(); ++j) {
            if (aligned.correction.at(i, j) != T(0)) continue;
            for (int n = 0; n < out.n(); ++n)
                for (int c = 0; c < out.c(); ++c) out(n, c, i, j) += f_hole(n, c, i, j);
        }
    return out;
}

/// Panoptic-aware 2x upsampling: alignment correction followed by hole
/// filling, with the working maps derived from the full-resolution maps by
/// nearest-neighbor downsampling.
template <typename T>
Tensor<T> panoptic_upsample(const Tensor<T>& f_d, const PanopticMap& p_full, const SemanticMap& s_full, int target_h,
                            int target_w, const HoleFillParams<T>& params) {
    if (target_h != 2 * f_d.h() || target_w != 2 * f_d.w())
        throw std::invalid_argument("panoptic_upsample: target " + std::to_string(target_h) + "x" +
                                    std::to_string(target_w) + " is not 2x the " + f_d.shape_string() + " input");
    if (p_full.height() % target_h != 0 || p_full.width() % target_w != 0 ||
        p_full.height() / target_h != p_full.width() / target_w)
        throw std::invalid_argument("panoptic_upsample: full map " + std::to_string(p_full.height()) + "x" +
                                    std::to_string(p_full.width()) + " not divisible down to " +
                                    std::to_string(target_h) + "x" + std::to_string(target_w));
    if (s_full.height() != p_full.height() || s_full.width() != p_full.width())
        throw std::invalid_argument("panoptic_upsample: semantic and panoptic map dimensions disagree");
    const int factor = p_full.height() / target_h;
    const PanopticMap p_u = nearest_downsample(p_full, factor);
    const PanopticMap p_d = nearest_downsample(p_u, 2);
    const SemanticMap s_u = nearest_downsample(s_full, factor);
    const AlignResult<T> aligned = align_upsample(f_d, p_d, p_u);
    return hole_fill(aligned, s_u, p_u, params, params.encoder.in_channels());
}

template <typename T>
struct UpsampleGrads {
    Tensor<T> f_d;
    ConvGrads<T> encoder;
    ConvGrads<T> reducer;
};

/// Backward pass of the composite layer. Routed pixels scatter-add onto f_d;
/// hole pixels route their gradient through the reducer and the panoptic-
/// aware encoder.
template <typename T>
UpsampleGrads<T> panoptic_upsample_backward(const Tensor<T>& grad_out, const Tensor<T>& f_d,
                                            const PanopticMap& p_full, const SemanticMap& s_full, int target_h,
                                            int target_w, const HoleFillParams<T>& params) {
    if (grad_out.h() != target_h || grad_out.w() != target_w)
        throw std::invalid_argument("panoptic_upsample_backward: grad " + grad_out.shape_string() +
                                    " does not match target scale");
    const int factor = p_full.height() / target_h;
    const PanopticMap p_u = nearest_downsample(p_full, factor);
    const PanopticMap p_d = nearest_downsample(p_u, 2);
    const SemanticMap s_u = nearest_downsample(s_full, factor);

    UpsampleGrads<T> grads{align_upsample_backward(grad_out, p_d, p_u),
                           ConvGrads<T>{Tensor<T>(1, 1, 1, 1), Tensor<T>(1, 1, 1, 1), {}},
                           ConvGrads<T>{Tensor<T>(1, 1, 1, 1), Tensor<T>(1, 1, 1, 1), {}}};

    // Hole branch: grad_f_hole = (1 - correction) .* grad_out, then back
    // through reducer and encoder.
    const AlignRouting routing = compute_align_routing(p_d, p_u);
    Tensor<T> grad_hole = grad_out;
    for (int i = 0; i < target_h; ++i)
        for (int j = 0; j < target_w; ++j) {
            if (routing.src_row.at(i, j) < 0) continue;
            for (int n = 0; n < grad_hole.n(); ++n)
                for (int c = 0; c < grad_hole.c(); ++c) grad_hole(n, c, i, j) = T(0);
        }
    const Tensor<T> onehot = one_hot<T>(s_u, params.encoder.in_channels());
    const Tensor<T> encoded = panoptic_conv_forward(onehot, p_u, params.encoder);
    grads.reducer = standard_conv_backward(grad_hole, encoded, params.reducer);
    grads.encoder = panoptic_conv_backward(grads.reducer.input, onehot, p_u, params.encoder);
    return grads;
}

struct StageStats {
    int stage = 0;
    double pct_misaligned = 0.0;
    double pct_new = 0.0;
    std::int64_t n_misaligned = 0;
    std::int64_t n_new = 0;
    std::int64_t n_total = 0;
};

/// Measure, per upsampling stage, how many pixels plain nearest-neighbor
/// upsampling would map incorrectly. A pixel counts as misaligned when its
/// id differs from the top-left source but exists somewhere at the coarse
/// scale, and as new when its id is absent from the coarse scale entirely.
/// Both percentages are taken over all pixels at the upsampled scale; raw
/// counts are returned so other conventions can be recomputed.
///
/// Stage s compares scale full/(base_scale >> s) against its 2x refinement,
/// so base_scale must be divisible by 2^num_stages and the map by base_scale.
inline std::vector<StageStats> misalignment_stats(const PanopticMap& p_full, int num_stages, int base_scale) {
    if (num_stages < 1) throw std::invalid_argument("misalignment_stats: need at least one stage");
    if (base_scale < (1 << num_stages) || (base_scale % (1 << num_stages)) != 0)
        throw std::invalid_argument("misalignment_stats: base scale " + std::to_string(base_scale) +
                                    " not divisible by 2^" + std::to_string(num_stages));
    detail::check_divisible(p_full.height(), p_full.width(), base_scale, "misalignment_stats");

    std::vector<StageStats> stats;
    stats.reserve(num_stages);
    for (int s = 0; s < num_stages; ++s) {
        const int factor_d = base_scale >> s;
        const PanopticMap p_d = nearest_downsample(p_full, factor_d);
        const PanopticMap p_u = nearest_downsample(p_full, factor_d / 2);
        std::unordered_set<std::uint32_t> coarse_ids(p_d.ids.v.begin(), p_d.ids.v.end());

        StageStats row;
        row.stage = s;
        row.n_total = std::int64_t(p_u.height()) * p_u.width();
        for (int i = 0; i < p_u.height(); ++i)
            for (int j = 0; j < p_u.width(); ++j) {
                const std::uint32_t id = p_u.at(i, j);
                if (id == p_d.at(i / 2, j / 2)) continue;
                if (coarse_ids.count(id))
                    ++row.n_misaligned;
                else
                    ++row.n_new;
            }
        row.pct_misaligned = 100.0 * double(row.n_misaligned) / double(row.n_total);
        row.pct_new = 100.0 * double(row.n_new) / double(row.n_total);
        stats.push_back(row);
    }
    return stats;
}

}  // namespace pk
