#pragma once

// Test-only helpers: independent brute-force oracles for the kernels, a
// finite-difference gradient checker, and random fixture generators. The
// oracles deliberately re-derive each definition per output element and
// never call the kernels under test.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "panoptic/conv.hpp"
#include "panoptic/rng.hpp"
#include "panoptic/tensor.hpp"
#include "panoptic/upsample.hpp"

namespace testutil {

using pk::ConvParams;
using pk::PanopticMap;
using pk::SemanticMap;
using pk::Tensor;

inline double rel_err(double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

template <typename T>
double max_rel_err(const Tensor<T>& a, const Tensor<T>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, rel_err(double(a.data()[i]), double(b.data()[i])));
    return worst;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(double(a.data()[i]) - double(b.data()[i])));
    return worst;
}

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a.data()[i] != b.data()[i]) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Fixture generators

inline Tensor<double> random_tensor(int n, int c, int h, int w, std::uint64_t seed, double lo = -1.0,
                                    double hi = 1.0) {
    pk::CounterRng rng(seed);
    Tensor<double> x(n, c, h, w);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.next_range(lo, hi);
    return x;
}

inline PanopticMap random_map(int h, int w, int num_ids, std::uint64_t seed) {
    pk::CounterRng rng(seed);
    PanopticMap map(h, w);
    for (auto& id : map.ids.v) id = PanopticMap::encode_id(1 + rng.next_below(std::uint32_t(num_ids)), 0);
    return map;
}

/// Blocky map with roughly `instances` rectangular regions; closer to real
/// panoptic layouts than iid noise.
inline PanopticMap blocky_map(int h, int w, int instances, std::uint64_t seed) {
    pk::CounterRng rng(seed);
    PanopticMap map(h, w);
    for (auto& id : map.ids.v) id = PanopticMap::encode_id(1, 0);
    for (int r = 0; r < instances; ++r) {
        const int bi = int(rng.next_below(std::uint32_t(h)));
        const int bj = int(rng.next_below(std::uint32_t(w)));
        const int bh = 1 + int(rng.next_below(std::uint32_t(std::max(1, h / 3))));
        const int bw = 1 + int(rng.next_below(std::uint32_t(std::max(1, w / 3))));
        const std::uint32_t id = PanopticMap::encode_id(2 + rng.next_below(8), rng.next_below(32));
        for (int i = bi; i < std::min(h, bi + bh); ++i)
            for (int j = bj; j < std::min(w, bj + bw); ++j) map.at(i, j) = id;
    }
    return map;
}

inline SemanticMap random_semantic(int h, int w, int num_classes, std::uint64_t seed) {
    pk::CounterRng rng(seed);
    SemanticMap map(h, w);
    for (auto& cls : map.classes.v) cls = std::int32_t(rng.next_below(std::uint32_t(num_classes)));
    return map;
}

/// Semantic map consistent with a panoptic map (class = id / 1000).
inline SemanticMap semantic_from_panoptic(const PanopticMap& p) {
    SemanticMap s(p.height(), p.width());
    for (int i = 0; i < p.height(); ++i)
        for (int j = 0; j < p.width(); ++j) s.at(i, j) = std::int32_t(p.at(i, j) / 1000u);
    return s;
}

inline ConvParams<double> random_conv(int c_out, int c_in, int k, std::uint64_t seed, double stddev = 0.5) {
    pk::CounterRng rng(seed);
    ConvParams<double> params(c_out, c_in, k);
    for (std::size_t i = 0; i < params.weights.size(); ++i) params.weights.data()[i] = rng.next_normal(stddev);
    for (auto& b : params.bias) b = rng.next_normal(stddev);
    return params;
}

inline PanopticMap upsample_map(const PanopticMap& m, int factor) {
    PanopticMap out(m.height() * factor, m.width() * factor);
    for (int i = 0; i < out.height(); ++i)
        for (int j = 0; j < out.width(); ++j) out.at(i, j) = m.at(i / factor, j / factor);
    return out;
}

// ---------------------------------------------------------------------------
// Brute-force oracles

/// Direct per-output-pixel evaluation of the renormalized masked
/// convolution: rebuild the window mask from the map, sum the masked
/// products, rescale by k^2 / valid-count, add bias.
inline Tensor<double> oracle_panoptic_conv(const Tensor<double>& x, const PanopticMap& p,
                                           const ConvParams<double>& params) {
    const int k = params.kernel();
    const int r = k / 2;
    Tensor<double> out(x.n(), params.out_channels(), x.h(), x.w());
    for (int n = 0; n < x.n(); ++n)
        for (int oc = 0; oc < params.out_channels(); ++oc)
            for (int i = 0; i < x.h(); ++i)
                for (int j = 0; j < x.w(); ++j) {
                    double sum = 0.0;
                    int valid = 0;
                    for (int u = -r; u <= r; ++u)
                        for (int v = -r; v <= r; ++v) {
                            const int ii = i + u;
                            const int jj = j + v;
                            if (ii < 0 || ii >= x.h() || jj < 0 || jj >= x.w()) continue;
                            if (p.at(ii, jj) != p.at(i, j)) continue;
                            ++valid;
                            for (int c = 0; c < x.c(); ++c)
                                sum += params.weights(oc, c, u + r, v + r) * x(n, c, ii, jj);
                        }
                    out(n, oc, i, j) = valid > 0 ? sum * (double(k * k) / double(valid)) + params.bias[oc] : 0.0;
                }
    return out;
}

/// Textbook direct-sum zero-padded convolution.
inline Tensor<double> oracle_standard_conv(const Tensor<double>& x, const ConvParams<double>& params) {
    const int k = params.kernel();
    const int r = k / 2;
    Tensor<double> out(x.n(), params.out_channels(), x.h(), x.w());
    for (int n = 0; n < x.n(); ++n)
        for (int oc = 0; oc < params.out_channels(); ++oc)
            for (int i = 0; i < x.h(); ++i)
                for (int j = 0; j < x.w(); ++j) {
                    double sum = 0.0;
                    for (int c = 0; c < x.c(); ++c)
                        for (int u = -r; u <= r; ++u)
                            for (int v = -r; v <= r; ++v) {
                                const int ii = i + u;
                                const int jj = j + v;
                                if (ii < 0 || ii >= x.h() || jj < 0 || jj >= x.w()) continue;
                                sum += params.weights(oc, c, u + r, v + r) * x(n, c, ii, jj);
                            }
                    out(n, oc, i, j) = sum + params.bias[oc];
                }
    return out;
}

struct OracleAlign {
    Tensor<double> features;
    pk::Plane<double> correction;
    pk::Plane<std::int32_t> src_row;  // -1 for hole
    pk::Plane<std::int32_t> src_col;
};

/// Single-pass per-pixel alignment oracle: scan the four candidates in
/// order for each output pixel independently; first id match wins, no match
/// leaves a hole.
inline OracleAlign oracle_align(const Tensor<double>& f_d, const PanopticMap& p_d, const PanopticMap& p_u) {
    const int H = p_d.height();
    const int W = p_d.width();
    OracleAlign result{Tensor<double>(f_d.n(), f_d.c(), 2 * H, 2 * W, 0.0), pk::Plane<double>(2 * H, 2 * W, 0.0),
                       pk::Plane<std::int32_t>(2 * H, 2 * W, -1), pk::Plane<std::int32_t>(2 * H, 2 * W, -1)};
    for (int i = 0; i < 2 * H; ++i)
        for (int j = 0; j < 2 * W; ++j) {
            const int cand[4][2] = {{i / 2, j / 2}, {i / 2 + 1, j / 2}, {i / 2, j / 2 + 1}, {i / 2 + 1, j / 2 + 1}};
            for (const auto& c : cand) {
                if (c[0] >= H || c[1] >= W) continue;
                if (p_d.at(c[0], c[1]) != p_u.at(i, j)) continue;
                result.src_row.at(i, j) = c[0];
                result.src_col.at(i, j) = c[1];
                result.correction.at(i, j) = 1.0;
                for (int n = 0; n < f_d.n(); ++n)
                    for (int ch = 0; ch < f_d.c(); ++ch) result.features(n, ch, i, j) = f_d(n, ch, c[0], c[1]);
                break;
            }
        }
    return result;
}

/// Full composite-layer oracle: per output pixel take the first matching
/// candidate's feature, otherwise the hole value encoded from the semantic
/// map (computed with the oracle convolutions above).
inline Tensor<double> oracle_upsample(const Tensor<double>& f_d, const PanopticMap& p_full,
                                      const SemanticMap& s_full, const pk::HoleFillParams<double>& params) {
    const int factor = p_full.height() / (2 * f_d.h());
    const PanopticMap p_u = pk::nearest_downsample(p_full, factor);
    const PanopticMap p_d = pk::nearest_downsample(p_u, 2);
    const SemanticMap s_u = pk::nearest_downsample(s_full, factor);
    const Tensor<double> onehot = pk::one_hot<double>(s_u, params.encoder.in_channels());
    const Tensor<double> hole =
        oracle_standard_conv(oracle_panoptic_conv(onehot, p_u, params.encoder), params.reducer);
    const OracleAlign aligned = oracle_align(f_d, p_d, p_u);
    Tensor<double> out = aligned.features;
    for (int i = 0; i < p_u.height(); ++i)
        for (int j = 0; j < p_u.width(); ++j) {
            if (aligned.src_row.at(i, j) >= 0) continue;
            for (int n = 0; n < out.n(); ++n)
                for (int c = 0; c < out.c(); ++c) out(n, c, i, j) = hole(n, c, i, j);
        }
    return out;
}

// ---------------------------------------------------------------------------
// Finite differences (independent of the library's gradcheck helpers)

inline double fd_max_rel_err(double* values, std::size_t count, const double* analytic,
                             const std::function<double()>& loss, double step = 1e-5) {
    double worst = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double saved = values[i];
        values[i] = saved + step;
        const double up = loss();
        values[i] = saved - step;
        const double down = loss();
        values[i] = saved;
        worst = std::max(worst, rel_err((up - down) / (2.0 * step), analytic[i]));
    }
    return worst;
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += double(a.data()[i]) * double(b.data()[i]);
    return sum;
}

}  // namespace testutil
