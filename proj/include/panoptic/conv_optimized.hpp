#pragma once

#include <cstdint>
#include <vector>

#include "panoptic/conv.hpp"
#include "panoptic/parallel.hpp"
#include "panoptic/tensor.hpp"

namespace pk {

/// Optimized panoptic-aware convolution.
///
/// Strategy: masked im2col per output pixel into a contiguous column, then a
/// rank-1 accumulation with the weights transposed to (c_in*k*k, c_out)
/// layout. The inner loop updates all output channels for one column entry,
/// which keeps every accumulator independent and lets the compiler vectorize
/// across channels without reassociating any per-channel sum. Per-channel
/// accumulation therefore visits terms in the same (c, u, v) order as the
/// reference kernel. Rows are partitioned across threads; partitioning does
/// not affect results.
template <typename T>
Tensor<T> panoptic_conv_forward_optimized(const Tensor<T>& x, const PanopticMap& p, const ConvParams<T>& params,
                                          int threads = 0) {
    detail::check_conv_input(x, params, "panoptic_conv_forward_optimized");
    detail::check_map_matches(x, p, "panoptic_conv_forward_optimized");
    const int k = params.kernel();
    const int r = k / 2;
    const int c_in = x.c();
    const int c_out = params.out_channels();
    const int H = x.h();
    const int W = x.w();
    const std::size_t col_len = std::size_t(c_in) * k * k;

    // weights transposed to (c_in*k*k, c_out): wt[idx * c_out + oc]
    std::vector<T> wt(col_len * c_out);
    for (int oc = 0; oc < c_out; ++oc) {
        const T* wrow = &params.weights(oc, 0, 0, 0);
        for (std::size_t idx = 0; idx < col_len; ++idx) wt[idx * c_out + oc] = wrow[idx];
    }

    Tensor<T> out(x.n(), c_out, H, W);
    const int nthreads = resolve_threads(threads);

    for (int n = 0; n < x.n(); ++n) {
        parallel_for(H, nthreads, [&, n](int row_begin, int row_end) {
            std::vector<T> col(col_len);
            std::vector<T> acc(c_out);
            std::vector<T> mvals(std::size_t(k) * k);
            for (int i = row_begin; i < row_end; ++i)
                for (int j = 0; j < W; ++j) {
                    const std::uint32_t center_id = p.at(i, j);
                    int mask_sum = 0;
                    for (int u = 0; u < k; ++u)
                        for (int v = 0; v < k; ++v) {
                            const bool valid = p.at_padded(i + u - r, j + v - r) == center_id;
                            mask_sum += valid ? 1 : 0;
                            mvals[std::size_t(u) * k + v] = valid ? T(1) : T(0);
                        }
                    // pack channel-major so each (c, u) strip reads x contiguously
                    for (int c = 0; c < c_in; ++c)
                        for (int u = 0; u < k; ++u) {
                            const int ii = i + u - r;
                            T* dst = &col[(std::size_t(c) * k + u) * k];
                            if (ii < 0 || ii >= H) {
                                for (int v = 0; v < k; ++v) dst[v] = T(0);
                                continue;
                            }
                            const T* src = &x(n, c, ii, 0);
                            const T* mrow = &mvals[std::size_t(u) * k];
                            for (int v = 0; v < k; ++v) {
                                const int jj = j + v - r;
                                dst[v] = (jj >= 0 && jj < W) ? src[jj] * mrow[v] : T(0);
                            }
                        }
                    const T ratio = mask_sum > 0 ? T(k * k) / T(mask_sum) : T(0);
                    for (int oc = 0; oc < c_out; ++oc) acc[oc] = T(0);
                    for (std::size_t idx = 0; idx < col_len; ++idx) {
                        const T cv = col[idx];
                        if (cv == T(0)) continue;  // adding an exact zero term changes nothing
                        const T* wcol = &wt[idx * c_out];
                        for (int oc = 0; oc < c_out; ++oc) acc[oc] += wcol[oc] * cv;
                    }
                    for (int oc = 0; oc < c_out; ++oc) out(n, oc, i, j) = acc[oc] * ratio + params.bias[oc];
                }
        });
    }
    return out;
}

}  // namespace pk
