#pragma once

#include <cassert>
#include <stdexcept>
#include <string>
#include <vector>

#include "panoptic/tensor.hpp"

namespace pk {

/// Convolution weights (c_out, c_in, k, k) plus per-output-channel bias.
/// Kernels are square, odd-sized, stride 1, zero padding (k-1)/2 so spatial
/// dimensions are preserved.
template <typename T>
struct ConvParams {
    Tensor<T> weights;
    std::vector<T> bias;

    ConvParams(int out_channels, int in_channels, int kernel_size)
        : weights(make_weights(out_channels, in_channels, kernel_size)), bias(out_channels, T(0)) {}

    int out_channels() const { return weights.n(); }
    int in_channels() const { return weights.c(); }
    int kernel() const { return weights.h(); }

  private:
    static Tensor<T> make_weights(int out_channels, int in_channels, int kernel_size) {
        if (kernel_size < 1 || kernel_size % 2 == 0)
            throw std::invalid_argument("ConvParams: kernel size must be odd and >= 1, got " +
                                        std::to_string(kernel_size));
        return Tensor<T>(out_channels, in_channels, kernel_size, kernel_size);
    }
};

template <typename T>
struct ConvGrads {
    Tensor<T> input;
    Tensor<T> weights;
    std::vector<T> bias;
};

/// k x k validity mask for the window centered at (ci, cj): 1 where the
/// window pixel's panoptic id equals the center id, 0 elsewhere. Positions
/// outside the map read as the pad id and never match, so the mask is 0
/// there. The center itself always yields 1.
template <typename T>
BinaryMask<T> window_mask(const PanopticMap& p, int ci, int cj, int k) {
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("window_mask: kernel size must be odd and >= 1");
    if (ci < 0 || ci >= p.height() || cj < 0 || cj >= p.width())
        throw std::out_of_range("window_mask: center (" + std::to_string(ci) + "," + std::to_string(cj) +
                                ") outside " + std::to_string(p.height()) + "x" + std::to_string(p.width()) + " map");
    const int r = k / 2;
    const std::uint32_t center_id = p.at(ci, cj);
    BinaryMask<T> m(k, k, T(0));
    for (int u = 0; u < k; ++u)
        for (int v = 0; v < k; ++v)
            if (p.at_padded(ci + u - r, cj + v - r) == center_id) m.at(u, v) = T(1);
    return m;
}

namespace detail {

template <typename T>
void check_conv_input(const Tensor<T>& x, const ConvParams<T>& params, const char* what) {
    if (x.c() != params.in_channels())
        throw std::invalid_argument(std::string(what) + ": input has " + std::to_string(x.c()) +
                                    " channels, weights expect " + std::to_string(params.in_channels()));
}

template <typename T>
void check_map_matches(const Tensor<T>& x, const PanopticMap& p, const char* what) {
    if (x.h() != p.height() || x.w() != p.width())
        throw std::invalid_argument(std::string(what) + ": feature " + x.shape_string() + " vs map " +
                                    std::to_string(p.height()) + "x" + std::to_string(p.width()));
}

}  // namespace detail

/// Plain stride-1 zero-padded convolution. Degeneration baseline for the
/// panoptic kernel and building block for modules driven by semantic maps
/// only.
template <typename T>
Tensor<T> standard_conv_forward(const Tensor<T>& x, const ConvParams<T>& params) {
    detail::check_conv_input(x, params, "standard_conv_forward");
    const int k = params.kernel();
    const int r = k / 2;
    Tensor<T> out(x.n(), params.out_channels(), x.h(), x.w());
    for (int n = 0; n < x.n(); ++n)
        for (int oc = 0; oc < params.out_channels(); ++oc)
            for (int i = 0; i < x.h(); ++i)
                for (int j = 0; j < x.w(); ++j) {
                    T acc = T(0);
                    for (int c = 0; c < x.c(); ++c)
                        for (int u = 0; u < k; ++u) {
                            const int ii = i + u - r;
                            if (ii < 0 || ii >= x.h()) continue;
                            for (int v = 0; v < k; ++v) {
                                const int jj = j + v - r;
                                if (jj < 0 || jj >= x.w()) continue;
                                acc += params.weights(oc, c, u, v) * x(n, c, ii, jj);
                            }
                        }
                    out(n, oc, i, j) = acc + params.bias[oc];
                }
    return out;
}

template <typename T>
ConvGrads<T> standard_conv_backward(const Tensor<T>& grad_out, const Tensor<T>& x, const ConvParams<T>& params) {
    detail::check_conv_input(x, params, "standard_conv_backward");
    if (grad_out.n() != x.n() || grad_out.c() != params.out_channels() || grad_out.h() != x.h() ||
        grad_out.w() != x.w())
        throw std::invalid_argument("standard_conv_backward: grad shape " + grad_out.shape_string() +
                                    " inconsistent with forward");
    const int k = params.kernel();
    const int r = k / 2;
    ConvGrads<T> g{Tensor<T>(x.n(), x.c(), x.h(), x.w(), T(0)),
                   Tensor<T>(params.out_channels(), params.in_channels(), k, k, T(0)),
                   std::vector<T>(params.out_channels(), T(0))};
    for (int n = 0; n < x.n(); ++n)
        for (int oc = 0; oc < params.out_channels(); ++oc)
            for (int i = 0; i < x.h(); ++i)
                for (int j = 0; j < x.w(); ++j) {
                    const T go = grad_out(n, oc, i, j);
                    g.bias[oc] += go;
                    for (int c = 0; c < x.c(); ++c)
                        for (int u = 0; u < k; ++u) {
                            const int ii = i + u - r;
                            if (ii < 0 || ii >= x.h()) continue;
                            for (int v = 0; v < k; ++v) {
                                const int jj = j + v - r;
                                if (jj < 0 || jj >= x.w()) continue;
                                g.weights(oc, c, u, v) += go * x(n, c, ii, jj);
                                g.input(n, c, ii, jj) += go * params.weights(oc, c, u, v);
                            }
                        }
                }
    return g;
}

/// Panoptic-aware partial convolution.
///
/// At each output location the window mask selects the input pixels sharing
/// the center's panoptic id; the masked sum is rescaled by k^2 / sum(mask)
/// to compensate for the varying number of contributing pixels, then the
/// bias is added. One spatial mask is shared across all input channels.
/// Borders behave like additional masked-out pixels (pad id never matches),
/// so the same rescaling covers them. The center pixel always matches
/// itself, hence sum(mask) >= 1 and the output is defined everywhere.
template <typename T>
Tensor<T> panoptic_conv_forward(const Tensor<T>& x, const PanopticMap& p, const ConvParams<T>& params) {
    detail::check_conv_input(x, params, "panoptic_conv_forward");
    detail::check_map_matches(x, p, "panoptic_conv_forward");
    const int k = params.kernel();
    const int r = k / 2;
    const int c_in = x.c();
    const int c_out = params.out_channels();
    Tensor<T> out(x.n(), c_out, x.h(), x.w());
    std::vector<T> window(std::size_t(c_in) * k * k);

    for (int n = 0; n < x.n(); ++n)
        for (int i = 0; i < x.h(); ++i)
            for (int j = 0; j < x.w(); ++j) {
                const std::uint32_t center_id = p.at(i, j);
                int mask_sum = 0;
                // Gather x .* mask for this window once; all output channels reuse it.
                for (int u = 0; u < k; ++u)
                    for (int v = 0; v < k; ++v) {
                        const int ii = i + u - r;
                        const int jj = j + v - r;
                        const bool valid = p.at_padded(ii, jj) == center_id;
                        mask_sum += valid ? 1 : 0;
                        const T mv = valid ? T(1) : T(0);
                        const bool inb = ii >= 0 && ii < x.h() && jj >= 0 && jj < x.w();
                        for (int c = 0; c < c_in; ++c) {
                            const T xv = inb ? x(n, c, ii, jj) : T(0);
                            window[(std::size_t(c) * k + u) * k + v] = xv * mv;
                        }
                    }
                assert(mask_sum >= 1);  // center always matches itself
                const T ratio = mask_sum > 0 ? T(k * k) / T(mask_sum) : T(0);
                for (int oc = 0; oc < c_out; ++oc) {
                    T acc = T(0);
                    if (mask_sum > 0) {
                        const T* wrow = &params.weights(oc, 0, 0, 0);
                        for (std::size_t idx = 0; idx < window.size(); ++idx) acc += wrow[idx] * window[idx];
                        out(n, oc, i, j) = acc * ratio + params.bias[oc];
                    } else {
                        out(n, oc, i, j) = T(0);  // unreachable for in-bounds centers
                    }
                }
            }
    return out;
}

/// Analytic backward pass for panoptic_conv_forward. The mask and rescale
/// ratio are constant with respect to both input and weights, so gradients
/// follow from linearity of the masked sum.
template <typename T>
ConvGrads<T> panoptic_conv_backward(const Tensor<T>& grad_out, const Tensor<T>& x, const PanopticMap& p,
                                    const ConvParams<T>& params) {
    detail::check_conv_input(x, params, "panoptic_conv_backward");
    detail::check_map_matches(x, p, "panoptic_conv_backward");
    if (grad_out.n() != x.n() || grad_out.c() != params.out_channels() || grad_out.h() != x.h() ||
        grad_out.w() != x.w())
        throw std::invalid_argument("panoptic_conv_backward: grad shape " + grad_out.shape_string() +
                                    " inconsistent with forward");
    const int k = params.kernel();
    const int r = k / 2;
    ConvGrads<T> g{Tensor<T>(x.n(), x.c(), x.h(), x.w(), T(0)),
                   Tensor<T>(params.out_channels(), params.in_channels(), k, k, T(0)),
                   std::vector<T>(params.out_channels(), T(0))};

    for (int n = 0; n < x.n(); ++n)
        for (int i = 0; i < x.h(); ++i)
            for (int j = 0; j < x.w(); ++j) {
                const std::uint32_t center_id = p.at(i, j);
                int mask_sum = 0;
                for (int u = 0; u < k; ++u)
                    for (int v = 0; v < k; ++v)
                        if (p.at_padded(i + u - r, j + v - r) == center_id) ++mask_sum;
                const T ratio = T(k * k) / T(mask_sum);
                for (int oc = 0; oc < params.out_channels(); ++oc) {
                    const T go = grad_out(n, oc, i, j);
                    g.bias[oc] += go;
                    if (go == T(0)) continue;
                    const T gr = go * ratio;
                    for (int u = 0; u < k; ++u)
                        for (int v = 0; v < k; ++v) {
                            const int ii = i + u - r;
                            const int jj = j + v - r;
                            if (ii < 0 || ii >= x.h() || jj < 0 || jj >= x.w()) continue;
                            if (p.at(ii, jj) != center_id) continue;
                            for (int c = 0; c < x.c(); ++c) {
                                g.weights(oc, c, u, v) += gr * x(n, c, ii, jj);
                                g.input(n, c, ii, jj) += gr * params.weights(oc, c, u, v);
                            }
                        }
                }
            }
    return g;
}

}  // namespace pk
