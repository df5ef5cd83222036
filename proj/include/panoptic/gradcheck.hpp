#pragma once

#include <cmath>
#include <cstdint>
#include <functional>

#include "panoptic/conv.hpp"
#include "panoptic/rng.hpp"
#include "panoptic/tensor.hpp"
#include "panoptic/upsample.hpp"

namespace pk {

/// Central-difference checks of the analytic backward passes. Losses are
/// random linear functionals of the forward output, so the analytic
/// gradient is the transposed-Jacobian product the backward pass computes.

namespace gradcheck {

inline double relative_error(double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

inline constexpr double kStep = 1e-5;

inline PanopticMap random_id_map(int h, int w, int num_ids, CounterRng& rng) {
    PanopticMap map(h, w);
    for (auto& id : map.ids.v) id = PanopticMap::encode_id(1 + rng.next_below(std::uint32_t(num_ids)), 0);
    return map;
}

inline SemanticMap random_class_map(int h, int w, int num_classes, CounterRng& rng) {
    SemanticMap map(h, w);
    for (auto& cls : map.classes.v) cls = std::int32_t(rng.next_below(std::uint32_t(num_classes)));
    return map;
}

inline Tensor<double> random_tensor(int n, int c, int h, int w, CounterRng& rng) {
    Tensor<double> x(n, c, h, w);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.next_range(-1.0, 1.0);
    return x;
}

/// Worst relative error between analytic and central-difference gradients
/// over every entry of `values`, where loss() re-evaluates the forward pass
/// against the current contents of `values`.
inline double fd_max_error(double* values, std::size_t count, const double* analytic,
                           const std::function<double()>& loss) {
    double worst = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double saved = values[i];
        values[i] = saved + kStep;
        const double up = loss();
        values[i] = saved - kStep;
        const double down = loss();
        values[i] = saved;
        const double fd = (up - down) / (2.0 * kStep);
        worst = std::max(worst, relative_error(fd, analytic[i]));
    }
    return worst;
}

/// Check panoptic_conv_backward against finite differences on a random
/// instance; returns the max relative error over input, weights and bias.
inline double check_conv(std::uint64_t seed, int h, int w) {
    CounterRng rng(seed);
    const int c_in = 2, c_out = 3, k = 3;
    Tensor<double> x = random_tensor(1, c_in, h, w, rng);
    ConvParams<double> params(c_out, c_in, k);
    for (std::size_t i = 0; i < params.weights.size(); ++i) params.weights.data()[i] = rng.next_normal(0.5);
    for (auto& b : params.bias) b = rng.next_normal(0.5);
    const PanopticMap p = random_id_map(h, w, 3, rng);
    const Tensor<double> grad_out = random_tensor(1, c_out, h, w, rng);

    const auto loss = [&] {
        const Tensor<double> out = panoptic_conv_forward(x, p, params);
        double sum = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) sum += out.data()[i] * grad_out.data()[i];
        return sum;
    };
    const ConvGrads<double> grads = panoptic_conv_backward(grad_out, x, p, params);

    double worst = fd_max_error(x.data(), x.size(), grads.input.data(), loss);
    worst = std::max(worst, fd_max_error(params.weights.data(), params.weights.size(), grads.weights.data(), loss));
    worst = std::max(worst, fd_max_error(params.bias.data(), params.bias.size(), grads.bias.data(), loss));
    return worst;
}

/// Check the composite upsampling backward (routing scatter plus the
/// hole-filling branch) against finite differences.
inline double check_upsample(std::uint64_t seed, int h, int w) {
    CounterRng rng(seed);
    const int channels = 2, num_classes = 3, enc_channels = 4;
    Tensor<double> f_d = random_tensor(1, channels, h, w, rng);
    const PanopticMap p_full = random_id_map(2 * h, 2 * w, 4, rng);
    const SemanticMap s_full = random_class_map(2 * h, 2 * w, num_classes, rng);
    HoleFillParams<double> params(ConvParams<double>(enc_channels, num_classes, 3),
                                  ConvParams<double>(channels, enc_channels, 1));
    for (std::size_t i = 0; i < params.encoder.weights.size(); ++i) params.encoder.weights.data()[i] = rng.next_normal(0.5);
    for (auto& b : params.encoder.bias) b = rng.next_normal(0.5);
    for (std::size_t i = 0; i < params.reducer.weights.size(); ++i) params.reducer.weights.data()[i] = rng.next_normal(0.5);
    for (auto& b : params.reducer.bias) b = rng.next_normal(0.5);
    const Tensor<double> grad_out = random_tensor(1, channels, 2 * h, 2 * w, rng);

    const auto loss = [&] {
        const Tensor<double> out = panoptic_upsample(f_d, p_full, s_full, 2 * h, 2 * w, params);
        double sum = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) sum += out.data()[i] * grad_out.data()[i];
        return sum;
    };
    const UpsampleGrads<double> grads =
        panoptic_upsample_backward(grad_out, f_d, p_full, s_full, 2 * h, 2 * w, params);

    double worst = fd_max_error(f_d.data(), f_d.size(), grads.f_d.data(), loss);
    worst = std::max(worst, fd_max_error(params.encoder.weights.data(), params.encoder.weights.size(),
                                         grads.encoder.weights.data(), loss));
    worst = std::max(worst,
                     fd_max_error(params.encoder.bias.data(), params.encoder.bias.size(), grads.encoder.bias.data(), loss));
    worst = std::max(worst, fd_max_error(params.reducer.weights.data(), params.reducer.weights.size(),
                                         grads.reducer.weights.data(), loss));
    worst = std::max(worst,
                     fd_max_error(params.reducer.bias.data(), params.reducer.bias.size(), grads.reducer.bias.data(), loss));
    return worst;
}

}  // namespace gradcheck
}  // namespace pk
