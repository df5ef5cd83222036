#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "panoptic/conv.hpp"
#include "panoptic/io.hpp"
#include "panoptic/rng.hpp"
#include "panoptic/tensor.hpp"
#include "panoptic/upsample.hpp"

namespace pk {

/// Architecture description for the toy-scale generator. stage_channels[s]
/// is the residual block output width at stage s; the semantic encoder
/// emits stage_channels[0] channels; each stage doubles the resolution, so
/// the output is base * 2^stages.
struct GeneratorConfig {
    std::vector<int> stage_channels;
    int base_h = 0;
    int base_w = 0;
    int num_classes = 0;
    int out_h = 0;
    int out_w = 0;
    std::uint64_t seed = 0;
    int spade_hidden = 64;

    int num_stages() const { return int(stage_channels.size()); }

    void validate() const {
        if (stage_channels.empty()) throw std::invalid_argument("GeneratorConfig: need at least one stage");
        for (std::size_t i = 0; i < stage_channels.size(); ++i) {
            if (stage_channels[i] <= 0) throw std::invalid_argument("GeneratorConfig: stage channels must be positive");
            if (i > 0 && stage_channels[i] > stage_channels[i - 1])
                throw std::invalid_argument("GeneratorConfig: stage channels must be non-increasing");
        }
        if (base_h <= 0 || base_w <= 0 || num_classes <= 0 || spade_hidden <= 0)
            throw std::invalid_argument("GeneratorConfig: dimensions and class count must be positive");
        const int scale = 1 << num_stages();
        if (out_h != base_h * scale || out_w != base_w * scale)
            throw std::invalid_argument("GeneratorConfig: output " + std::to_string(out_h) + "x" +
                                        std::to_string(out_w) + " must be base * 2^" + std::to_string(num_stages()));
    }
};

/// SPADE-style denormalization parameters: a shared 3x3 conv from the
/// one-hot semantic map to a hidden width, then 3x3 heads predicting the
/// per-pixel scale and shift.
template <typename T>
struct SpadeParams {
    ConvParams<T> shared;
    ConvParams<T> gamma;
    ConvParams<T> beta;

    SpadeParams(int num_classes, int hidden, int channels)
        : shared(hidden, num_classes, 3), gamma(channels, hidden, 3), beta(channels, hidden, 3) {}
};

template <typename T>
Tensor<T> leaky_relu(Tensor<T> x, T slope = T(0.2)) {
    T* d = x.data();
    for (std::size_t i = 0; i < x.size(); ++i)
        if (d[i] < T(0)) d[i] *= slope;
    return x;
}

template <typename T>
Tensor<T> tanh_activate(Tensor<T> x) {
    T* d = x.data();
    for (std::size_t i = 0; i < x.size(); ++i) d[i] = std::tanh(d[i]);
    return x;
}

/// Normalize x per channel over batch and spatial dimensions (eps 1e-5),
/// then modulate with gamma/beta planes predicted from the semantic map:
/// out = x_norm * (1 + gamma(s)) + beta(s). Constant channels normalize
/// to zero through the eps guard. The modulation convs are ordinary
/// convolutions; the semantic map has a fixed channel count, unlike
/// panoptic maps.
template <typename T>
Tensor<T> spade_denorm(const Tensor<T>& x, const SemanticMap& s, const SpadeParams<T>& params) {
    if (s.height() != x.h() || s.width() != x.w())
        throw std::invalid_argument("spade_denorm: semantic map " + std::to_string(s.height()) + "x" +
                                    std::to_string(s.width()) + " vs features " + x.shape_string());
    if (params.gamma.out_channels() != x.c())
        throw std::invalid_argument("spade_denorm: heads emit " + std::to_string(params.gamma.out_channels()) +
                                    " channels, features have " + std::to_string(x.c()));
    const double eps = 1e-5;
    const std::size_t plane = std::size_t(x.h()) * x.w();
    const std::size_t count = std::size_t(x.n()) * plane;

    Tensor<T> normed(x.n(), x.c(), x.h(), x.w());
    for (int c = 0; c < x.c(); ++c) {
        double mean = 0.0;
        for (int n = 0; n < x.n(); ++n)
            for (int i = 0; i < x.h(); ++i)
                for (int j = 0; j < x.w(); ++j) mean += double(x(n, c, i, j));
        mean /= double(count);
        double var = 0.0;
        for (int n = 0; n < x.n(); ++n)
            for (int i = 0; i < x.h(); ++i)
                for (int j = 0; j < x.w(); ++j) {
                    const double d = double(x(n, c, i, j)) - mean;
                    var += d * d;
                }
        var /= double(count);
        const double inv_std = 1.0 / std::sqrt(var + eps);
        for (int n = 0; n < x.n(); ++n)
            for (int i = 0; i < x.h(); ++i)
                for (int j = 0; j < x.w(); ++j) normed(n, c, i, j) = T((double(x(n, c, i, j)) - mean) * inv_std);
    }

    Tensor<T> hidden = standard_conv_forward(one_hot<T>(s, params.shared.in_channels()), params.shared);
    T* hd = hidden.data();
    for (std::size_t i = 0; i < hidden.size(); ++i)
        if (hd[i] < T(0)) hd[i] = T(0);
    const Tensor<T> gamma = standard_conv_forward(hidden, params.gamma);
    const Tensor<T> beta = standard_conv_forward(hidden, params.beta);

    for (int n = 0; n < x.n(); ++n)
        for (int c = 0; c < x.c(); ++c)
            for (int i = 0; i < x.h(); ++i)
                for (int j = 0; j < x.w(); ++j)
                    normed(n, c, i, j) = normed(n, c, i, j) * (T(1) + gamma(0, c, i, j)) + beta(0, c, i, j);
    return normed;
}

/// Residual block with panoptic-aware convolutions. Main path applies
/// denorm -> leaky-ReLU -> 3x3 panoptic conv twice; the skip path uses a
/// 1x1 panoptic conv (with its own denorm) only when widths change.
template <typename T>
struct ResBlockParams {
    SpadeParams<T> spade0;
    SpadeParams<T> spade1;
    ConvParams<T> conv0;
    ConvParams<T> conv1;
    std::optional<SpadeParams<T>> spade_skip;
    std::optional<ConvParams<T>> conv_skip;

    ResBlockParams(int num_classes, int hidden, int in_channels, int out_channels)
        : spade0(num_classes, hidden, in_channels),
          spade1(num_classes, hidden, std::min(in_channels, out_channels)),
          conv0(std::min(in_channels, out_channels), in_channels, 3),
          conv1(out_channels, std::min(in_channels, out_channels), 3) {
        if (in_channels != out_channels) {
            spade_skip.emplace(num_classes, hidden, in_channels);
            conv_skip.emplace(out_channels, in_channels, 1);
        }
    }

    int in_channels() const { return conv0.in_channels(); }
    int out_channels() const { return conv1.out_channels(); }
};

template <typename T>
Tensor<T> resblock_forward(const Tensor<T>& x, const SemanticMap& s, const PanopticMap& p,
                           const ResBlockParams<T>& block) {
    Tensor<T> main = panoptic_conv_forward(leaky_relu(spade_denorm(x, s, block.spade0)), p, block.conv0);
    main = panoptic_conv_forward(leaky_relu(spade_denorm(main, s, block.spade1)), p, block.conv1);
    if (block.conv_skip) {
        const Tensor<T> skip = panoptic_conv_forward(leaky_relu(spade_denorm(x, s, *block.spade_skip)), p,
                                                     *block.conv_skip);
        for (std::size_t i = 0; i < main.size(); ++i) main.data()[i] += skip.data()[i];
    } else {
        for (std::size_t i = 0; i < main.size(); ++i) main.data()[i] += x.data()[i];
    }
    return main;
}

template <typename T>
struct GeneratorParams {
    ConvParams<T> encoder;  // shared semantic encoder, reused by every hole-filling stage
    std::vector<ResBlockParams<T>> blocks;
    std::vector<ConvParams<T>> reducers;  // per-stage 1x1, encoder width -> stage width
    ConvParams<T> to_rgb;
};

namespace detail {

template <typename T>
void init_conv(ConvParams<T>& conv, CounterRng& rng, double stddev) {
    T* w = conv.weights.data();
    for (std::size_t i = 0; i < conv.weights.size(); ++i) w[i] = T(rng.next_normal(stddev));
    // biases stay zero
}

template <typename T>
void init_spade(SpadeParams<T>& spade, CounterRng& rng, double stddev) {
    init_conv(spade.shared, rng, stddev);
    init_conv(spade.gamma, rng, stddev);
    init_conv(spade.beta, rng, stddev);
}

}  // namespace detail

/// Draw all weights from the config seed: normal(0, 0.02), biases zero.
/// Draw order (documented in the README): encoder, then per stage the block
/// (spade0, conv0, spade1, conv1, then skip spade/conv when present), then
/// the per-stage reducers, then the output conv. Each conv consumes draws in
/// (out, in, row, col) element order.
template <typename T>
GeneratorParams<T> init_generator_params(const GeneratorConfig& config) {
    config.validate();
    const double stddev = 0.02;
    CounterRng rng(config.seed);
    const int enc_channels = config.stage_channels[0];

    GeneratorParams<T> params{ConvParams<T>(enc_channels, config.num_classes, 3), {}, {}, ConvParams<T>(3, config.stage_channels.back(), 3)};
    detail::init_conv(params.encoder, rng, stddev);

    int prev = enc_channels;
    for (int s = 0; s < config.num_stages(); ++s) {
        ResBlockParams<T> block(config.num_classes, config.spade_hidden, prev, config.stage_channels[s]);
        detail::init_spade(block.spade0, rng, stddev);
        detail::init_conv(block.conv0, rng, stddev);
        detail::init_spade(block.spade1, rng, stddev);
        detail::init_conv(block.conv1, rng, stddev);
        if (block.conv_skip) {
            detail::init_spade(*block.spade_skip, rng, stddev);
            detail::init_conv(*block.conv_skip, rng, stddev);
        }
        params.blocks.push_back(std::move(block));
        prev = config.stage_channels[s];
    }
    for (int s = 0; s < config.num_stages(); ++s) {
        ConvParams<T> reducer(config.stage_channels[s], enc_channels, 1);
        detail::init_conv(reducer, rng, stddev);
        params.reducers.push_back(std::move(reducer));
    }
    detail::init_conv(params.to_rgb, rng, stddev);
    return params;
}

namespace detail {

inline void check_generator_maps(const GeneratorConfig& config, const SemanticMap& s_full,
                                 const PanopticMap& p_full) {
    if (s_full.height() != config.out_h || s_full.width() != config.out_w || p_full.height() != config.out_h ||
        p_full.width() != config.out_w)
        throw std::invalid_argument("generator: maps must be at the output resolution " +
                                    std::to_string(config.out_h) + "x" + std::to_string(config.out_w));
}

}  // namespace detail

/// Shared-encoder features for one stage: encode the one-hot semantic map
/// with the shared panoptic-aware encoder at the stage's upsampled
/// resolution, then reduce to the stage width with its 1x1 conv.
template <typename T>
Tensor<T> shared_encoder_features(const SemanticMap& s_full, const PanopticMap& p_full, int stage,
                                  const GeneratorConfig& config, const GeneratorParams<T>& params) {
    config.validate();
    detail::check_generator_maps(config, s_full, p_full);
    if (stage < 0 || stage >= config.num_stages())
        throw std::out_of_range("shared_encoder_features: stage " + std::to_string(stage) + " outside [0," +
                                std::to_string(config.num_stages()) + ")");
    const int factor = 1 << (config.num_stages() - stage - 1);
    const SemanticMap s_r = nearest_downsample(s_full, factor);
    const PanopticMap p_r = nearest_downsample(p_full, factor);
    const Tensor<T> pre = panoptic_conv_forward(one_hot<T>(s_r, config.num_classes), p_r, params.encoder);
    return standard_conv_forward(pre, params.reducers[stage]);
}

/// Full forward pass: semantic encoder at the base resolution, then per
/// stage a residual block and a panoptic-aware 2x upsampling, finished by
/// leaky-ReLU, a standard 3x3 conv to RGB, and tanh. Output is (1, 3, H, W)
/// in [-1, 1].
template <typename T>
Tensor<T> generator_forward(const SemanticMap& s_full, const PanopticMap& p_full, const GeneratorConfig& config,
                            const GeneratorParams<T>& params) {
    config.validate();
    detail::check_generator_maps(config, s_full, p_full);
    const int stages = config.num_stages();

    const int base_factor = 1 << stages;
    const SemanticMap s_base = nearest_downsample(s_full, base_factor);
    const PanopticMap p_base = nearest_downsample(p_full, base_factor);
    Tensor<T> x = panoptic_conv_forward(one_hot<T>(s_base, config.num_classes), p_base, params.encoder);

    for (int s = 0; s < stages; ++s) {
        const int factor = 1 << (stages - s);
        const SemanticMap s_cur = nearest_downsample(s_full, factor);
        const PanopticMap p_cur = nearest_downsample(p_full, factor);
        x = resblock_forward(x, s_cur, p_cur, params.blocks[s]);
        const HoleFillParams<T> hole_params(params.encoder, params.reducers[s]);
        x = panoptic_upsample(x, p_full, s_full, 2 * x.h(), 2 * x.w(), hole_params);
    }
    x = leaky_relu(std::move(x));
    x = standard_conv_forward(x, params.to_rgb);
    return tanh_activate(std::move(x));
}

template <typename T>
Tensor<T> generator_forward(const SemanticMap& s_full, const PanopticMap& p_full, const GeneratorConfig& config) {
    return generator_forward(s_full, p_full, config, init_generator_params<T>(config));
}

namespace detail {

/// Visit every conv in the documented draw/serialization order.
template <typename T, typename Fn>
void for_each_conv(GeneratorParams<T>& params, Fn&& fn) {
    fn(params.encoder);
    for (auto& block : params.blocks) {
        for (auto* conv : {&block.spade0.shared, &block.spade0.gamma, &block.spade0.beta}) fn(*conv);
        fn(block.conv0);
        for (auto* conv : {&block.spade1.shared, &block.spade1.gamma, &block.spade1.beta}) fn(*conv);
        fn(block.conv1);
        if (block.conv_skip) {
            for (auto* conv : {&block.spade_skip->shared, &block.spade_skip->gamma, &block.spade_skip->beta})
                fn(*conv);
            fn(*block.conv_skip);
        }
    }
    for (auto& reducer : params.reducers) fn(reducer);
    fn(params.to_rgb);
}

}  // namespace detail

/// Write every parameter tensor into `dir` as numbered tensor fixtures,
/// weights and bias per conv, in the documented draw order.
template <typename T>
void save_generator_params(const GeneratorParams<T>& params, const std::string& dir) {
    std::filesystem::create_directories(dir);
    int index = 0;
    detail::for_each_conv(const_cast<GeneratorParams<T>&>(params), [&](ConvParams<T>& conv) {
        char name[64];
        std::snprintf(name, sizeof(name), "/param_%03d_weights.txt", index);
        write_tensor_fixture(conv.weights, dir + name);
        Tensor<T> bias(1, 1, 1, int(conv.bias.size()));
        for (std::size_t i = 0; i < conv.bias.size(); ++i) bias.data()[i] = conv.bias[i];
        std::snprintf(name, sizeof(name), "/param_%03d_bias.txt", index);
        write_tensor_fixture(bias, dir + name);
        ++index;
    });
}

/// Rebuild parameters for `config` from fixtures written by
/// save_generator_params. Shapes are validated against the architecture.
template <typename T>
GeneratorParams<T> load_generator_params(const GeneratorConfig& config, const std::string& dir) {
    GeneratorParams<T> params = init_generator_params<T>(config);
    int index = 0;
    detail::for_each_conv(params, [&](ConvParams<T>& conv) {
        char name[64];
        std::snprintf(name, sizeof(name), "/param_%03d_weights.txt", index);
        Tensor<T> weights = read_tensor_fixture<T>(dir + name);
        if (!weights.same_shape(conv.weights))
            throw std::runtime_error("load_generator_params: " + std::string(name) + " has shape " +
                                     weights.shape_string() + ", expected " + conv.weights.shape_string());
        conv.weights = std::move(weights);
        std::snprintf(name, sizeof(name), "/param_%03d_bias.txt", index);
        const Tensor<T> bias = read_tensor_fixture<T>(dir + name);
        if (bias.size() != conv.bias.size())
            throw std::runtime_error("load_generator_params: " + std::string(name) + " has " +
                                     std::to_string(bias.size()) + " values, expected " +
                                     std::to_string(conv.bias.size()));
        for (std::size_t i = 0; i < conv.bias.size(); ++i) conv.bias[i] = bias.data()[i];
        ++index;
    });
    return params;
}

}  // namespace pk
