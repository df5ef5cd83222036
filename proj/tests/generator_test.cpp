#include "panoptic/generator.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <unordered_map>

#include "testutil.hpp"

using pk::GeneratorConfig;
using pk::PanopticMap;
using pk::SemanticMap;
using pk::SpadeParams;
using pk::Tensor;

namespace {

GeneratorConfig toy_config(int base_h, int base_w, std::vector<int> channels, int num_classes,
                           std::uint64_t seed = 0) {
    GeneratorConfig config;
    config.stage_channels = std::move(channels);
    config.base_h = base_h;
    config.base_w = base_w;
    config.num_classes = num_classes;
    config.out_h = base_h << config.num_stages();
    config.out_w = base_w << config.num_stages();
    config.seed = seed;
    config.spade_hidden = 8;
    return config;
}

SpadeParams<double> random_spade(int num_classes, int hidden, int channels, std::uint64_t seed) {
    SpadeParams<double> params(num_classes, hidden, channels);
    pk::CounterRng rng(seed);
    for (auto* conv : {&params.shared, &params.gamma, &params.beta}) {
        for (std::size_t i = 0; i < conv->weights.size(); ++i) conv->weights.data()[i] = rng.next_normal(0.3);
        for (auto& b : conv->bias) b = rng.next_normal(0.3);
    }
    return params;
}

Tensor<double> plain_normalize(const Tensor<double>& x) {
    Tensor<double> out(x.n(), x.c(), x.h(), x.w());
    const double count = double(x.n()) * x.h() * x.w();
    for (int c = 0; c < x.c(); ++c) {
        double mean = 0.0, sq = 0.0;
        for (int n = 0; n < x.n(); ++n)
            for (int i = 0; i < x.h(); ++i)
                for (int j = 0; j < x.w(); ++j) mean += x(n, c, i, j);
        mean /= count;
        for (int n = 0; n < x.n(); ++n)
            for (int i = 0; i < x.h(); ++i)
                for (int j = 0; j < x.w(); ++j) sq += (x(n, c, i, j) - mean) * (x(n, c, i, j) - mean);
        const double inv = 1.0 / std::sqrt(sq / count + 1e-5);
        for (int n = 0; n < x.n(); ++n)
            for (int i = 0; i < x.h(); ++i)
                for (int j = 0; j < x.w(); ++j) out(n, c, i, j) = (x(n, c, i, j) - mean) * inv;
    }
    return out;
}

}  // namespace

TEST(SpadeDenorm, ZeroHeadsGivePlainNormalization) {
    const Tensor<double> x = testutil::random_tensor(1, 3, 6, 6, 1);
    const SemanticMap s = testutil::random_semantic(6, 6, 4, 2);
    SpadeParams<double> params = random_spade(4, 8, 3, 3);
    for (std::size_t i = 0; i < params.gamma.weights.size(); ++i) params.gamma.weights.data()[i] = 0.0;
    for (auto& b : params.gamma.bias) b = 0.0;
    for (std::size_t i = 0; i < params.beta.weights.size(); ++i) params.beta.weights.data()[i] = 0.0;
    for (auto& b : params.beta.bias) b = 0.0;
    const Tensor<double> out = pk::spade_denorm(x, s, params);
    EXPECT_LT(testutil::max_abs_diff(out, plain_normalize(x)), 1e-12);
}

TEST(SpadeDenorm, ConstantInputYieldsBeta) {
    Tensor<double> x(1, 2, 5, 5);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            x(0, 0, i, j) = 3.5;
            x(0, 1, i, j) = -1.25;
        }
    const SemanticMap s = testutil::random_semantic(5, 5, 3, 4);
    const SpadeParams<double> params = random_spade(3, 8, 2, 5);
    const Tensor<double> out = pk::spade_denorm(x, s, params);
    // constant channels normalize to exactly 0, so out == beta(s)
    Tensor<double> hidden = pk::standard_conv_forward(pk::one_hot<double>(s, 3), params.shared);
    for (std::size_t i = 0; i < hidden.size(); ++i)
        if (hidden.data()[i] < 0.0) hidden.data()[i] = 0.0;
    const Tensor<double> beta = pk::standard_conv_forward(hidden, params.beta);
    EXPECT_TRUE(testutil::bitwise_equal(out, beta));
}

TEST(SpadeDenorm, MatchesFormulaOracle) {
    const Tensor<double> x = testutil::random_tensor(1, 4, 7, 6, 6);
    const SemanticMap s = testutil::random_semantic(7, 6, 5, 7);
    const SpadeParams<double> params = random_spade(5, 8, 4, 8);
    const Tensor<double> out = pk::spade_denorm(x, s, params);

    const Tensor<double> xn = plain_normalize(x);
    Tensor<double> hidden = testutil::oracle_standard_conv(pk::one_hot<double>(s, 5), params.shared);
    for (std::size_t i = 0; i < hidden.size(); ++i)
        if (hidden.data()[i] < 0.0) hidden.data()[i] = 0.0;
    const Tensor<double> gamma = testutil::oracle_standard_conv(hidden, params.gamma);
    const Tensor<double> beta = testutil::oracle_standard_conv(hidden, params.beta);
    double worst = 0.0;
    for (int c = 0; c < 4; ++c)
        for (int i = 0; i < 7; ++i)
            for (int j = 0; j < 6; ++j)
                worst = std::max(worst, std::abs(out(0, c, i, j) -
                                                 (xn(0, c, i, j) * (1.0 + gamma(0, c, i, j)) + beta(0, c, i, j))));
    EXPECT_LT(worst, 1e-10);
}

TEST(SpadeDenorm, DimensionMismatchThrows) {
    const Tensor<double> x(1, 2, 4, 4);
    const SemanticMap s(8, 8, 0);
    const SpadeParams<double> params = random_spade(3, 8, 2, 9);
    EXPECT_THROW(pk::spade_denorm(x, s, params), std::invalid_argument);
}

TEST(ResBlock, ZeroMainWeightsIdentitySkipReturnsInput) {
    const int ch = 4;
    pk::ResBlockParams<double> block(3, 8, ch, ch);
    // leave the spade parameters random, zero the conv stacks
    pk::CounterRng rng(10);
    for (auto* spade : {&block.spade0, &block.spade1})
        for (auto* conv : {&spade->shared, &spade->gamma, &spade->beta})
            for (std::size_t i = 0; i < conv->weights.size(); ++i) conv->weights.data()[i] = rng.next_normal(0.3);
    // conv0/conv1 weights and biases are zero from construction
    const Tensor<double> x = testutil::random_tensor(1, ch, 6, 6, 11);
    const SemanticMap s = testutil::random_semantic(6, 6, 3, 12);
    const PanopticMap p = testutil::blocky_map(6, 6, 3, 13);
    const Tensor<double> out = pk::resblock_forward(x, s, p, block);
    EXPECT_TRUE(testutil::bitwise_equal(out, x));  // main path contributes exact zeros
}

TEST(ResBlock, MatchesComposedPublicOps) {
    const int c_in = 5, c_out = 3;
    pk::ResBlockParams<double> block(4, 8, c_in, c_out);
    pk::CounterRng rng(14);
    for (auto* spade : {&block.spade0, &block.spade1, &*block.spade_skip})
        for (auto* conv : {&spade->shared, &spade->gamma, &spade->beta}) {
            for (std::size_t i = 0; i < conv->weights.size(); ++i) conv->weights.data()[i] = rng.next_normal(0.3);
            for (auto& b : conv->bias) b = rng.next_normal(0.3);
        }
    for (auto* conv : {&block.conv0, &block.conv1, &*block.conv_skip}) {
        for (std::size_t i = 0; i < conv->weights.size(); ++i) conv->weights.data()[i] = rng.next_normal(0.3);
        for (auto& b : conv->bias) b = rng.next_normal(0.3);
    }
    const Tensor<double> x = testutil::random_tensor(1, c_in, 5, 7, 15);
    const SemanticMap s = testutil::random_semantic(5, 7, 4, 16);
    const PanopticMap p = testutil::blocky_map(5, 7, 3, 17);

    const Tensor<double> got = pk::resblock_forward(x, s, p, block);
    Tensor<double> main = pk::panoptic_conv_forward(pk::leaky_relu(pk::spade_denorm(x, s, block.spade0)), p, block.conv0);
    main = pk::panoptic_conv_forward(pk::leaky_relu(pk::spade_denorm(main, s, block.spade1)), p, block.conv1);
    const Tensor<double> skip =
        pk::panoptic_conv_forward(pk::leaky_relu(pk::spade_denorm(x, s, *block.spade_skip)), p, *block.conv_skip);
    for (std::size_t i = 0; i < main.size(); ++i) main.data()[i] += skip.data()[i];
    EXPECT_TRUE(testutil::bitwise_equal(got, main));
}

TEST(ResBlock, CrossInstanceCouplingOnlyThroughNormalization) {
    // Perturb x inside instance B only. The conv path (no normalization)
    // must respond with exact zeros at instance A; the full block may react
    // at A, but only because the per-channel statistics moved.
    const int ch = 3;
    PanopticMap p(6, 6, 1);
    for (int i = 0; i < 6; ++i)
        for (int j = 3; j < 6; ++j) p.at(i, j) = 2;  // right half = instance B
    const SemanticMap s = testutil::semantic_from_panoptic(p);
    const Tensor<double> x = testutil::random_tensor(1, ch, 6, 6, 18);
    Tensor<double> x2 = x;
    for (int c = 0; c < ch; ++c)
        for (int i = 0; i < 6; ++i)
            for (int j = 3; j < 6; ++j) x2(0, c, i, j) += 1.5;

    const auto conv = testutil::random_conv(ch, ch, 3, 19);
    const Tensor<double> conv_a = pk::panoptic_conv_forward(pk::leaky_relu(Tensor<double>(x)), p, conv);
    const Tensor<double> conv_b = pk::panoptic_conv_forward(pk::leaky_relu(Tensor<double>(x2)), p, conv);
    for (int c = 0; c < ch; ++c)
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 3; ++j) EXPECT_EQ(conv_a(0, c, i, j), conv_b(0, c, i, j));

    pk::ResBlockParams<double> block(3, 8, ch, ch);
    pk::CounterRng rng(20);
    for (auto* spade : {&block.spade0, &block.spade1})
        for (auto* conv_p : {&spade->shared, &spade->gamma, &spade->beta})
            for (std::size_t i = 0; i < conv_p->weights.size(); ++i) conv_p->weights.data()[i] = rng.next_normal(0.3);
    for (auto* conv_p : {&block.conv0, &block.conv1})
        for (std::size_t i = 0; i < conv_p->weights.size(); ++i) conv_p->weights.data()[i] = rng.next_normal(0.3);
    const Tensor<double> full_a = pk::resblock_forward(x, s, p, block);
    const Tensor<double> full_b = pk::resblock_forward(x2, s, p, block);
    double diff_at_a = 0.0;
    for (int c = 0; c < ch; ++c)
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 3; ++j) diff_at_a = std::max(diff_at_a, std::abs(full_a(0, c, i, j) - full_b(0, c, i, j)));
    EXPECT_GT(diff_at_a, 0.0);  // the statistics coupling is real
}

TEST(Generator, DeterministicPerSeed) {
    const GeneratorConfig config = toy_config(4, 8, {12, 8}, 10, 123);
    const PanopticMap p = testutil::blocky_map(16, 32, 6, 30);
    const SemanticMap s = testutil::semantic_from_panoptic(p);
    const Tensor<double> a = pk::generator_forward<double>(s, p, config);
    const Tensor<double> b = pk::generator_forward<double>(s, p, config);
    EXPECT_TRUE(testutil::bitwise_equal(a, b));
}

TEST(Generator, SeedSensitivity) {
    const PanopticMap p = testutil::blocky_map(16, 32, 6, 31);
    const SemanticMap s = testutil::semantic_from_panoptic(p);
    const Tensor<double> a = pk::generator_forward<double>(s, p, toy_config(4, 8, {12, 8}, 10, 0));
    const Tensor<double> b = pk::generator_forward<double>(s, p, toy_config(4, 8, {12, 8}, 10, 1));
    EXPECT_FALSE(testutil::bitwise_equal(a, b));
}

TEST(Generator, OutputShapeRangeFinite) {
    const GeneratorConfig config = toy_config(4, 4, {10, 6, 4}, 10, 7);
    const PanopticMap p = testutil::blocky_map(32, 32, 8, 32);
    const SemanticMap s = testutil::semantic_from_panoptic(p);
    const Tensor<double> img = pk::generator_forward<double>(s, p, config);
    EXPECT_EQ(img.n(), 1);
    EXPECT_EQ(img.c(), 3);
    EXPECT_EQ(img.h(), 32);
    EXPECT_EQ(img.w(), 32);
    for (std::size_t i = 0; i < img.size(); ++i) {
        EXPECT_TRUE(std::isfinite(img.data()[i]));
        EXPECT_GE(img.data()[i], -1.0);
        EXPECT_LE(img.data()[i], 1.0);
    }
}

TEST(Generator, IdRelabelingInvariance) {
    const GeneratorConfig config = toy_config(4, 8, {12, 8}, 10, 99);
    const PanopticMap p = testutil::blocky_map(16, 32, 6, 33);
    const SemanticMap s = testutil::semantic_from_panoptic(p);

    // injective relabeling: remap each distinct id to a fresh value
    PanopticMap relabeled = p;
    std::unordered_map<std::uint32_t, std::uint32_t> mapping;
    for (auto& id : relabeled.ids.v) {
        auto [it, fresh] = mapping.try_emplace(id, 500000u + 17u * std::uint32_t(mapping.size()));
        id = it->second;
    }
    const Tensor<double> a = pk::generator_forward<double>(s, p, config);
    const Tensor<double> b = pk::generator_forward<double>(s, relabeled, config);
    EXPECT_TRUE(testutil::bitwise_equal(a, b));
}

TEST(Generator, MapResolutionMismatchThrows) {
    const GeneratorConfig config = toy_config(4, 8, {12, 8}, 5, 0);
    const PanopticMap p(8, 16, 1);
    const SemanticMap s(8, 16, 0);
    EXPECT_THROW(pk::generator_forward<double>(s, p, config), std::invalid_argument);
}

TEST(SharedEncoder, ReducerOutputMatchesStageWidth) {
    const GeneratorConfig config = toy_config(4, 4, {10, 6, 4}, 10, 3);
    const auto params = pk::init_generator_params<double>(config);
    const PanopticMap p = testutil::blocky_map(32, 32, 5, 40);
    const SemanticMap s = testutil::semantic_from_panoptic(p);
    for (int stage = 0; stage < 3; ++stage) {
        const Tensor<double> f = pk::shared_encoder_features(s, p, stage, config, params);
        EXPECT_EQ(f.c(), config.stage_channels[stage]);
        EXPECT_EQ(f.h(), 4 << (stage + 1));
    }
    EXPECT_THROW(pk::shared_encoder_features(s, p, 3, config, params), std::out_of_range);
}

TEST(SharedEncoder, WeightsSharedAcrossStages) {
    // Same seed, two configs whose stages land on the same resolution: the
    // pre-reducer encodings agree because both use the one shared encoder.
    const GeneratorConfig two_stage = toy_config(4, 8, {6, 6}, 10, 77);
    const GeneratorConfig one_stage = toy_config(8, 16, {6}, 10, 77);
    const auto params_a = pk::init_generator_params<double>(two_stage);
    const auto params_b = pk::init_generator_params<double>(one_stage);
    EXPECT_TRUE(testutil::bitwise_equal(params_a.encoder.weights, params_b.encoder.weights));

    const PanopticMap p = testutil::blocky_map(16, 32, 6, 41);
    const SemanticMap s = testutil::semantic_from_panoptic(p);
    // stage 1 of the two-stage config and stage 0 of the one-stage config
    // both encode at 16x32
    const Tensor<double> pre_a = pk::panoptic_conv_forward(pk::one_hot<double>(s, 10), p, params_a.encoder);
    const Tensor<double> pre_b = pk::panoptic_conv_forward(pk::one_hot<double>(s, 10), p, params_b.encoder);
    EXPECT_TRUE(testutil::bitwise_equal(pre_a, pre_b));
}

TEST(SharedEncoder, ConstantAwayFromInstanceBoundaries) {
    // Constant semantic map, two instances split down the middle: encoder
    // outputs are spatially constant at pixels whose 3x3 window stays inside
    // one instance and away from the image border.
    const GeneratorConfig config = toy_config(4, 8, {6}, 3, 5);
    const auto params = pk::init_generator_params<double>(config);
    PanopticMap p(8, 16, 1);
    for (int i = 0; i < 8; ++i)
        for (int j = 8; j < 16; ++j) p.at(i, j) = 2;
    const SemanticMap s(8, 16, 1);
    const Tensor<double> f = pk::shared_encoder_features(s, p, 0, config, params);
    for (int c = 0; c < f.c(); ++c) {
        const double left = f(0, c, 2, 2);
        const double right = f(0, c, 2, 12);
        for (int i = 1; i < 7; ++i)
            for (int j = 1; j < 7; ++j) EXPECT_EQ(f(0, c, i, j), left);
        for (int i = 1; i < 7; ++i)
            for (int j = 9; j < 15; ++j) EXPECT_EQ(f(0, c, i, j), right);
    }
}

TEST(GeneratorParamsIo, SaveLoadRoundTripPreservesForward) {
    const GeneratorConfig config = toy_config(4, 8, {12, 8}, 10, 51);
    const auto params = pk::init_generator_params<double>(config);
    const auto dir = std::filesystem::temp_directory_path() / "panoptic_params_test";
    pk::save_generator_params(params, dir.string());
    const auto loaded = pk::load_generator_params<double>(config, dir.string());
    std::filesystem::remove_all(dir);

    const PanopticMap p = testutil::blocky_map(16, 32, 6, 52);
    const SemanticMap s = testutil::semantic_from_panoptic(p);
    EXPECT_TRUE(testutil::bitwise_equal(pk::generator_forward(s, p, config, params),
                                        pk::generator_forward(s, p, config, loaded)));
}

TEST(GeneratorConfig, Validation) {
    GeneratorConfig config = toy_config(4, 8, {8, 12}, 5, 0);  // increasing widths
    EXPECT_THROW(config.validate(), std::invalid_argument);
    config = toy_config(4, 8, {12, 8}, 5, 0);
    config.out_h = 13;
    EXPECT_THROW(config.validate(), std::invalid_argument);
}
