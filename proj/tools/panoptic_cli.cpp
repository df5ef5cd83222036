// Command-line surface over the panoptic kernels library: image synthesis
// forward passes, upsampling misalignment statistics, gradient checks and
// kernel benchmarks.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 check failure.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "panoptic/bench.hpp"
#include "panoptic/generator.hpp"
#include "panoptic/gradcheck.hpp"
#include "panoptic/io.hpp"
#include "panoptic/parallel.hpp"
#include "panoptic/upsample.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitCheckFailed = 3;

struct SizeSpec {
    int n = 1, c = 1, h = 0, w = 0;
};

SizeSpec parse_size4(const std::string& text) {
    SizeSpec s;
    if (std::sscanf(text.c_str(), "%dx%dx%dx%d", &s.n, &s.c, &s.h, &s.w) != 4 || s.n < 1 || s.c < 1 || s.h < 1 ||
        s.w < 1)
        throw CLI::ValidationError("--size", "expected NxCxHxW with positive integers, got '" + text + "'");
    return s;
}

std::pair<int, int> parse_size2(const std::string& text) {
    int h = 0, w = 0;
    if (std::sscanf(text.c_str(), "%dx%d", &h, &w) != 2 || h < 1 || w < 1)
        throw CLI::ValidationError("--size", "expected HxW with positive integers, got '" + text + "'");
    return {h, w};
}

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (unsigned char ch : text) {
        hash ^= ch;
        hash *= 0x100000001b3ull;
    }
    return hash;
}

struct ForwardArgs {
    std::string semantic, panoptic, config, out;
    std::uint64_t seed = 0;
    int threads = 0;
};

template <typename T>
void run_forward_typed(const ForwardArgs& args, const nlohmann::json& cfg_json) {
    pk::GeneratorConfig config;
    config.stage_channels = cfg_json.at("stage_channels").get<std::vector<int>>();
    config.num_classes = cfg_json.at("num_classes").get<int>();
    config.spade_hidden = cfg_json.value("spade_hidden", 64);
    config.seed = args.seed;

    const pk::PanopticMap p_full = pk::read_panoptic_png(args.panoptic);
    const pk::SemanticMap s_full = pk::read_semantic_png(args.semantic, config.num_classes);
    if (p_full.height() != s_full.height() || p_full.width() != s_full.width())
        throw std::runtime_error("forward: semantic map is " + std::to_string(s_full.height()) + "x" +
                                 std::to_string(s_full.width()) + " but panoptic map is " +
                                 std::to_string(p_full.height()) + "x" + std::to_string(p_full.width()));
    const int scale = 1 << config.num_stages();
    if (p_full.height() % scale != 0 || p_full.width() % scale != 0)
        throw std::runtime_error("forward: map resolution " + std::to_string(p_full.height()) + "x" +
                                 std::to_string(p_full.width()) + " not divisible by 2^stages = " +
                                 std::to_string(scale));
    config.out_h = p_full.height();
    config.out_w = p_full.width();
    config.base_h = config.out_h / scale;
    config.base_w = config.out_w / scale;

    const auto t0 = std::chrono::steady_clock::now();
    const auto params = pk::init_generator_params<T>(config);
    const pk::Tensor<T> image = pk::generator_forward(s_full, p_full, config, params);
    const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    pk::write_image_png(image, args.out);

    nlohmann::json manifest{{"command", "forward"},
                            {"seed", args.seed},
                            {"config", cfg_json},
                            {"config_hash", fnv1a(cfg_json.dump())},
                            {"semantic", args.semantic},
                            {"panoptic", args.panoptic},
                            {"out", args.out},
                            {"resolution", {config.out_h, config.out_w}},
                            {"elapsed_seconds", elapsed},
                            {"threads", pk::resolve_threads(args.threads)}};
    std::ofstream mf(args.out + ".manifest.json");
    mf << manifest.dump(2) << "\n";
    if (!mf) throw std::runtime_error("forward: failed writing manifest for " + args.out);
    std::cout << "wrote " << args.out << " (" << config.out_h << "x" << config.out_w << ") in " << elapsed
              << " s\n";
}

int run_forward(const ForwardArgs& args) {
    std::ifstream cfg_stream(args.config);
    if (!cfg_stream) throw std::runtime_error("forward: cannot open config " + args.config);
    nlohmann::json cfg_json;
    try {
        cfg_stream >> cfg_json;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("forward: bad config " + args.config + ": " + e.what());
    }
    const std::string scalar = cfg_json.value("scalar", "f64");
    if (scalar == "f64")
        run_forward_typed<double>(args, cfg_json);
    else if (scalar == "f32")
        run_forward_typed<float>(args, cfg_json);
    else
        throw std::runtime_error("forward: unknown scalar type '" + scalar + "' (expected f64 or f32)");
    return kExitOk;
}

int run_stats(const std::string& panoptic_path, int stages, int base_scale, const std::string& format) {
    const pk::PanopticMap p_full = pk::read_panoptic_png(panoptic_path);
    const auto stats = pk::misalignment_stats(p_full, stages, base_scale);
    if (format == "csv") {
        std::printf("stage,pct_misaligned,pct_new,n_misaligned,n_new,n_total\n");
        for (const auto& row : stats)
            std::printf("%d,%.4f,%.4f,%lld,%lld,%lld\n", row.stage, row.pct_misaligned, row.pct_new,
                        (long long)row.n_misaligned, (long long)row.n_new, (long long)row.n_total);
    } else {
        std::printf("%-6s %-15s %-10s %-13s %-8s %-8s\n", "stage", "pct_misaligned", "pct_new", "n_misaligned",
                    "n_new", "n_total");
        for (const auto& row : stats)
            std::printf("%-6d %-15.4f %-10.4f %-13lld %-8lld %-8lld\n", row.stage, row.pct_misaligned, row.pct_new,
                        (long long)row.n_misaligned, (long long)row.n_new, (long long)row.n_total);
    }
    return kExitOk;
}

int run_gradcheck(const std::string& op, std::uint64_t seed, const std::string& size, bool inject_bug) {
    const auto [h, w] = parse_size2(size);
    double err = op == "conv" ? pk::gradcheck::check_conv(seed, h, w) : pk::gradcheck::check_upsample(seed, h, w);
    if (inject_bug) err = std::max(err, 1.0);  // corrupted-gradient negative control
    std::printf("op: %s\nseed: %llu\nsize: %dx%d\nmax_relative_error: %.6e\n", op.c_str(), (unsigned long long)seed,
                h, w, err);
    const bool pass = err < 1e-5;
    std::printf("%s\n", pass ? "PASS" : "FAIL");
    return pass ? kExitOk : kExitCheckFailed;
}

int run_bench(const std::string& kernel, const std::string& size_text, int iters, int threads,
              const std::string& family, int out_channels, int k, std::uint64_t seed) {
    const SizeSpec size = parse_size4(size_text);
    const pk::BenchSize bsize{size.n, size.c, size.h, size.w};
    const int c_out = out_channels > 0 ? out_channels : size.c;
    const pk::Tensor<double> x = pk::make_bench_input<double>(bsize, seed + 101);
    const auto params = pk::make_bench_params<double>(c_out, size.c, k, seed + 202);
    const pk::PanopticMap map = pk::make_family_map(pk::family_from_name(family), size.h, size.w, seed + 303);

    pk::Tensor<double> out(1, 1, 1, 1);
    const auto body = [&] {
        if (kernel == "conv-ref")
            out = pk::panoptic_conv_forward(x, map, params);
        else
            out = pk::panoptic_conv_forward_optimized(x, map, params, threads);
    };
    const auto [median_s, min_s] = pk::detail::time_kernel(body, iters);
    const double windows = double(size.n) * size.h * size.w;
    std::printf("kernel: %s\nsize: %s\nfamily: %s\nout_channels: %d\nkernel_size: %d\niters: %d\nthreads: %d\n",
                kernel.c_str(), bsize.to_string().c_str(), family.c_str(), c_out, k, iters,
                kernel == "conv-ref" ? 1 : pk::resolve_threads(threads));
    std::printf("wall_median_s: %.9g\nwall_min_s: %.9g\nthroughput_windows_per_s: %.6g\nchecksum: %.17g\n", median_s,
                min_s, windows / median_s, pk::weighted_checksum(out));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"panoptic-aware convolution/upsampling kernels"};
    app.require_subcommand(1);

    ForwardArgs fwd;
    auto* forward = app.add_subcommand("forward", "synthesize an image from semantic + panoptic maps");
    forward->add_option("--semantic", fwd.semantic, "semantic map PNG (8-bit grayscale)")->required();
    forward->add_option("--panoptic", fwd.panoptic, "panoptic map PNG (8-bit RGB, id = R+256G+65536B)")->required();
    forward->add_option("--config", fwd.config, "generator config JSON")->required();
    forward->add_option("--seed", fwd.seed, "weight seed (default 0)");
    forward->add_option("--out", fwd.out, "output image PNG")->required();
    forward->add_option("--threads", fwd.threads, "worker threads (0 = auto)");

    std::string stats_panoptic, stats_format = "table";
    int stats_stages = 0, stats_base_scale = 0;
    auto* stats = app.add_subcommand("stats", "per-stage upsampling misalignment statistics");
    stats->add_option("--panoptic", stats_panoptic, "panoptic map PNG")->required();
    stats->add_option("--stages", stats_stages, "number of 2x upsampling stages")->required()->check(CLI::PositiveNumber);
    stats->add_option("--base-scale", stats_base_scale, "downsampling factor of the coarsest scale (default 2^stages)");
    stats->add_option("--format", stats_format, "csv or table")->check(CLI::IsMember({"csv", "table"}));

    std::string gc_op, gc_size = "5x5";
    std::uint64_t gc_seed = 0;
    bool gc_inject = false;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the analytic backward passes");
    gradcheck->add_option("--op", gc_op, "conv or upsample")->required()->check(CLI::IsMember({"conv", "upsample"}));
    gradcheck->add_option("--seed", gc_seed, "fixture seed");
    gradcheck->add_option("--size", gc_size, "spatial size HxW (default 5x5)");
    gradcheck->add_flag("--inject-bug", gc_inject, "corrupt the analytic gradient (negative control)");

    std::string bench_kernel, bench_size = "1x64x256x256", bench_family = "blocks";
    int bench_iters = 5, bench_threads = 0, bench_cout = 0, bench_k = 3;
    std::uint64_t bench_seed = 0;
    auto* bench = app.add_subcommand("bench", "time one convolution kernel");
    bench->add_option("--kernel", bench_kernel, "conv-ref or conv-opt")
        ->required()
        ->check(CLI::IsMember({"conv-ref", "conv-opt"}));
    bench->add_option("--size", bench_size, "input NxCxHxW (default 1x64x256x256)");
    bench->add_option("--iters", bench_iters, "timed iterations")->check(CLI::PositiveNumber);
    bench->add_option("--threads", bench_threads, "worker threads for conv-opt (0 = auto)");
    bench->add_option("--family", bench_family, "id-map family")
        ->check(CLI::IsMember({"constant", "blocks", "random-instances"}));
    bench->add_option("--out-channels", bench_cout, "output channels (default = input channels)");
    bench->add_option("--k", bench_k, "kernel size (odd)");
    bench->add_option("--seed", bench_seed, "fixture seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (forward->parsed()) return run_forward(fwd);
        if (stats->parsed())
            return run_stats(stats_panoptic, stats_stages,
                             stats_base_scale > 0 ? stats_base_scale : (1 << stats_stages), stats_format);
        if (gradcheck->parsed()) return run_gradcheck(gc_op, gc_seed, gc_size, gc_inject);
        if (bench->parsed())
            return run_bench(bench_kernel, bench_size, bench_iters, bench_threads, bench_family, bench_cout, bench_k,
                             bench_seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
