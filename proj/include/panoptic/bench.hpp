#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "panoptic/conv.hpp"
#include "panoptic/conv_optimized.hpp"
#include "panoptic/rng.hpp"
#include "panoptic/tensor.hpp"

namespace pk {

/// Order-independent-enough checksum for kernel output verification: the
/// dot product with a fixed pseudo-random unit vector. Bitwise-equal
/// outputs produce bitwise-equal checksums.
template <typename T>
double weighted_checksum(const Tensor<T>& x) {
    const T* d = x.data();
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double u = double((CounterRng::mix64(0x5EEDF00Dull + i * 0x9e3779b97f4a7c15ull) >> 11)) * 0x1.0p-53;
        sum += double(d[i]) * (2.0 * u - 1.0);
    }
    return sum;
}

struct BenchSize {
    int n = 1;
    int c = 1;
    int h = 1;
    int w = 1;
    std::string to_string() const {
        return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
    }
};

/// Id-map families spanning the kernels' best case (constant: every window
/// fully valid) and worst case (random instances: fragmented masks).
enum class MapFamily { kConstant, kBlocks, kRandomInstances };

inline const char* family_name(MapFamily f) {
    switch (f) {
        case MapFamily::kConstant: return "constant";
        case MapFamily::kBlocks: return "blocks";
        default: return "random-instances";
    }
}

inline MapFamily family_from_name(const std::string& name) {
    if (name == "constant") return MapFamily::kConstant;
    if (name == "blocks") return MapFamily::kBlocks;
    if (name == "random-instances") return MapFamily::kRandomInstances;
    throw std::invalid_argument("unknown map family '" + name + "'");
}

inline PanopticMap make_family_map(MapFamily family, int h, int w, std::uint64_t seed) {
    PanopticMap map(h, w);
    switch (family) {
        case MapFamily::kConstant:
            for (auto& id : map.ids.v) id = PanopticMap::encode_id(7, 0);
            break;
        case MapFamily::kBlocks: {
            const int block = std::max(1, std::min(h, w) / 8);
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j)
                    map.at(i, j) = PanopticMap::encode_id(std::uint32_t(i / block), std::uint32_t(j / block));
            break;
        }
        case MapFamily::kRandomInstances: {
            CounterRng rng(seed);
            for (auto& id : map.ids.v) id = PanopticMap::encode_id(1 + rng.next_below(9), rng.next_below(24));
            break;
        }
    }
    return map;
}

template <typename T>
Tensor<T> make_bench_input(const BenchSize& size, std::uint64_t seed) {
    Tensor<T> x(size.n, size.c, size.h, size.w);
    CounterRng rng(seed);
    T* d = x.data();
    for (std::size_t i = 0; i < x.size(); ++i) d[i] = T(rng.next_range(-1.0, 1.0));
    return x;
}

template <typename T>
ConvParams<T> make_bench_params(int out_channels, int in_channels, int k, std::uint64_t seed) {
    ConvParams<T> params(out_channels, in_channels, k);
    CounterRng rng(seed);
    T* wp = params.weights.data();
    for (std::size_t i = 0; i < params.weights.size(); ++i) wp[i] = T(rng.next_normal(0.1));
    for (auto& b : params.bias) b = T(rng.next_normal(0.1));
    return params;
}

struct BenchRow {
    std::string kernel;
    BenchSize size;
    std::string family;
    int iters = 0;
    double median_s = 0.0;
    double min_s = 0.0;
    double checksum = 0.0;
    double speedup = 1.0;  // ref_median / own_median
};

namespace detail {

template <typename F>
std::pair<double, double> time_kernel(F&& body, int iters) {
    body();  // warmup
    std::vector<double> times(iters);
    for (int it = 0; it < iters; ++it) {
        const auto t0 = std::chrono::steady_clock::now();
        body();
        const auto t1 = std::chrono::steady_clock::now();
        times[it] = std::chrono::duration<double>(t1 - t0).count();
    }
    std::sort(times.begin(), times.end());
    return {times[times.size() / 2], times.front()};
}

}  // namespace detail

struct SuiteOptions {
    std::vector<BenchSize> sizes;
    std::vector<MapFamily> families{MapFamily::kConstant, MapFamily::kBlocks, MapFamily::kRandomInstances};
    int iters = 10;
    int out_channels = 0;  // 0: same as input channels
    int kernel_size = 3;
    int threads = 0;
    std::uint64_t seed = 0;
};

/// Run reference and optimized kernels over the size x family grid. Every
/// optimized output is verified against the reference output at 1e-12
/// relative before its timing row is accepted; a drifting benchmark throws.
template <typename T = double>
std::vector<BenchRow> run_suite(const SuiteOptions& opts) {
    if (opts.iters < 1) throw std::invalid_argument("run_suite: iters must be >= 1");
    std::vector<BenchRow> rows;
    for (const BenchSize& size : opts.sizes) {
        const int c_out = opts.out_channels > 0 ? opts.out_channels : size.c;
        const Tensor<T> x = make_bench_input<T>(size, opts.seed + 101);
        const ConvParams<T> params = make_bench_params<T>(c_out, size.c, opts.kernel_size, opts.seed + 202);
        for (MapFamily family : opts.families) {
            const PanopticMap map = make_family_map(family, size.h, size.w, opts.seed + 303);

            Tensor<T> ref_out = panoptic_conv_forward(x, map, params);
            Tensor<T> opt_out = panoptic_conv_forward_optimized(x, map, params, opts.threads);
            double scale = 0.0;
            for (std::size_t i = 0; i < ref_out.size(); ++i) scale = std::max(scale, std::abs(double(ref_out.data()[i])));
            double max_diff = 0.0;
            for (std::size_t i = 0; i < ref_out.size(); ++i)
                max_diff = std::max(max_diff, std::abs(double(ref_out.data()[i]) - double(opt_out.data()[i])));
            if (max_diff > 1e-12 * std::max(scale, 1.0))
                throw std::runtime_error("run_suite: optimized kernel drifted from reference by " +
                                         std::to_string(max_diff) + " on " + size.to_string() + "/" +
                                         family_name(family));

            const auto [ref_median, ref_min] =
                detail::time_kernel([&] { ref_out = panoptic_conv_forward(x, map, params); }, opts.iters);
            const auto [opt_median, opt_min] = detail::time_kernel(
                [&] { opt_out = panoptic_conv_forward_optimized(x, map, params, opts.threads); }, opts.iters);

            rows.push_back({"conv-ref", size, family_name(family), opts.iters, ref_median, ref_min,
                            weighted_checksum(ref_out), 1.0});
            rows.push_back({"conv-opt", size, family_name(family), opts.iters, opt_median, opt_min,
                            weighted_checksum(opt_out), ref_median / opt_median});
        }
    }
    return rows;
}

/// CSV schema: kernel,n,c,h,w,family,iters,median_s,min_s,checksum,speedup
inline void write_suite_csv(const std::vector<BenchRow>& rows, std::ostream& out) {
    out << "kernel,n,c,h,w,family,iters,median_s,min_s,checksum,speedup\n";
    char buf[128];
    for (const BenchRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.17g,%.4g", r.median_s, r.min_s, r.checksum, r.speedup);
        out << r.kernel << "," << r.size.n << "," << r.size.c << "," << r.size.h << "," << r.size.w << ","
            << r.family << "," << r.iters << "," << buf << "\n";
    }
}

}  // namespace pk
