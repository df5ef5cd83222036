// Microbenchmark suite comparing the reference and optimized panoptic
// convolution kernels across sizes and id-map families. Emits the CSV
// schema documented in the README; optimized outputs are verified against
// the reference before any timing row is reported.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "panoptic/bench.hpp"

namespace {

std::vector<pk::BenchSize> parse_sizes(const std::string& text) {
    std::vector<pk::BenchSize> sizes;
    std::stringstream ss(text);
    std::string token;
    while (std::getline(ss, token, ',')) {
        pk::BenchSize s;
        if (std::sscanf(token.c_str(), "%dx%dx%dx%d", &s.n, &s.c, &s.h, &s.w) != 4 || s.n < 1 || s.c < 1 ||
            s.h < 1 || s.w < 1)
            throw CLI::ValidationError("--sizes", "expected comma-separated NxCxHxW entries, got '" + token + "'");
        sizes.push_back(s);
    }
    if (sizes.empty()) throw CLI::ValidationError("--sizes", "no sizes given");
    return sizes;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"reference vs optimized kernel benchmark suite"};
    std::string sizes_text = "1x16x64x64,1x32x128x128,1x64x256x256";
    std::string families_text = "constant,blocks,random-instances";
    std::string out_path;
    pk::SuiteOptions opts;

    app.add_option("--sizes", sizes_text, "comma-separated NxCxHxW input sizes");
    app.add_option("--families", families_text, "comma-separated id-map families");
    app.add_option("--iters", opts.iters, "timed iterations per row (median reported)")->check(CLI::PositiveNumber);
    app.add_option("--threads", opts.threads, "worker threads for conv-opt (0 = auto)");
    app.add_option("--out-channels", opts.out_channels, "output channels (default = input channels)");
    app.add_option("--k", opts.kernel_size, "kernel size (odd)");
    app.add_option("--seed", opts.seed, "fixture seed");
    app.add_option("--out", out_path, "CSV output path (default stdout)");

    try {
        app.parse(argc, argv);
        opts.sizes = parse_sizes(sizes_text);
        opts.families.clear();
        std::stringstream ss(families_text);
        std::string token;
        while (std::getline(ss, token, ',')) opts.families.push_back(pk::family_from_name(token));
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        const auto rows = pk::run_suite<double>(opts);
        if (out_path.empty()) {
            pk::write_suite_csv(rows, std::cout);
        } else {
            std::ofstream out(out_path);
            if (!out) {
                std::cerr << "error: cannot open " << out_path << " for writing\n";
                return 2;
            }
            pk::write_suite_csv(rows, out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
