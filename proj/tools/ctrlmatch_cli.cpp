#include "ctrlmatch/examples.hpp"

#include <CLI11.hpp>

#include <cstdio>

int main(int argc, char** argv) {
    CLI::App app{"controller/observer matching toolkit"};
    std::string config_path;
    std::string out_dir = ".";
    std::optional<uint64_t> seed;
    std::optional<double> tol;
    bool list_examples = false;

    app.add_option("--config", config_path, "path to a v1 job config (JSON)");
    app.add_option("--out", out_dir, "output directory for result.json and traces");
    app.add_option("--seed", seed, "override the config's RNG seed");
    app.add_option("--tol", tol, "override the solver tolerance");
    app.add_flag("--list-examples", list_examples, "print the packaged example names");

    CLI11_PARSE(app, argc, argv);

    if (list_examples) {
        for (const auto& name : ctrlmatch::examples_list()) std::printf("%s\n", name.c_str());
        return 0;
    }
    if (config_path.empty()) {
        std::fprintf(stderr, "error: --config is required (or use --list-examples)\n");
        return 4;
    }
    return ctrlmatch::run_job(config_path, out_dir, seed, tol);
}
