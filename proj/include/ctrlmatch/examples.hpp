#pragma once

#include "ctrlmatch/io.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ctrlmatch {

/// Names of the packaged end-to-end examples.
std::vector<std::string> examples_list();

/// Runs one packaged example, writing traces into out_dir; returns the
/// result document.
Json run_example(const std::string& name, uint64_t seed, const std::string& out_dir);

/// CLI driver: reads a v1 job config, runs it, writes result.json (and any
/// traces) into out_dir. Returns the process exit code:
/// 0 ok, 2 domain error, 3 numerical failure, 4 config parse error, 5 I/O.
int run_job(const std::string& config_path, const std::string& out_dir,
            std::optional<uint64_t> seed_override, std::optional<double> tol_override);

}  // namespace ctrlmatch
