#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace orbfree {

// invalid spec: exit code 2
struct SpecError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// numeric failure after partial artifacts were written: exit code 3
struct NonConvergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunOptions {
    std::optional<std::string> command; // must match the spec's command when both are given
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> out;
    bool verify = false;
};

struct RunOutcome {
    int exit_code = 0;
    std::string config_hash;
    std::string report;   // report JSON as written
    std::string message;  // diagnostic for exit codes 2 and 3
    std::vector<std::string> artifacts;
};

std::vector<std::string> experiment_commands();

// spec text plus the directory relative paths resolve against
RunOutcome run_experiment(const std::string& spec_text, const std::string& base_dir, const RunOptions& opt);
RunOutcome run_experiment_file(const std::string& path, const RunOptions& opt);

} // namespace orbfree
