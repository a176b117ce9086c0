#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "orbfree/experiment.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"orbital free pressure experiments"};
    app.require_subcommand(0, 1);

    std::string spec;
    long long seed = -1;
    int threads = 0;
    std::string out;
    bool verify = false;
    auto add_flags = [&](CLI::App* a) {
        a->add_option("--spec", spec, "experiment spec (JSON)")->required()->check(CLI::ExistingFile);
        a->add_option("--seed", seed, "override the spec seed")->check(CLI::NonNegativeNumber);
        a->add_option("--threads", threads, "worker threads (default: logical cores)")->check(CLI::PositiveNumber);
        a->add_option("--out", out, "output directory");
        a->add_flag("--verify", verify, "validate the spec without computing");
    };
    add_flags(&app);
    app.get_option("--spec")->required(false);
    std::string forced;
    for (const auto& name : orbfree::experiment_commands()) {
        CLI::App* sub = app.add_subcommand(name, "run a " + name + " spec");
        add_flags(sub);
        sub->callback([&forced, name] { forced = name; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    if (spec.empty()) {
        std::cerr << "error: --spec is required\n";
        return 2;
    }

    orbfree::RunOptions opt;
    if (seed >= 0) opt.seed = static_cast<std::uint64_t>(seed);
    if (threads > 0) opt.threads = threads;
    if (!out.empty()) opt.out = out;
    opt.verify = verify;
    if (!forced.empty()) opt.command = forced;

    orbfree::RunOutcome r;
    try {
        r = orbfree::run_experiment_file(spec, opt);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    if (r.exit_code == 2) {
        std::cerr << "invalid spec: " << r.message << "\n";
        return 2;
    }
    if (r.exit_code == 3) std::cerr << "not converged: " << r.message << "\n";
    std::cout << "config " << r.config_hash << "\n";
    for (const auto& a : r.artifacts) std::cout << "wrote " << a << "\n";
    return r.exit_code;
}
