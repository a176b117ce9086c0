#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "orbfree/experiment.hpp"

using namespace orbfree;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    fs::path p = fs::temp_directory_path() / "orbfree_cli_tests" / name;
    fs::remove_all(p);
    return p;
}

RunOutcome run(const std::string& spec, const std::string& out, bool verify = false)
{
    RunOptions opt;
    opt.out = scratch(out).string();
    opt.verify = verify;
    return run_experiment(spec, ".", opt);
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

const char* pressure_zero = R"({"command": "pressure", "threads": 1,
  "microstates": {"measures": ["semicircle:1", "bernoulli:1"], "N": [3, 5]},
  "h": "0", "gibbs": {"sweeps": 100, "burn_in": 20, "grid": 3}})";

} // namespace

TEST_CASE("pressure and eta runs")
{
    RunOutcome r = run(pressure_zero, "p0");
    REQUIRE(r.exit_code == 0);
    auto j = nlohmann::json::parse(r.report);
    CHECK(j["config_hash"] == r.config_hash);
    for (const auto& p : j["result"]["points"]) CHECK(p["pressure"]["value"].get<double>() == 0.0);

    RunOutcome e = run(R"({"command": "eta", "threads": 1,
      "microstates": {"measures": ["semicircle:1", "uniform:-1,1"], "N": [6]},
      "target": {"kind": "free_empirical", "degree": 3}, "eta": {"zero_only": true}})", "eta0");
    REQUIRE(e.exit_code == 0);
    auto ej = nlohmann::json::parse(e.report);
    CHECK(ej["result"]["points"][0]["value"].get<double>() == 0.0);
}

TEST_CASE("artifacts and manifest")
{
    RunOptions opt;
    fs::path out = scratch("art");
    opt.out = out.string();
    RunOutcome r = run_experiment(pressure_zero, ".", opt);
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(out / "report.json"));
    CHECK(fs::exists(out / "traces_N3.csv"));
    auto m = nlohmann::json::parse(slurp(out / "manifest.json"));
    CHECK(m["config_hash"] == r.config_hash);
    CHECK(m["versions"].contains("gmp"));
    std::string csv = slurp(out / "traces_N3.csv");
    CHECK(csv.rfind("sweep,beta,energy,acceptance\n", 0) == 0);
}

TEST_CASE("validation failures exit with code 2")
{
    RunOutcome bad = run(R"({"command": "pressure",
      "microstates": {"measures": ["semicircle:1", "semicircle:1"], "N": [4]},
      "h": "x[1,1]*x[2,1] + * x[1,1]"})", "bad");
    CHECK(bad.exit_code == 2);
    CHECK(bad.message.find("position 16") != std::string::npos);

    RunOutcome sa = run(R"({"command": "pressure",
      "microstates": {"measures": ["semicircle:1", "semicircle:1"], "N": [4]},
      "h": "i*x[1,1]*x[2,1]"})", "sa", true);
    CHECK(sa.exit_code == 2);
    CHECK(sa.message.find("x[1,1]*x[2,1]") != std::string::npos);

    RunOutcome idx = run(R"({"command": "pressure",
      "microstates": {"measures": ["semicircle:1", "semicircle:1"], "N": [4]},
      "h": "x[3,1]"})", "idx", true);
    CHECK(idx.exit_code == 2);

    CHECK(run(R"({"command": "nope"})", "nope").exit_code == 2);
    CHECK(run("{not json", "nj").exit_code == 2);

    RunOptions opt;
    opt.command = "eta";
    opt.out = scratch("mismatch").string();
    CHECK(run_experiment(pressure_zero, ".", opt).exit_code == 2);
}

TEST_CASE("verify mode")
{
    RunOutcome ok = run(pressure_zero, "verify", true);
    CHECK(ok.exit_code == 0);
    auto j = nlohmann::json::parse(ok.report);
    CHECK(j["status"] == "valid");
    CHECK(!fs::exists(scratch("verify") / "traces_N3.csv"));

    // target marginals that the microstates cannot realize are flagged, not rejected
    RunOutcome flag = run(R"({"command": "eta",
      "microstates": {"measures": ["semicircle:1", "uniform:-1,1"], "N": [6]},
      "target": {"kind": "free_measures", "degree": 2}})", "flag", true);
    CHECK(flag.exit_code == 0);
    CHECK(!nlohmann::json::parse(flag.report)["flags"].empty());
}

TEST_CASE("non-convergence exits with code 3 and keeps artifacts")
{
    RunOptions opt;
    fs::path out = scratch("nc");
    opt.out = out.string();
    RunOutcome r = run_experiment(R"({"command": "sd",
      "problem": {"h": "0.01*x[1,1]*x[2,1]", "tau0": ["bernoulli:1", "semicircle:1"], "D": 8,
                  "closure_levels": 0, "max_iter": 3}})", ".", opt);
    CHECK(r.exit_code == 3);
    CHECK(fs::exists(out / "sd_history.csv"));
    CHECK(nlohmann::json::parse(slurp(out / "report.json"))["status"] == "not_converged");
}

TEST_CASE("identical seeds give identical reports")
{
    const char* spec = R"({"command": "freeness", "seed": 9, "threads": 2,
      "microstates": {"measures": ["bernoulli:1", "semicircle:1"], "N": [6]}, "samples": 4, "m": 3})";
    RunOutcome a = run(spec, "rep_a"), b = run(spec, "rep_b");
    REQUIRE(a.exit_code == 0);
    CHECK(a.report == b.report);

    RunOptions other;
    other.out = scratch("rep_c").string();
    other.seed = 10;
    RunOutcome c = run_experiment(spec, ".", other);
    CHECK(c.config_hash != a.config_hash);
    CHECK(c.report != a.report);

    // the output directory is not part of the configuration
    CHECK(a.config_hash == b.config_hash);
}
