#include "orbfree/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include <Eigen/Core>
#include <boost/version.hpp>
#include <gmp.h>
#include <gsl/gsl_version.h>
#include <json.hpp>

#include "orbfree/parallel.hpp"
#include "orbfree/parser.hpp"
#include "orbfree/pressure.hpp"
#include "orbfree/sdsolver.hpp"

namespace orbfree {

namespace fs = std::filesystem;
using nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

const char* const version = "0.1.0";

struct Context {
    json spec;
    fs::path base;
    fs::path out;
    std::uint64_t seed = 1;
    int threads = 1;
    bool verify = false;
    std::string hash;
    ojson tolerances = ojson::object();
    ojson flags = ojson::array();
    std::vector<std::string> artifacts;

    fs::path resolve(const std::string& p) const { return fs::path(p).is_absolute() ? fs::path(p) : base / p; }

    std::string write_artifact(const std::string& name, const std::string& text)
    {
        fs::create_directories(out);
        std::ofstream f(out / name, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + (out / name).string());
        f << text;
        artifacts.push_back(name);
        return text;
    }

    std::string artifact_path(const std::string& name)
    {
        fs::create_directories(out);
        artifacts.push_back(name);
        return (out / name).string();
    }
};

template <class T>
T get_or(const json& j, const char* key, T fallback)
{
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw SpecError(std::string("field '") + key + "': " + e.what());
    }
}

const json& require(const json& j, const char* key)
{
    if (!j.contains(key)) throw SpecError(std::string("missing field '") + key + "'");
    return j.at(key);
}

std::vector<int> int_list(const json& j)
{
    if (j.is_number_integer()) return {j.get<int>()};
    if (!j.is_array()) throw SpecError("expected an integer or a list of integers");
    std::vector<int> out;
    for (const auto& v : j) out.push_back(v.get<int>());
    return out;
}

NCPoly parse_h(const json& spec, const char* key, const FamilyLayout& layout, const std::string& fallback = "")
{
    std::string text = spec.contains(key) ? spec.at(key).get<std::string>() : fallback;
    if (text.empty()) throw SpecError(std::string("missing field '") + key + "'");
    NCPoly p;
    try {
        p = parse(text, layout);
    } catch (const std::invalid_argument& e) {
        throw SpecError(std::string(key) + ": " + e.what());
    }
    if (uses_uz(p)) throw SpecError(std::string(key) + ": only x letters are allowed");
    if (auto w = trace_reality_violation(p))
        throw SpecError(std::string(key) + " is not self-adjoint: the class of " + to_string(*w) +
                        " has no matching adjoint term");
    return p;
}

GibbsSettings gibbs_settings(const Context& ctx)
{
    GibbsSettings s;
    s.seed = ctx.seed;
    s.thermo.threads = ctx.threads;
    if (!ctx.spec.contains("gibbs")) return s;
    const json& g = ctx.spec.at("gibbs");
    s.sweeps = get_or(g, "sweeps", s.sweeps);
    s.burn_in = get_or(g, "burn_in", s.burn_in);
    s.thin = get_or(g, "thin", s.thin);
    s.eps = get_or(g, "eps", s.eps);
    s.autotune = get_or(g, "autotune", s.autotune);
    std::string method = get_or<std::string>(g, "method", "thermodynamic");
    if (method == "direct") s.method = LogZMethod::Direct;
    else if (method != "thermodynamic") throw SpecError("gibbs.method must be 'thermodynamic' or 'direct'");
    s.thermo.grid = get_or(g, "grid", s.thermo.grid);
    s.thermo.simpson = get_or(g, "simpson", s.thermo.simpson);
    s.thermo.min_ess_fraction = get_or(g, "min_ess_fraction", s.thermo.min_ess_fraction);
    if (s.sweeps < 1 || s.burn_in < 0 || s.thin < 1 || s.thermo.grid < 2 || !(s.eps > 0))
        throw SpecError("gibbs settings out of range");
    if (s.thermo.simpson && s.thermo.grid % 2 == 0) throw SpecError("Simpson's rule needs an odd grid");
    return s;
}

struct Microstates {
    FamilyLayout layout;
    std::vector<MatrixTuple> tuples;
    std::vector<SpectralMeasure> measures; // per variable, when built from measures
};

Microstates build_microstates(Context& ctx)
{
    const json& m = require(ctx.spec, "microstates");
    Microstates out;
    try {
        if (m.contains("files")) {
            for (const auto& f : m.at("files")) {
                fs::path p = ctx.resolve(f.get<std::string>());
                if (!fs::exists(p)) throw SpecError("microstate file not found: " + p.string());
                out.tuples.push_back(read_matrix_file(p.string()));
            }
            if (out.tuples.empty()) throw SpecError("microstates.files is empty");
            out.layout = out.tuples.front().layout;
            if (ctx.spec.contains("R")) out.layout.R = ctx.spec.at("R").get<double>();
            for (auto& t : out.tuples) {
                if (t.layout.r != out.layout.r) throw SpecError("microstate files disagree on the layout");
                t.layout.R = out.layout.R;
                t.validate();
            }
            return out;
        }
        for (const auto& s : require(m, "measures")) out.measures.push_back(SpectralMeasure::parse(s.get<std::string>()));
        std::vector<int> sizes = m.contains("sizes") ? int_list(m.at("sizes")) : std::vector<int>(out.measures.size(), 1);
        double R = 0;
        for (const auto& mu : out.measures) R = std::max(R, mu.support_radius());
        R = get_or(ctx.spec, "R", R);
        out.layout = FamilyLayout(sizes, R);
        out.layout.validate();
        if (int(out.measures.size()) != out.layout.variable_count()) throw SpecError("one measure per variable required");
        for (const auto& mu : out.measures)
            if (mu.support_radius() > R) throw SpecError("measure " + mu.spec() + " has support beyond R");
        for (int N : int_list(require(m, "N"))) {
            if (N < 1) throw SpecError("matrix size must be positive");
            out.tuples.push_back(quantile_tuple(out.layout, out.measures, N));
        }
    } catch (const SpecError&) {
        throw;
    } catch (const std::exception& e) {
        throw SpecError(std::string("microstates: ") + e.what());
    }
    return out;
}

MomentTable own_marginal_free_product(const MatrixTuple& xi, int m)
{
    MomentTable joint = empirical_state(xi, m);
    std::vector<MomentTable> marg;
    for (int i = 1; i <= xi.layout.n; ++i) marg.push_back(family_marginal(joint, i));
    return free_product(xi.layout, marg, m);
}

// target state for the k-th microstate tuple
std::function<MomentTable(std::size_t)> build_target(Context& ctx, const Microstates& ms)
{
    const json& t = require(ctx.spec, "target");
    std::string kind = get_or<std::string>(t, "kind", "free_empirical");
    int m = get_or(t, "degree", 4);
    if (m < 1) throw SpecError("target.degree must be positive");
    if (kind == "free_empirical") {
        auto tuples = ms.tuples;
        return [tuples, m](std::size_t k) { return own_marginal_free_product(tuples[k], m); };
    }
    if (kind == "free_measures") {
        if (ms.measures.empty()) throw SpecError("target kind free_measures needs measure microstates");
        for (int r : ms.layout.r)
            if (r != 1) throw SpecError("target kind free_measures needs single-variable families");
        std::vector<MomentTable> marg;
        for (const auto& mu : ms.measures) marg.push_back(measure_table(mu, m, ms.layout.R));
        MomentTable table = free_product(ms.layout, marg, m);
        return [table](std::size_t) { return table; };
    }
    if (kind == "file") {
        fs::path p = ctx.resolve(require(t, "path").get<std::string>());
        if (!fs::exists(p)) throw SpecError("target file not found: " + p.string());
        MomentTable table;
        try {
            table = read_moment_table(p.string());
        } catch (const std::exception& e) {
            throw SpecError(std::string("target: ") + e.what());
        }
        if (!(table.layout() == ms.layout)) throw SpecError("target layout differs from the microstate layout");
        if (table.alphabet() != Alphabet::X) throw SpecError("target must be an x table");
        return [table](std::size_t) { return table; };
    }
    throw SpecError("target.kind must be free_empirical, free_measures or file");
}

ojson estimate_json(const Estimate& e)
{
    return ojson{{"value", e.value}, {"stderr", e.stderr}};
}

ojson moments_json(const MomentTable& t, const MomentTable* err = nullptr)
{
    ojson rows = ojson::array();
    for (const auto& w : t.keys()) {
        if (w.empty()) continue;
        cplx v = t.value(w);
        ojson r{{"word", to_string(w)}, {"re", v.real()}, {"im", v.imag()}};
        if (err) r["stderr"] = err->value(w).real();
        rows.push_back(r);
    }
    return rows;
}

ojson pressure_json(Context& ctx, const PressureEstimate& est)
{
    ojson points = ojson::array();
    for (const auto& p : est.points) {
        std::string csv = "traces_N" + std::to_string(p.N) + ".csv";
        write_trace_csv(ctx.artifact_path(csv), p.traces);
        points.push_back(ojson{{"N", p.N},
                               {"log_z", estimate_json(p.log_z)},
                               {"pressure", estimate_json(p.normalized)},
                               {"within_norm_bound", p.within_range},
                               {"traces", csv}});
    }
    ojson fit{{"available", est.fit.available}};
    if (est.fit.available) {
        fit["a"] = est.fit.a;
        fit["b"] = est.fit.b;
        fit["r2"] = est.fit.r2;
        fit["residuals"] = est.fit.residuals;
    }
    return ojson{{"h", est.h}, {"source", est.source}, {"norm_bound", est.norm_bound}, {"points", points}, {"fit_a_plus_b_over_N", fit}};
}

// ---- commands ----

ojson cmd_pressure(Context& ctx)
{
    Microstates ms = build_microstates(ctx);
    GibbsSettings gs = gibbs_settings(ctx);
    std::string source = ctx.spec.at("microstates").contains("files") ? "files" : "quantile";
    ctx.tolerances["norm_bound_slack_stderr"] = 3;
    if (ctx.spec.contains("penalty")) {
        const json& p = ctx.spec.at("penalty");
        int m = get_or(p, "m", 1);
        double beta = get_or(p, "beta", 1.0), delta = get_or(p, "delta", 1.0);
        if (m < 1 || !(delta > 0) || beta < 0) throw SpecError("penalty needs m >= 1, beta >= 0, delta > 0");
        auto target = build_target(ctx, ms);
        if (target(0).degree() < m) throw SpecError("penalty degree exceeds the target degree");
        if (ctx.verify) return ojson{{"penalty", ojson{{"m", m}, {"beta", beta}, {"delta", delta}}}};
        // the penalty is rebuilt per N when the target depends on N
        ojson points = ojson::array();
        std::string h;
        std::vector<PressurePoint> all;
        double bound = 0;
        for (std::size_t k = 0; k < ms.tuples.size(); ++k) {
            TensorNCPoly q = penalty_poly(target(k), m, beta, delta);
            GibbsSettings gk = gs;
            gk.seed = derive_seed(gs.seed, k);
            PressureEstimate e = double_pressure(q, {ms.tuples[k]}, gk, source);
            h = e.h;
            bound = std::max(bound, e.norm_bound);
            all.push_back(e.points.front());
        }
        PressureEstimate est;
        est.h = h;
        est.source = source;
        est.norm_bound = bound;
        est.points = all;
        est.fit = fit_inverse_n(all);
        ojson r = pressure_json(ctx, est);
        r["penalty"] = ojson{{"m", m}, {"beta", beta}, {"delta", delta}, {"lower_bound", -beta}};
        return r;
    }
    NCPoly h = parse_h(ctx.spec, "h", ms.layout);
    if (ctx.verify) return ojson{{"h", to_string(h)}};
    return pressure_json(ctx, pressure_estimate(h, ms.tuples, gs, source));
}

EtaSettings eta_settings(const Context& ctx)
{
    EtaSettings s;
    s.seed = ctx.seed;
    if (!ctx.spec.contains("eta")) return s;
    const json& e = ctx.spec.at("eta");
    s.samples = get_or(e, "samples", s.samples);
    s.basis_degree = get_or(e, "basis_degree", s.basis_degree);
    s.max_evals = get_or(e, "max_evals", s.max_evals);
    s.restarts = get_or(e, "restarts", s.restarts);
    s.initial_step = get_or(e, "initial_step", s.initial_step);
    s.marginal_tol = get_or(e, "marginal_tol", s.marginal_tol);
    s.include_zero_only = get_or(e, "zero_only", s.include_zero_only);
    if (s.samples < 1 || s.basis_degree < 0 || s.max_evals < 1 || s.restarts < 0) throw SpecError("eta settings out of range");
    return s;
}

ojson eta_json(const EtaEstimate& e)
{
    ojson r{{"N", e.N},
            {"value", e.value},
            {"basis_size", e.basis.size()},
            {"evaluations", e.evaluations},
            {"converged", e.converged},
            {"simplex_size", e.simplex_size},
            {"coefficients", e.coefficients}};
    if (e.witness) {
        ojson ray = ojson::array();
        for (auto [a, v] : e.witness->ray) ray.push_back(ojson{{"alpha", a}, {"objective", v}});
        r["witness"] = ojson{{"family", e.witness->family},
                             {"word", to_string(e.witness->word)},
                             {"p", to_string(e.witness->p)},
                             {"gap", e.witness->gap},
                             {"ray", ray}};
        r["diverges"] = true;
    }
    return r;
}

void flag_marginals(Context& ctx, const Microstates& ms, const std::function<MomentTable(std::size_t)>& target, double tol)
{
    for (std::size_t k = 0; k < ms.tuples.size(); ++k)
        if (auto w = marginal_witness(target(k), ms.tuples[k], tol))
            ctx.flags.push_back("target marginal of family " + std::to_string(w->family) + " differs from the N=" +
                                std::to_string(ms.tuples[k].N) + " microstates at " + to_string(w->word));
}

ojson cmd_eta(Context& ctx)
{
    Microstates ms = build_microstates(ctx);
    auto target = build_target(ctx, ms);
    EtaSettings es = eta_settings(ctx);
    ctx.tolerances["marginal_tol"] = es.marginal_tol;
    flag_marginals(ctx, ms, target, es.marginal_tol);
    if (ctx.verify) return ojson::object();
    ojson points = ojson::array();
    for (std::size_t k = 0; k < ms.tuples.size(); ++k) {
        EtaSettings ek = es;
        ek.seed = derive_seed(es.seed, k);
        points.push_back(eta_json(eta_estimate(target(k), ms.tuples[k], ek)));
    }
    return ojson{{"points", points}};
}

ojson cmd_gibbs(Context& ctx)
{
    const json& s = ctx.spec;
    GibbsSettings gs = gibbs_settings(ctx);
    std::string kind = get_or<std::string>(s, "ensemble", "orbital");
    int m = get_or(s, "moment_degree", 0);
    double beta = get_or(s, "beta", 1.0);
    if (m < 0) throw SpecError("moment_degree must be >= 0");
    std::vector<GibbsConfig> configs;
    Microstates ms;
    std::function<MomentTable(std::size_t)> target;
    if (kind == "orbital") {
        ms = build_microstates(ctx);
        NCPoly h = parse_h(s, "h", ms.layout);
        for (std::size_t k = 0; k < ms.tuples.size(); ++k)
            configs.push_back(orbital_config(h, ms.tuples[k], gs, derive_seed(gs.seed, k)));
        if (s.contains("target")) target = build_target(ctx, ms);
    } else if (kind == "matrix") {
        std::vector<int> sizes = s.contains("sizes") ? int_list(s.at("sizes")) : std::vector<int>{1, 1};
        FamilyLayout layout(sizes, get_or(s, "R", 1.0));
        try {
            layout.validate();
        } catch (const std::exception& e) {
            throw SpecError(e.what());
        }
        NCPoly h = parse_h(s, "h", layout);
        auto Ns = int_list(require(s, "N"));
        for (std::size_t k = 0; k < Ns.size(); ++k) {
            GibbsConfig c;
            c.kind = EnsembleKind::Matrix;
            c.N = Ns[k];
            c.R = layout.R;
            c.h = h;
            c.sweeps = gs.sweeps;
            c.burn_in = gs.burn_in;
            c.thin = gs.thin;
            c.eps = gs.eps;
            c.autotune = gs.autotune;
            c.seed = derive_seed(gs.seed, k);
            configs.push_back(c);
        }
    } else {
        throw SpecError("ensemble must be 'orbital' or 'matrix'");
    }
    double delta = get_or(s, "delta", 0.1);
    for (auto& c : configs) {
        c.beta = beta;
        c.moment_degree = m;
        try {
            c.validate();
        } catch (const std::exception& e) {
            throw SpecError(e.what());
        }
    }
    if (target && m == 0) throw SpecError("occupancy needs moment_degree >= 1");
    if (ctx.verify) return ojson::object();

    fs::create_directories(ctx.out);
    std::vector<ojson> chains(configs.size());
    parallel_for(configs.size(), ctx.threads, [&](std::size_t k) {
        GibbsChain chain(configs[k]);
        chain.run();
        const int N = configs[k].N;
        std::string tag = "_N" + std::to_string(N) + "_" + std::to_string(k);
        write_trace_csv((ctx.out / ("trace" + tag + ".csv")).string(), {chain.trace()});
        {
            std::ofstream f(ctx.out / ("checkpoint" + tag + ".json"), std::ios::binary);
            f << chain.checkpoint();
        }
        ojson r{{"N", N},
                {"config_hash", config_hash(config_json(configs[k]))},
                {"acceptance", chain.acceptance_rate()},
                {"eps", chain.eps()},
                {"mean_coupling", estimate_json(batch_mean(chain.coupling_samples()))},
                {"trace", "trace" + tag + ".csv"},
                {"checkpoint", "checkpoint" + tag + ".json"}};
        if (m > 0) {
            MeanState st = mean_tracial_state(chain, m);
            r["mean_state"] = moments_json(st.mean, &st.stderr);
            if (target) {
                Occupancy o = occupancy(chain, target(k), std::min(m, target(k).degree()), delta);
                r["occupancy"] = ojson{{"delta", delta}, {"fraction", o.fraction}, {"log_over_N2", o.log_over_N2}};
            }
        }
        chains[k] = r;
    });
    for (std::size_t k = 0; k < configs.size(); ++k) {
        ctx.artifacts.push_back(chains[k]["trace"].get<std::string>());
        ctx.artifacts.push_back(chains[k]["checkpoint"].get<std::string>());
    }
    return ojson{{"ensemble", kind}, {"beta", beta}, {"chains", chains}};
}

SDProblem sd_problem(Context& ctx)
{
    const json& p = require(ctx.spec, "problem");
    SDProblem prob;
    try {
        prob = sd_problem_from_json(p.dump(), ctx.base.string());
        prob.validate();
    } catch (const std::exception& e) {
        throw SpecError(std::string("problem: ") + e.what());
    }
    if (auto w = trace_reality_violation(prob.h))
        throw SpecError("h is not self-adjoint: the class of " + to_string(*w) + " has no matching adjoint term");
    for (const auto& w : prob.warnings()) ctx.flags.push_back(w);
    ctx.tolerances["sd_tol"] = prob.tol;
    return prob;
}

ojson sd_report_json(const SDReport& r)
{
    return ojson{{"converged", r.converged},
                 {"iterations", r.iterations},
                 {"residual", r.residual},
                 {"max_delta", r.max_delta},
                 {"last_ratio", r.history.empty() ? 0.0 : r.history.back().ratio},
                 {"warnings", r.warnings}};
}

SDResult solve_with_artifacts(Context& ctx, const SDProblem& prob)
{
    SDResult res = sd_solve(prob);
    write_sd_history_csv(ctx.artifact_path("sd_history.csv"), res.report);
    write_moment_table(ctx.artifact_path("sd_table.json"), res.solution.table());
    return res;
}

ojson cmd_sd(Context& ctx)
{
    SDProblem prob = sd_problem(ctx);
    int pf = get_or(ctx.spec, "pushforward_degree", 0);
    if (ctx.verify) return ojson::object();
    SDResult res = solve_with_artifacts(ctx, prob);
    ojson r{{"h", to_string(prob.h)}, {"D", prob.D}, {"solver", sd_report_json(res.report)}, {"table", "sd_table.json"},
            {"history", "sd_history.csv"}};
    if (pf > 0) r["x_moments"] = moments_json(pushforward_x(res.solution, pf));
    return r;
}

ojson cmd_liberation(Context& ctx)
{
    SDProblem prob = sd_problem(ctx);
    int m = get_or(ctx.spec, "m", 3);
    double factor = get_or(ctx.spec, "tolerance_factor", 10.0);
    ctx.tolerances["liberation"] = factor * prob.tol;
    if (ctx.verify) return ojson::object();
    SDResult res = solve_with_artifacts(ctx, prob);
    ojson r{{"h", to_string(prob.h)}, {"solver", sd_report_json(res.report)}};
    if (res.report.converged) {
        double dev = liberation_check(res.solution, prob.h, m);
        r["liberation"] = ojson{{"m", m}, {"max_deviation", dev}, {"tolerance", factor * prob.tol}, {"ok", dev <= factor * prob.tol}};
    }
    return r;
}

ojson cmd_freeness(Context& ctx)
{
    Microstates ms = build_microstates(ctx);
    int samples = get_or(ctx.spec, "samples", 20), m = get_or(ctx.spec, "m", 4);
    std::string reference = get_or<std::string>(ctx.spec, "reference", "empirical_marginals");
    if (samples < 1 || m < 1) throw SpecError("samples and m must be positive");
    if (reference != "empirical_marginals" && reference != "measures") throw SpecError("reference must be empirical_marginals or measures");
    if (reference == "measures" && ms.measures.empty()) throw SpecError("reference 'measures' needs measure microstates");
    if (reference == "measures")
        for (int r : ms.layout.r)
            if (r != 1) throw SpecError("reference 'measures' needs single-variable families");
    ctx.tolerances["distance_bound"] = "10/N";
    if (ctx.verify) return ojson::object();
    ojson points = ojson::array();
    for (std::size_t k = 0; k < ms.tuples.size(); ++k) {
        const MatrixTuple& xi = ms.tuples[k];
        MomentTable ref;
        if (reference == "measures") {
            std::vector<MomentTable> marg;
            for (const auto& mu : ms.measures) marg.push_back(measure_table(mu, m, ms.layout.R));
            ref = free_product(ms.layout, marg, m);
        } else {
            ref = own_marginal_free_product(xi, m);
        }
        std::vector<double> d(samples);
        parallel_for(samples, ctx.threads, [&](std::size_t s) {
            Rng rng(derive_seed(ctx.seed, k, s));
            std::vector<Matrix> V;
            for (int i = 0; i < xi.layout.n; ++i) V.push_back(haar_unitary(xi.N, rng));
            d[s] = moment_distance(empirical_orbital_state(V, xi, m), ref, m);
        });
        double mean = 0;
        for (double x : d) mean += x / samples;
        points.push_back(ojson{{"N", xi.N},
                               {"mean_distance", mean},
                               {"max_distance", *std::max_element(d.begin(), d.end())},
                               {"bound", 10.0 / xi.N},
                               {"ok", mean <= 10.0 / xi.N}});
    }
    return ojson{{"m", m}, {"samples", samples}, {"reference", reference}, {"points", points}};
}

ojson cmd_property_suite(Context& ctx)
{
    Microstates ms = build_microstates(ctx);
    NCPoly h1 = parse_h(ctx.spec, "h1", ms.layout), h2 = parse_h(ctx.spec, "h2", ms.layout);
    PropertyOptions opt;
    opt.alpha = get_or(ctx.spec, "alpha", opt.alpha);
    opt.constant = get_or(ctx.spec, "constant", opt.constant);
    if (ctx.spec.contains("q")) opt.q = parse(ctx.spec.at("q").get<std::string>(), ms.layout);
    int samples = get_or(ctx.spec, "samples", 64);
    std::vector<std::vector<int>> groups;
    if (ctx.spec.contains("groups")) groups = ctx.spec.at("groups").get<std::vector<std::vector<int>>>();
    if (!(opt.alpha >= 0 && opt.alpha <= 1) || samples < 1) throw SpecError("alpha must lie in [0, 1], samples >= 1");
    double tol = get_or(ctx.spec, "tolerance", 1e-9);
    ctx.tolerances["property"] = tol;
    if (ctx.verify) return ojson::object();
    ojson points = ojson::array();
    for (std::size_t k = 0; k < ms.tuples.size(); ++k) {
        std::uint64_t seed = derive_seed(ctx.seed, k);
        SampleSet set;
        try {
            set = groups.empty() ? SampleSet::haar(ms.tuples[k], samples, seed) : SampleSet::product(ms.tuples[k], groups, samples, seed);
        } catch (const std::invalid_argument& e) {
            throw SpecError(e.what());
        }
        PropertyReport r = finite_N_property_suite(h1, h2, set, opt);
        ojson p{{"N", ms.tuples[k].N},
                {"samples", set.size()},
                {"lipschitz_gap", r.lipschitz_gap},
                {"lipschitz_sample_sup", r.lipschitz_sample_sup},
                {"lipschitz_norm_bound", r.lipschitz_norm_bound},
                {"monotone_margin", r.monotone_margin},
                {"convexity_margin", r.convexity_margin},
                {"shift_error", r.shift_error},
                {"max_violation", r.max_violation()},
                {"ok", r.max_violation() <= tol}};
        p["additivity_error"] = r.additivity_error ? ojson(*r.additivity_error) : ojson(nullptr);
        points.push_back(p);
    }
    return ojson{{"h1", to_string(h1)}, {"h2", to_string(h2)}, {"points", points}};
}

ojson cmd_relation(Context& ctx)
{
    std::vector<SpectralMeasure> marg;
    try {
        for (const auto& s : require(ctx.spec, "marginals")) marg.push_back(SpectralMeasure::parse(s.get<std::string>()));
    } catch (const SpecError&) {
        throw;
    } catch (const std::exception& e) {
        throw SpecError(std::string("marginals: ") + e.what());
    }
    if (marg.empty()) throw SpecError("marginals is empty");
    double R = get_or(ctx.spec, "R", 0.0);
    if (!(R > 0)) throw SpecError("relation-check needs R > 0");
    for (const auto& mu : marg)
        if (mu.support_radius() > R) throw SpecError("marginal " + mu.spec() + " has support beyond R");
    FamilyLayout layout = FamilyLayout::singletons(int(marg.size()), R);
    NCPoly h = parse_h(ctx.spec, "h", layout);
    auto Ns = int_list(require(ctx.spec, "N"));
    GibbsSettings gs = gibbs_settings(ctx);
    ctx.tolerances["margin_stderr"] = 3;
    if (ctx.verify) return ojson::object();
    ojson points = ojson::array();
    for (std::size_t k = 0; k < Ns.size(); ++k) {
        GibbsSettings gk = gs;
        gk.seed = derive_seed(gs.seed, k);
        RelationReport r = pressure_relation_check(h, marg, Ns[k], R, gk);
        points.push_back(ojson{{"N", r.N},
                               {"matrix_pressure", estimate_json(r.matrix_pressure)},
                               {"chi_reference", r.chi_reference},
                               {"orbital_pressure", estimate_json(r.orbital_pressure)},
                               {"chi_sum", r.chi_sum},
                               {"lhs", r.lhs},
                               {"rhs", r.rhs},
                               {"margin", estimate_json(r.margin)},
                               {"ok", r.margin.value >= -3 * r.margin.stderr}});
    }
    return ojson{{"h", to_string(h)}, {"R", R}, {"points", points}};
}

using Command = ojson (*)(Context&);

const std::vector<std::pair<std::string, Command>>& command_table()
{
    static const std::vector<std::pair<std::string, Command>> table{
        {"pressure", cmd_pressure},       {"eta", cmd_eta},
        {"gibbs", cmd_gibbs},             {"sd", cmd_sd},
        {"freeness", cmd_freeness},       {"liberation", cmd_liberation},
        {"property-suite", cmd_property_suite}, {"relation-check", cmd_relation}};
    return table;
}

ojson versions()
{
    return ojson{{"orbfree", version},
                 {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                               std::to_string(EIGEN_MINOR_VERSION)},
                 {"gmp", gmp_version},
                 {"gsl", GSL_VERSION},
                 {"boost", BOOST_LIB_VERSION}};
}

} // namespace

std::vector<std::string> experiment_commands()
{
    std::vector<std::string> out;
    for (const auto& [name, f] : command_table()) out.push_back(name);
    return out;
}

RunOutcome run_experiment(const std::string& spec_text, const std::string& base_dir, const RunOptions& opt)
{
    RunOutcome outcome;
    Context ctx;
    Command cmd = nullptr;
    std::string name;
    try {
        try {
            ctx.spec = json::parse(spec_text);
        } catch (const json::parse_error& e) {
            throw SpecError(std::string("spec is not valid JSON: ") + e.what());
        }
        if (!ctx.spec.is_object()) throw SpecError("spec must be a JSON object");
        name = get_or<std::string>(ctx.spec, "command", opt.command.value_or(""));
        if (opt.command && *opt.command != name)
            throw SpecError("subcommand '" + *opt.command + "' does not match the spec command '" + name + "'");
        ctx.spec["command"] = name;
        for (const auto& [n, f] : command_table())
            if (n == name) cmd = f;
        if (!cmd) throw SpecError("unknown command '" + name + "'");
        if (opt.seed) ctx.spec["seed"] = *opt.seed;
        if (opt.threads) ctx.spec["threads"] = *opt.threads;
        ctx.seed = get_or<std::uint64_t>(ctx.spec, "seed", 1);
        ctx.threads = get_or(ctx.spec, "threads", default_threads());
        if (ctx.threads < 1) throw SpecError("threads must be >= 1");
        ctx.spec["seed"] = ctx.seed;
        ctx.spec["threads"] = ctx.threads;
        ctx.base = base_dir;
        ctx.out = opt.out ? fs::absolute(*opt.out) : ctx.resolve(get_or<std::string>(ctx.spec, "out", "out"));
        ctx.verify = opt.verify;
        json canonical = ctx.spec;
        canonical.erase("out");
        ctx.hash = config_hash(canonical.dump());
    } catch (const SpecError& e) {
        outcome.exit_code = 2;
        outcome.message = e.what();
        return outcome;
    }
    outcome.config_hash = ctx.hash;

    auto finish = [&](ojson result, const std::string& status) {
        ojson report;
        report["command"] = name;
        report["config_hash"] = ctx.hash;
        report["seed"] = ctx.seed;
        report["threads"] = ctx.threads;
        report["status"] = status;
        report["tolerances"] = ctx.tolerances;
        report["flags"] = ctx.flags;
        report["result"] = std::move(result);
        std::string file = ctx.verify ? "verify.json" : "report.json";
        outcome.report = ctx.write_artifact(file, report.dump(2) + "\n");
        ojson manifest;
        manifest["command"] = name;
        manifest["config_hash"] = ctx.hash;
        manifest["seed"] = ctx.seed;
        manifest["threads"] = ctx.threads;
        manifest["versions"] = versions();
        manifest["artifacts"] = ctx.artifacts;
        ctx.write_artifact("manifest.json", manifest.dump(2) + "\n");
        outcome.artifacts = ctx.artifacts;
    };

    try {
        ojson result = cmd(ctx);
        std::string status = "ok";
        if (result.contains("solver") && !result["solver"]["converged"].get<bool>()) status = "not_converged";
        finish(std::move(result), ctx.verify ? "valid" : status);
        if (status == "not_converged") {
            outcome.exit_code = 3;
            outcome.message = "solver did not converge; partial artifacts written";
        }
    } catch (const SpecError& e) {
        outcome.exit_code = 2;
        outcome.message = e.what();
    } catch (const ParseError& e) {
        outcome.exit_code = 2;
        outcome.message = e.what();
    } catch (const DirectMethodRefused& e) {
        outcome.exit_code = 3;
        outcome.message = e.what();
        finish(ojson{{"error", e.what()}}, "refused");
    } catch (const NonConvergence& e) {
        outcome.exit_code = 3;
        outcome.message = e.what();
        finish(ojson{{"error", e.what()}}, "not_converged");
    }
    return outcome;
}

RunOutcome run_experiment_file(const std::string& path, const RunOptions& opt)
{
    std::ifstream in(path);
    if (!in) {
        RunOutcome o;
        o.exit_code = 2;
        o.message = "cannot open spec file " + path;
        return o;
    }
    std::stringstream buf;
    buf << in.rdbuf();
    fs::path base = fs::path(path).parent_path();
    return run_experiment(buf.str(), base.empty() ? "." : base.string(), opt);
}

} // namespace orbfree
