// One line per acceptance criterion; exit status 1 if any criterion fails.
// Usage: orbfree_acceptance [criterion numbers...]

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "orbfree/experiment.hpp"
#include "orbfree/parallel.hpp"
#include "orbfree/parser.hpp"
#include "orbfree/pressure.hpp"
#include "orbfree/sdsolver.hpp"
#include "test_support.hpp"

using namespace orbfree;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...)
{
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

std::vector<SpectralMeasure> measures(std::initializer_list<const char*> specs)
{
    std::vector<SpectralMeasure> out;
    for (const char* s : specs) out.push_back(SpectralMeasure::parse(s));
    return out;
}

NCPoly restrict_families(const NCPoly& p, const std::set<int>& fams)
{
    NCPoly out(p.layout());
    for (const auto& [w, c] : p.terms()) {
        bool keep = true;
        for (const auto& g : w) keep = keep && fams.count(g.i);
        if (keep) out.add_term(w, c);
    }
    return out;
}

MomentTable own_free_target(const MatrixTuple& xi, int m)
{
    MomentTable joint = empirical_state(xi, m);
    std::vector<MomentTable> marg;
    for (int i = 1; i <= xi.layout.n; ++i) marg.push_back(family_marginal(joint, i));
    return free_product(xi.layout, marg, m);
}

// ---- 1: symbolic identities ----
Outcome symbolic_suite()
{
    std::mt19937_64 rng(2024);
    FamilyLayout layout({2, 1}, 2.0);
    const int count = 600;
    int failures = 0, checks = 0;
    auto check = [&](bool ok) {
        ++checks;
        failures += !ok;
    };
    std::vector<Derivation> uz{Derivation::unitary(1), Derivation::unitary(2)};
    std::vector<Derivation> xs{Derivation::fdq(1, 1), Derivation::fdq(1, 2), Derivation::fdq(2, 1),
                               Derivation::liberation(1), Derivation::liberation(2)};
    for (int k = 0; k < count; ++k) {
        bool x_alpha = k % 2 == 0;
        NCPoly p = testsupport::random_poly(rng, layout, 4, x_alpha), q = testsupport::random_poly(rng, layout, 4, x_alpha);
        NCPoly r = testsupport::random_poly(rng, layout, 4, x_alpha);
        // Leibniz
        for (const auto& d : x_alpha ? xs : uz)
            check(derive(d, p * q) == derive(d, p).right_multiply(q) + derive(d, q).left_multiply(p));
        // involution
        Coeff c = testsupport::random_coeff(rng);
        check(adjoint(adjoint(p)) == p);
        check(adjoint(p * q) == adjoint(q) * adjoint(p));
        check(adjoint(p * c + q) == adjoint(p) * c.conj() + adjoint(q));
        // normal form: products agree however they are bracketed, every stored word is reduced
        check((p * q) * r == p * (q * r));
        NCPoly pq = p * q;
        for (const auto& [w, cc] : pq.terms()) check(is_reduced(w) && reduce(w) == w);
        // liberation gradient against the contracted liberation derivation
        if (x_alpha) {
            NCPoly h = p + adjoint(p);
            for (int i = 1; i <= layout.n; ++i)
                check(liberation_gradient(i, h) == theta_bar(substitute_x(derive(Derivation::liberation(i), h))));
        }
    }
    // confluence: random reduction orders of raw words reach the same normal form
    for (int k = 0; k < count; ++k) {
        Word w;
        int len = std::uniform_int_distribution<int>(0, 12)(rng);
        for (int l = 0; l < len; ++l) {
            int pick = std::uniform_int_distribution<int>(0, 4)(rng), i = 1 + std::uniform_int_distribution<int>(0, 1)(rng);
            w.push_back(pick == 0 ? Generator::z(i, 1) : (pick % 2 ? Generator::u(i) : Generator::ustar(i)));
        }
        Word v = w;
        for (;;) {
            std::vector<std::size_t> spots;
            for (std::size_t j = 1; j < v.size(); ++j)
                if (v[j - 1].cancels(v[j])) spots.push_back(j - 1);
            if (spots.empty()) break;
            std::size_t j = spots[std::uniform_int_distribution<std::size_t>(0, spots.size() - 1)(rng)];
            v.erase(v.begin() + j, v.begin() + j + 2);
        }
        check(v == reduce(w));
    }
    return {failures == 0, fmt("%d random polynomials, %d exact checks, %d mismatches", count, checks, failures)};
}

// ---- 2: zero and single-family pressure ----
Outcome pressure_anchors()
{
    FamilyLayout layout({2, 1}, 1.0);
    auto mu = measures({"semicircle:1", "uniform:-1,1", "bernoulli:1"});
    NCPoly zero(layout);
    NCPoly single = parse("x[1,1]^2*x[1,2] + x[1,2]*x[1,1]^2 - 0.3*x[2,1]^3 + 0.7", layout);
    GibbsSettings gs;
    gs.sweeps = 200;
    gs.burn_in = 50;
    gs.thermo.grid = 5;
    double worst = 0;
    std::string where;
    for (int N : {1, 2, 4, 8, 16, 32}) {
        MatrixTuple xi = quantile_tuple(layout, mu, N);
        double expect = -trace_evaluate(single, xi).real();
        double z = pressure_estimate(zero, {xi}, gs).points[0].normalized.value;
        double s = pressure_estimate(single, {xi}, gs).points[0].normalized.value;
        SampleSet samples = SampleSet::haar(xi, 16, derive_seed(5, N));
        double ze = empirical_pressure(zero, samples), se = empirical_pressure(single, samples);
        for (double e : {std::abs(z), std::abs(ze), std::abs(s - expect), std::abs(se - expect)})
            if (e > worst) {
                worst = e;
                where = "N=" + std::to_string(N);
            }
    }
    return {worst <= 1e-12, fmt("max deviation %.2e over N in {1,...,32} (tolerance 1e-12)%s", worst,
                                where.empty() ? "" : (", worst at " + where).c_str())};
}

// ---- 3: finite-N property suite ----
Outcome property_suite()
{
    FamilyLayout layout({2, 1, 1}, 1.0);
    auto mu = measures({"semicircle:1", "uniform:-1,1", "arcsine:-1,1", "bernoulli:1"});
    std::mt19937_64 rng(31);
    double worst = -1e300, worst_add = 0;
    int runs = 0, additive = 0;
    for (int N : {2, 8}) {
        MatrixTuple xi = quantile_tuple(layout, mu, N);
        SampleSet s = SampleSet::product(xi, {{1, 2}, {3}}, 16, derive_seed(7, N));
        for (int k = 0; k < 20; ++k) {
            const Coeff scale(mpq_class(1, 10));
            NCPoly h1 = testsupport::random_selfadjoint(rng, layout, 3, true) * scale;
            NCPoly h2 = testsupport::random_selfadjoint(rng, layout, 3, true) * scale;
            if (k % 2 == 1) {
                h1 = restrict_families(h1, {1, 2});
                h2 = restrict_families(h2, {3});
            }
            PropertyOptions opt;
            opt.alpha = std::uniform_real_distribution<double>(0, 1)(rng);
            opt.constant = std::uniform_real_distribution<double>(0, 1)(rng);
            PropertyReport r = finite_N_property_suite(h1, h2, s, opt);
            worst = std::max(worst, r.max_violation());
            if (r.additivity_error) {
                ++additive;
                worst_add = std::max(worst_add, *r.additivity_error);
            }
            ++runs;
        }
    }
    return {worst <= 1e-9 && additive >= 20,
            fmt("%d pairs at N in {2,8}, max violation %.2e, additivity checked on %d pairs with max error %.2e "
                "(tolerance 1e-9)",
                runs, std::max(worst, 0.0), additive, worst_add)};
}

// ---- 4: partition function oracles ----
double u2_log_z(double t, double a1, double a2, double b1, double b2)
{
    // c = |W11|^2 is uniform on [0, 1] under Haar measure on U(2)
    auto f = [&](double c) {
        double tr = 0.5 * (c * (a1 * b1 + a2 * b2) + (1 - c) * (a1 * b2 + a2 * b1));
        return std::exp(-4.0 * t * tr);
    };
    return std::log(boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 0.0, 1.0, 10, 1e-14));
}

Outcome partition_oracles()
{
    FamilyLayout layout = FamilyLayout::singletons(2, 2.0);
    const double t = 0.8;
    NCPoly h = parse("0.8*x[1,1]*x[2,1]", layout);
    GibbsSettings gs;
    gs.sweeps = 100000;
    gs.burn_in = 2000;
    gs.thermo.grid = 11;
    gs.thermo.simpson = true;
    gs.seed = 4;

    MatrixTuple one = MatrixTuple::make(layout, {{Matrix::Constant(1, 1, 1.5)}, {Matrix::Constant(1, 1, -0.7)}});
    double exact1 = -t * 1.5 * -0.7;
    double got1 = log_partition(orbital_config(h, one, gs, 1), LogZMethod::Thermodynamic, gs.thermo).log_z.value;

    Matrix a = Matrix::Zero(2, 2), b = Matrix::Zero(2, 2);
    a(0, 0) = 1.5;
    a(1, 1) = -0.5;
    b(0, 0) = 2.0;
    b(1, 1) = -1.0;
    MatrixTuple two = MatrixTuple::make(layout, {{a}, {b}});
    double oracle = u2_log_z(t, 1.5, -0.5, 2.0, -1.0);
    LogZResult ti = log_partition(orbital_config(h, two, gs, 2), LogZMethod::Thermodynamic, gs.thermo);
    double err1 = std::abs(got1 - exact1), err2 = std::abs(ti.log_z.value - oracle);
    return {err1 <= 1e-12 && err2 <= 0.01,
            fmt("N=1 |log Z - (-t a b)| = %.1e (tol 1e-12); N=2 thermodynamic %.5f +- %.5f vs quadrature %.5f, "
                "|diff| = %.4f (tol 0.01 in log Z, i.e. 1%% in Z)",
                err1, ti.log_z.value, ti.log_z.stderr, oracle, err2)};
}

// ---- 5: asymptotic freeness ----
Outcome asymptotic_freeness()
{
    const int N = 100, m = 4, samples = 20;
    FamilyLayout layout = FamilyLayout::singletons(2, 1.0);
    auto mu = measures({"bernoulli:1", "semicircle:1"});
    MatrixTuple xi = quantile_tuple(layout, mu, N);
    MomentTable ref = free_product(layout, {measure_table(mu[0], m, 1.0), measure_table(mu[1], m, 1.0)}, m);
    std::vector<double> d(samples);
    parallel_for(samples, default_threads(), [&](std::size_t s) {
        Rng rng(derive_seed(11, s));
        std::vector<Matrix> V{haar_unitary(N, rng), haar_unitary(N, rng)};
        d[s] = moment_distance(empirical_orbital_state(V, xi, m), ref, m);
    });
    double mean = 0;
    for (double x : d) mean += x / samples;
    return {mean <= 10.0 / N, fmt("N=100, 20 conjugations, mean sup-distance to the free product (m=4) %.4f "
                                  "(bound 10/N = %.2f)",
                                  mean, 10.0 / N)};
}

// ---- 6: eta ----
Outcome eta_sanity()
{
    FamilyLayout layout = FamilyLayout::singletons(2, 1.0);
    auto mu = measures({"semicircle:1", "uniform:-1,1"});
    EtaSettings es;
    es.samples = 200;
    es.basis_degree = 3;
    es.max_evals = 300;
    es.seed = 6;
    bool ok = true;
    std::string vals;
    for (int N : {8, 32, 64}) {
        MatrixTuple xi = quantile_tuple(layout, mu, N);
        EtaEstimate e = eta_estimate(own_free_target(xi, 3), xi, es);
        ok = ok && !e.witness && e.value <= 0 && e.value >= -0.05;
        vals += fmt("%sN=%d: %.2e", vals.empty() ? "" : ", ", N, e.value);
    }
    MatrixTuple xi = quantile_tuple(layout, mu, 32);
    MomentTable shifted = own_free_target(xi, 3);
    Word x11{Generator::x(1, 1), Generator::x(1, 1)};
    shifted.set(x11, shifted.value(x11) + 0.1);
    EtaEstimate bad = eta_estimate(shifted, xi, es);
    bool diverges = bad.witness.has_value();
    double last = 0;
    if (diverges) {
        const auto& ray = bad.witness->ray;
        for (std::size_t k = 1; k < ray.size(); ++k) diverges = diverges && ray[k].second < ray[k - 1].second;
        last = ray.back().second;
        diverges = diverges && last <= -10;
    }
    return {ok && diverges, fmt("free target %s (required in [-0.05, 0]); shifted marginal: witness %s, objective %.1f "
                                "at alpha=1000",
                                vals.c_str(), bad.witness ? "found" : "missing", last)};
}

// ---- 7, 8: SD solver ----
struct SDCase {
    SDProblem problem;
    SDResult result;
    MatrixTuple xi;
    double seconds = 0;
};

SDCase& sd_case()
{
    static std::optional<SDCase> c;
    if (c) return *c;
    c.emplace();
    FamilyLayout layout = FamilyLayout::singletons(2, 1.0);
    c->xi = quantile_tuple(layout, measures({"bernoulli:1", "semicircle:1"}), 64);
    SDProblem& p = c->problem;
    p.layout = layout;
    p.h = parse("0.01*x[1,1]*x[2,1]", layout);
    p.D = 8;
    // the z-marginals are the spectra of the N = 64 microstates
    for (int i = 0; i < 2; ++i) {
        std::vector<double> spec(64);
        for (int k = 0; k < 64; ++k) spec[k] = c->xi.selfadjoint[i][0](k, k).real();
        p.tau0.push_back(measure_table(SpectralMeasure::empirical(spec), 32, 1.0));
    }
    auto t0 = std::chrono::steady_clock::now();
    c->result = sd_solve(p);
    c->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return *c;
}

Outcome sd_solver()
{
    SDCase& c = sd_case();
    // t = 0 against the free Haar product
    SDProblem zero = c.problem;
    zero.h = NCPoly(zero.layout);
    SDResult z = sd_solve(zero);
    MomentTable oracle = free_haar_product(zero.layout, zero.tau0, zero.D);
    MomentTable got = z.solution.table();
    double t0_err = 0;
    for (const auto& [w, v] : oracle.entries()) t0_err = std::max(t0_err, std::abs(v - got.value(w)));

    const SDReport& r = c.result.report;
    bool solved = r.converged && r.residual <= 1e-10 && r.iterations <= 200;

    GibbsConfig g = orbital_config(c.problem.h, c.xi, GibbsSettings{}, 77);
    g.sweeps = 2000; // 20000 sweeps after burn-in
    g.burn_in = 1000;
    g.thin = 10;
    g.moment_degree = 4;
    GibbsChain chain(g);
    chain.run();
    MeanState mc = mean_tracial_state(chain, 4);
    MomentTable sd = pushforward_x(c.result.solution, 4);
    // words whose value does not fluctuate (e.g. x1^2 = 1 for the +-1 family) have no MC error;
    // they are held to the closure sensitivity of the solver instead
    const double closure_allowance = 1e-7;
    double worst_z = 0, worst_exact = 0;
    int random_words = 0, exact_words = 0, outside = 0;
    for (const auto& w : sd.keys()) {
        if (w.empty()) continue;
        double diff = std::abs(sd.value(w) - mc.mean.value(w)), sigma = mc.stderr.value(w).real();
        bool ok;
        if (sigma > 1e-12) {
            ++random_words;
            worst_z = std::max(worst_z, diff / sigma);
            ok = diff <= 3 * sigma;
        } else {
            ++exact_words;
            worst_exact = std::max(worst_exact, diff);
            ok = diff <= closure_allowance;
        }
        if (!ok) {
            ++outside;
            std::fprintf(stderr, "  %s: SD %.15g, Gibbs %.15g +- %.2g\n", to_string(w).c_str(), sd.value(w).real(),
                         mc.mean.value(w).real(), sigma);
        }
    }
    return {t0_err <= 1e-12 && solved && outside == 0,
            fmt("t=0 max error %.1e (tol 1e-12); t=0.01 D=8: %s in %d iterations, residual %.1e, %.0f s; "
                "N=64 Gibbs (acceptance %.2f) vs SD: %d fluctuating x-words, max %.2f sigma (limit 3); "
                "%d non-fluctuating words, max |diff| %.1e (limit %.0e); %d outside",
                t0_err, r.converged ? "converged" : "NOT converged", r.iterations, r.residual, c.seconds,
                chain.acceptance_rate(), random_words, worst_z, exact_words, worst_exact, closure_allowance, outside)};
}

Outcome liberation()
{
    SDCase& c = sd_case();
    double dev = liberation_check(c.result.solution, c.problem.h, 3);
    double tol = 10 * c.problem.tol;
    return {c.result.report.converged && dev <= tol,
            fmt("max |tau(j_i w) - (tau x tau) delta_i(w)| over x-words of degree <= 3: %.1e (tol %.0e)", dev, tol)};
}

// ---- 9: matrix versus orbital pressure ----
Outcome relation_suite()
{
    std::mt19937_64 rng(91);
    const double R = 2.5;
    FamilyLayout layout = FamilyLayout::singletons(2, R);
    GibbsSettings gs;
    gs.sweeps = 3000;
    gs.burn_in = 500;
    gs.thermo.grid = 11;
    gs.thermo.simpson = true;
    std::uniform_real_distribution<double> radius(0.5, 2.0), coef(-0.3, 0.3);
    double worst_sigma = 1e300;
    std::string worst;
    int cases = 0;
    bool ok = true;
    for (int k = 0; k < 8; ++k) {
        std::vector<SpectralMeasure> marg;
        for (int i = 0; i < 2; ++i) {
            double r = radius(rng);
            switch (std::uniform_int_distribution<int>(0, 2)(rng)) {
            case 0: marg.push_back(SpectralMeasure::semicircle(r)); break;
            case 1: marg.push_back(SpectralMeasure::arcsine(-r, r)); break;
            default: marg.push_back(SpectralMeasure::uniform(-r, r)); break;
            }
        }
        NCPoly hp(layout);
        hp.add_term(Word{Generator::x(1, 1), Generator::x(2, 1)}, Coeff::from_double(coef(rng)));
        hp.add_term(Word{Generator::x(1, 1), Generator::x(1, 1)}, Coeff::from_double(coef(rng)));
        hp.add_term(Word{Generator::x(2, 1)}, Coeff::from_double(coef(rng)));
        int N = k % 2 ? 8 : 4;
        gs.seed = derive_seed(9, k);
        RelationReport r = pressure_relation_check(hp, marg, N, R, gs);
        double z = r.margin.stderr > 0 ? r.margin.value / r.margin.stderr : (r.margin.value >= 0 ? 1e300 : -1e300);
        ok = ok && r.margin.value >= -3 * r.margin.stderr;
        if (z < worst_sigma) {
            worst_sigma = z;
            worst = fmt("N=%d %s,%s margin %.4f +- %.4f", N, marg[0].spec().c_str(), marg[1].spec().c_str(),
                        r.margin.value, r.margin.stderr);
        }
        ++cases;
    }
    return {ok, fmt("%d random cases at N in {4,8}, R=2.5; smallest margin/stderr %.1f (%s); required >= -3", cases,
                    worst_sigma, worst.c_str())};
}

// ---- 10: penalty polynomial ----
Outcome penalty_behaviour()
{
    FamilyLayout layout = FamilyLayout::singletons(2, 1.0);
    auto mu = measures({"semicircle:1", "uniform:-1,1"});
    MomentTable target = free_product(layout, {measure_table(mu[0], 2, 1.0), measure_table(mu[1], 2, 1.0)}, 2);
    const double beta = 1.0, delta = 0.5;
    TensorNCPoly p = penalty_poly(target, 2, beta, delta);
    GibbsSettings gs;
    gs.sweeps = 4000;
    gs.burn_in = 500;
    gs.thermo.grid = 11;
    gs.thermo.simpson = true;
    gs.seed = 10;
    std::vector<MatrixTuple> xis;
    for (int N : {8, 16, 32}) xis.push_back(quantile_tuple(layout, mu, N));
    PressureEstimate e = double_pressure(p, xis, gs);
    bool ok = true;
    std::string vals;
    for (std::size_t k = 0; k < e.points.size(); ++k) {
        const Estimate& v = e.points[k].normalized;
        ok = ok && v.value >= -beta - v.stderr;
        if (k > 0) {
            const Estimate& u = e.points[k - 1].normalized;
            ok = ok && v.value >= u.value - std::hypot(u.stderr, v.stderr);
        }
        vals += fmt("%sN=%d: %.5f +- %.5f", vals.empty() ? "" : ", ", e.points[k].N, v.value, v.stderr);
    }
    return {ok, fmt("m=2, beta=1, delta=0.5: %s (need >= -beta - stderr, non-decreasing within one combined stderr)",
                    vals.c_str())};
}

// ---- 11: reproducibility ----
std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome reproducibility()
{
    const std::vector<std::string> specs{
        R"({"command": "pressure", "microstates": {"measures": ["semicircle:1", "bernoulli:1"], "N": [4, 6]},
            "h": "0.5*x[1,1]*x[2,1]", "gibbs": {"sweeps": 300, "burn_in": 50, "grid": 5}})",
        R"({"command": "eta", "microstates": {"measures": ["semicircle:1", "uniform:-1,1"], "N": [6]},
            "target": {"kind": "free_empirical", "degree": 3}, "eta": {"samples": 50, "max_evals": 60}})",
        R"({"command": "gibbs", "microstates": {"measures": ["semicircle:1", "bernoulli:1"], "N": [4, 5]},
            "h": "x[1,1]*x[2,1]", "moment_degree": 2, "target": {"kind": "free_empirical", "degree": 2},
            "gibbs": {"sweeps": 300, "burn_in": 50}})",
        R"({"command": "gibbs", "ensemble": "matrix", "N": [3], "R": 1.5, "h": "x[1,1]^2 + x[1,1]*x[2,1]",
            "moment_degree": 2, "gibbs": {"sweeps": 300, "burn_in": 50}})",
        R"({"command": "sd", "problem": {"h": "0", "tau0": ["bernoulli:1", "semicircle:1"], "D": 6},
            "pushforward_degree": 3})",
        R"({"command": "liberation", "problem": {"h": "0", "tau0": ["bernoulli:1", "semicircle:1"], "D": 6}, "m": 2})",
        R"({"command": "freeness", "microstates": {"measures": ["bernoulli:1", "semicircle:1"], "N": [8]},
            "samples": 6, "m": 3})",
        R"({"command": "property-suite", "microstates": {"measures": ["semicircle:1", "bernoulli:1", "uniform:-1,1"],
            "N": [3]}, "h1": "0.2*x[1,1]*x[2,1]", "h2": "0.1*x[3,1]^2", "samples": 6, "groups": [[1, 2], [3]]})",
        R"({"command": "relation-check", "marginals": ["semicircle:1", "uniform:-1,1"], "R": 2, "N": [3],
            "h": "0.2*x[1,1]*x[2,1]", "gibbs": {"sweeps": 300, "burn_in": 50, "grid": 5}})"};
    fs::path root = fs::temp_directory_path() / "orbfree_acceptance_repro";
    fs::remove_all(root);
    int identical = 0, files = 0;
    std::string bad;
    for (std::size_t k = 0; k < specs.size(); ++k) {
        std::vector<RunOutcome> runs;
        for (const char* tag : {"a", "b"}) {
            RunOptions opt;
            opt.seed = 12345;
            opt.threads = 2;
            opt.out = (root / (std::to_string(k) + tag)).string();
            runs.push_back(run_experiment(specs[k], ".", opt));
        }
        bool same = runs[0].exit_code == 0 && runs[1].exit_code == 0 && runs[0].artifacts == runs[1].artifacts;
        for (const auto& a : runs[0].artifacts) {
            if (a == "manifest.json") continue;
            ++files;
            same = same && slurp(root / (std::to_string(k) + "a") / a) == slurp(root / (std::to_string(k) + "b") / a);
        }
        if (same) ++identical;
        else bad += " " + std::to_string(k);
    }
    return {identical == int(specs.size()),
            fmt("%d/%zu specs (all eight commands) byte-identical across two runs, %d artifacts compared%s", identical,
                specs.size(), files, bad.empty() ? "" : ("; differing:" + bad).c_str())};
}

} // namespace

int main(int argc, char** argv)
{
    struct Criterion {
        const char* name;
        Outcome (*run)();
    };
    const std::vector<Criterion> all{{"symbolic identities", symbolic_suite},
                                     {"zero and single-family pressure", pressure_anchors},
                                     {"finite-N property suite", property_suite},
                                     {"partition function oracles", partition_oracles},
                                     {"asymptotic freeness", asymptotic_freeness},
                                     {"eta on free and non-matching targets", eta_sanity},
                                     {"Schwinger-Dyson solver", sd_solver},
                                     {"liberation identity", liberation},
                                     {"pressure relation margin", relation_suite},
                                     {"double-trace penalty pressure", penalty_behaviour},
                                     {"reproducibility", reproducibility}};
    std::set<int> pick;
    for (int a = 1; a < argc; ++a) pick.insert(std::atoi(argv[a]));
    int failed = 0;
    for (std::size_t k = 0; k < all.size(); ++k) {
        int id = int(k) + 1;
        if (!pick.empty() && !pick.count(id)) continue;
        auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = all[k].run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += !o.pass;
        std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, all[k].name, o.detail.c_str(), sec);
        std::fflush(stdout);
    }
    return failed ? 1 : 0;
}
