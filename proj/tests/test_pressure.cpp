#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "orbfree/parser.hpp"
#include "orbfree/pressure.hpp"
#include "test_support.hpp"

using namespace orbfree;

namespace {

Matrix diag(std::vector<double> d)
{
    Matrix A = Matrix::Zero(d.size(), d.size());
    for (std::size_t k = 0; k < d.size(); ++k) A(k, k) = d[k];
    return A;
}

MatrixTuple singles(std::vector<Matrix> xi, double R = 3.0)
{
    FamilyLayout layout(std::vector<int>(xi.size(), 1), R);
    std::vector<std::vector<Matrix>> fams;
    for (auto& A : xi) fams.push_back({A});
    return MatrixTuple::make(layout, fams);
}

GibbsSettings quick(int sweeps = 300)
{
    GibbsSettings s;
    s.sweeps = sweeps;
    s.burn_in = 100;
    s.thermo.grid = 5;
    return s;
}

MomentTable own_free_target(const MatrixTuple& xi, int m)
{
    MomentTable joint = empirical_state(xi, m);
    std::vector<MomentTable> marg;
    for (int i = 1; i <= xi.layout.n; ++i) marg.push_back(family_marginal(joint, i));
    return free_product(xi.layout, marg, m);
}

// plain log-mean-exp without shifting, for moderate inputs
double naive_pressure(const std::vector<double>& t, int N)
{
    double n2 = double(N) * N, s = 0;
    for (double x : t) s += std::exp(-n2 * x);
    return std::log(s / t.size()) / n2;
}

} // namespace

TEST_CASE("pressure estimates in closed-form cases")
{
    std::vector<MatrixTuple> xis{singles({diag({1, -1}), diag({0.5, 2})}),
                                 singles({diag({1, 0, -1}), diag({0.5, 2, 1})})};
    NCPoly zero(xis[0].layout);
    auto z = pressure_estimate(zero, xis, quick());
    for (const auto& p : z.points) CHECK(p.normalized.value == 0.0);

    NCPoly single = parse("x[1,1]^2 - 0.3*x[2,1]", xis[0].layout);
    auto s = pressure_estimate(single, xis, quick());
    for (std::size_t k = 0; k < xis.size(); ++k) {
        CHECK(s.points[k].normalized.value == doctest::Approx(-trace_evaluate(single, xis[k]).real()).epsilon(1e-10));
        CHECK(s.points[k].within_range);
    }

    // N = 1: the integrand is exp(-a b)
    std::vector<MatrixTuple> scalars{singles({diag({1.5}), diag({-0.4})})};
    auto one = pressure_estimate(parse("x[1,1]*x[2,1]", scalars[0].layout), scalars, quick());
    CHECK(one.points[0].normalized.value == doctest::Approx(0.6).epsilon(1e-10));

    std::vector<PressurePoint> synthetic;
    for (int N : {4, 8, 16}) {
        PressurePoint p;
        p.N = N;
        p.normalized.value = 0.25 - 1.5 / N;
        synthetic.push_back(p);
    }
    Extrapolation f = fit_inverse_n(synthetic);
    CHECK(f.available);
    CHECK(f.a == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(f.b == doctest::Approx(-1.5).epsilon(1e-12));
    CHECK(f.r2 == doctest::Approx(1.0));
    CHECK_FALSE(fit_inverse_n({synthetic[0]}).available);
}

TEST_CASE("double-trace pressure")
{
    std::vector<MatrixTuple> xis{singles({diag({1, -1}), diag({0.5, 2})}), singles({diag({1, 0, -1}), diag({0.5, 2, 1})})};
    TensorNCPoly one(xis[0].layout);
    one.add_term({}, {}, Coeff(1));
    auto p = double_pressure(one, xis, quick());
    for (const auto& pt : p.points) CHECK(pt.normalized.value == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("shared-sample pressure")
{
    MatrixTuple xi = singles({diag({1, -0.5, 0.2}), diag({0.5, 2, -1}), diag({0.3, 0.1, -0.7})});
    SampleSet s = SampleSet::haar(xi, 50, 7);
    CHECK(s.size() == 50);
    NCPoly h = parse("0.2*x[1,1]*x[2,1] + 0.1*x[3,1]^2", xi.layout);
    std::vector<double> t = sample_traces(h, s);
    CHECK(pressure_from_traces(t, 3) == doctest::Approx(naive_pressure(t, 3)).epsilon(1e-12));

    NCPoly single = parse("x[2,1]^3 + x[1,1]", xi.layout);
    CHECK(empirical_pressure(single, s) == doctest::Approx(-trace_evaluate(single, xi).real()).epsilon(1e-12));

    // huge inputs stay finite
    CHECK(std::isfinite(pressure_from_traces({1e6, 1e6 + 1}, 30)));

    SampleSet prod = SampleSet::product(xi, {{1, 2}, {3}}, 4, 3);
    CHECK(prod.size() == 16);
    CHECK_THROWS(SampleSet::product(xi, {{1, 2}}, 4, 3));
    CHECK_THROWS(SampleSet::product(xi, {{1, 2}, {2, 3}}, 4, 3));
}

TEST_CASE("finite-N property suite")
{
    MatrixTuple xi = singles({diag({1, -0.5, 0.2}), diag({0.5, 2, -1}), diag({0.3, 0.1, -0.7})});
    std::mt19937_64 rng(5);
    SampleSet s = SampleSet::product(xi, {{1, 2}, {3}}, 8, 11);
    NCPoly h3 = parse("0.4*x[3,1]^2 - 0.2*x[3,1]", xi.layout);
    for (int trial = 0; trial < 6; ++trial) {
        NCPoly h1 = testsupport::random_selfadjoint(rng, xi.layout, 3, true) * Coeff(mpq_class(1, 10));
        NCPoly h2 = testsupport::random_selfadjoint(rng, xi.layout, 3, true) * Coeff(mpq_class(1, 10));
        PropertyReport r = finite_N_property_suite(h1, h2, s);
        CHECK(r.max_violation() <= 1e-9);
        CHECK(r.shift_error <= 1e-12);
        CHECK(r.lipschitz_gap <= r.lipschitz_sample_sup + 1e-12);
        CHECK(r.lipschitz_sample_sup <= r.lipschitz_norm_bound + 1e-12);
    }
    NCPoly h12 = parse("0.3*x[1,1]*x[2,1]*x[1,1] + 0.1*x[2,1]", xi.layout);
    PropertyReport r = finite_N_property_suite(h12, h3, s);
    REQUIRE(r.additivity_error.has_value());
    CHECK(*r.additivity_error <= 1e-12);
    CHECK(r.max_violation() <= 1e-9);

    // shared samples without a split: no additivity claim
    CHECK_FALSE(finite_N_property_suite(h12, h3, SampleSet::haar(xi, 20, 1)).additivity_error.has_value());
}

TEST_CASE("mixed basis")
{
    FamilyLayout layout({2, 1}, 2.0);
    auto basis = mixed_basis(layout, 3);
    CHECK(!basis.empty());
    MatrixTuple t = MatrixTuple::make(layout, {{diag({1, 0.5}), diag({-1, 0.3})}, {diag({0.2, 0.9})}});
    Rng rng(2);
    MatrixTuple c = conjugate(t, {haar_unitary(2, rng), haar_unitary(2, rng)});
    for (const auto& b : basis) {
        CHECK(is_self_adjoint(b));
        CHECK(b.degree() <= 3);
        for (const auto& [w, coef] : b.terms()) {
            std::set<int> fams;
            for (const auto& g : w) fams.insert(g.i);
            CHECK(fams.size() >= 2);
        }
        CHECK(std::abs(trace_evaluate(b, c).imag()) < 1e-12);
    }
    CHECK(mixed_basis(FamilyLayout::singletons(2, 1.0), 1).empty());
}

TEST_CASE("eta")
{
    MatrixTuple xi = singles({diag({1, 0.3, -0.4, -0.9}), diag({0.8, -0.2, 0.5, -1})}, 2.0);
    MomentTable target = own_free_target(xi, 4);

    EtaSettings zero;
    zero.include_zero_only = true;
    CHECK(eta_estimate(target, xi, zero).value == 0.0);

    EtaSettings es;
    es.samples = 100;
    es.max_evals = 150;
    EtaEstimate e = eta_estimate(target, xi, es);
    CHECK_FALSE(e.witness.has_value());
    CHECK(e.value <= 0.0);
    CHECK(e.value >= -0.05);
    CHECK(e.evaluations <= es.max_evals + 2 * int(e.basis.size()) + 4);
    for (std::size_t k = 1; k < e.best_trace.size(); ++k) CHECK(e.best_trace[k] <= e.best_trace[k - 1]);

    // wrong first marginal: the objective runs off along the witness ray
    MomentTable shifted = target;
    shifted.set(Word{Generator::x(1, 1), Generator::x(1, 1)}, target.value(Word{Generator::x(1, 1), Generator::x(1, 1)}) + 0.2);
    auto w = marginal_witness(shifted, xi, 1e-9);
    REQUIRE(w.has_value());
    CHECK(w->family == 1);
    CHECK(w->gap == doctest::Approx(-0.2));
    EtaEstimate bad = eta_estimate(shifted, xi, es);
    REQUIRE(bad.witness.has_value());
    const auto& ray = bad.witness->ray;
    for (std::size_t k = 1; k < ray.size(); ++k) CHECK(ray[k].second < ray[k - 1].second);
    CHECK(ray.back().second == doctest::Approx(-0.2 * ray.back().first).epsilon(1e-9));
}

TEST_CASE("penalty polynomial")
{
    MomentTable sc = measure_table(SpectralMeasure::semicircle(2), 4, 2.0);
    TensorNCPoly p = penalty_poly(sc, 1, 1.0, 1.0);
    TensorNCPoly expect(sc.layout());
    expect.add_term({Generator::x(1, 1)}, {Generator::x(1, 1)}, Coeff(1));
    CHECK(p == expect);

    FamilyLayout layout = FamilyLayout::singletons(2, 2.0);
    MatrixTuple xi = singles({diag({1, 0.3, -0.4}), diag({0.8, -0.2, 0.5})}, 2.0);
    MomentTable target = own_free_target(xi, 4);
    const double beta = 0.7, delta = 0.1;
    for (int m = 1; m <= 3; ++m) {
        TensorNCPoly q = penalty_poly(target, m, beta, delta);
        CHECK(std::abs(target.evaluate(q)) < 1e-12);
        Rng rng(m);
        MatrixTuple c = conjugate(xi, {haar_unitary(3, rng), haar_unitary(3, rng)});
        double direct = 0;
        for (const auto& w : reduced_words(layout, Alphabet::X, m)) {
            if (w.empty()) continue;
            direct += std::norm(trace_word(w, c) - target.value(w));
        }
        cplx v = double_trace_evaluate(q, c);
        CHECK(v.real() >= 0);
        CHECK(std::abs(v.imag()) < 1e-9);
        CHECK(v.real() == doctest::Approx(beta / (delta * delta) * direct).epsilon(1e-9));
    }
    CHECK_THROWS(penalty_poly(target, 5, 1, 1));
    CHECK_THROWS(penalty_poly(target, 1, 1, 0));
}

TEST_CASE("pressure relation at zero coupling")
{
    std::vector<SpectralMeasure> marg{SpectralMeasure::semicircle(1), SpectralMeasure::uniform(-1, 1)};
    FamilyLayout layout = FamilyLayout::singletons(2, 2.0);
    RelationReport r = pressure_relation_check(NCPoly(layout), marg, 4, 2.0, quick());
    CHECK(r.matrix_pressure.value == 0.0);
    CHECK(r.orbital_pressure.value == 0.0);
    CHECK(r.chi_reference == doctest::Approx(2 * (std::log(1.0) + 0.75 + 0.5 * std::log(2 * M_PI))).epsilon(1e-8));
    CHECK(r.margin.value >= 0);
    CHECK_THROWS(pressure_relation_check(NCPoly(layout), {SpectralMeasure::semicircle(3), marg[1]}, 4, 2.0, quick()));
}

TEST_CASE("scalar microstate pressure is monotone")
{
    FamilyLayout layout = FamilyLayout::singletons(2, 1.0);
    std::vector<MomentTable> marg{measure_table(SpectralMeasure::uniform(-1, 1), 2, 1.0),
                                  measure_table(SpectralMeasure::uniform(-1, 1), 2, 1.0)};
    MomentTable target = free_product(layout, marg, 2);
    NCPoly h = parse("x[1,1]*x[2,1] + 0.5*x[1,1]", layout);
    double prev = -INFINITY;
    for (double delta : {0.3, 0.5, 0.8, 1.5}) {
        double v = grid_microstate_pressure(h, target, 2, delta, 41);
        CHECK(v >= prev);
        prev = v;
    }
    CHECK(grid_microstate_pressure(h, target, 2, 0.8, 41) <= grid_microstate_pressure(h, target, 1, 0.8, 41));
    // every grid point qualifies once delta is huge
    CHECK(grid_microstate_pressure(h, target, 2, 100, 41) == doctest::Approx(1.5));
}

TEST_CASE("equilibrium check")
{
    std::vector<MatrixTuple> xis{singles({diag({1, -1}), diag({0.5, -0.5})}, 2.0),
                                 singles({diag({1, 0, -1}), diag({0.5, 0, -0.5})}, 2.0)};
    MomentTable target = own_free_target(xis.back(), 2);
    NCPoly h = parse("0.1*x[1,1]*x[2,1]", target.layout());
    EtaSettings es;
    es.samples = 60;
    es.max_evals = 60;
    EquilibriumReport r = equilibrium_check(target, h, xis, 2, 0.5, quick(200), es);
    CHECK_FALSE(r.marginal_violation);
    REQUIRE(r.trajectory.size() == 2);
    for (const auto& p : r.trajectory) {
        CHECK(p.occupancy.fraction >= 0);
        CHECK(p.occupancy.fraction <= 1);
    }
    CHECK(std::isfinite(r.gap));
}
