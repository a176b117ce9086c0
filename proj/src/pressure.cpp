#include "orbfree/pressure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <gsl/gsl_multimin.h>

#include "orbfree/parallel.hpp"
#include "orbfree/parser.hpp"

namespace orbfree {

GibbsConfig orbital_config(const NCPoly& h, const MatrixTuple& microstates, const GibbsSettings& s, std::uint64_t seed)
{
    GibbsConfig c;
    c.kind = EnsembleKind::UnitaryOrbital;
    c.N = microstates.N;
    c.h = h;
    c.microstates = microstates;
    c.sweeps = s.sweeps;
    c.burn_in = s.burn_in;
    c.thin = s.thin;
    c.eps = s.eps;
    c.autotune = s.autotune;
    c.seed = seed;
    return c;
}

Extrapolation fit_inverse_n(const std::vector<PressurePoint>& points)
{
    Extrapolation f;
    std::set<int> distinct;
    for (const auto& p : points) distinct.insert(p.N);
    if (distinct.size() < 2) return f;
    const double n = double(points.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& p : points) {
        double x = 1.0 / p.N, y = p.normalized.value;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    f.b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    f.a = (sy - f.b * sx) / n;
    double mean = sy / n, ss_tot = 0, ss_res = 0;
    for (const auto& p : points) {
        double r = p.normalized.value - (f.a + f.b / p.N);
        f.residuals.push_back(r);
        ss_res += r * r;
        ss_tot += (p.normalized.value - mean) * (p.normalized.value - mean);
    }
    f.r2 = ss_tot > 0 ? 1 - ss_res / ss_tot : 1.0;
    f.available = true;
    return f;
}

namespace {

PressurePoint point_from(const LogZResult& r, int N, double bound)
{
    PressurePoint p;
    p.N = N;
    p.log_z = r.log_z;
    const double n2 = double(N) * N;
    p.normalized = {r.log_z.value / n2, r.log_z.stderr / n2};
    p.within_range = std::abs(p.normalized.value) <= bound + 3 * p.normalized.stderr + 1e-12;
    p.traces = r.traces;
    return p;
}

PressureEstimate estimate_with(const GibbsConfig& base, const std::vector<MatrixTuple>& microstates,
                               const GibbsSettings& s, double bound)
{
    PressureEstimate out;
    out.norm_bound = bound;
    for (std::size_t k = 0; k < microstates.size(); ++k) {
        GibbsConfig c = base;
        c.microstates = microstates[k];
        c.N = microstates[k].N;
        c.seed = derive_seed(s.seed, 100 + k);
        out.points.push_back(point_from(log_partition(c, s.method, s.thermo), c.N, bound));
    }
    out.fit = fit_inverse_n(out.points);
    return out;
}

} // namespace

PressureEstimate pressure_estimate(const NCPoly& h, const std::vector<MatrixTuple>& microstates, const GibbsSettings& s,
                                   const std::string& source)
{
    if (microstates.empty()) throw std::invalid_argument("at least one microstate tuple required");
    GibbsConfig base = orbital_config(h, microstates.front(), s, s.seed);
    PressureEstimate out = estimate_with(base, microstates, s, norm_bound(h, microstates.front().layout.R));
    out.h = to_string(h);
    out.source = source;
    return out;
}

PressureEstimate double_pressure(const TensorNCPoly& h2, const std::vector<MatrixTuple>& microstates,
                                 const GibbsSettings& s, const std::string& source)
{
    if (microstates.empty()) throw std::invalid_argument("at least one microstate tuple required");
    GibbsConfig base = orbital_config(NCPoly(h2.layout()), microstates.front(), s, s.seed);
    base.h2 = h2;
    PressureEstimate out = estimate_with(base, microstates, s, norm_bound(h2, microstates.front().layout.R));
    out.h = to_string(h2);
    out.source = source;
    return out;
}

SampleSet SampleSet::haar(const MatrixTuple& microstates, int S, std::uint64_t seed)
{
    SampleSet out;
    out.microstates = microstates;
    std::vector<int> all;
    for (int i = 1; i <= microstates.layout.n; ++i) all.push_back(i);
    out.groups = {all};
    Rng rng(seed);
    for (int s = 0; s < S; ++s) {
        std::vector<Matrix> V;
        for (int i = 0; i < microstates.layout.n; ++i) V.push_back(haar_unitary(microstates.N, rng));
        out.unitaries.push_back(std::move(V));
    }
    return out;
}

SampleSet SampleSet::product(const MatrixTuple& microstates, const std::vector<std::vector<int>>& groups, int per_group,
                             std::uint64_t seed)
{
    const int n = microstates.layout.n;
    std::vector<int> seen(n + 1, 0);
    for (const auto& g : groups)
        for (int i : g) {
            if (i < 1 || i > n || seen[i]++) throw std::invalid_argument("groups must partition the families");
        }
    for (int i = 1; i <= n; ++i)
        if (!seen[i]) throw std::invalid_argument("groups must partition the families");
    SampleSet out;
    out.microstates = microstates;
    out.groups = groups;
    // draws[g][s][k] is the unitary of the k-th family of group g in draw s
    std::vector<std::vector<std::vector<Matrix>>> draws(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
        Rng rng(derive_seed(seed, g));
        for (int s = 0; s < per_group; ++s) {
            std::vector<Matrix> V;
            for (std::size_t k = 0; k < groups[g].size(); ++k) V.push_back(haar_unitary(microstates.N, rng));
            draws[g].push_back(std::move(V));
        }
    }
    std::vector<int> idx(groups.size(), 0);
    while (true) {
        std::vector<Matrix> V(n);
        for (std::size_t g = 0; g < groups.size(); ++g)
            for (std::size_t k = 0; k < groups[g].size(); ++k) V[groups[g][k] - 1] = draws[g][idx[g]][k];
        out.unitaries.push_back(std::move(V));
        std::size_t g = groups.size();
        while (g > 0) {
            --g;
            if (++idx[g] < per_group) break;
            idx[g] = 0;
            if (g == 0) return out;
        }
        if (groups.empty()) return out;
    }
}

std::vector<double> sample_traces(const NCPoly& h, const SampleSet& s)
{
    std::vector<double> out;
    out.reserve(s.size());
    for (const auto& V : s.unitaries) out.push_back(trace_evaluate(h, conjugate(s.microstates, V)).real());
    return out;
}

std::vector<double> sample_traces(const TensorNCPoly& h2, const SampleSet& s)
{
    std::vector<double> out;
    out.reserve(s.size());
    for (const auto& V : s.unitaries) out.push_back(double_trace_evaluate(h2, conjugate(s.microstates, V)).real());
    return out;
}

double pressure_from_traces(const std::vector<double>& traces, int N)
{
    if (traces.empty()) throw std::invalid_argument("no samples");
    const double n2 = double(N) * N;
    double top = -std::numeric_limits<double>::infinity();
    for (double t : traces) top = std::max(top, -n2 * t);
    double sum = 0;
    for (double t : traces) sum += std::exp(-n2 * t - top);
    return (std::log(sum / double(traces.size())) + top) / n2;
}

double empirical_pressure(const NCPoly& h, const SampleSet& s)
{
    return pressure_from_traces(sample_traces(h, s), s.microstates.N);
}

double PropertyReport::max_violation() const
{
    double v = std::max({lipschitz_gap - lipschitz_sample_sup, lipschitz_sample_sup - lipschitz_norm_bound,
                         -monotone_margin, -convexity_margin, shift_error});
    if (additivity_error) v = std::max(v, *additivity_error);
    return v;
}

namespace {

std::set<int> families_of(const NCPoly& p)
{
    std::set<int> out;
    for (const auto& [w, c] : p.terms())
        for (const auto& g : w) out.insert(g.i);
    return out;
}

} // namespace

PropertyReport finite_N_property_suite(const NCPoly& h1, const NCPoly& h2, const SampleSet& samples,
                                       const PropertyOptions& opt)
{
    require_same_layout(h1.layout(), h2.layout());
    const int N = samples.microstates.N;
    const double R = samples.microstates.layout.R;
    auto P = [&](const std::vector<double>& t) { return pressure_from_traces(t, N); };
    std::vector<double> t1 = sample_traces(h1, samples), t2 = sample_traces(h2, samples);
    const double p1 = P(t1), p2 = P(t2);
    PropertyReport r;

    r.lipschitz_gap = std::abs(p1 - p2);
    for (std::size_t s = 0; s < t1.size(); ++s) r.lipschitz_sample_sup = std::max(r.lipschitz_sample_sup, std::abs(t1[s] - t2[s]));
    r.lipschitz_norm_bound = norm_bound(h1 - h2, R);

    const NCPoly q = opt.q ? *opt.q : h2;
    const Coeff c = Coeff::from_double(opt.constant);
    NCPoly higher = h1 + adjoint(q) * q + NCPoly::constant(h1.layout(), c);
    r.monotone_margin = p1 - P(sample_traces(higher, samples));

    const Coeff a = Coeff::from_double(opt.alpha), b = Coeff::from_double(1 - opt.alpha);
    r.convexity_margin = opt.alpha * p1 + (1 - opt.alpha) * p2 - P(sample_traces(h1 * a + h2 * b, samples));

    r.shift_error = std::abs(P(sample_traces(h1 + NCPoly::constant(h1.layout(), c), samples)) - (p1 - opt.constant));

    // exact factorization needs every sample group to sit on one side
    std::set<int> f1 = families_of(h1), f2 = families_of(h2);
    bool split = samples.groups.size() > 1;
    for (const auto& g : samples.groups) {
        bool in1 = false, in2 = false;
        for (int i : g) {
            in1 = in1 || f1.count(i);
            in2 = in2 || f2.count(i);
        }
        if (in1 && in2) split = false;
    }
    if (split) r.additivity_error = std::abs(P(sample_traces(h1 + h2, samples)) - p1 - p2);
    return r;
}

std::vector<NCPoly> mixed_basis(const FamilyLayout& layout, int d)
{
    std::vector<NCPoly> out;
    const Coeff half = Coeff(mpq_class(1, 2));
    for (const auto& w : trace_classes(layout, Alphabet::X, d)) {
        std::set<int> fams;
        for (const auto& g : w) fams.insert(g.i);
        if (fams.size() < 2) continue;
        NCPoly a = NCPoly::monomial(layout, w), b = NCPoly::monomial(layout, adjoint(w));
        out.push_back((a + b) * half);
        if (!is_self_conjugate(w)) out.push_back((a - b) * (imaginary_unit * half));
    }
    return out;
}

std::optional<MarginalWitness> marginal_witness(const MomentTable& target, const MatrixTuple& microstates, double tol)
{
    const FamilyLayout& layout = target.layout();
    require_same_layout(layout, microstates.layout);
    std::optional<MarginalWitness> best;
    const Coeff half = Coeff(mpq_class(1, 2));
    for (const auto& w : trace_classes(layout, Alphabet::X, target.degree())) {
        if (w.empty()) continue;
        std::set<int> fams;
        for (const auto& g : w) fams.insert(g.i);
        if (fams.size() != 1) continue;
        cplx d = target.value(w) - trace_word(w, microstates);
        NCPoly a = NCPoly::monomial(layout, w), b = NCPoly::monomial(layout, adjoint(w));
        // (w + w*)/2 sees Re d, i(w - w*)/2 sees -Im d
        std::pair<double, NCPoly> candidates[2] = {{d.real(), (a + b) * half}, {-d.imag(), (a - b) * (imaginary_unit * half)}};
        for (auto& [gap, p] : candidates) {
            if (std::abs(gap) <= tol || (best && std::abs(gap) <= std::abs(best->gap))) continue;
            MarginalWitness mw;
            mw.family = *fams.begin();
            mw.word = w;
            mw.p = gap > 0 ? -p : p;
            mw.gap = -std::abs(gap);
            best = std::move(mw);
        }
    }
    return best;
}

namespace {

struct Objective {
    std::vector<double> tau;              // tau(b_k)
    std::vector<std::vector<double>> tr;  // [sample][k]
    int N = 1;
    int evaluations = 0;
    double best = 0;
    std::vector<double> best_x;
    std::vector<double> best_trace;

    double operator()(const double* c)
    {
        double v = 0;
        for (std::size_t k = 0; k < tau.size(); ++k) v += c[k] * tau[k];
        std::vector<double> t(tr.size(), 0.0);
        for (std::size_t s = 0; s < tr.size(); ++s)
            for (std::size_t k = 0; k < tau.size(); ++k) t[s] += c[k] * tr[s][k];
        v += pressure_from_traces(t, N);
        ++evaluations;
        if (v < best) {
            best = v;
            best_x.assign(c, c + tau.size());
        }
        best_trace.push_back(best);
        return v;
    }
};

double gsl_objective(const gsl_vector* x, void* params)
{
    return (*static_cast<Objective*>(params))(x->data);
}

} // namespace

EtaEstimate eta_estimate(const MomentTable& target, const MatrixTuple& microstates, const EtaSettings& s)
{
    EtaEstimate out;
    out.N = microstates.N;
    if (target.alphabet() != Alphabet::X) throw AlphabetError("target must be an x table");
    if (auto w = marginal_witness(target, microstates, s.marginal_tol)) {
        // single-family p: the integrand is constant, so pi(alpha p) = -alpha tr p(Xi)
        SampleSet few = SampleSet::haar(microstates, 4, s.seed);
        std::vector<double> tp = sample_traces(w->p, few);
        double tau_p = target.evaluate(w->p).real();
        for (double alpha : {1.0, 10.0, 100.0, 1000.0}) {
            std::vector<double> t;
            for (double x : tp) t.push_back(alpha * x);
            w->ray.emplace_back(alpha, alpha * tau_p + pressure_from_traces(t, microstates.N));
        }
        out.value = w->ray.back().second;
        out.witness = std::move(w);
        return out;
    }
    if (!s.include_zero_only) out.basis = mixed_basis(target.layout(), std::min(s.basis_degree, target.degree()));
    const std::size_t K = out.basis.size();
    if (K == 0) {
        out.evaluations = 1;
        out.converged = true;
        out.best_trace = {0.0};
        return out;
    }
    Objective obj;
    obj.N = microstates.N;
    for (const auto& b : out.basis) obj.tau.push_back(target.evaluate(b).real());
    SampleSet samples = SampleSet::haar(microstates, s.samples, s.seed);
    obj.tr.assign(samples.size(), std::vector<double>(K));
    for (std::size_t k = 0; k < K; ++k) {
        std::vector<double> t = sample_traces(out.basis[k], samples);
        for (std::size_t j = 0; j < t.size(); ++j) obj.tr[j][k] = t[j];
    }
    std::vector<double> zero(K, 0.0);
    obj.best = obj(zero.data());
    obj.best_x = zero;

    gsl_multimin_function fn{&gsl_objective, K, &obj};
    gsl_vector* x = gsl_vector_alloc(K);
    gsl_vector* step = gsl_vector_alloc(K);
    gsl_multimin_fminimizer* m = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, K);
    double size = 0, step_size = s.initial_step;
    for (int round = 0; round <= s.restarts && obj.evaluations < s.max_evals; ++round) {
        for (std::size_t k = 0; k < K; ++k) gsl_vector_set(x, k, obj.best_x[k]);
        gsl_vector_set_all(step, step_size);
        gsl_multimin_fminimizer_set(m, &fn, x, step);
        int status = GSL_CONTINUE;
        while (status == GSL_CONTINUE && obj.evaluations < s.max_evals) {
            if (gsl_multimin_fminimizer_iterate(m)) break;
            size = gsl_multimin_fminimizer_size(m);
            status = gsl_multimin_test_size(size, 1e-7);
        }
        out.converged = status == GSL_SUCCESS;
        step_size *= 0.25;
    }
    gsl_multimin_fminimizer_free(m);
    gsl_vector_free(step);
    gsl_vector_free(x);
    out.simplex_size = size;
    out.value = obj.best;
    out.coefficients = obj.best_x;
    out.evaluations = obj.evaluations;
    out.best_trace = obj.best_trace;
    return out;
}

EquilibriumReport equilibrium_check(const MomentTable& target, const NCPoly& h,
                                    const std::vector<MatrixTuple>& microstates, int m, double delta,
                                    const GibbsSettings& gs, const EtaSettings& es)
{
    if (microstates.empty()) throw std::invalid_argument("at least one microstate tuple required");
    EquilibriumReport r;
    r.eta = eta_estimate(target, microstates.back(), es);
    r.marginal_violation = r.eta.witness.has_value();
    SampleSet samples = SampleSet::haar(microstates.back(), es.samples, es.seed);
    r.rhs = target.evaluate(h).real() + empirical_pressure(h, samples);
    r.gap = r.eta.value - r.rhs;
    for (std::size_t k = 0; k < microstates.size(); ++k) {
        GibbsConfig c = orbital_config(h, microstates[k], gs, derive_seed(gs.seed, 200 + k));
        c.moment_degree = m;
        GibbsChain chain(c);
        chain.run();
        r.trajectory.push_back({c.N, occupancy(chain, target, m, delta)});
    }
    std::vector<std::pair<double, double>> pts;
    bool empty_set = false;
    for (const auto& p : r.trajectory) {
        if (std::isfinite(p.occupancy.log_over_N2)) pts.emplace_back(p.N, p.occupancy.log_over_N2);
        else empty_set = true;
    }
    if (pts.size() >= 2) {
        double n = double(pts.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (auto [x, y] : pts) {
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        r.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    } else if (empty_set) {
        r.slope = -std::numeric_limits<double>::infinity();
    }
    return r;
}

TensorNCPoly penalty_poly(const MomentTable& target, int m, double beta, double delta)
{
    if (m < 1 || m > target.degree()) throw std::invalid_argument("penalty degree must lie in 1..target degree");
    if (!(delta > 0) || beta < 0) throw std::invalid_argument("need delta > 0 and beta >= 0");
    const FamilyLayout& layout = target.layout();
    TensorNCPoly p(layout);
    const Coeff scale = Coeff::from_double(beta) / (Coeff::from_double(delta) * Coeff::from_double(delta));
    auto letters = alphabet_letters(layout, Alphabet::X);
    std::vector<Word> level{Word{}};
    for (int len = 1; len <= m; ++len) {
        std::vector<Word> next;
        for (const auto& w : level)
            for (const auto& g : letters) {
                Word v = w;
                v.push_back(g);
                Coeff t = Coeff::from_complex(target.value(v));
                Word vs = adjoint(v);
                p.add_term(v, vs, scale);
                p.add_term(v, {}, -(t.conj() * scale));
                p.add_term({}, vs, -(t * scale));
                p.add_term({}, {}, t * t.conj() * scale);
                next.push_back(std::move(v));
            }
        level = std::move(next);
    }
    return p;
}

RelationReport pressure_relation_check(const NCPoly& h, const std::vector<SpectralMeasure>& marginals, int N, double R,
                                       const GibbsSettings& s)
{
    const int n = static_cast<int>(marginals.size());
    FamilyLayout layout = FamilyLayout::singletons(n, R);
    require_same_layout(layout, h.layout());
    for (const auto& mu : marginals)
        if (mu.support_radius() > R) throw std::invalid_argument("marginal support exceeds R");
    RelationReport r;
    r.N = N;
    r.R = R;
    const double n2 = double(N) * N;

    MatrixTuple xi = quantile_tuple(layout, marginals, N);
    LogZResult orb = log_partition(orbital_config(h, xi, s, derive_seed(s.seed, 1)), s.method, s.thermo);
    r.orbital_pressure = {orb.log_z.value / n2, orb.log_z.stderr / n2};

    GibbsConfig mc;
    mc.kind = EnsembleKind::Matrix;
    mc.N = N;
    mc.R = R;
    mc.h = h;
    mc.sweeps = s.sweeps;
    mc.burn_in = s.burn_in;
    mc.thin = s.thin;
    mc.eps = s.eps;
    mc.autotune = s.autotune;
    mc.seed = derive_seed(s.seed, 2);
    LogZResult mat = log_partition(mc, LogZMethod::Thermodynamic, s.thermo);
    r.matrix_pressure = {mat.log_z.value / n2, mat.log_z.stderr / n2};

    r.chi_reference = n * chi_single(SpectralMeasure::arcsine(-R, R));
    for (const auto& mu : marginals) r.chi_sum += chi_single(mu);
    r.lhs = r.matrix_pressure.value + r.chi_reference;
    r.rhs = r.orbital_pressure.value + r.chi_sum;
    r.margin = {r.lhs - r.rhs, std::hypot(r.matrix_pressure.stderr, r.orbital_pressure.stderr)};
    r.scale = std::max({std::abs(r.lhs), std::abs(r.rhs), 1e-12});
    return r;
}

double grid_microstate_pressure(const NCPoly& h, const MomentTable& target, int m, double delta, int grid)
{
    const FamilyLayout& layout = target.layout();
    require_same_layout(layout, h.layout());
    if (grid < 2) throw std::invalid_argument("grid needs at least two points");
    const int vars = layout.variable_count();
    const double R = layout.R;
    double best = -std::numeric_limits<double>::infinity();
    std::vector<int> idx(vars, 0);
    while (true) {
        std::vector<std::vector<Matrix>> fams(layout.n);
        int k = 0;
        for (int i = 0; i < layout.n; ++i)
            for (int j = 0; j < layout.r[i]; ++j, ++k)
                fams[i].push_back(Matrix::Constant(1, 1, -R + 2 * R * idx[k] / double(grid - 1)));
        MatrixTuple t = MatrixTuple::make(layout, fams);
        // at N = 1 the orbital integral is the integrand itself
        if (microstate_check(t, target, m, delta)) best = std::max(best, -trace_evaluate(h, t).real());
        int pos = vars - 1;
        while (pos >= 0 && ++idx[pos] == grid) idx[pos--] = 0;
        if (pos < 0) break;
    }
    return best;
}

} // namespace orbfree
