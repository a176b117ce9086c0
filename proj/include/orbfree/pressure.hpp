#pragma once

#include <optional>
#include <string>
#include <vector>

#include "orbfree/gibbs.hpp"

namespace orbfree {

struct GibbsSettings {
    int sweeps = 1000;
    int burn_in = 200;
    int thin = 1;
    double eps = 0.3;
    bool autotune = true;
    std::uint64_t seed = 1;
    LogZMethod method = LogZMethod::Thermodynamic;
    ThermoSettings thermo;
};

GibbsConfig orbital_config(const NCPoly& h, const MatrixTuple& microstates, const GibbsSettings& s, std::uint64_t seed);

struct PressurePoint {
    int N = 0;
    Estimate log_z;
    Estimate normalized; // log Z / N^2
    bool within_range = true; // |normalized| <= norm bound
    std::vector<std::vector<TraceRow>> traces;
};

struct Extrapolation {
    bool available = false;
    double a = 0, b = 0; // normalized ~ a + b / N
    double r2 = 0;
    std::vector<double> residuals;
};

struct PressureEstimate {
    std::string h;
    std::string source;
    double norm_bound = 0;
    std::vector<PressurePoint> points;
    Extrapolation fit;
};

Extrapolation fit_inverse_n(const std::vector<PressurePoint>& points);

// one microstate tuple per N
PressureEstimate pressure_estimate(const NCPoly& h, const std::vector<MatrixTuple>& microstates, const GibbsSettings& s,
                                   const std::string& source = "");
PressureEstimate double_pressure(const TensorNCPoly& h2, const std::vector<MatrixTuple>& microstates,
                                 const GibbsSettings& s, const std::string& source = "");

// Haar samples shared by every evaluation. With groups, the samples are the
// Cartesian product of independent draws per family group.
struct SampleSet {
    MatrixTuple microstates;
    std::vector<std::vector<Matrix>> unitaries; // [sample][family]
    std::vector<std::vector<int>> groups;        // 1-based families

    static SampleSet haar(const MatrixTuple& microstates, int S, std::uint64_t seed);
    static SampleSet product(const MatrixTuple& microstates, const std::vector<std::vector<int>>& groups, int per_group,
                             std::uint64_t seed);
    std::size_t size() const { return unitaries.size(); }
};

// Re tr_N h on every conjugated sample
std::vector<double> sample_traces(const NCPoly& h, const SampleSet& s);
std::vector<double> sample_traces(const TensorNCPoly& h2, const SampleSet& s);
// (1/N^2) log mean exp(-N^2 t_s)
double pressure_from_traces(const std::vector<double>& traces, int N);
double empirical_pressure(const NCPoly& h, const SampleSet& s);

struct PropertyReport {
    double lipschitz_gap = 0;        // |pi(h1) - pi(h2)|
    double lipschitz_sample_sup = 0; // max_s |tr(h1 - h2)|
    double lipschitz_norm_bound = 0;
    double monotone_margin = 0;   // pi(h1) - pi(h1 + q*q + c), must be >= 0
    double convexity_margin = 0;  // a pi(h1) + (1-a) pi(h2) - pi(a h1 + (1-a) h2), >= 0
    std::optional<double> additivity_error; // present when h1, h2 act on disjoint sample groups
    double shift_error = 0;       // |pi(h1 + c) - (pi(h1) - c)|
    double max_violation() const;
};

struct PropertyOptions {
    double alpha = 0.5;
    double constant = 0.37;
    std::optional<NCPoly> q; // monotone step h1 -> h1 + q* q + c; defaults to h2
};

PropertyReport finite_N_property_suite(const NCPoly& h1, const NCPoly& h2, const SampleSet& samples,
                                       const PropertyOptions& opt = {});

struct EtaSettings {
    int samples = 200;
    int basis_degree = 3;
    int max_evals = 200;
    int restarts = 2;
    double initial_step = 0.5;
    double marginal_tol = 1e-9;
    std::uint64_t seed = 1;
    bool include_zero_only = false; // basis {0}
};

struct MarginalWitness {
    int family = 0;
    Word word;
    NCPoly p;                // self-adjoint element with tau(p) < tau_i(p)
    double gap = 0;          // tau(p) - tau_i(p) < 0
    std::vector<std::pair<double, double>> ray; // (alpha, objective)
};

struct EtaEstimate {
    int N = 0;
    std::vector<NCPoly> basis;
    std::vector<double> coefficients;
    double value = 0;
    int evaluations = 0;
    bool converged = false;
    double simplex_size = 0;
    std::vector<double> best_trace;
    std::optional<MarginalWitness> witness; // divergence along the witness ray
};

// mixed-family self-adjoint basis elements of degree <= d
std::vector<NCPoly> mixed_basis(const FamilyLayout& layout, int d);
std::optional<MarginalWitness> marginal_witness(const MomentTable& target, const MatrixTuple& microstates, double tol);
EtaEstimate eta_estimate(const MomentTable& target, const MatrixTuple& microstates, const EtaSettings& s);

struct OccupancyPoint {
    int N = 0;
    Occupancy occupancy;
};

struct EquilibriumReport {
    EtaEstimate eta;
    double rhs = 0; // tau(h) + pi(h) on the same samples
    double gap = 0; // eta - rhs, <= 0
    std::vector<OccupancyPoint> trajectory;
    double slope = 0; // of log fraction / N^2 against N
    bool marginal_violation = false;
};

EquilibriumReport equilibrium_check(const MomentTable& target, const NCPoly& h,
                                    const std::vector<MatrixTuple>& microstates, int m, double delta,
                                    const GibbsSettings& gs, const EtaSettings& es);

// (beta / delta^2) sum over words of length 1..m of (w - tau(w)) (x) (w - tau(w))^*
TensorNCPoly penalty_poly(const MomentTable& target, int m, double beta, double delta);

struct RelationReport {
    int N = 0;
    double R = 0;
    Estimate matrix_pressure; // (1/N^2) log(Z^h / Z^0)
    double chi_reference = 0; // n chi(arcsine on [-R, R]), the h = 0 matrix pressure
    Estimate orbital_pressure;
    double chi_sum = 0;
    double lhs = 0, rhs = 0;
    Estimate margin;
    double scale = 0;
};

// every family a singleton; h over x; marginals give the orbital microstates
RelationReport pressure_relation_check(const NCPoly& h, const std::vector<SpectralMeasure>& marginals, int N, double R,
                                       const GibbsSettings& s);

// N = 1 supremum over a grid of scalar microstates in Gamma_R(target; 1, m, delta)
double grid_microstate_pressure(const NCPoly& h, const MomentTable& target, int m, double delta, int grid);

} // namespace orbfree
