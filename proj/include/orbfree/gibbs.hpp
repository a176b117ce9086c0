#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "orbfree/moments.hpp"

namespace orbfree {

enum class EnsembleKind { UnitaryOrbital, Matrix };

struct GibbsConfig {
    EnsembleKind kind = EnsembleKind::UnitaryOrbital;
    int N = 2;
    NCPoly h;                        // over x; its layout is the ensemble layout
    std::optional<TensorNCPoly> h2;  // double-trace energy, added to h
    MatrixTuple microstates;         // unitary-orbital kind
    double R = 1;                    // matrix kind
    double beta = 1;
    double eps = 0.3;
    bool autotune = true;
    int sweeps = 1000;               // recorded samples; the chain runs burn_in + sweeps * thin sweeps
    int burn_in = 200;
    int thin = 1;
    int moment_degree = 0;           // per-sample moment vectors up to this degree
    std::uint64_t seed = 1;

    const FamilyLayout& layout() const { return h.layout(); }
    void validate() const;
};

std::string ensemble_name(EnsembleKind k);
// canonical description used for hashing and checkpoints
std::string config_json(const GibbsConfig& c);
std::string config_hash(const std::string& canonical);

// N^2 * scale * Re(tr h + (tr (x) tr) h2) on the effective tuple
double coupling_energy(const MatrixTuple& effective, const GibbsConfig& c, double scale);
double energy(const MatrixTuple& effective, const GibbsConfig& c);

struct TraceRow {
    int sweep;
    double beta;
    double energy;
    double acceptance;
};

class GibbsChain {
public:
    explicit GibbsChain(GibbsConfig c);

    const GibbsConfig& config() const { return config_; }
    // conjugated microstates, or the matrices themselves
    MatrixTuple effective() const;
    const std::vector<Matrix>& unitaries() const { return unitaries_; }
    double current_energy() const { return energy_; }
    double eps() const { return eps_; }
    int sweeps_done() const { return sweeps_done_; }

    // one Metropolis sweep over families (unitary kind) or variables (matrix kind)
    void step();
    // burn-in with step-size tuning, then the recorded sweeps
    void run();
    bool finished() const;

    double acceptance_rate() const;
    std::size_t accepted() const { return accepted_; }
    std::size_t proposed() const { return proposed_; }
    // N^2 Re tr h at unit scale, one per kept sample
    const std::vector<double>& coupling_samples() const { return coupling_; }
    const std::vector<Word>& moment_words() const { return words_; }
    const std::vector<std::vector<cplx>>& moment_samples() const { return moments_; }
    const std::vector<TraceRow>& trace() const { return trace_; }

    std::string checkpoint() const;
    static GibbsChain restore(const GibbsConfig& c, const std::string& checkpoint);

private:
    void record();
    void tune(int window_accepted, int window_proposed);
    void conjugate_family(int i);
    double propose_unitary(int i);
    double propose_matrix(int i, int j);
    void renormalize();

    GibbsConfig config_;
    Rng rng_;
    std::vector<Matrix> unitaries_;
    MatrixTuple conjugated_; // unitary-orbital kind: (V_i Xi_i V_i^*), kept in step with unitaries_
    std::vector<std::vector<Matrix>> matrices_;
    double energy_ = 0;
    double eps_ = 0;
    int sweeps_done_ = 0;
    std::size_t accepted_ = 0, proposed_ = 0;
    std::size_t window_acc_ = 0, window_prop_ = 0;
    std::vector<double> coupling_;
    std::vector<Word> words_;
    std::vector<std::vector<cplx>> moments_;
    std::vector<TraceRow> trace_;
};

struct Estimate {
    double value = 0;
    double stderr = 0;
};

// mean and standard error by batch means
Estimate batch_mean(const std::vector<double>& x, int batches = 20);

struct MeanState {
    MomentTable mean;
    MomentTable stderr; // real entries: standard error of each word
};
MeanState mean_tracial_state(const GibbsChain& chain, int m);

struct Occupancy {
    double fraction = 0;
    double log_over_N2 = 0; // -infinity when no sample qualifies
};
Occupancy occupancy(const GibbsChain& chain, const MomentTable& target, int m, double delta);

class DirectMethodRefused : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class LogZMethod { Direct, Thermodynamic };

struct ThermoSettings {
    int grid = 11;
    bool simpson = false;
    int threads = 1;
    double min_ess_fraction = 0.05; // direct method
};

struct LogZResult {
    Estimate log_z;
    std::vector<double> betas;
    std::vector<Estimate> mean_coupling; // per beta
    std::vector<double> acceptance;
    std::vector<std::vector<TraceRow>> traces;
    double ess = 0; // direct method
};

// Orbital kind: log Z with Haar reference. Matrix kind: log(Z^h / Z^0).
LogZResult log_partition(const GibbsConfig& c, LogZMethod method, const ThermoSettings& s = {});

void write_trace_csv(const std::string& path, const std::vector<std::vector<TraceRow>>& traces);

} // namespace orbfree
