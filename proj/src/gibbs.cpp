#include "orbfree/gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "orbfree/parallel.hpp"
#include "orbfree/parser.hpp"

namespace orbfree {

namespace {

constexpr int renormalize_every = 64;
constexpr int tune_window = 10;

nlohmann::json matrix_json(const Matrix& A)
{
    nlohmann::json out = nlohmann::json::array();
    for (Eigen::Index c = 0; c < A.cols(); ++c)
        for (Eigen::Index r = 0; r < A.rows(); ++r) out.push_back({A(r, c).real(), A(r, c).imag()});
    return out;
}

Matrix matrix_from_json(const nlohmann::json& j, int N)
{
    if (static_cast<int>(j.size()) != N * N) throw std::invalid_argument("matrix size mismatch in checkpoint");
    Matrix A(N, N);
    std::size_t k = 0;
    for (int c = 0; c < N; ++c)
        for (int r = 0; r < N; ++r, ++k) A(r, c) = cplx(j[k][0].get<double>(), j[k][1].get<double>());
    return A;
}

Matrix unitary_step(const Matrix& H, double eps)
{
    Eigen::SelfAdjointEigenSolver<Matrix> es(H);
    Eigen::VectorXcd phases = (cplx(0, eps) * es.eigenvalues().cast<cplx>()).array().exp();
    Matrix scaled = es.eigenvectors() * phases.asDiagonal();
    return scaled * es.eigenvectors().adjoint();
}

std::string fmt(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

} // namespace

std::string ensemble_name(EnsembleKind k)
{
    return k == EnsembleKind::UnitaryOrbital ? "unitary-orbital" : "matrix";
}

void GibbsConfig::validate() const
{
    layout().validate();
    if (N < 1) throw std::invalid_argument("N must be positive");
    if (uses_uz(h)) throw AlphabetError("h must be written in the x alphabet");
    if (auto bad = trace_reality_violation(h)) throw std::invalid_argument("h has non-real trace at " + to_string(*bad));
    if (h2) {
        require_same_layout(layout(), h2->layout());
        if (!(adjoint(*h2) == *h2)) throw std::invalid_argument("h2 must be self-adjoint");
    }
    if (!(eps > 0)) throw std::invalid_argument("step size must be positive");
    if (sweeps < 1 || burn_in < 0 || thin < 1) throw std::invalid_argument("sweeps > 0, burn-in >= 0, thin >= 1 required");
    if (beta < 0) throw std::invalid_argument("beta must be nonnegative");
    if (moment_degree < 0) throw std::invalid_argument("moment degree must be nonnegative");
    if (kind == EnsembleKind::UnitaryOrbital) {
        if (!(microstates.layout == layout())) throw LayoutError("microstates do not match the layout of h");
        if (microstates.N != N) throw std::invalid_argument("microstate dimension differs from N");
    } else if (!(R > 0)) {
        throw std::invalid_argument("cutoff R must be positive");
    }
}

std::string config_json(const GibbsConfig& c)
{
    nlohmann::ordered_json j;
    j["kind"] = ensemble_name(c.kind);
    j["N"] = c.N;
    j["layout"] = c.layout().r;
    j["h"] = to_string(c.h);
    j["h2"] = c.h2 ? to_string(*c.h2) : std::string();
    j["R"] = fmt(c.R);
    j["beta"] = fmt(c.beta);
    j["eps"] = fmt(c.eps);
    j["autotune"] = c.autotune;
    j["sweeps"] = c.sweeps;
    j["burn_in"] = c.burn_in;
    j["thin"] = c.thin;
    j["moment_degree"] = c.moment_degree;
    j["seed"] = c.seed;
    if (c.kind == EnsembleKind::UnitaryOrbital) {
        std::string all;
        for (const auto& fam : c.microstates.selfadjoint)
            for (const auto& A : fam) all += matrix_json(A).dump();
        j["microstates"] = config_hash(all);
    }
    return j.dump();
}

std::string config_hash(const std::string& canonical)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

double coupling_energy(const MatrixTuple& effective, const GibbsConfig& c, double scale)
{
    if (scale == 0) return 0;
    cplx tr = trace_evaluate(c.h, effective);
    if (c.h2) tr += double_trace_evaluate(*c.h2, effective);
    if (std::abs(tr.imag()) > 1e-9 * std::max(1.0, std::abs(tr.real())))
        throw std::domain_error("trace of h is not real: imaginary part " + fmt(tr.imag()));
    const double n2 = double(c.N) * double(c.N);
    return n2 * scale * tr.real();
}

double energy(const MatrixTuple& effective, const GibbsConfig& c)
{
    return coupling_energy(effective, c, c.beta);
}

GibbsChain::GibbsChain(GibbsConfig c) : config_(std::move(c)), rng_(config_.seed), eps_(config_.eps)
{
    config_.validate();
    const FamilyLayout& L = config_.layout();
    if (config_.kind == EnsembleKind::UnitaryOrbital) {
        for (int i = 0; i < L.n; ++i) unitaries_.push_back(haar_unitary(config_.N, rng_));
    } else {
        matrices_.resize(L.n);
        for (int i = 0; i < L.n; ++i) matrices_[i].assign(L.r[i], Matrix::Zero(config_.N, config_.N));
    }
    if (config_.moment_degree > 0)
        for (auto& w : trace_classes(L, Alphabet::X, config_.moment_degree))
            if (!w.empty()) words_.push_back(std::move(w));
    if (config_.kind == EnsembleKind::UnitaryOrbital) conjugated_ = conjugate(config_.microstates, unitaries_);
    energy_ = energy(effective(), config_);
}

MatrixTuple GibbsChain::effective() const
{
    if (config_.kind == EnsembleKind::UnitaryOrbital) return conjugated_;
    MatrixTuple t;
    t.layout = config_.layout();
    t.N = config_.N;
    t.selfadjoint = matrices_;
    return t;
}

void GibbsChain::conjugate_family(int i)
{
    const Matrix& V = unitaries_[i];
    auto& out = conjugated_.selfadjoint[i];
    for (std::size_t j = 0; j < out.size(); ++j) {
        const Matrix& A = config_.microstates.selfadjoint[i][j];
        Matrix X;
        if (A.isDiagonal(0.0)) {
            Matrix scaled = V * A.diagonal().asDiagonal();
            X = scaled * V.adjoint();
        } else {
            X = V * A * V.adjoint();
        }
        out[j] = 0.5 * (X + Matrix(X.adjoint()));
    }
}

double GibbsChain::propose_unitary(int i)
{
    Matrix old = unitaries_[i];
    std::vector<Matrix> old_family = conjugated_.selfadjoint[i];
    unitaries_[i] = old * unitary_step(gue(config_.N, rng_), eps_);
    conjugate_family(i);
    double e = energy(conjugated_, config_);
    double accept = std::min(1.0, std::exp(energy_ - e));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    ++proposed_;
    if (u01(rng_) < accept) {
        ++accepted_;
        energy_ = e;
        return 1;
    }
    unitaries_[i] = old;
    conjugated_.selfadjoint[i] = std::move(old_family);
    return 0;
}

double GibbsChain::propose_matrix(int i, int j)
{
    Matrix old = matrices_[i][j];
    Matrix next = old + eps_ * gue(config_.N, rng_);
    next = (next + next.adjoint()).eval() * 0.5;
    ++proposed_;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    // Lebesgue measure restricted to the ball: moves leaving it are rejected
    if (operator_norm_selfadjoint(next) > config_.R) {
        (void)u01(rng_);
        return 0;
    }
    matrices_[i][j] = next;
    double e = energy(effective(), config_);
    double accept = std::min(1.0, std::exp(energy_ - e));
    if (u01(rng_) < accept) {
        ++accepted_;
        energy_ = e;
        return 1;
    }
    matrices_[i][j] = old;
    return 0;
}

void GibbsChain::renormalize()
{
    // Newton-Schulz steps towards the polar factor; the drift is at roundoff level
    const Matrix I = Matrix::Identity(config_.N, config_.N);
    for (auto& V : unitaries_)
        for (int k = 0; k < 2; ++k) V = 0.5 * V * (3.0 * I - V.adjoint() * V);
    conjugated_ = conjugate(config_.microstates, unitaries_);
    energy_ = energy(effective(), config_);
}

void GibbsChain::tune(int window_accepted, int window_proposed)
{
    if (window_proposed == 0) return;
    double rate = double(window_accepted) / window_proposed;
    double cap = config_.kind == EnsembleKind::UnitaryOrbital ? 4.0 : 2.0 * config_.R;
    if (rate < 0.3) eps_ *= 0.8;
    else if (rate > 0.5) eps_ = std::min(cap, eps_ * 1.25);
}

void GibbsChain::step()
{
    const std::size_t acc0 = accepted_, prop0 = proposed_;
    const FamilyLayout& L = config_.layout();
    if (config_.kind == EnsembleKind::UnitaryOrbital) {
        for (int i = 0; i < L.n; ++i) propose_unitary(i);
    } else {
        for (int i = 0; i < L.n; ++i)
            for (int j = 0; j < L.r[i]; ++j) propose_matrix(i, j);
    }
    ++sweeps_done_;
    if (config_.kind == EnsembleKind::UnitaryOrbital && sweeps_done_ % renormalize_every == 0) renormalize();
    if (sweeps_done_ <= config_.burn_in) {
        // tuning only inside burn-in; frozen afterwards
        window_acc_ += accepted_ - acc0;
        window_prop_ += proposed_ - prop0;
        if (config_.autotune && sweeps_done_ % tune_window == 0) {
            tune(static_cast<int>(window_acc_), static_cast<int>(window_prop_));
            window_acc_ = window_prop_ = 0;
        }
        return;
    }
    if ((sweeps_done_ - config_.burn_in) % config_.thin == 0) record();
}

bool GibbsChain::finished() const
{
    return sweeps_done_ >= config_.burn_in + config_.sweeps * config_.thin;
}

void GibbsChain::run()
{
    while (!finished()) step();
}

void GibbsChain::record()
{
    MatrixTuple eff = effective();
    coupling_.push_back(coupling_energy(eff, config_, 1.0));
    if (!words_.empty()) {
        MomentTable t = empirical_state(eff, config_.moment_degree);
        std::vector<cplx> row;
        row.reserve(words_.size());
        for (const auto& w : words_) row.push_back(t.value(w));
        moments_.push_back(std::move(row));
    }
    trace_.push_back({sweeps_done_, config_.beta, energy_, acceptance_rate()});
}

double GibbsChain::acceptance_rate() const
{
    return proposed_ == 0 ? 0.0 : double(accepted_) / double(proposed_);
}

std::string GibbsChain::checkpoint() const
{
    nlohmann::ordered_json j;
    std::string canonical = config_json(config_);
    j["config_hash"] = config_hash(canonical);
    std::ostringstream rng;
    rng << rng_;
    j["rng"] = rng.str();
    j["eps"] = fmt(eps_);
    j["sweeps_done"] = sweeps_done_;
    j["accepted"] = accepted_;
    j["proposed"] = proposed_;
    j["window"] = {window_acc_, window_prop_};
    nlohmann::json state = nlohmann::json::array();
    if (config_.kind == EnsembleKind::UnitaryOrbital)
        for (const auto& V : unitaries_) state.push_back(matrix_json(V));
    else
        for (const auto& fam : matrices_)
            for (const auto& A : fam) state.push_back(matrix_json(A));
    j["state"] = state;
    nlohmann::json coupling = nlohmann::json::array();
    for (double e : coupling_) coupling.push_back(fmt(e));
    j["coupling"] = coupling;
    nlohmann::json moments = nlohmann::json::array();
    for (const auto& row : moments_) {
        nlohmann::json r = nlohmann::json::array();
        for (const auto& v : row) r.push_back({fmt(v.real()), fmt(v.imag())});
        moments.push_back(r);
    }
    j["moments"] = moments;
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& t : trace_) trace.push_back({t.sweep, fmt(t.beta), fmt(t.energy), fmt(t.acceptance)});
    j["trace"] = trace;
    return j.dump();
}

GibbsChain GibbsChain::restore(const GibbsConfig& c, const std::string& text)
{
    GibbsChain chain(c);
    nlohmann::json j = nlohmann::json::parse(text);
    if (j.at("config_hash").get<std::string>() != config_hash(config_json(c)))
        throw std::invalid_argument("checkpoint was written for a different configuration");
    std::istringstream rng(j.at("rng").get<std::string>());
    rng >> chain.rng_;
    auto num = [](const nlohmann::json& v) { return std::stod(v.get<std::string>()); };
    chain.eps_ = num(j.at("eps"));
    chain.sweeps_done_ = j.at("sweeps_done").get<int>();
    chain.accepted_ = j.at("accepted").get<std::size_t>();
    chain.proposed_ = j.at("proposed").get<std::size_t>();
    chain.window_acc_ = j.at("window")[0].get<std::size_t>();
    chain.window_prop_ = j.at("window")[1].get<std::size_t>();
    const auto& state = j.at("state");
    std::size_t k = 0;
    if (c.kind == EnsembleKind::UnitaryOrbital)
        for (auto& V : chain.unitaries_) V = matrix_from_json(state.at(k++), c.N);
    else
        for (auto& fam : chain.matrices_)
            for (auto& A : fam) A = matrix_from_json(state.at(k++), c.N);
    chain.coupling_.clear();
    for (const auto& e : j.at("coupling")) chain.coupling_.push_back(num(e));
    chain.moments_.clear();
    for (const auto& row : j.at("moments")) {
        std::vector<cplx> r;
        for (const auto& v : row) r.emplace_back(num(v[0]), num(v[1]));
        chain.moments_.push_back(std::move(r));
    }
    chain.trace_.clear();
    for (const auto& t : j.at("trace")) chain.trace_.push_back({t[0].get<int>(), num(t[1]), num(t[2]), num(t[3])});
    if (c.kind == EnsembleKind::UnitaryOrbital) chain.conjugated_ = conjugate(c.microstates, chain.unitaries_);
    chain.energy_ = energy(chain.effective(), c);
    return chain;
}

Estimate batch_mean(const std::vector<double>& x, int batches)
{
    Estimate e;
    if (x.empty()) return e;
    e.value = std::accumulate(x.begin(), x.end(), 0.0) / double(x.size());
    const int b = std::min<int>(batches, static_cast<int>(x.size()));
    if (b < 2) return e;
    const std::size_t size = x.size() / b;
    std::vector<double> means;
    for (int k = 0; k < b; ++k) {
        double s = 0;
        for (std::size_t t = k * size; t < (k + 1) * size; ++t) s += x[t];
        means.push_back(s / double(size));
    }
    double mu = std::accumulate(means.begin(), means.end(), 0.0) / b;
    double var = 0;
    for (double m : means) var += (m - mu) * (m - mu);
    var /= (b - 1);
    e.stderr = std::sqrt(var / b);
    return e;
}

MeanState mean_tracial_state(const GibbsChain& chain, int m)
{
    const GibbsConfig& c = chain.config();
    if (m > c.moment_degree) throw std::invalid_argument("chain did not store moments of that degree");
    if (chain.moment_samples().empty()) throw std::invalid_argument("chain has no recorded samples");
    MeanState out{MomentTable(c.layout(), Alphabet::X, m), MomentTable(c.layout(), Alphabet::X, m)};
    const auto& words = chain.moment_words();
    const auto& samples = chain.moment_samples();
    std::vector<double> re(samples.size()), im(samples.size());
    for (std::size_t k = 0; k < words.size(); ++k) {
        if (static_cast<int>(words[k].size()) > m) continue;
        for (std::size_t s = 0; s < samples.size(); ++s) {
            re[s] = samples[s][k].real();
            im[s] = samples[s][k].imag();
        }
        Estimate a = batch_mean(re), b = batch_mean(im);
        cplx v(a.value, b.value);
        if (is_self_conjugate(words[k])) v = v.real();
        out.mean.set(words[k], v);
        out.stderr.set(words[k], std::hypot(a.stderr, b.stderr));
    }
    return out;
}

Occupancy occupancy(const GibbsChain& chain, const MomentTable& target, int m, double delta)
{
    const GibbsConfig& c = chain.config();
    if (m > c.moment_degree) throw std::invalid_argument("chain did not store moments of that degree");
    if (target.degree() < m) throw std::invalid_argument("target degree below m");
    const auto& words = chain.moment_words();
    std::vector<std::pair<std::size_t, cplx>> checks;
    for (std::size_t k = 0; k < words.size(); ++k)
        if (static_cast<int>(words[k].size()) <= m) checks.emplace_back(k, target.value(words[k]));
    std::size_t inside = 0;
    for (const auto& row : chain.moment_samples()) {
        bool ok = true;
        for (const auto& [k, v] : checks)
            if (!(std::abs(row[k] - v) < delta)) {
                ok = false;
                break;
            }
        inside += ok;
    }
    Occupancy o;
    const std::size_t total = chain.moment_samples().size();
    o.fraction = total == 0 ? 0.0 : double(inside) / double(total);
    o.log_over_N2 = inside == 0 ? -std::numeric_limits<double>::infinity() : std::log(o.fraction) / (double(c.N) * c.N);
    return o;
}

namespace {

LogZResult direct(const GibbsConfig& c, const ThermoSettings& s)
{
    LogZResult out;
    std::vector<double> e1;
    if (c.kind == EnsembleKind::UnitaryOrbital) {
        // independent Haar draws are exact samples of the reference measure
        Rng rng(derive_seed(c.seed, 0));
        for (int k = 0; k < c.sweeps; ++k) {
            std::vector<Matrix> V;
            for (int i = 0; i < c.layout().n; ++i) V.push_back(haar_unitary(c.N, rng));
            e1.push_back(coupling_energy(conjugate(c.microstates, V), c, 1.0));
        }
    } else {
        GibbsConfig ref = c;
        ref.beta = 0;
        ref.seed = derive_seed(c.seed, 0);
        GibbsChain chain(ref);
        chain.run();
        e1 = chain.coupling_samples();
        out.traces.push_back(chain.trace());
        out.acceptance.push_back(chain.acceptance_rate());
    }
    out.betas = {0.0};
    out.mean_coupling.push_back(batch_mean(e1));
    if (c.beta == 0) return out;
    double shift = -std::numeric_limits<double>::infinity();
    for (double e : e1) shift = std::max(shift, -c.beta * e);
    std::vector<double> w;
    for (double e : e1) w.push_back(std::exp(-c.beta * e - shift));
    double sum = std::accumulate(w.begin(), w.end(), 0.0), sum2 = 0;
    for (double x : w) sum2 += x * x;
    out.ess = sum * sum / sum2;
    if (out.ess < s.min_ess_fraction * double(w.size()))
        throw DirectMethodRefused("importance weights degenerate: effective sample size " + fmt(out.ess) + " of " +
                                  std::to_string(w.size()) + "; use the thermodynamic method");
    Estimate mw = batch_mean(w);
    out.log_z.value = std::log(mw.value) + shift;
    out.log_z.stderr = mw.stderr / mw.value;
    return out;
}

LogZResult thermodynamic(const GibbsConfig& c, const ThermoSettings& s)
{
    if (s.grid < 2) throw std::invalid_argument("beta grid needs at least two points");
    if (s.simpson && s.grid % 2 == 0) throw std::invalid_argument("Simpson's rule needs an odd number of grid points");
    LogZResult out;
    const int G = s.grid;
    out.betas.resize(G);
    out.mean_coupling.resize(G);
    out.acceptance.resize(G);
    out.traces.resize(G);
    for (int k = 0; k < G; ++k) out.betas[k] = c.beta * double(k) / double(G - 1);
    parallel_for(G, s.threads, [&](std::size_t k) {
        GibbsConfig ck = c;
        ck.beta = out.betas[k];
        ck.seed = derive_seed(c.seed, k + 1);
        GibbsChain chain(ck);
        chain.run();
        out.mean_coupling[k] = batch_mean(chain.coupling_samples());
        out.acceptance[k] = chain.acceptance_rate();
        out.traces[k] = chain.trace();
    });
    const double hstep = c.beta / double(G - 1);
    std::vector<double> w(G);
    for (int k = 0; k < G; ++k) {
        if (s.simpson) w[k] = hstep / 3.0 * (k == 0 || k == G - 1 ? 1.0 : (k % 2 ? 4.0 : 2.0));
        else w[k] = hstep * (k == 0 || k == G - 1 ? 0.5 : 1.0);
    }
    double value = 0, var = 0;
    for (int k = 0; k < G; ++k) {
        value -= w[k] * out.mean_coupling[k].value;
        var += w[k] * w[k] * out.mean_coupling[k].stderr * out.mean_coupling[k].stderr;
    }
    out.log_z = {value, std::sqrt(var)};
    return out;
}

} // namespace

LogZResult log_partition(const GibbsConfig& c, LogZMethod method, const ThermoSettings& s)
{
    c.validate();
    if (c.h.is_zero() && !c.h2) {
        LogZResult out;
        out.betas = {c.beta};
        out.mean_coupling = {Estimate{}};
        return out;
    }
    if (c.kind == EnsembleKind::UnitaryOrbital && c.N == 1) {
        // conjugation by a phase is trivial, the energy is constant
        LogZResult out;
        out.betas = {c.beta};
        out.mean_coupling = {Estimate{coupling_energy(c.microstates, c, 1.0), 0.0}};
        out.log_z.value = -energy(c.microstates, c);
        return out;
    }
    return method == LogZMethod::Direct ? direct(c, s) : thermodynamic(c, s);
}

void write_trace_csv(const std::string& path, const std::vector<std::vector<TraceRow>>& traces)
{
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "sweep,beta,energy,acceptance\n";
    char buf[160];
    for (const auto& tr : traces)
        for (const auto& r : tr) {
            std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", r.sweep, r.beta, r.energy, r.acceptance);
            f << buf;
        }
}

} // namespace orbfree
