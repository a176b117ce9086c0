#include "orbfree/randmat.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace orbfree {

Matrix haar_unitary(int N, Rng& rng)
{
    if (N < 1) throw std::invalid_argument("haar_unitary needs N >= 1");
    std::normal_distribution<double> gauss(0.0, std::sqrt(0.5));
    Matrix G(N, N);
    for (int c = 0; c < N; ++c)
        for (int r = 0; r < N; ++r) G(r, c) = cplx(gauss(rng), gauss(rng));
    Eigen::HouseholderQR<Matrix> qr(G);
    Matrix Q = qr.householderQ();
    const Matrix& R = qr.matrixQR();
    for (int k = 0; k < N; ++k) {
        cplx d = R(k, k);
        double m = std::abs(d);
        Q.col(k) *= m > 0 ? d / m : cplx(1.0);
    }
    return Q;
}

Matrix gue(int N, Rng& rng)
{
    if (N < 1) throw std::invalid_argument("gue needs N >= 1");
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double s = 1.0 / std::sqrt(double(N));
    Matrix H(N, N);
    for (int c = 0; c < N; ++c) {
        H(c, c) = gauss(rng) * s;
        for (int r = c + 1; r < N; ++r) {
            cplx v(gauss(rng) * s * std::sqrt(0.5), gauss(rng) * s * std::sqrt(0.5));
            H(r, c) = v;
            H(c, r) = std::conj(v);
        }
    }
    return H;
}

SpectralMeasure SpectralMeasure::semicircle(double radius)
{
    if (!(radius > 0)) throw std::invalid_argument("semicircle radius must be positive");
    SpectralMeasure m;
    m.kind_ = Kind::Semicircle;
    m.a_ = radius;
    return m;
}

SpectralMeasure SpectralMeasure::bernoulli(double a)
{
    SpectralMeasure m = atomic({{-a, 0.5}, {a, 0.5}});
    m.kind_ = Kind::Bernoulli;
    m.a_ = a;
    return m;
}

SpectralMeasure SpectralMeasure::arcsine(double a, double b)
{
    if (!(b > a)) throw std::invalid_argument("arcsine needs a < b");
    SpectralMeasure m;
    m.kind_ = Kind::Arcsine;
    m.a_ = a;
    m.b_ = b;
    return m;
}

SpectralMeasure SpectralMeasure::uniform(double a, double b)
{
    if (!(b > a)) throw std::invalid_argument("uniform needs a < b");
    SpectralMeasure m;
    m.kind_ = Kind::Uniform;
    m.a_ = a;
    m.b_ = b;
    return m;
}

SpectralMeasure SpectralMeasure::atomic(std::vector<std::pair<double, double>> point_weight)
{
    if (point_weight.empty()) throw std::invalid_argument("atomic measure needs atoms");
    std::sort(point_weight.begin(), point_weight.end());
    double total = 0;
    for (const auto& [x, w] : point_weight) {
        if (!(w >= 0) || !std::isfinite(x)) throw std::invalid_argument("atomic weights must be nonnegative");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("atomic weights must sum to 1");
    SpectralMeasure m;
    m.kind_ = Kind::Atomic;
    m.atoms_ = std::move(point_weight);
    return m;
}

SpectralMeasure SpectralMeasure::empirical(std::vector<double> sample)
{
    if (sample.empty()) throw std::invalid_argument("empirical measure needs a sample");
    std::vector<std::pair<double, double>> atoms;
    for (double x : sample) atoms.emplace_back(x, 1.0 / sample.size());
    SpectralMeasure m = atomic(std::move(atoms));
    m.kind_ = Kind::Empirical;
    return m;
}

namespace {

std::vector<double> split_numbers(const std::string& s, char sep)
{
    std::vector<double> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, sep)) {
        std::size_t used = 0;
        double v = std::stod(item, &used);
        if (used != item.size()) throw std::invalid_argument("bad number '" + item + "'");
        out.push_back(v);
    }
    return out;
}

} // namespace

SpectralMeasure SpectralMeasure::parse(const std::string& spec)
{
    auto colon = spec.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("measure spec needs 'name:parameters': " + spec);
    std::string name = spec.substr(0, colon), args = spec.substr(colon + 1);
    try {
        if (name == "atomic") {
            std::vector<std::pair<double, double>> atoms;
            std::stringstream in(args);
            std::string item;
            while (std::getline(in, item, ',')) {
                auto at = item.find('@');
                if (at == std::string::npos) throw std::invalid_argument("atomic entries are weight@point");
                atoms.emplace_back(std::stod(item.substr(at + 1)), std::stod(item.substr(0, at)));
            }
            return atomic(std::move(atoms));
        }
        auto v = split_numbers(args, ',');
        if (name == "semicircle" && v.size() == 1) return semicircle(v[0]);
        if (name == "bernoulli" && v.size() == 1) return bernoulli(v[0]);
        if (name == "arcsine" && v.size() == 2) return arcsine(v[0], v[1]);
        if (name == "arcsine" && v.size() == 1) return arcsine(-v[0], v[0]);
        if (name == "uniform" && v.size() == 2) return uniform(v[0], v[1]);
        if (name == "uniform" && v.size() == 1) return uniform(-v[0], v[0]);
        if (name == "empirical") return empirical(v);
    }
    catch (const std::logic_error& e) {
        throw std::invalid_argument("bad measure spec '" + spec + "': " + e.what());
    }
    throw std::invalid_argument("unknown measure spec '" + spec + "'");
}

std::string SpectralMeasure::spec() const
{
    std::ostringstream out;
    out.precision(17);
    switch (kind_) {
    case Kind::Semicircle: out << "semicircle:" << a_; break;
    case Kind::Bernoulli: out << "bernoulli:" << a_; break;
    case Kind::Arcsine: out << "arcsine:" << a_ << "," << b_; break;
    case Kind::Uniform: out << "uniform:" << a_ << "," << b_; break;
    case Kind::Atomic:
        out << "atomic:";
        for (std::size_t k = 0; k < atoms_.size(); ++k) out << (k ? "," : "") << atoms_[k].second << "@" << atoms_[k].first;
        break;
    case Kind::Empirical:
        out << "empirical:";
        for (std::size_t k = 0; k < atoms_.size(); ++k) out << (k ? "," : "") << atoms_[k].first;
        break;
    }
    return out.str();
}

double SpectralMeasure::cdf(double x) const
{
    using std::numbers::pi;
    switch (kind_) {
    case Kind::Semicircle: {
        double r = a_;
        if (x <= -r) return 0;
        if (x >= r) return 1;
        return 0.5 + (x * std::sqrt(r * r - x * x) + r * r * std::asin(x / r)) / (pi * r * r);
    }
    case Kind::Arcsine:
        if (x <= a_) return 0;
        if (x >= b_) return 1;
        return 2.0 / pi * std::asin(std::sqrt((x - a_) / (b_ - a_)));
    case Kind::Uniform: return std::clamp((x - a_) / (b_ - a_), 0.0, 1.0);
    default: {
        double c = 0;
        for (const auto& [p, w] : atoms_)
            if (p <= x) c += w;
        return c;
    }
    }
}

double SpectralMeasure::quantile(double u) const
{
    using std::numbers::pi;
    if (!(u >= 0 && u <= 1)) throw std::invalid_argument("quantile level outside [0,1]");
    switch (kind_) {
    case Kind::Semicircle: {
        double lo = -a_, hi = a_;
        for (int it = 0; it < 200 && hi - lo > 1e-16 * a_; ++it) {
            double mid = 0.5 * (lo + hi);
            if (cdf(mid) < u) lo = mid;
            else hi = mid;
        }
        return 0.5 * (lo + hi);
    }
    case Kind::Arcsine: {
        double s = std::sin(pi * u / 2);
        return a_ + (b_ - a_) * s * s;
    }
    case Kind::Uniform: return a_ + (b_ - a_) * u;
    default: {
        double c = 0;
        for (const auto& [p, w] : atoms_) {
            c += w;
            if (c >= u - 1e-12) return p;
        }
        return atoms_.back().first;
    }
    }
}

double SpectralMeasure::moment(int k) const
{
    if (k < 0) throw std::invalid_argument("negative moment order");
    switch (kind_) {
    case Kind::Semicircle: {
        if (k % 2) return 0;
        // Catalan(k/2) (r/2)^k
        double c = 1;
        int n = k / 2;
        for (int l = 0; l < n; ++l) c = c * 2 * (2 * l + 1) / (l + 2);
        return c * std::pow(a_ / 2, k);
    }
    case Kind::Arcsine: {
        double c = 0.5 * (a_ + b_), w = 0.5 * (b_ - a_);
        double s = 0, binom = 1;
        for (int j = 0; j <= k; ++j) {
            if (j > 0) binom = binom * (k - j + 1) / j;
            if (j % 2) continue;
            double even = 1; // E cos^j = C(j, j/2)/2^j
            for (int l = 0; l < j / 2; ++l) even = even * (j - l) / (l + 1) / 4.0;
            s += binom * std::pow(c, k - j) * std::pow(w, j) * even;
        }
        return s;
    }
    case Kind::Uniform: return (std::pow(b_, k + 1) - std::pow(a_, k + 1)) / ((k + 1) * (b_ - a_));
    default: {
        double s = 0;
        for (const auto& [p, w] : atoms_) s += w * std::pow(p, k);
        return s;
    }
    }
}

std::vector<double> SpectralMeasure::moments(int m) const
{
    std::vector<double> out(m + 1);
    for (int k = 0; k <= m; ++k) out[k] = moment(k);
    return out;
}

std::pair<double, double> SpectralMeasure::support() const
{
    switch (kind_) {
    case Kind::Semicircle: return {-a_, a_};
    case Kind::Arcsine:
    case Kind::Uniform: return {a_, b_};
    default: {
        double lo = atoms_.front().first, hi = atoms_.back().first;
        for (const auto& [p, w] : atoms_)
            if (w > 0) {
                lo = p;
                break;
            }
        for (auto it = atoms_.rbegin(); it != atoms_.rend(); ++it)
            if (it->second > 0) {
                hi = it->first;
                break;
            }
        return {lo, hi};
    }
    }
}

double SpectralMeasure::support_radius() const
{
    auto [lo, hi] = support();
    return std::max(std::abs(lo), std::abs(hi));
}

double SpectralMeasure::density(double x) const
{
    using std::numbers::pi;
    switch (kind_) {
    case Kind::Semicircle:
        if (std::abs(x) >= a_) return 0;
        return 2.0 / (pi * a_ * a_) * std::sqrt(a_ * a_ - x * x);
    case Kind::Arcsine:
        if (x <= a_ || x >= b_) return 0;
        return 1.0 / (pi * std::sqrt((x - a_) * (b_ - x)));
    case Kind::Uniform: return (x < a_ || x > b_) ? 0 : 1.0 / (b_ - a_);
    default: throw std::logic_error("atomic measures have no density");
    }
}

Matrix quantile_microstate(const SpectralMeasure& mu, int N, double R)
{
    if (N < 1) throw std::invalid_argument("microstate needs N >= 1");
    if (mu.support_radius() > R * (1 + 1e-12)) throw std::invalid_argument("measure support exceeds the cutoff R");
    Matrix D = Matrix::Zero(N, N);
    for (int k = 1; k <= N; ++k) {
        double q = mu.quantile((k - 0.5) / N);
        if (!std::isfinite(q)) throw std::invalid_argument("unbounded quantile");
        D(k - 1, k - 1) = q;
    }
    return D;
}

double operator_norm_selfadjoint(const Matrix& A)
{
    Eigen::SelfAdjointEigenSolver<Matrix> es(A, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
    const auto& ev = es.eigenvalues();
    return std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
}

Matrix spectral_clip(const Matrix& A, double S)
{
    if (!(S > 0)) throw std::invalid_argument("clip level must be positive");
    Eigen::SelfAdjointEigenSolver<Matrix> es(A);
    if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues();
    if (ev(0) >= -S && ev(ev.size() - 1) <= S) return A;
    for (int k = 0; k < ev.size(); ++k) ev(k) = std::clamp(ev(k), -S, S);
    const Matrix& Q = es.eigenvectors();
    Matrix out = Q * ev.cast<cplx>().asDiagonal() * Q.adjoint();
    return 0.5 * (out + Matrix(out.adjoint()));
}

MatrixTuple MatrixTuple::make(const FamilyLayout& layout, std::vector<std::vector<Matrix>> selfadjoint,
                              std::vector<Matrix> unitaries)
{
    MatrixTuple t;
    t.layout = layout;
    t.selfadjoint = std::move(selfadjoint);
    t.unitaries = std::move(unitaries);
    if (t.selfadjoint.empty() || t.selfadjoint[0].empty()) throw std::invalid_argument("tuple needs matrices");
    t.N = static_cast<int>(t.selfadjoint[0][0].rows());
    for (const auto& V : t.unitaries) t.unitary_adjoints.push_back(V.adjoint());
    t.validate();
    return t;
}

void MatrixTuple::validate() const
{
    layout.validate();
    if (static_cast<int>(selfadjoint.size()) != layout.n) throw LayoutError("tuple family count differs from layout");
    for (int i = 0; i < layout.n; ++i) {
        if (static_cast<int>(selfadjoint[i].size()) != layout.r[i]) throw LayoutError("tuple family size differs from layout");
        for (const auto& A : selfadjoint[i]) {
            if (A.rows() != N || A.cols() != N) throw std::invalid_argument("matrix dimension mismatch");
            if ((A - A.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, A.cwiseAbs().maxCoeff()))
                throw std::invalid_argument("self-adjoint slot holds a non-Hermitian matrix");
            if (operator_norm_selfadjoint(A) > layout.R * (1 + 1e-12) + 1e-12)
                throw std::invalid_argument("self-adjoint matrix exceeds the cutoff R");
        }
    }
    if (!unitaries.empty()) {
        if (static_cast<int>(unitaries.size()) != layout.n) throw LayoutError("one unitary per family required");
        for (const auto& V : unitaries) {
            if (V.rows() != N || V.cols() != N) throw std::invalid_argument("matrix dimension mismatch");
            if ((V.adjoint() * V - Matrix::Identity(N, N)).norm() > 1e-10)
                throw std::invalid_argument("unitary slot holds a non-unitary matrix");
        }
    }
}

const Matrix& MatrixTuple::letter(Generator g) const
{
    switch (g.kind) {
    case Letter::X:
    case Letter::Z: return selfadjoint.at(g.i - 1).at(g.j - 1);
    case Letter::U:
        if (unitaries.empty()) throw AlphabetError("tuple has no unitaries");
        return unitaries.at(g.i - 1);
    case Letter::Ustar:
        if (unitaries.empty()) throw AlphabetError("tuple has no unitaries");
        return unitary_adjoints.at(g.i - 1);
    }
    throw std::logic_error("bad letter");
}

MatrixTuple conjugate(const MatrixTuple& microstates, const std::vector<Matrix>& V)
{
    if (static_cast<int>(V.size()) != microstates.layout.n) throw LayoutError("one unitary per family required");
    MatrixTuple t;
    t.layout = microstates.layout;
    t.N = microstates.N;
    t.selfadjoint.resize(t.layout.n);
    for (int i = 0; i < t.layout.n; ++i)
        for (const auto& A : microstates.selfadjoint[i]) {
            Matrix X = V[i] * A * V[i].adjoint();
            t.selfadjoint[i].push_back(0.5 * (X + Matrix(X.adjoint())));
        }
    return t;
}

MatrixTuple quantile_tuple(const FamilyLayout& layout, const std::vector<SpectralMeasure>& measures, int N)
{
    if (static_cast<int>(measures.size()) != layout.variable_count())
        throw LayoutError("one measure per variable required");
    std::vector<std::vector<Matrix>> mats(layout.n);
    std::size_t k = 0;
    for (int i = 0; i < layout.n; ++i)
        for (int j = 0; j < layout.r[i]; ++j) mats[i].push_back(quantile_microstate(measures[k++], N, layout.R));
    return MatrixTuple::make(layout, std::move(mats));
}

Matrix evaluate_word(const Word& w, const MatrixTuple& t)
{
    Matrix P = Matrix::Identity(t.N, t.N);
    for (const auto& g : w) P = P * t.letter(g);
    return P;
}

Matrix evaluate(const NCPoly& p, const MatrixTuple& t)
{
    require_same_layout(p.layout(), t.layout);
    Matrix out = Matrix::Zero(t.N, t.N);
    for (const auto& [w, c] : p.terms()) out += c.value() * evaluate_word(w, t);
    return out;
}

cplx trace_word(const Word& w, const MatrixTuple& t)
{
    if (w.empty()) return 1.0;
    if (w.size() == 1) return t.letter(w[0]).trace() / double(t.N);
    Matrix P = t.letter(w[0]);
    for (std::size_t k = 1; k + 1 < w.size(); ++k) P = P * t.letter(w[k]);
    const Matrix& L = t.letter(w.back());
    return (P.transpose().cwiseProduct(L)).sum() / double(t.N);
}

cplx trace_evaluate(const NCPoly& p, const MatrixTuple& t)
{
    require_same_layout(p.layout(), t.layout);
    cplx s = 0;
    for (const auto& [w, c] : p.terms()) s += c.value() * trace_word(w, t);
    return s;
}

cplx double_trace_evaluate(const TensorNCPoly& p, const MatrixTuple& t)
{
    require_same_layout(p.layout(), t.layout);
    cplx s = 0;
    for (const auto& [k, c] : p.terms()) s += c.value() * trace_word(k.first, t) * trace_word(k.second, t);
    return s;
}

namespace {

nlohmann::json matrix_json(const Matrix& A)
{
    nlohmann::json out = nlohmann::json::array();
    for (int c = 0; c < A.cols(); ++c)
        for (int r = 0; r < A.rows(); ++r) out.push_back({A(r, c).real(), A(r, c).imag()});
    return out;
}

Matrix json_matrix(const nlohmann::json& j, int N)
{
    if (!j.is_array() || static_cast<int>(j.size()) != N * N) throw std::invalid_argument("matrix entry count differs from N*N");
    Matrix A(N, N);
    std::size_t k = 0;
    for (int c = 0; c < N; ++c)
        for (int r = 0; r < N; ++r, ++k) A(r, c) = cplx(j[k].at(0).get<double>(), j[k].at(1).get<double>());
    return A;
}

} // namespace

MatrixTuple read_matrix_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open matrix file " + path);
    nlohmann::json j;
    in >> j;
    int n = j.at("n").get<int>(), N = j.at("N").get<int>();
    const auto& fams = j.at("families");
    if (static_cast<int>(fams.size()) != n) throw std::invalid_argument("matrix file family count differs from n");
    std::vector<int> sizes;
    std::vector<std::vector<Matrix>> mats(n);
    double R = 0;
    for (int i = 0; i < n; ++i) {
        sizes.push_back(static_cast<int>(fams[i].size()));
        for (const auto& m : fams[i]) {
            mats[i].push_back(json_matrix(m, N));
            R = std::max(R, operator_norm_selfadjoint(mats[i].back()));
        }
    }
    if (j.contains("R")) R = j["R"].get<double>();
    std::vector<Matrix> unitaries;
    if (j.contains("unitaries"))
        for (const auto& m : j["unitaries"]) unitaries.push_back(json_matrix(m, N));
    return MatrixTuple::make(FamilyLayout(sizes, R > 0 ? R : 1.0), std::move(mats), std::move(unitaries));
}

void write_matrix_file(const std::string& path, const MatrixTuple& t)
{
    nlohmann::json j;
    j["n"] = t.layout.n;
    j["N"] = t.N;
    j["R"] = t.layout.R;
    j["families"] = nlohmann::json::array();
    for (const auto& fam : t.selfadjoint) {
        nlohmann::json f = nlohmann::json::array();
        for (const auto& A : fam) f.push_back(matrix_json(A));
        j["families"].push_back(f);
    }
    if (!t.unitaries.empty()) {
        j["unitaries"] = nlohmann::json::array();
        for (const auto& V : t.unitaries) j["unitaries"].push_back(matrix_json(V));
    }
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("cannot write matrix file " + path);
    out << j.dump() << "\n";
}

} // namespace orbfree
