#pragma once

#include <complex>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "orbfree/ncpoly.hpp"

namespace orbfree {

using Matrix = Eigen::MatrixXcd;
using Rng = std::mt19937_64;
using cplx = std::complex<double>;

Matrix haar_unitary(int N, Rng& rng);
// Hermitian with entry variance 1/N (real variance-1 Gaussian at N = 1).
Matrix gue(int N, Rng& rng);

class SpectralMeasure {
public:
    enum class Kind { Semicircle, Bernoulli, Arcsine, Uniform, Atomic, Empirical };

    static SpectralMeasure semicircle(double radius);
    static SpectralMeasure bernoulli(double a);
    static SpectralMeasure arcsine(double a, double b);
    static SpectralMeasure uniform(double a, double b);
    static SpectralMeasure atomic(std::vector<std::pair<double, double>> point_weight);
    static SpectralMeasure empirical(std::vector<double> sample);
    // "semicircle:2", "bernoulli:1", "arcsine:-1,1", "uniform:-1,1", "atomic:0.5@-1,0.5@1", "empirical:0.1,0.3"
    static SpectralMeasure parse(const std::string& spec);

    Kind kind() const { return kind_; }
    std::string spec() const;
    double quantile(double u) const;
    double cdf(double x) const;
    double moment(int k) const;
    std::vector<double> moments(int m) const;
    double support_radius() const;
    std::pair<double, double> support() const;
    bool has_atoms() const { return kind_ == Kind::Bernoulli || kind_ == Kind::Atomic || kind_ == Kind::Empirical; }
    // density of the absolutely continuous families
    double density(double x) const;

private:
    Kind kind_ = Kind::Semicircle;
    double a_ = 0, b_ = 0;
    std::vector<std::pair<double, double>> atoms_; // sorted by point
};

// diag(quantile((k - 1/2)/N)), k = 1..N
Matrix quantile_microstate(const SpectralMeasure& mu, int N, double R);
// eigenvalues mapped through t -> clamp(t, -S, S)
Matrix spectral_clip(const Matrix& A, double S);
double operator_norm_selfadjoint(const Matrix& A);

struct MatrixTuple {
    FamilyLayout layout;
    int N = 0;
    std::vector<std::vector<Matrix>> selfadjoint; // [family][variable]
    std::vector<Matrix> unitaries;                // empty, or one per family
    std::vector<Matrix> unitary_adjoints;

    static MatrixTuple make(const FamilyLayout& layout, std::vector<std::vector<Matrix>> selfadjoint,
                            std::vector<Matrix> unitaries = {});
    void validate() const;
    const Matrix& letter(Generator g) const;
};

// (V_i A_ij V_i^*)
MatrixTuple conjugate(const MatrixTuple& microstates, const std::vector<Matrix>& V);
// quantile diagonals, one measure per variable in layout order
MatrixTuple quantile_tuple(const FamilyLayout& layout, const std::vector<SpectralMeasure>& measures, int N);

Matrix evaluate_word(const Word& w, const MatrixTuple& t);
Matrix evaluate(const NCPoly& p, const MatrixTuple& t);
cplx trace_word(const Word& w, const MatrixTuple& t);
cplx trace_evaluate(const NCPoly& p, const MatrixTuple& t);
cplx double_trace_evaluate(const TensorNCPoly& p, const MatrixTuple& t);

// JSON envelope {"n", "N", "R", "families": [[matrix...]...], "unitaries": [...]},
// each matrix a column-major list of [re, im] pairs.
MatrixTuple read_matrix_file(const std::string& path);
void write_matrix_file(const std::string& path, const MatrixTuple& t);

} // namespace orbfree
