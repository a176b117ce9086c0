#pragma once

#include <complex>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "orbfree/ncpoly.hpp"
#include "orbfree/randmat.hpp"

namespace orbfree {

enum class Alphabet { X, UZ };

// Truncated tracial state. Keys are trace_key representatives, so traciality
// and value(w*) = conj(value(w)) hold by construction.
class MomentTable {
public:
    using Entries = std::unordered_map<Word, cplx, WordHash>;

    MomentTable() = default;
    MomentTable(FamilyLayout layout, Alphabet alphabet, int degree);

    const FamilyLayout& layout() const { return layout_; }
    Alphabet alphabet() const { return alphabet_; }
    int degree() const { return degree_; }
    const Entries& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    bool contains(const Word& w) const;
    cplx value(const Word& w) const;
    void set(const Word& w, cplx v);
    // sorted representatives
    std::vector<Word> keys() const;

    cplx evaluate(const NCPoly& p) const;
    cplx evaluate(const TensorNCPoly& t) const;

    // unit value, real self-conjugate classes, |value| <= R^(letter count); returns max violation
    double invariant_violation() const;

private:
    FamilyLayout layout_;
    Alphabet alphabet_ = Alphabet::X;
    int degree_ = 0;
    Entries entries_;
};

bool is_self_conjugate(const Word& key);
std::vector<Generator> alphabet_letters(const FamilyLayout& layout, Alphabet alphabet);
// Every reduced word of length <= m, and the distinct trace keys among them.
std::vector<Word> reduced_words(const FamilyLayout& layout, Alphabet alphabet, int m);
std::vector<Word> trace_classes(const FamilyLayout& layout, Alphabet alphabet, int m);

MomentTable empirical_state(const MatrixTuple& tuple, int m, Alphabet alphabet = Alphabet::X);
MomentTable empirical_orbital_state(const std::vector<Matrix>& unitaries, const MatrixTuple& microstates, int m);

double moment_distance(const MomentTable& a, const MomentTable& b, int m);
bool microstate_check(const MatrixTuple& tuple, const MomentTable& target, int m, double delta);
bool orbital_microstate_check(const std::vector<Matrix>& unitaries, const MatrixTuple& microstates,
                              const MomentTable& target, int m, double delta);

// Single-variable table of a measure (layout: one family of one variable).
MomentTable measure_table(const SpectralMeasure& mu, int m, double R);
// Restriction of a joint table to family i, relabelled as a one-family table.
MomentTable family_marginal(const MomentTable& joint, int i);

// Freeness recursion: alternating products of centered elements have trace 0.
class FreeProductEvaluator {
public:
    using BlockOf = std::function<int(const Generator&)>;
    using Marginal = std::function<cplx(int block, const Word& w)>;

    FreeProductEvaluator(BlockOf block_of, Marginal marginal);
    cplx value(const Word& w);
    std::size_t memo_size() const { return memo_.size(); }

private:
    cplx compute(const Word& key);

    BlockOf block_of_;
    Marginal marginal_;
    std::unordered_map<Word, cplx, WordHash> memo_;
};

// Free product of per-family tables (each a one-family table).
FreeProductEvaluator free_product_evaluator(const std::vector<MomentTable>& marginals);
MomentTable free_product(const FamilyLayout& layout, const std::vector<MomentTable>& marginals, int m);
// u,z table where the u_i are free Haar unitaries and the z-families are free with the given marginals.
FreeProductEvaluator free_haar_evaluator(const std::vector<MomentTable>& z_marginals);
MomentTable free_haar_product(const FamilyLayout& layout, const std::vector<MomentTable>& z_marginals, int m);

// moments[0] = 1; returns kappa[0] = 0, kappa[1..m]
std::vector<cplx> free_cumulants(const std::vector<cplx>& moments);
std::vector<cplx> free_cumulants(const MomentTable& mu, int m);
std::vector<cplx> moments_from_cumulants(const std::vector<cplx>& kappa);

MomentTable mixture(const std::vector<MomentTable>& tables, const std::vector<double>& weights);

// log-energy of mu plus 3/4 + log(2 pi)/2; minus infinity for measures with atoms
double chi_single(const SpectralMeasure& mu);

std::string alphabet_name(Alphabet a);
void write_moment_table(const std::string& path, const MomentTable& t);
MomentTable read_moment_table(const std::string& path);
std::string moment_table_json(const MomentTable& t);
MomentTable moment_table_from_json(const std::string& text);

} // namespace orbfree
