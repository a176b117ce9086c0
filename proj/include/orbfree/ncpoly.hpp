#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "orbfree/coeff.hpp"
#include "orbfree/layout.hpp"

namespace orbfree {

enum class Letter : std::uint8_t { X = 0, Z = 1, U = 2, Ustar = 3 };

struct Generator {
    Letter kind = Letter::X;
    std::uint8_t i = 1;
    std::uint8_t j = 0; // unused (0) for unitaries

    static Generator x(int i, int j) { return {Letter::X, std::uint8_t(i), std::uint8_t(j)}; }
    static Generator z(int i, int j) { return {Letter::Z, std::uint8_t(i), std::uint8_t(j)}; }
    static Generator u(int i) { return {Letter::U, std::uint8_t(i), 0}; }
    static Generator ustar(int i) { return {Letter::Ustar, std::uint8_t(i), 0}; }

    bool is_unitary() const { return kind == Letter::U || kind == Letter::Ustar; }
    bool is_selfadjoint() const { return !is_unitary(); }
    Generator adjoint() const;
    bool cancels(const Generator& next) const;
    std::uint16_t code() const { return std::uint16_t((unsigned(kind) << 14) | (unsigned(i) << 7) | j); }

    auto operator<=>(const Generator&) const = default;
};

using Word = std::vector<Generator>;

struct ShortLex {
    bool operator()(const Word& a, const Word& b) const;
};

struct WordHash {
    std::size_t operator()(const Word& w) const noexcept;
};

// Stack cancellation of u u* and u* u pairs.
Word reduce(const Word& w);
bool is_reduced(const Word& w);
Word concat(const Word& a, const Word& b);
Word adjoint(const Word& w);
Word subword(const Word& w, std::size_t begin, std::size_t end);
int selfadjoint_letter_count(const Word& w);
bool has_unitary(const Word& w);
bool has_x(const Word& w);
bool has_uz(const Word& w);

// Cyclic structure used for traces.
Word cyclic_reduce(const Word& w);
Word least_rotation(const Word& w);

// Representative of the class of w under rotation and adjoint; conj marks
// that the adjoint was chosen, so tau(w) = conj(tau(key)).
struct TraceKey {
    Word word;
    bool conj = false;
};
TraceKey trace_key(const Word& w);

class NCPoly {
public:
    using Terms = std::map<Word, Coeff, ShortLex>;

    NCPoly() = default;
    explicit NCPoly(FamilyLayout layout) : layout_(std::move(layout)) {}

    static NCPoly constant(const FamilyLayout& layout, const Coeff& c);
    static NCPoly monomial(const FamilyLayout& layout, const Word& w, const Coeff& c = Coeff(1));
    static NCPoly generator(const FamilyLayout& layout, Generator g);

    const FamilyLayout& layout() const { return layout_; }
    const Terms& terms() const { return terms_; }
    bool is_zero() const { return terms_.empty(); }
    int degree() const;
    Coeff coefficient(const Word& w) const;

    void add_term(const Word& w, const Coeff& c);

    NCPoly& operator+=(const NCPoly& o);
    NCPoly& operator-=(const NCPoly& o);
    NCPoly& operator*=(const Coeff& c);
    NCPoly operator-() const;

    friend NCPoly operator+(NCPoly a, const NCPoly& b) { return a += b; }
    friend NCPoly operator-(NCPoly a, const NCPoly& b) { return a -= b; }
    friend NCPoly operator*(NCPoly a, const Coeff& c) { return a *= c; }
    friend NCPoly operator*(const Coeff& c, NCPoly a) { return a *= c; }
    friend NCPoly operator*(const NCPoly& a, const NCPoly& b);
    friend bool operator==(const NCPoly& a, const NCPoly& b) { return a.layout_ == b.layout_ && a.terms_ == b.terms_; }

private:
    void check_word(const Word& w) const;

    FamilyLayout layout_;
    Terms terms_;
};

void require_same_layout(const FamilyLayout& a, const FamilyLayout& b);

enum class AlgebraOp { Add, Mul, Scale, Adjoint };
NCPoly algebra(AlgebraOp op, const NCPoly& a, const NCPoly& b);
NCPoly algebra(AlgebraOp op, const NCPoly& a, const Coeff& c);
NCPoly adjoint(const NCPoly& p);
bool is_self_adjoint(const NCPoly& p);
bool uses_x(const NCPoly& p);
bool uses_uz(const NCPoly& p);

// Word classes under rotation; the trace of p is real on every tuple exactly
// when the class coefficients of p and p* agree.
std::map<Word, Coeff, ShortLex> cyclic_classes(const NCPoly& p);
// Empty when the trace is real; otherwise the first offending class word.
std::optional<Word> trace_reality_violation(const NCPoly& p);

class TensorNCPoly {
public:
    using Key = std::pair<Word, Word>;
    struct KeyLess {
        bool operator()(const Key& a, const Key& b) const;
    };
    using Terms = std::map<Key, Coeff, KeyLess>;

    TensorNCPoly() = default;
    explicit TensorNCPoly(FamilyLayout layout) : layout_(std::move(layout)) {}
    static TensorNCPoly simple(const NCPoly& a, const NCPoly& b);

    const FamilyLayout& layout() const { return layout_; }
    const Terms& terms() const { return terms_; }
    bool is_zero() const { return terms_.empty(); }

    void add_term(const Word& a, const Word& b, const Coeff& c);

    TensorNCPoly& operator+=(const TensorNCPoly& o);
    TensorNCPoly& operator-=(const TensorNCPoly& o);
    TensorNCPoly& operator*=(const Coeff& c);
    friend TensorNCPoly operator+(TensorNCPoly a, const TensorNCPoly& b) { return a += b; }
    friend TensorNCPoly operator-(TensorNCPoly a, const TensorNCPoly& b) { return a -= b; }
    friend TensorNCPoly operator*(TensorNCPoly a, const Coeff& c) { return a *= c; }
    friend bool operator==(const TensorNCPoly& a, const TensorNCPoly& b) { return a.layout_ == b.layout_ && a.terms_ == b.terms_; }

    // (p (x) 1) * t  and  t * (1 (x) q)
    TensorNCPoly left_multiply(const NCPoly& p) const;
    TensorNCPoly right_multiply(const NCPoly& q) const;
    // (a (x) b) -> (a s) (x) (l b)
    TensorNCPoly sandwich(const Word& inner_right, const Word& inner_left) const;
    // apply f to both legs
    TensorNCPoly map_legs(const std::function<NCPoly(const NCPoly&)>& f) const;

    // pairs (a_k, b_k) grouped by left leg
    std::vector<std::pair<NCPoly, NCPoly>> pairs() const;

private:
    FamilyLayout layout_;
    Terms terms_;
};

TensorNCPoly adjoint(const TensorNCPoly& t);

enum class DeriveMode { Unitary, FreeDifference, Liberation };

struct Derivation {
    DeriveMode mode = DeriveMode::Unitary;
    int i = 1;
    int j = 1; // free difference quotient only

    static Derivation unitary(int i) { return {DeriveMode::Unitary, i, 0}; }
    static Derivation fdq(int i, int j) { return {DeriveMode::FreeDifference, i, j}; }
    static Derivation liberation(int i) { return {DeriveMode::Liberation, i, 0}; }
};

TensorNCPoly derive(const Derivation& d, const NCPoly& p);

enum class ContractMode { Theta, ThetaBar };
NCPoly contract(ContractMode mode, const TensorNCPoly& t);
NCPoly theta(const TensorNCPoly& t);
NCPoly theta_bar(const TensorNCPoly& t);

NCPoly cyclic_gradient(int i, const NCPoly& h);
NCPoly substitute_x(const NCPoly& p);
TensorNCPoly substitute_x(const TensorNCPoly& t);
Word substitute_x(const Word& w);
// Inverse of substitute_x on its image; throws AlphabetError otherwise.
NCPoly to_x_alphabet(const NCPoly& p);
bool to_x_word(const Word& w, Word& out);
NCPoly liberation_gradient(int i, const NCPoly& h);

double norm_bound(const NCPoly& p, double R);
double norm_bound(const TensorNCPoly& t, double R);

std::string to_string(Generator g);
std::string to_string(const Word& w);

} // namespace orbfree
