#include "orbfree/ncpoly.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace orbfree {

Generator Generator::adjoint() const
{
    switch (kind) {
    case Letter::U: return ustar(i);
    case Letter::Ustar: return u(i);
    default: return *this;
    }
}

bool Generator::cancels(const Generator& next) const
{
    return is_unitary() && next == adjoint();
}

bool ShortLex::operator()(const Word& a, const Word& b) const
{
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
}

std::size_t WordHash::operator()(const Word& w) const noexcept
{
    std::size_t h = 0xcbf29ce484222325ULL ^ w.size();
    for (const auto& g : w) {
        h ^= g.code();
        h *= 0x100000001b3ULL;
        h ^= h >> 29;
    }
    return h;
}

Word reduce(const Word& w)
{
    Word out;
    out.reserve(w.size());
    for (const auto& g : w) {
        if (!out.empty() && out.back().cancels(g))
            out.pop_back();
        else
            out.push_back(g);
    }
    return out;
}

bool is_reduced(const Word& w)
{
    for (std::size_t k = 1; k < w.size(); ++k)
        if (w[k - 1].cancels(w[k])) return false;
    return true;
}

Word concat(const Word& a, const Word& b)
{
    std::size_t keep = a.size(), skip = 0;
    while (keep > 0 && skip < b.size() && a[keep - 1].cancels(b[skip])) {
        --keep;
        ++skip;
    }
    Word out;
    out.reserve(keep + b.size() - skip);
    out.insert(out.end(), a.begin(), a.begin() + keep);
    out.insert(out.end(), b.begin() + skip, b.end());
    return out;
}

Word adjoint(const Word& w)
{
    Word out(w.rbegin(), w.rend());
    for (auto& g : out) g = g.adjoint();
    return out;
}

Word subword(const Word& w, std::size_t begin, std::size_t end)
{
    return Word(w.begin() + begin, w.begin() + end);
}

int selfadjoint_letter_count(const Word& w)
{
    return static_cast<int>(std::count_if(w.begin(), w.end(), [](const Generator& g) { return g.is_selfadjoint(); }));
}

bool has_unitary(const Word& w)
{
    return std::any_of(w.begin(), w.end(), [](const Generator& g) { return g.is_unitary(); });
}

bool has_x(const Word& w)
{
    return std::any_of(w.begin(), w.end(), [](const Generator& g) { return g.kind == Letter::X; });
}

bool has_uz(const Word& w)
{
    return std::any_of(w.begin(), w.end(), [](const Generator& g) { return g.kind != Letter::X; });
}

Word cyclic_reduce(const Word& w)
{
    Word r = reduce(w);
    std::size_t lo = 0, hi = r.size();
    while (hi - lo >= 2 && r[hi - 1].cancels(r[lo])) {
        ++lo;
        --hi;
    }
    return subword(r, lo, hi);
}

Word least_rotation(const Word& w)
{
    const std::size_t n = w.size();
    if (n < 2) return w;
    std::size_t best = 0;
    for (std::size_t s = 1; s < n; ++s) {
        for (std::size_t k = 0; k < n; ++k) {
            const auto& a = w[(s + k) % n];
            const auto& b = w[(best + k) % n];
            if (a == b) continue;
            if (a < b) best = s;
            break;
        }
    }
    Word out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) out.push_back(w[(best + k) % n]);
    return out;
}

TraceKey trace_key(const Word& w)
{
    Word c = cyclic_reduce(w);
    Word a = least_rotation(c);
    Word b = least_rotation(adjoint(c));
    if (b < a) return {std::move(b), true};
    return {std::move(a), false};
}

void require_same_layout(const FamilyLayout& a, const FamilyLayout& b)
{
    if (!(a == b)) throw LayoutError("layout mismatch: " + describe(a) + " vs " + describe(b));
}

NCPoly NCPoly::constant(const FamilyLayout& layout, const Coeff& c)
{
    NCPoly p(layout);
    p.add_term({}, c);
    return p;
}

NCPoly NCPoly::monomial(const FamilyLayout& layout, const Word& w, const Coeff& c)
{
    NCPoly p(layout);
    p.add_term(w, c);
    return p;
}

NCPoly NCPoly::generator(const FamilyLayout& layout, Generator g)
{
    return monomial(layout, Word{g});
}

int NCPoly::degree() const
{
    // shortlex order puts the longest words last
    return terms_.empty() ? 0 : static_cast<int>(terms_.rbegin()->first.size());
}

Coeff NCPoly::coefficient(const Word& w) const
{
    auto it = terms_.find(reduce(w));
    return it == terms_.end() ? Coeff() : it->second;
}

void NCPoly::check_word(const Word& w) const
{
    for (const auto& g : w) {
        if (g.is_unitary()) {
            if (g.i < 1 || g.i > layout_.n)
                throw LayoutError("unitary index " + std::to_string(g.i) + " outside layout " + describe(layout_));
        }
        else if (!layout_.contains(g.i, g.j)) {
            throw LayoutError("generator " + to_string(g) + " outside layout " + describe(layout_));
        }
    }
}

void NCPoly::add_term(const Word& w, const Coeff& c)
{
    if (c.is_zero()) return;
    check_word(w);
    Word r = is_reduced(w) ? w : reduce(w);
    auto [it, inserted] = terms_.try_emplace(std::move(r), c);
    if (!inserted) {
        it->second += c;
        if (it->second.is_zero()) terms_.erase(it);
    }
}

NCPoly& NCPoly::operator+=(const NCPoly& o)
{
    require_same_layout(layout_, o.layout_);
    for (const auto& [w, c] : o.terms_) add_term(w, c);
    return *this;
}

NCPoly& NCPoly::operator-=(const NCPoly& o)
{
    require_same_layout(layout_, o.layout_);
    for (const auto& [w, c] : o.terms_) add_term(w, -c);
    return *this;
}

NCPoly& NCPoly::operator*=(const Coeff& c)
{
    if (c.is_zero()) {
        terms_.clear();
        return *this;
    }
    for (auto& [w, v] : terms_) v *= c;
    return *this;
}

NCPoly NCPoly::operator-() const
{
    NCPoly p = *this;
    return p *= Coeff(-1);
}

NCPoly operator*(const NCPoly& a, const NCPoly& b)
{
    require_same_layout(a.layout_, b.layout_);
    NCPoly p(a.layout_);
    for (const auto& [wa, ca] : a.terms_)
        for (const auto& [wb, cb] : b.terms_) p.add_term(concat(wa, wb), ca * cb);
    return p;
}

NCPoly algebra(AlgebraOp op, const NCPoly& a, const NCPoly& b)
{
    switch (op) {
    case AlgebraOp::Add: return a + b;
    case AlgebraOp::Mul: return a * b;
    case AlgebraOp::Adjoint: return adjoint(a);
    case AlgebraOp::Scale: break;
    }
    throw std::invalid_argument("scale takes a coefficient");
}

NCPoly algebra(AlgebraOp op, const NCPoly& a, const Coeff& c)
{
    if (op == AlgebraOp::Scale) return a * c;
    if (op == AlgebraOp::Adjoint) return adjoint(a);
    throw std::invalid_argument("operation takes two polynomials");
}

NCPoly adjoint(const NCPoly& p)
{
    NCPoly q(p.layout());
    for (const auto& [w, c] : p.terms()) q.add_term(adjoint(w), c.conj());
    return q;
}

bool is_self_adjoint(const NCPoly& p)
{
    return adjoint(p) == p;
}

bool uses_x(const NCPoly& p)
{
    for (const auto& [w, c] : p.terms())
        if (has_x(w)) return true;
    return false;
}

bool uses_uz(const NCPoly& p)
{
    for (const auto& [w, c] : p.terms())
        if (has_uz(w)) return true;
    return false;
}

std::map<Word, Coeff, ShortLex> cyclic_classes(const NCPoly& p)
{
    std::map<Word, Coeff, ShortLex> out;
    for (const auto& [w, c] : p.terms()) {
        auto& slot = out[least_rotation(cyclic_reduce(w))];
        slot += c;
    }
    std::erase_if(out, [](const auto& kv) { return kv.second.is_zero(); });
    return out;
}

std::optional<Word> trace_reality_violation(const NCPoly& p)
{
    auto a = cyclic_classes(p);
    auto b = cyclic_classes(adjoint(p));
    for (const auto& [w, c] : a) {
        auto it = b.find(w);
        if (it == b.end() || it->second != c) return w;
    }
    for (const auto& [w, c] : b)
        if (!a.count(w)) return w;
    return std::nullopt;
}

bool TensorNCPoly::KeyLess::operator()(const Key& a, const Key& b) const
{
    ShortLex lt;
    if (lt(a.first, b.first)) return true;
    if (lt(b.first, a.first)) return false;
    return lt(a.second, b.second);
}

TensorNCPoly TensorNCPoly::simple(const NCPoly& a, const NCPoly& b)
{
    require_same_layout(a.layout(), b.layout());
    TensorNCPoly t(a.layout());
    for (const auto& [wa, ca] : a.terms())
        for (const auto& [wb, cb] : b.terms()) t.add_term(wa, wb, ca * cb);
    return t;
}

void TensorNCPoly::add_term(const Word& a, const Word& b, const Coeff& c)
{
    if (c.is_zero()) return;
    // validate indices through the polynomial path
    NCPoly::monomial(layout_, a);
    NCPoly::monomial(layout_, b);
    Key key{reduce(a), reduce(b)};
    auto [it, inserted] = terms_.try_emplace(std::move(key), c);
    if (!inserted) {
        it->second += c;
        if (it->second.is_zero()) terms_.erase(it);
    }
}

TensorNCPoly& TensorNCPoly::operator+=(const TensorNCPoly& o)
{
    require_same_layout(layout_, o.layout_);
    for (const auto& [k, c] : o.terms_) add_term(k.first, k.second, c);
    return *this;
}

TensorNCPoly& TensorNCPoly::operator-=(const TensorNCPoly& o)
{
    require_same_layout(layout_, o.layout_);
    for (const auto& [k, c] : o.terms_) add_term(k.first, k.second, -c);
    return *this;
}

TensorNCPoly& TensorNCPoly::operator*=(const Coeff& c)
{
    if (c.is_zero()) {
        terms_.clear();
        return *this;
    }
    for (auto& [k, v] : terms_) v *= c;
    return *this;
}

TensorNCPoly TensorNCPoly::left_multiply(const NCPoly& p) const
{
    require_same_layout(layout_, p.layout());
    TensorNCPoly out(layout_);
    for (const auto& [wp, cp] : p.terms())
        for (const auto& [k, c] : terms_) out.add_term(concat(wp, k.first), k.second, cp * c);
    return out;
}

TensorNCPoly TensorNCPoly::right_multiply(const NCPoly& q) const
{
    require_same_layout(layout_, q.layout());
    TensorNCPoly out(layout_);
    for (const auto& [k, c] : terms_)
        for (const auto& [wq, cq] : q.terms()) out.add_term(k.first, concat(k.second, wq), c * cq);
    return out;
}

TensorNCPoly TensorNCPoly::sandwich(const Word& inner_right, const Word& inner_left) const
{
    TensorNCPoly out(layout_);
    for (const auto& [k, c] : terms_) out.add_term(concat(k.first, inner_right), concat(inner_left, k.second), c);
    return out;
}

TensorNCPoly TensorNCPoly::map_legs(const std::function<NCPoly(const NCPoly&)>& f) const
{
    TensorNCPoly out;
    bool first = true;
    for (const auto& [k, c] : terms_) {
        NCPoly a = f(NCPoly::monomial(layout_, k.first));
        NCPoly b = f(NCPoly::monomial(layout_, k.second));
        TensorNCPoly piece = TensorNCPoly::simple(a, b) * c;
        if (first) {
            out = TensorNCPoly(piece.layout());
            first = false;
        }
        out += piece;
    }
    if (first) out = TensorNCPoly(layout_);
    return out;
}

std::vector<std::pair<NCPoly, NCPoly>> TensorNCPoly::pairs() const
{
    std::vector<std::pair<NCPoly, NCPoly>> out;
    for (const auto& [k, c] : terms_) {
        if (out.empty() || !(out.back().first == NCPoly::monomial(layout_, k.first)))
            out.emplace_back(NCPoly::monomial(layout_, k.first), NCPoly(layout_));
        out.back().second.add_term(k.second, c);
    }
    return out;
}

TensorNCPoly adjoint(const TensorNCPoly& t)
{
    TensorNCPoly out(t.layout());
    for (const auto& [k, c] : t.terms()) out.add_term(adjoint(k.first), adjoint(k.second), c.conj());
    return out;
}

namespace {

void require_uz(const NCPoly& p, const char* what)
{
    if (uses_x(p)) throw AlphabetError(std::string(what) + " needs a polynomial over the u,z alphabet");
}

void require_x(const NCPoly& p, const char* what)
{
    if (uses_uz(p)) throw AlphabetError(std::string(what) + " needs a polynomial over the x alphabet");
}

void unitary_terms(int i, const Word& w, const Coeff& c, TensorNCPoly& out)
{
    for (std::size_t k = 0; k < w.size(); ++k) {
        if (w[k].i != i) continue;
        if (w[k].kind == Letter::U)
            out.add_term(subword(w, 0, k + 1), subword(w, k + 1, w.size()), c);
        else if (w[k].kind == Letter::Ustar)
            out.add_term(subword(w, 0, k), subword(w, k, w.size()), -c);
    }
}

} // namespace

TensorNCPoly derive(const Derivation& d, const NCPoly& p)
{
    const auto& layout = p.layout();
    if (d.i < 1 || d.i > layout.n) throw LayoutError("derivation family index outside layout");
    TensorNCPoly out(layout);
    switch (d.mode) {
    case DeriveMode::Unitary:
        require_uz(p, "unitary derivation");
        for (const auto& [w, c] : p.terms()) unitary_terms(d.i, w, c, out);
        break;
    case DeriveMode::FreeDifference: {
        require_x(p, "free difference quotient");
        if (!layout.contains(d.i, d.j)) throw LayoutError("difference quotient variable outside layout");
        Generator target = Generator::x(d.i, d.j);
        for (const auto& [w, c] : p.terms())
            for (std::size_t k = 0; k < w.size(); ++k)
                if (w[k] == target) out.add_term(subword(w, 0, k), subword(w, k + 1, w.size()), c);
        break;
    }
    case DeriveMode::Liberation: {
        require_x(p, "liberation derivation");
        TensorNCPoly raw(layout);
        for (const auto& [w, c] : p.terms()) unitary_terms(d.i, substitute_x(w), c, raw);
        for (const auto& [k, c] : raw.terms()) {
            Word a = concat(k.first, Word{Generator::ustar(d.i)});
            Word b = concat(Word{Generator::u(d.i)}, k.second);
            Word xa, xb;
            if (!to_x_word(a, xa) || !to_x_word(b, xb))
                throw std::logic_error("liberation derivative left the x alphabet at " + to_string(a) + " (x) " + to_string(b));
            out.add_term(xa, xb, -c);
        }
        break;
    }
    }
    return out;
}

NCPoly contract(ContractMode, const TensorNCPoly& t)
{
    NCPoly out(t.layout());
    for (const auto& [k, c] : t.terms()) out.add_term(concat(k.second, k.first), c);
    return out;
}

NCPoly theta(const TensorNCPoly& t) { return contract(ContractMode::Theta, t); }
NCPoly theta_bar(const TensorNCPoly& t) { return contract(ContractMode::ThetaBar, t); }

NCPoly cyclic_gradient(int i, const NCPoly& h)
{
    return theta(derive(Derivation::unitary(i), h));
}

Word substitute_x(const Word& w)
{
    Word out;
    out.reserve(3 * w.size());
    for (const auto& g : w) {
        if (g.kind == Letter::X) {
            out.push_back(Generator::u(g.i));
            out.push_back(Generator::z(g.i, g.j));
            out.push_back(Generator::ustar(g.i));
        }
        else {
            out.push_back(g);
        }
    }
    return reduce(out);
}

NCPoly substitute_x(const NCPoly& p)
{
    NCPoly out(p.layout());
    for (const auto& [w, c] : p.terms()) out.add_term(substitute_x(w), c);
    return out;
}

TensorNCPoly substitute_x(const TensorNCPoly& t)
{
    TensorNCPoly out(t.layout());
    for (const auto& [k, c] : t.terms()) out.add_term(substitute_x(k.first), substitute_x(k.second), c);
    return out;
}

bool to_x_word(const Word& w, Word& out)
{
    out.clear();
    std::size_t k = 0;
    while (k < w.size()) {
        if (w[k].kind != Letter::U) return false;
        const int i = w[k].i;
        ++k;
        std::size_t start = k;
        while (k < w.size() && w[k].kind == Letter::Z && w[k].i == i) {
            out.push_back(Generator::x(i, w[k].j));
            ++k;
        }
        if (k == start || k == w.size() || w[k] != Generator::ustar(i)) return false;
        ++k;
    }
    return true;
}

NCPoly to_x_alphabet(const NCPoly& p)
{
    NCPoly out(p.layout());
    Word x;
    for (const auto& [w, c] : p.terms()) {
        if (!to_x_word(w, x)) throw AlphabetError("word " + to_string(w) + " is not a product of conjugated z-letters");
        out.add_term(x, c);
    }
    return out;
}

NCPoly liberation_gradient(int i, const NCPoly& h)
{
    require_x(h, "liberation gradient");
    const auto& layout = h.layout();
    NCPoly d = cyclic_gradient(i, substitute_x(h));
    NCPoly ui = NCPoly::generator(layout, Generator::u(i));
    NCPoly uis = NCPoly::generator(layout, Generator::ustar(i));
    return -(ui * d * uis);
}

double norm_bound(const NCPoly& p, double R)
{
    double s = 0;
    for (const auto& [w, c] : p.terms()) s += c.abs() * std::pow(R, selfadjoint_letter_count(w));
    return s;
}

double norm_bound(const TensorNCPoly& t, double R)
{
    double s = 0;
    for (const auto& [k, c] : t.terms())
        s += c.abs() * std::pow(R, selfadjoint_letter_count(k.first) + selfadjoint_letter_count(k.second));
    return s;
}

std::string to_string(Generator g)
{
    switch (g.kind) {
    case Letter::X: return "x[" + std::to_string(g.i) + "," + std::to_string(g.j) + "]";
    case Letter::Z: return "z[" + std::to_string(g.i) + "," + std::to_string(g.j) + "]";
    case Letter::U: return "u[" + std::to_string(g.i) + "]";
    case Letter::Ustar: return "u'[" + std::to_string(g.i) + "]";
    }
    return "?";
}

std::string to_string(const Word& w)
{
    if (w.empty()) return "1";
    std::string s;
    for (std::size_t k = 0; k < w.size();) {
        std::size_t run = 1;
        while (k + run < w.size() && w[k + run] == w[k]) ++run;
        if (!s.empty()) s += "*";
        s += to_string(w[k]);
        if (run > 1) s += "^" + std::to_string(run);
        k += run;
    }
    return s;
}

} // namespace orbfree
