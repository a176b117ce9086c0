#include "orbfree/moments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <json.hpp>

#include "orbfree/parser.hpp"

namespace orbfree {

MomentTable::MomentTable(FamilyLayout layout, Alphabet alphabet, int degree)
    : layout_(std::move(layout)), alphabet_(alphabet), degree_(degree)
{
    if (degree < 0) throw std::invalid_argument("moment table degree must be nonnegative");
    entries_.emplace(Word{}, 1.0);
}

bool is_self_conjugate(const Word& key)
{
    return least_rotation(adjoint(key)) == key;
}

namespace {

void check_alphabet(const Word& w, Alphabet a)
{
    if (a == Alphabet::X ? has_uz(w) : has_x(w))
        throw AlphabetError("word " + to_string(w) + " does not belong to the table alphabet");
}

} // namespace

bool MomentTable::contains(const Word& w) const
{
    TraceKey k = trace_key(w);
    return static_cast<int>(k.word.size()) <= degree_ && entries_.count(k.word);
}

cplx MomentTable::value(const Word& w) const
{
    TraceKey k = trace_key(w);
    auto it = entries_.find(k.word);
    if (it == entries_.end()) throw std::out_of_range("word " + to_string(w) + " is not in the moment table");
    return k.conj ? std::conj(it->second) : it->second;
}

void MomentTable::set(const Word& w, cplx v)
{
    check_alphabet(w, alphabet_);
    TraceKey k = trace_key(w);
    if (static_cast<int>(k.word.size()) > degree_) throw std::out_of_range("word longer than the table degree");
    if (k.word.empty()) {
        if (std::abs(v - 1.0) > 1e-12) throw std::invalid_argument("tracial state must take value 1 at the unit");
        return;
    }
    if (k.conj) v = std::conj(v);
    if (is_self_conjugate(k.word)) v = v.real();
    entries_[k.word] = v;
}

std::vector<Word> MomentTable::keys() const
{
    std::vector<Word> out;
    out.reserve(entries_.size());
    for (const auto& [w, v] : entries_) out.push_back(w);
    std::sort(out.begin(), out.end(), ShortLex());
    return out;
}

cplx MomentTable::evaluate(const NCPoly& p) const
{
    cplx s = 0;
    for (const auto& [w, c] : p.terms()) s += c.value() * value(w);
    return s;
}

cplx MomentTable::evaluate(const TensorNCPoly& t) const
{
    cplx s = 0;
    for (const auto& [k, c] : t.terms()) s += c.value() * value(k.first) * value(k.second);
    return s;
}

double MomentTable::invariant_violation() const
{
    double worst = std::abs(value({}) - 1.0);
    for (const auto& [w, v] : entries_) {
        if (is_self_conjugate(w)) worst = std::max(worst, std::abs(v.imag()));
        double bound = std::pow(layout_.R, selfadjoint_letter_count(w));
        worst = std::max(worst, std::abs(v) - bound);
    }
    return worst;
}

std::vector<Generator> alphabet_letters(const FamilyLayout& layout, Alphabet alphabet)
{
    std::vector<Generator> out;
    for (int i = 1; i <= layout.n; ++i) {
        for (int j = 1; j <= layout.size(i); ++j)
            out.push_back(alphabet == Alphabet::X ? Generator::x(i, j) : Generator::z(i, j));
        if (alphabet == Alphabet::UZ) {
            out.push_back(Generator::u(i));
            out.push_back(Generator::ustar(i));
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<Word> reduced_words(const FamilyLayout& layout, Alphabet alphabet, int m)
{
    auto letters = alphabet_letters(layout, alphabet);
    std::vector<Word> out{Word{}};
    std::size_t level_begin = 0;
    for (int len = 1; len <= m; ++len) {
        std::size_t level_end = out.size();
        for (std::size_t k = level_begin; k < level_end; ++k)
            for (const auto& g : letters) {
                if (!out[k].empty() && out[k].back().cancels(g)) continue;
                Word w = out[k];
                w.push_back(g);
                out.push_back(std::move(w));
            }
        level_begin = level_end;
    }
    return out;
}

std::vector<Word> trace_classes(const FamilyLayout& layout, Alphabet alphabet, int m)
{
    std::set<Word> keys;
    for (const auto& w : reduced_words(layout, alphabet, m)) keys.insert(trace_key(w).word);
    return {keys.begin(), keys.end()};
}

MomentTable empirical_state(const MatrixTuple& tuple, int m, Alphabet alphabet)
{
    if (m < 0) throw std::invalid_argument("degree must be nonnegative");
    MomentTable table(tuple.layout, alphabet, m);
    // lexicographic order lets consecutive keys share prefix products
    std::vector<Word> keys = trace_classes(tuple.layout, alphabet, m);
    std::vector<Matrix> prefix; // prefix[k] = product of the first k+1 letters
    Word previous;
    for (const auto& w : keys) {
        if (w.empty()) continue;
        std::size_t common = 0;
        while (common < previous.size() && common < w.size() && previous[common] == w[common]) ++common;
        common = std::min(common, w.size() - 1);
        prefix.resize(std::min(prefix.size(), common));
        while (prefix.size() + 1 < w.size()) {
            const Matrix& next = tuple.letter(w[prefix.size()]);
            prefix.push_back(prefix.empty() ? next : Matrix(prefix.back() * next));
        }
        cplx tr;
        const Matrix& last = tuple.letter(w.back());
        if (prefix.empty()) tr = last.trace() / double(tuple.N);
        else tr = (prefix.back().transpose().cwiseProduct(last)).sum() / double(tuple.N);
        table.set(w, tr);
        previous = w;
    }
    return table;
}

MomentTable empirical_orbital_state(const std::vector<Matrix>& unitaries, const MatrixTuple& microstates, int m)
{
    return empirical_state(conjugate(microstates, unitaries), m, Alphabet::X);
}

double moment_distance(const MomentTable& a, const MomentTable& b, int m)
{
    if (a.degree() < m || b.degree() < m) throw std::invalid_argument("table degree below the comparison degree");
    double worst = 0;
    for (const auto& [w, v] : a.entries()) {
        if (static_cast<int>(w.size()) > m) continue;
        worst = std::max(worst, std::abs(v - b.value(w)));
    }
    for (const auto& [w, v] : b.entries()) {
        if (static_cast<int>(w.size()) > m) continue;
        worst = std::max(worst, std::abs(v - a.value(w)));
    }
    return worst;
}

bool microstate_check(const MatrixTuple& tuple, const MomentTable& target, int m, double delta)
{
    if (target.degree() < m) throw std::invalid_argument("target degree below m");
    return moment_distance(empirical_state(tuple, m, target.alphabet()), target, m) < delta;
}

bool orbital_microstate_check(const std::vector<Matrix>& unitaries, const MatrixTuple& microstates,
                              const MomentTable& target, int m, double delta)
{
    return microstate_check(conjugate(microstates, unitaries), target, m, delta);
}

MomentTable measure_table(const SpectralMeasure& mu, int m, double R)
{
    MomentTable t(FamilyLayout({1}, R), Alphabet::X, m);
    Word w;
    for (int k = 1; k <= m; ++k) {
        w.push_back(Generator::x(1, 1));
        t.set(w, mu.moment(k));
    }
    return t;
}

namespace {

Word relabel_family(const Word& w, Letter kind)
{
    Word out = w;
    for (auto& g : out) {
        g.kind = kind;
        g.i = 1;
    }
    return out;
}

} // namespace

MomentTable family_marginal(const MomentTable& joint, int i)
{
    if (joint.alphabet() != Alphabet::X) throw AlphabetError("family marginals are taken of x tables");
    MomentTable out(FamilyLayout({joint.layout().size(i)}, joint.layout().R), Alphabet::X, joint.degree());
    for (const auto& [w, v] : joint.entries()) {
        if (w.empty()) continue;
        if (std::all_of(w.begin(), w.end(), [&](const Generator& g) { return g.i == i; }))
            out.set(relabel_family(w, Letter::X), v);
    }
    return out;
}

FreeProductEvaluator::FreeProductEvaluator(BlockOf block_of, Marginal marginal)
    : block_of_(std::move(block_of)), marginal_(std::move(marginal))
{
}

cplx FreeProductEvaluator::value(const Word& w)
{
    TraceKey k = trace_key(w);
    if (k.word.empty()) return 1.0;
    auto it = memo_.find(k.word);
    cplx v;
    if (it != memo_.end()) v = it->second;
    else {
        v = compute(k.word);
        memo_.emplace(k.word, v);
    }
    return k.conj ? std::conj(v) : v;
}

cplx FreeProductEvaluator::compute(const Word& key)
{
    const std::size_t n = key.size();
    std::vector<int> block(n);
    for (std::size_t k = 0; k < n; ++k) block[k] = block_of_(key[k]);
    std::size_t start = n;
    for (std::size_t k = 1; k < n; ++k)
        if (block[k] != block[k - 1]) {
            start = k;
            break;
        }
    if (start == n) return marginal_(block[0], key);

    // segments of the rotation beginning at a block boundary
    Word r;
    std::vector<int> rb;
    for (std::size_t k = 0; k < n; ++k) {
        r.push_back(key[(start + k) % n]);
        rb.push_back(block[(start + k) % n]);
    }
    std::vector<Word> seg;
    std::vector<int> seg_block;
    for (std::size_t k = 0; k < n; ++k) {
        if (k == 0 || rb[k] != rb[k - 1]) {
            seg.emplace_back();
            seg_block.push_back(rb[k]);
        }
        seg.back().push_back(r[k]);
    }
    const std::size_t s = seg.size();
    if (s > 30) throw std::length_error("word has too many alternating segments");
    std::vector<cplx> centre(s);
    std::uint64_t forced = 0; // segments with zero mean must stay in every subset
    for (std::size_t j = 0; j < s; ++j) {
        centre[j] = marginal_(seg_block[j], seg[j]);
        if (centre[j] == 0.0) forced |= std::uint64_t(1) << j;
    }
    const std::uint64_t full = (std::uint64_t(1) << s) - 1;
    cplx total = 0;
    const std::uint64_t optional = full & ~forced;
    for (std::uint64_t sub = optional;; sub = (sub - 1) & optional) {
        const std::uint64_t mask = forced | sub;
        if (mask != full) {
            cplx coef = 1.0;
            Word part;
            for (std::size_t j = 0; j < s; ++j) {
                if (mask >> j & 1) part = concat(part, seg[j]);
                else coef *= -centre[j];
            }
            total += coef * (part.empty() ? cplx(1.0) : value(part));
        }
        if (sub == 0) break;
    }
    return -total;
}

FreeProductEvaluator free_product_evaluator(const std::vector<MomentTable>& marginals)
{
    for (const auto& m : marginals)
        if (m.layout().n != 1 || m.alphabet() != Alphabet::X) throw std::invalid_argument("marginals must be one-family x tables");
    return FreeProductEvaluator([](const Generator& g) { return int(g.i) - 1; },
                                [marginals](int b, const Word& w) { return marginals.at(b).value(relabel_family(w, Letter::X)); });
}

MomentTable free_product(const FamilyLayout& layout, const std::vector<MomentTable>& marginals, int m)
{
    if (static_cast<int>(marginals.size()) != layout.n) throw LayoutError("one marginal per family required");
    for (int i = 0; i < layout.n; ++i) {
        if (marginals[i].degree() < m) throw std::invalid_argument("marginal degree below m");
        if (marginals[i].layout().r.at(0) != layout.r[i]) throw LayoutError("marginal size differs from layout family");
    }
    auto ev = free_product_evaluator(marginals);
    MomentTable out(layout, Alphabet::X, m);
    for (const auto& w : trace_classes(layout, Alphabet::X, m))
        if (!w.empty()) out.set(w, ev.value(w));
    return out;
}

FreeProductEvaluator free_haar_evaluator(const std::vector<MomentTable>& z_marginals)
{
    for (const auto& m : z_marginals)
        if (m.layout().n != 1 || m.alphabet() != Alphabet::X) throw std::invalid_argument("marginals must be one-family x tables");
    return FreeProductEvaluator(
        [](const Generator& g) { return 2 * (int(g.i) - 1) + (g.is_unitary() ? 0 : 1); },
        [z_marginals](int b, const Word& w) -> cplx {
            if (b % 2 == 0) return w.empty() ? 1.0 : 0.0;
            return z_marginals.at(b / 2).value(relabel_family(w, Letter::X));
        });
}

MomentTable free_haar_product(const FamilyLayout& layout, const std::vector<MomentTable>& z_marginals, int m)
{
    if (static_cast<int>(z_marginals.size()) != layout.n) throw LayoutError("one marginal per family required");
    auto ev = free_haar_evaluator(z_marginals);
    MomentTable out(layout, Alphabet::UZ, m);
    for (const auto& w : trace_classes(layout, Alphabet::UZ, m))
        if (!w.empty()) out.set(w, ev.value(w));
    return out;
}

namespace {

// [z^0..z^deg] of (sum_j m_j z^j)^s
std::vector<cplx> series_power(const std::vector<cplx>& m, int s, int deg)
{
    std::vector<cplx> out(deg + 1, 0.0);
    out[0] = 1.0;
    for (int p = 0; p < s; ++p) {
        std::vector<cplx> next(deg + 1, 0.0);
        for (int a = 0; a <= deg; ++a) {
            if (out[a] == 0.0) continue;
            for (int b = 0; a + b <= deg && b < static_cast<int>(m.size()); ++b) next[a + b] += out[a] * m[b];
        }
        out = std::move(next);
    }
    return out;
}

} // namespace

std::vector<cplx> free_cumulants(const std::vector<cplx>& moments)
{
    if (moments.empty() || std::abs(moments[0] - 1.0) > 1e-12) throw std::invalid_argument("moment sequence must start with 1");
    const int K = static_cast<int>(moments.size()) - 1;
    std::vector<cplx> kappa(K + 1, 0.0);
    for (int n = 1; n <= K; ++n) {
        cplx rest = 0;
        for (int s = 1; s < n; ++s) rest += kappa[s] * series_power(moments, s, n - s)[n - s];
        kappa[n] = moments[n] - rest;
    }
    return kappa;
}

std::vector<cplx> free_cumulants(const MomentTable& mu, int m)
{
    if (mu.layout().variable_count() != 1) throw std::invalid_argument("free cumulants need a single-variable table");
    std::vector<cplx> moments{1.0};
    Word w;
    for (int k = 1; k <= m; ++k) {
        w.push_back(alphabet_letters(mu.layout(), mu.alphabet())[0]);
        moments.push_back(mu.value(w));
    }
    return free_cumulants(moments);
}

std::vector<cplx> moments_from_cumulants(const std::vector<cplx>& kappa)
{
    const int K = static_cast<int>(kappa.size()) - 1;
    std::vector<cplx> moments{1.0};
    for (int n = 1; n <= K; ++n) {
        cplx m = 0;
        for (int s = 1; s <= n; ++s) m += kappa[s] * (s == n ? cplx(1.0) : series_power(moments, s, n - s)[n - s]);
        moments.push_back(m);
    }
    return moments;
}

MomentTable mixture(const std::vector<MomentTable>& tables, const std::vector<double>& weights)
{
    if (tables.empty() || tables.size() != weights.size()) throw std::invalid_argument("one weight per table required");
    double total = 0;
    for (double w : weights) {
        if (!(w >= 0)) throw std::invalid_argument("mixture weights must be nonnegative");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("mixture weights must sum to 1");
    const auto& first = tables[0];
    MomentTable out(first.layout(), first.alphabet(), first.degree());
    for (const auto& t : tables) {
        require_same_layout(first.layout(), t.layout());
        if (t.alphabet() != first.alphabet() || t.degree() != first.degree() || t.size() != first.size())
            throw std::invalid_argument("mixture tables must share alphabet and degree");
    }
    for (const auto& [w, v] : first.entries()) {
        if (w.empty()) continue;
        cplx s = 0;
        for (std::size_t k = 0; k < tables.size(); ++k) s += weights[k] * tables[k].value(w);
        out.set(w, s);
    }
    return out;
}

double chi_single(const SpectralMeasure& mu)
{
    if (mu.has_atoms()) return -std::numeric_limits<double>::infinity();
    using boost::math::quadrature::tanh_sinh;
    auto [lo, hi] = mu.support();
    tanh_sinh<double> integrator;
    const double tol = 1e-11;
    // xc is the signed distance to the nearest endpoint, used to keep the singular factors accurate
    auto density_at = [&](double x, double xc, double a, double b) {
        if (xc < 0 && a == lo) x = lo - xc;
        if (xc > 0 && b == hi) x = hi - xc;
        return mu.density(std::clamp(x, lo, hi));
    };
    auto inner = [&](double s) {
        double left = 0, right = 0;
        if (s > lo)
            left = integrator.integrate(
                [&](double t, double tc) {
                    double gap = tc > 0 ? tc : s - t;
                    if (gap <= 0) return 0.0; // abscissa rounded onto the log singularity
                    return std::log(gap) * density_at(t, tc, lo, s);
                },
                lo, s, tol);
        if (s < hi)
            right = integrator.integrate(
                [&](double t, double tc) {
                    double gap = tc < 0 ? -tc : t - s;
                    if (gap <= 0) return 0.0; // abscissa rounded onto the log singularity
                    return std::log(gap) * density_at(t, tc, s, hi);
                },
                s, hi, tol);
        return left + right;
    };
    double energy = integrator.integrate([&](double s, double sc) { return inner(s) * density_at(s, sc, lo, hi); }, lo, hi, tol);
    return energy + 0.75 + 0.5 * std::log(2 * std::numbers::pi);
}

std::string alphabet_name(Alphabet a)
{
    return a == Alphabet::X ? "x" : "uz";
}

std::string moment_table_json(const MomentTable& t)
{
    nlohmann::json j;
    j["layout"] = {{"r", t.layout().r}, {"R", t.layout().R}};
    j["m"] = t.degree();
    j["R"] = t.layout().R;
    j["alphabet"] = alphabet_name(t.alphabet());
    nlohmann::json moments = nlohmann::json::object();
    for (const auto& w : t.keys()) {
        cplx v = t.value(w);
        moments[to_string(w)] = {v.real(), v.imag()};
    }
    j["moments"] = moments;
    return j.dump(1);
}

MomentTable moment_table_from_json(const std::string& text)
{
    auto j = nlohmann::json::parse(text);
    FamilyLayout layout(j.at("layout").at("r").get<std::vector<int>>(), j.at("layout").at("R").get<double>());
    std::string a = j.at("alphabet").get<std::string>();
    if (a != "x" && a != "uz") throw std::invalid_argument("unknown alphabet " + a);
    MomentTable t(layout, a == "x" ? Alphabet::X : Alphabet::UZ, j.at("m").get<int>());
    for (const auto& [key, v] : j.at("moments").items()) {
        Word w = key == "1" ? Word{} : parse_word(key, layout);
        if (w.empty()) continue;
        t.set(w, cplx(v.at(0).get<double>(), v.at(1).get<double>()));
    }
    return t;
}

void write_moment_table(const std::string& path, const MomentTable& t)
{
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("cannot write " + path);
    out << moment_table_json(t) << "\n";
}

MomentTable read_moment_table(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return moment_table_from_json(buf.str());
}

} // namespace orbfree
