#include "orbfree/sdsolver.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "orbfree/parser.hpp"

namespace orbfree {

void SDProblem::validate() const
{
    layout.validate();
    require_same_layout(layout, h.layout());
    if (uses_uz(h)) throw AlphabetError("h must be written in the x alphabet");
    // only the cyclic classes of h enter D_i h, so a real trace is what matters
    if (auto bad = trace_reality_violation(h)) throw std::invalid_argument("h has non-real trace at " + to_string(*bad));
    if (static_cast<int>(tau0.size()) != layout.n) throw LayoutError("one z marginal per family required");
    for (int i = 0; i < layout.n; ++i) {
        if (tau0[i].layout().n != 1 || tau0[i].layout().r.at(0) != layout.r[i])
            throw LayoutError("z marginal " + std::to_string(i + 1) + " does not match the family size");
        if (tau0[i].alphabet() != Alphabet::X) throw AlphabetError("z marginals are one-family x tables");
        if (tau0[i].degree() < D) throw std::invalid_argument("z marginal degree below D");
    }
    int hdeg = h.is_zero() ? 0 : substitute_x(h).degree();
    if (D < hdeg + 2) throw std::invalid_argument("D must be at least deg(h) + 2 in the u,z alphabet");
    if (damping <= 0 || damping > 1) throw std::invalid_argument("damping must lie in (0, 1]");
    if (max_iter < 1 || tol <= 0 || closure_levels < 0 || ext_levels < 0) throw std::invalid_argument("bad iteration settings");
}

std::vector<std::string> SDProblem::warnings() const
{
    std::vector<std::string> out;
    for (const auto& [w, c] : h.terms())
        if (!w.empty() && c.abs() > small_threshold) {
            out.push_back("coefficient of " + to_string(w) + " exceeds the smallness threshold " +
                          std::to_string(small_threshold) + "; the fixed point may not be unique");
        }
    return out;
}

namespace {

using HTerms = std::vector<std::pair<cplx, Word>>;

struct Piece {
    double sign;
    Word a, b;
};

struct Equation {
    Word r;
    double h_sign; // +1 when r ends in u_i, -1 when it starts with u_i*
    int i;
    std::vector<Piece> pieces;
};

// Rotation and pieces of the equation that isolates tau(key) with unit coefficient.
Equation equation_for(const Word& key)
{
    const std::size_t L = key.size();
    std::optional<Word> best;
    for (std::size_t k = 0; k < L; ++k) {
        if (key[(k + L - 1) % L].kind != Letter::U) continue;
        Word r(key.begin() + k, key.end());
        r.insert(r.end(), key.begin(), key.begin() + k);
        if (!best || r < *best) best = std::move(r);
    }
    Equation eq;
    if (best) {
        eq.r = *best;
        eq.h_sign = 1;
        eq.i = eq.r.back().i;
        const Generator ui = eq.r.back();
        const std::size_t n = L - 1;
        for (std::size_t k = 0; k < n; ++k) {
            const Generator& g = eq.r[k];
            if (g.i != ui.i || !g.is_unitary()) continue;
            Word a, b;
            if (g.kind == Letter::U) {
                a.assign(eq.r.begin(), eq.r.begin() + k + 1);
                b.assign(eq.r.begin() + k + 1, eq.r.begin() + n);
                eq.pieces.push_back({1.0, std::move(a), concat(b, Word{ui})});
            } else {
                a.assign(eq.r.begin(), eq.r.begin() + k);
                b.assign(eq.r.begin() + k, eq.r.begin() + n);
                eq.pieces.push_back({-1.0, std::move(a), concat(b, Word{ui})});
            }
        }
        return eq;
    }
    for (std::size_t k = 0; k < L; ++k) {
        if (key[k].kind != Letter::Ustar) continue;
        Word r(key.begin() + k, key.end());
        r.insert(r.end(), key.begin(), key.begin() + k);
        if (!best || r < *best) best = std::move(r);
    }
    if (!best) throw std::logic_error("equation requested for a word without unitaries");
    eq.r = *best;
    eq.h_sign = -1;
    eq.i = eq.r.front().i;
    const Generator us = eq.r.front();
    // no u letters remain, so only u* positions contribute
    for (std::size_t k = 1; k < L; ++k) {
        const Generator& g = eq.r[k];
        if (g != us) continue;
        Word a(eq.r.begin(), eq.r.begin() + k), b(eq.r.begin() + k, eq.r.end());
        eq.pieces.push_back({-1.0, std::move(a), std::move(b)});
    }
    return eq;
}

std::vector<HTerms> cyclic_gradients(const SDProblem& p)
{
    std::vector<HTerms> out(p.layout.n);
    if (p.h.is_zero()) return out;
    NCPoly hs = substitute_x(p.h);
    for (int i = 1; i <= p.layout.n; ++i) {
        NCPoly g = cyclic_gradient(i, hs);
        for (const auto& [w, c] : g.terms()) out[i - 1].emplace_back(c.value(), w);
    }
    return out;
}

int max_length(const HTerms& t)
{
    int d = 0;
    for (const auto& [c, w] : t) d = std::max(d, static_cast<int>(w.size()));
    return d;
}

using Lookup = std::function<cplx(const Word&)>;

cplx defect(const Lookup& tau, const HTerms& dh, int i, const Word& p)
{
    cplx lhs = 0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        const Generator& g = p[k];
        if (!g.is_unitary() || g.i != i) continue;
        if (g.kind == Letter::U) lhs += tau(subword(p, 0, k + 1)) * tau(subword(p, k + 1, p.size()));
        else lhs -= tau(subword(p, 0, k)) * tau(subword(p, k, p.size()));
    }
    cplx rhs = 0;
    for (const auto& [c, d] : dh) rhs += c * tau(concat(d, p));
    return lhs - rhs;
}

SDResidual residual(const Lookup& tau, const SDProblem& problem, const std::vector<HTerms>& dh,
                    FreeProductEvaluator& zeval)
{
    SDResidual res;
    for (int i = 1; i <= problem.layout.n; ++i) {
        int room = problem.D - max_length(dh[i - 1]);
        for (const auto& p : reduced_words(problem.layout, Alphabet::UZ, room))
            res.equation = std::max(res.equation, std::abs(defect(tau, dh[i - 1], i, p)));
    }
    std::vector<Generator> zs;
    for (const auto& g : alphabet_letters(problem.layout, Alphabet::UZ))
        if (!g.is_unitary()) zs.push_back(g);
    std::vector<Word> level{Word{}};
    for (int len = 1; len <= problem.D; ++len) {
        std::vector<Word> next;
        for (const auto& w : level)
            for (const auto& g : zs) {
                Word v = w;
                v.push_back(g);
                res.marginal = std::max(res.marginal, std::abs(tau(v) - zeval.value(v)));
                next.push_back(std::move(v));
            }
        level = std::move(next);
    }
    return res;
}

} // namespace

class SDEngine {
public:
    explicit SDEngine(SDProblem p)
        : problem(std::move(p)), dh(cyclic_gradients(problem)), zeval(free_product_evaluator(problem.tau0))
    {
        std::vector<Word> classes = trace_classes(problem.layout, Alphabet::UZ, problem.D);
        std::stable_sort(classes.begin(), classes.end(), [](const Word& a, const Word& b) { return a.size() < b.size(); });
        for (auto& w : classes)
            if (has_unitary(w)) {
                index.emplace(w, static_cast<int>(keys.size()));
                keys.push_back(std::move(w));
            }
        values.assign(keys.size(), 0.0);
        ext.resize(std::max(problem.closure_levels, problem.ext_levels) + 1);
    }

    cplx z_value(const Word& key)
    {
        try {
            return zeval.value(key);
        } catch (const std::out_of_range&) {
            throw std::out_of_range("z marginal degree too small for " + to_string(key));
        }
    }

    // tau of any word under the current values
    cplx eval(const Word& w, int level)
    {
        TraceKey k = trace_key(w);
        if (k.word.empty()) return 1.0;
        cplx v;
        if (!has_unitary(k.word)) v = z_value(k.word);
        else if (static_cast<int>(k.word.size()) <= problem.D) v = values[index.at(k.word)];
        else {
            auto& memo = ext[level];
            auto it = memo.find(k.word);
            if (it != memo.end()) v = it->second;
            else {
                v = solve_long(k.word, level);
                memo.emplace(k.word, v);
            }
        }
        return k.conj ? std::conj(v) : v;
    }

    cplx solve_long(const Word& key, int level)
    {
        Equation eq = equation_for(key);
        cplx pieces = 0;
        for (const auto& pc : eq.pieces) pieces += pc.sign * eval(pc.a, level) * eval(pc.b, level);
        cplx hterm = 0;
        if (level > 0)
            for (const auto& [c, d] : dh[eq.i - 1]) hterm += c * eval(concat(d, eq.r), level - 1);
        return eq.h_sign * (hterm - pieces);
    }

    void clear_ext()
    {
        for (auto& m : ext) m.clear();
    }

    cplx lookup_in_range(const Word& w)
    {
        TraceKey k = trace_key(w);
        if (k.word.empty()) return 1.0;
        if (static_cast<int>(k.word.size()) > problem.D) throw std::out_of_range("word beyond D: " + to_string(w));
        cplx v = has_unitary(k.word) ? values[index.at(k.word)] : z_value(k.word);
        return k.conj ? std::conj(v) : v;
    }

    SDResidual current_residual()
    {
        return residual([this](const Word& w) { return lookup_in_range(w); }, problem, dh, zeval);
    }

    SDProblem problem;
    std::vector<HTerms> dh;
    FreeProductEvaluator zeval;
    std::unordered_map<Word, int, WordHash> index;
    std::vector<Word> keys;
    std::vector<cplx> values;
    std::vector<std::unordered_map<Word, cplx, WordHash>> ext;
    std::mutex mutex;
};

namespace {

// Index-based form of the equations. In-range classes are iterated; words
// beyond D that the h-terms reach are unrolled once into a dependency-ordered
// list evaluated from the previous iterate.
enum class RefKind : std::uint8_t { Node, Fixed, Ext };

struct Ref {
    int id = 0;
    RefKind kind = RefKind::Fixed;
    bool conj = false;
};

struct Block {
    struct PieceRef {
        double sign;
        Ref a, b;
    };
    struct HRef {
        cplx c;
        Ref r;
    };
    std::vector<double> h_sign;
    std::vector<std::size_t> piece_begin{0}, h_begin{0};
    std::vector<PieceRef> pieces;
    std::vector<HRef> hterms;
    std::size_t size() const { return h_sign.size(); }
};

struct Program {
    std::vector<cplx> fixed;
    Block nodes, ext;
};

class Compiler {
public:
    explicit Compiler(SDEngine& e) : e_(e) {}

    Program run()
    {
        for (const auto& key : e_.keys) {
            Equation eq = equation_for(key);
            add(prog_.nodes, eq, e_.problem.closure_levels, true);
        }
        return std::move(prog_);
    }

private:
    Ref ref(const Word& w, int level)
    {
        TraceKey k = trace_key(w);
        Ref r;
        r.conj = k.conj;
        if (!k.word.empty() && has_unitary(k.word)) {
            if (static_cast<int>(k.word.size()) <= e_.problem.D) {
                r.kind = RefKind::Node;
                r.id = e_.index.at(k.word);
                return r;
            }
            r.kind = RefKind::Ext;
            r.id = ext_node(k.word, level);
            return r;
        }
        auto [it, fresh] = fixed_index_.emplace(k.word, static_cast<int>(prog_.fixed.size()));
        if (fresh) prog_.fixed.push_back(k.word.empty() ? cplx(1.0) : e_.z_value(k.word));
        r.kind = RefKind::Fixed;
        r.id = it->second;
        return r;
    }

    int ext_node(const Word& key, int level)
    {
        auto& memo = ext_index_[level];
        auto it = memo.find(key);
        if (it != memo.end()) return it->second;
        Equation eq = equation_for(key);
        // dependencies first, so the list is evaluated in order
        add(prog_.ext, eq, level, false);
        int id = static_cast<int>(prog_.ext.size()) - 1;
        memo.emplace(key, id);
        return id;
    }

    // for in-range nodes `level` is the depth granted to over-length h-words
    void add(Block& block, const Equation& eq, int level, bool in_range)
    {
        std::vector<Block::PieceRef> pieces;
        for (const auto& pc : eq.pieces) pieces.push_back({pc.sign, ref(pc.a, level), ref(pc.b, level)});
        std::vector<Block::HRef> hterms;
        if (in_range || level > 0)
            for (const auto& [c, d] : e_.dh[eq.i - 1]) hterms.push_back({c, ref(concat(d, eq.r), in_range ? level : level - 1)});
        block.h_sign.push_back(eq.h_sign);
        block.pieces.insert(block.pieces.end(), pieces.begin(), pieces.end());
        block.hterms.insert(block.hterms.end(), hterms.begin(), hterms.end());
        block.piece_begin.push_back(block.pieces.size());
        block.h_begin.push_back(block.hterms.size());
    }

    SDEngine& e_;
    Program prog_;
    std::unordered_map<Word, int, WordHash> fixed_index_;
    std::map<int, std::unordered_map<Word, int, WordHash>> ext_index_;
};

} // namespace

SDResult sd_solve(const SDProblem& problem)
{
    problem.validate();
    auto engine = std::make_shared<SDEngine>(problem);
    SDEngine& e = *engine;
    SDResult out;
    out.report.warnings = problem.warnings();
    Program prog = Compiler(e).run();

    std::vector<cplx> previous, ext(prog.ext.size());
    auto get = [&](const Ref& r, const std::vector<cplx>& node_values) {
        cplx v;
        switch (r.kind) {
        case RefKind::Node: v = node_values[r.id]; break;
        case RefKind::Fixed: v = prog.fixed[r.id]; break;
        case RefKind::Ext: v = ext[r.id]; break;
        }
        return r.conj ? std::conj(v) : v;
    };
    auto pieces = [&](const Block& b, std::size_t n, const std::vector<cplx>& from) {
        cplx sum = 0;
        for (std::size_t k = b.piece_begin[n]; k < b.piece_begin[n + 1]; ++k) {
            const auto& pc = b.pieces[k];
            sum += pc.sign * get(pc.a, from) * get(pc.b, from);
        }
        return sum;
    };
    auto hterm = [&](const Block& b, std::size_t n, const std::vector<cplx>& from) {
        cplx sum = 0;
        for (std::size_t k = b.h_begin[n]; k < b.h_begin[n + 1]; ++k) sum += b.hterms[k].c * get(b.hterms[k].r, from);
        return sum;
    };

    const double omega = problem.picard ? 1.0 : problem.damping;
    // Damping acts on the coupling terms; given them, the sweep over increasing
    // length solves the remaining triangular system exactly.
    std::vector<cplx> coupling(e.keys.size(), 0.0);
    double last_delta = 0;
    for (int it = 1; it <= problem.max_iter; ++it) {
        previous = e.values;
        for (std::size_t n = 0; n < prog.ext.size(); ++n)
            ext[n] = prog.ext.h_sign[n] * (hterm(prog.ext, n, previous) - pieces(prog.ext, n, previous));
        double delta = 0;
        for (std::size_t n = 0; n < e.keys.size(); ++n) {
            coupling[n] = (1 - omega) * coupling[n] + omega * hterm(prog.nodes, n, previous);
            cplx updated = prog.nodes.h_sign[n] * (coupling[n] - pieces(prog.nodes, n, e.values));
            // self-conjugate classes have real traces
            if (is_self_conjugate(e.keys[n])) updated = updated.real();
            delta = std::max(delta, std::abs(updated - e.values[n]));
            e.values[n] = updated;
        }
        SDResidual res = e.current_residual();
        // coupling inputs lag the values they are computed from
        for (std::size_t n = 0; n < e.keys.size(); ++n)
            res.fixed_point = std::max(res.fixed_point, std::abs(hterm(prog.nodes, n, e.values) - coupling[n]));
        out.report.history.push_back({it, res.max(), delta, last_delta > 0 ? delta / last_delta : 0.0});
        last_delta = delta;
        out.report.iterations = it;
        out.report.residual = res.max();
        out.report.max_delta = delta;
        if (delta <= problem.tol && res.max() <= problem.tol) {
            out.report.converged = true;
            break;
        }
        if (!std::isfinite(delta)) break;
    }
    e.clear_ext();
    out.solution = SDSolution(engine);
    return out;
}

const SDProblem& SDSolution::problem() const
{
    return engine_->problem;
}

MomentTable SDSolution::table() const
{
    std::lock_guard lock(engine_->mutex);
    const SDProblem& p = engine_->problem;
    MomentTable t(p.layout, Alphabet::UZ, p.D);
    for (std::size_t n = 0; n < engine_->keys.size(); ++n) t.set(engine_->keys[n], engine_->values[n]);
    for (const auto& w : trace_classes(p.layout, Alphabet::UZ, p.D))
        if (!w.empty() && !has_unitary(w)) t.set(w, engine_->z_value(w));
    return t;
}

cplx SDSolution::value(const Word& w) const
{
    std::lock_guard lock(engine_->mutex);
    return engine_->eval(w, engine_->problem.ext_levels);
}

cplx SDSolution::evaluate(const NCPoly& p) const
{
    cplx s = 0;
    for (const auto& [w, c] : p.terms()) s += c.value() * value(w);
    return s;
}

cplx SDSolution::evaluate(const TensorNCPoly& t) const
{
    cplx s = 0;
    for (const auto& [k, c] : t.terms()) s += c.value() * value(k.first) * value(k.second);
    return s;
}

cplx sd_defect(const MomentTable& table, const SDProblem& problem, int i, const Word& p)
{
    auto dh = cyclic_gradients(problem);
    return defect([&](const Word& w) { return table.value(w); }, dh.at(i - 1), i, p);
}

SDResidual sd_residual(const MomentTable& table, const SDProblem& problem)
{
    problem.validate();
    if (table.alphabet() != Alphabet::UZ || table.degree() < problem.D) throw std::invalid_argument("u,z table of degree D required");
    auto dh = cyclic_gradients(problem);
    auto zeval = free_product_evaluator(problem.tau0);
    return residual([&](const Word& w) { return table.value(w); }, problem, dh, zeval);
}

MomentTable pushforward_x(const SDSolution& solution, int m)
{
    const FamilyLayout& layout = solution.problem().layout;
    MomentTable out(layout, Alphabet::X, m);
    for (const auto& w : trace_classes(layout, Alphabet::X, m))
        if (!w.empty()) out.set(w, solution.value(substitute_x(w)));
    return out;
}

double liberation_check(const SDSolution& solution, const NCPoly& h, int m)
{
    const FamilyLayout& layout = solution.problem().layout;
    double worst = 0;
    for (int i = 1; i <= layout.n; ++i) {
        NCPoly j = liberation_gradient(i, h);
        for (const auto& w : reduced_words(layout, Alphabet::X, m)) {
            NCPoly wp = NCPoly::monomial(layout, w);
            cplx lhs = solution.evaluate(substitute_x(j * wp));
            cplx rhs = solution.evaluate(substitute_x(derive(Derivation::liberation(i), wp)));
            worst = std::max(worst, std::abs(lhs - rhs));
        }
    }
    return worst;
}

SDProblem sd_problem_from_json(const std::string& text, const std::string& base_dir)
{
    nlohmann::json j = nlohmann::json::parse(text);
    SDProblem p;
    const auto& fams = j.at("tau0");
    if (!fams.is_array() || fams.empty()) throw std::invalid_argument("tau0 must be a nonempty array");
    p.D = j.value("D", p.D);
    std::vector<int> sizes;
    std::vector<std::optional<SpectralMeasure>> measures;
    for (const auto& f : fams) {
        std::string s = f.get<std::string>();
        if (s.find(':') != std::string::npos && !std::filesystem::exists(std::filesystem::path(base_dir) / s)) {
            measures.push_back(SpectralMeasure::parse(s));
            sizes.push_back(1);
            p.tau0.emplace_back();
        } else {
            MomentTable t = read_moment_table((std::filesystem::path(base_dir) / s).string());
            measures.push_back(std::nullopt);
            sizes.push_back(t.layout().r.at(0));
            p.tau0.push_back(std::move(t));
        }
    }
    double R = 0;
    for (std::size_t k = 0; k < measures.size(); ++k)
        R = std::max(R, measures[k] ? measures[k]->support_radius() : p.tau0[k].layout().R);
    R = j.value("R", R);
    p.layout = FamilyLayout(sizes, R);
    p.h = parse(j.value("h", std::string("0")), p.layout);
    int hdeg = p.h.is_zero() ? 0 : substitute_x(p.h).degree();
    for (std::size_t k = 0; k < measures.size(); ++k)
        if (measures[k]) p.tau0[k] = measure_table(*measures[k], std::max(32, p.D + 4 * hdeg), R);
    p.tol = j.value("tol", p.tol);
    p.max_iter = j.value("max_iter", p.max_iter);
    p.damping = j.value("damping", p.damping);
    p.picard = j.value("picard", p.picard);
    p.closure_levels = j.value("closure_levels", p.closure_levels);
    p.ext_levels = j.value("ext_levels", p.ext_levels);
    p.small_threshold = j.value("small_threshold", p.small_threshold);
    return p;
}

void write_sd_history_csv(const std::string& path, const SDReport& report)
{
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "iteration,residual,max_delta,ratio\n";
    char buf[128];
    for (const auto& r : report.history) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", r.iteration, r.residual, r.max_delta, r.ratio);
        f << buf;
    }
}

} // namespace orbfree
