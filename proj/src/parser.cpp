#include "orbfree/parser.hpp"

#include <cctype>

namespace orbfree {

namespace {

class Parser {
public:
    Parser(const std::string& text, const FamilyLayout& layout) : s_(text), layout_(layout) {}

    NCPoly run()
    {
        NCPoly p = poly();
        skip();
        if (pos_ != s_.size()) fail("unexpected character '" + std::string(1, s_[pos_]) + "'");
        return p;
    }

private:
    [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, pos_); }

    void skip()
    {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool accept(char c)
    {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c)
    {
        if (!accept(c)) fail(std::string("expected '") + c + "'");
    }

    int integer()
    {
        skip();
        std::size_t start = pos_;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        if (start == pos_) fail("expected integer");
        if (pos_ - start > 6) fail("integer too large");
        return std::stoi(s_.substr(start, pos_ - start));
    }

    mpz_class digits_value(std::size_t start, std::size_t end) const
    {
        return start == end ? mpz_class(0) : mpz_class(s_.substr(start, end - start), 10);
    }

    Coeff number()
    {
        std::size_t start = pos_;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        mpq_class value(digits_value(start, pos_));
        if (pos_ < s_.size() && s_[pos_] == '.') {
            ++pos_;
            std::size_t fs = pos_;
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            if (fs == pos_ && start + 1 == fs) fail("malformed number");
            if (fs != pos_) {
                mpz_class scale;
                mpz_ui_pow_ui(scale.get_mpz_t(), 10, pos_ - fs);
                value += mpq_class(digits_value(fs, pos_), scale);
            }
        }
        if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
            ++pos_;
            bool neg = false;
            if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) neg = s_[pos_++] == '-';
            std::size_t es = pos_;
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            if (es == pos_ || pos_ - es > 3) fail("malformed exponent");
            mpz_class scale;
            mpz_ui_pow_ui(scale.get_mpz_t(), 10, std::stoul(s_.substr(es, pos_ - es)));
            if (neg) value /= mpq_class(scale);
            else value *= mpq_class(scale);
        }
        if (pos_ < s_.size() && s_[pos_] == '/') {
            ++pos_;
            std::size_t ds = pos_;
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            if (ds == pos_) fail("expected denominator");
            mpz_class den = digits_value(ds, pos_);
            if (den == 0) fail("zero denominator");
            value /= mpq_class(den);
        }
        value.canonicalize();
        if (pos_ < s_.size() && s_[pos_] == 'i') {
            ++pos_;
            return Coeff(0, value);
        }
        return Coeff(value);
    }

    int family_index()
    {
        int i = integer();
        if (i < 1 || i > layout_.n) fail("family index " + std::to_string(i) + " outside layout");
        return i;
    }

    NCPoly atom()
    {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end of input");
        char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            NCPoly p = poly();
            expect(')');
            return p;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return NCPoly::constant(layout_, number());
        if (c == 'i') {
            ++pos_;
            return NCPoly::constant(layout_, imaginary_unit);
        }
        if (c == 'x' || c == 'z') {
            ++pos_;
            expect('[');
            int i = family_index();
            expect(',');
            std::size_t at = pos_;
            int j = integer();
            if (j < 1 || j > layout_.size(i)) {
                pos_ = at;
                fail("variable index " + std::to_string(j) + " outside family " + std::to_string(i));
            }
            expect(']');
            return NCPoly::generator(layout_, c == 'x' ? Generator::x(i, j) : Generator::z(i, j));
        }
        if (c == 'u') {
            ++pos_;
            bool star = pos_ < s_.size() && s_[pos_] == '\'';
            if (star) ++pos_;
            expect('[');
            int i = family_index();
            expect(']');
            return NCPoly::generator(layout_, star ? Generator::ustar(i) : Generator::u(i));
        }
        fail("unexpected character '" + std::string(1, c) + "'");
    }

    NCPoly factor()
    {
        NCPoly base = atom();
        if (!accept('^')) return base;
        int k = integer();
        NCPoly out = NCPoly::constant(layout_, Coeff(1));
        for (int e = 0; e < k; ++e) out = out * base;
        return out;
    }

    NCPoly term()
    {
        NCPoly p = factor();
        while (accept('*')) p = p * factor();
        return p;
    }

    NCPoly poly()
    {
        NCPoly out(layout_);
        bool negate = false;
        if (accept('-')) negate = true;
        else accept('+');
        NCPoly t = term();
        out += negate ? -t : t;
        for (;;) {
            if (accept('+')) out += term();
            else if (accept('-')) out -= term();
            else break;
        }
        return out;
    }

    const std::string& s_;
    const FamilyLayout& layout_;
    std::size_t pos_ = 0;
};

std::string signed_term(const Word& w, const Coeff& c, bool first)
{
    bool neg = false;
    std::string body;
    if (c.is_real()) {
        neg = sgn(c.re) < 0;
        mpq_class mag = abs(c.re);
        if (w.empty()) body = rational_to_string(mag);
        else if (mag == 1) body = to_string(w);
        else body = rational_to_string(mag) + "*" + to_string(w);
    }
    else {
        body = to_string(c);
        if (!w.empty()) body += "*" + to_string(w);
    }
    if (first) return neg ? "-" + body : body;
    return (neg ? " - " : " + ") + body;
}

} // namespace

NCPoly parse(const std::string& text, const FamilyLayout& layout)
{
    return Parser(text, layout).run();
}

Word parse_word(const std::string& text, const FamilyLayout& layout)
{
    NCPoly p = parse(text, layout);
    if (p.terms().size() != 1 || p.terms().begin()->second != Coeff(1))
        throw ParseError("expected a single word with unit coefficient", 0);
    return p.terms().begin()->first;
}

std::string to_string(const NCPoly& p)
{
    if (p.is_zero()) return "0";
    std::string s;
    bool first = true;
    for (const auto& [w, c] : p.terms()) {
        s += signed_term(w, c, first);
        first = false;
    }
    return s;
}

std::string to_string(const TensorNCPoly& t)
{
    if (t.is_zero()) return "0";
    std::string s;
    bool first = true;
    for (const auto& [k, c] : t.terms()) {
        std::string legs = to_string(k.first) + " (x) " + to_string(k.second);
        s += signed_term(Word{}, c, first);
        s += " " + legs;
        first = false;
    }
    return s;
}

} // namespace orbfree
