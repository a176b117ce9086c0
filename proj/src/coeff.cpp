#include "orbfree/coeff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace orbfree {

Coeff Coeff::from_double(double r, double i)
{
    if (!std::isfinite(r) || !std::isfinite(i))
        throw std::invalid_argument("coefficient must be finite");
    Coeff c;
    c.re = mpq_class(r);
    c.im = mpq_class(i);
    c.re.canonicalize();
    c.im.canonicalize();
    return c;
}

Coeff& Coeff::operator+=(const Coeff& o)
{
    re += o.re;
    im += o.im;
    return *this;
}

Coeff& Coeff::operator-=(const Coeff& o)
{
    re -= o.re;
    im -= o.im;
    return *this;
}

Coeff& Coeff::operator*=(const Coeff& o)
{
    mpq_class r = re * o.re - im * o.im;
    mpq_class i = re * o.im + im * o.re;
    re = std::move(r);
    im = std::move(i);
    return *this;
}

Coeff& Coeff::operator/=(const Coeff& o)
{
    mpq_class d = o.re * o.re + o.im * o.im;
    if (sgn(d) == 0) throw std::domain_error("division by zero coefficient");
    mpq_class r = (re * o.re + im * o.im) / d;
    mpq_class i = (im * o.re - re * o.im) / d;
    re = std::move(r);
    im = std::move(i);
    return *this;
}

std::string rational_to_string(const mpq_class& q)
{
    mpz_class den = q.get_den();
    int twos = 0, fives = 0;
    while (mpz_divisible_ui_p(den.get_mpz_t(), 2)) { den /= 2; ++twos; }
    while (mpz_divisible_ui_p(den.get_mpz_t(), 5)) { den /= 5; ++fives; }
    if (den != 1) return q.get_str();

    int digits = std::max(twos, fives);
    mpz_class scale;
    mpz_ui_pow_ui(scale.get_mpz_t(), 10, digits);
    mpz_class scaled = q.get_num() * (scale / q.get_den());
    bool neg = sgn(scaled) < 0;
    if (neg) scaled = -scaled;
    std::string s = scaled.get_str();
    if (digits > 0) {
        if (static_cast<int>(s.size()) <= digits) s.insert(0, digits - s.size() + 1, '0');
        s.insert(s.size() - digits, ".");
    }
    return neg ? "-" + s : s;
}

std::string to_string(const Coeff& c)
{
    if (c.is_real()) return rational_to_string(c.re);
    std::string s = "(" + rational_to_string(c.re);
    s += sgn(c.im) < 0 ? "-" : "+";
    s += rational_to_string(abs(c.im)) + "i)";
    return s;
}

} // namespace orbfree
