#pragma once

#include <complex>
#include <string>

#include <gmpxx.h>

namespace orbfree {

// Exact complex rational, used for every symbolic coefficient.
struct Coeff {
    mpq_class re{0};
    mpq_class im{0};

    Coeff() = default;
    Coeff(long v) : re(v) {}
    Coeff(mpq_class r, mpq_class i = 0) : re(std::move(r)), im(std::move(i)) {}

    // exact binary value of the doubles
    static Coeff from_double(double r, double i = 0.0);
    static Coeff from_complex(std::complex<double> z) { return from_double(z.real(), z.imag()); }

    bool is_zero() const { return sgn(re) == 0 && sgn(im) == 0; }
    bool is_real() const { return sgn(im) == 0; }
    Coeff conj() const { return Coeff(re, -im); }
    std::complex<double> value() const { return {re.get_d(), im.get_d()}; }
    double abs() const { return std::abs(value()); }

    Coeff operator-() const { return Coeff(-re, -im); }
    Coeff& operator+=(const Coeff& o);
    Coeff& operator-=(const Coeff& o);
    Coeff& operator*=(const Coeff& o);
    Coeff& operator/=(const Coeff& o);

    friend Coeff operator+(Coeff a, const Coeff& b) { return a += b; }
    friend Coeff operator-(Coeff a, const Coeff& b) { return a -= b; }
    friend Coeff operator*(Coeff a, const Coeff& b) { return a *= b; }
    friend Coeff operator/(Coeff a, const Coeff& b) { return a /= b; }
    friend bool operator==(const Coeff& a, const Coeff& b) { return a.re == b.re && a.im == b.im; }
    friend bool operator!=(const Coeff& a, const Coeff& b) { return !(a == b); }
};

inline const Coeff imaginary_unit{mpq_class(0), mpq_class(1)};

// Finite decimals print as decimals, everything else as p/q.
std::string rational_to_string(const mpq_class& q);
std::string to_string(const Coeff& c);

} // namespace orbfree
