#pragma once

#include <stdexcept>
#include <string>

#include "orbfree/ncpoly.hpp"

namespace orbfree {

struct ParseError : std::invalid_argument {
    std::size_t position;
    ParseError(const std::string& what, std::size_t pos)
        : std::invalid_argument(what + " at position " + std::to_string(pos)), position(pos) {}
};

// Grammar: poly := term (('+'|'-') term)*; term := factor ('*' factor)*;
// factor := atom ['^' int]; atom := x[i,j] | z[i,j] | u[i] | u'[i] | (poly) | number | number 'i'.
// Numbers may be decimals or p/q fractions, so printed output always parses back.
NCPoly parse(const std::string& text, const FamilyLayout& layout);
Word parse_word(const std::string& text, const FamilyLayout& layout);

std::string to_string(const NCPoly& p);
std::string to_string(const TensorNCPoly& t);

} // namespace orbfree
