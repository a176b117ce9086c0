#include "orbfree/layout.hpp"

#include <numeric>
#include <sstream>

namespace orbfree {

FamilyLayout::FamilyLayout(std::vector<int> sizes, double cutoff, std::optional<double> secondary)
    : n(static_cast<int>(sizes.size())), r(std::move(sizes)), R(cutoff), S(secondary)
{
    validate();
}

FamilyLayout FamilyLayout::singletons(int n, double cutoff)
{
    return FamilyLayout(std::vector<int>(n, 1), cutoff);
}

int FamilyLayout::variable_count() const
{
    return std::accumulate(r.begin(), r.end(), 0);
}

void FamilyLayout::validate() const
{
    if (n < 1 || static_cast<int>(r.size()) != n)
        throw LayoutError("layout needs at least one family");
    for (int s : r)
        if (s < 1) throw LayoutError("every family needs at least one variable");
    if (n > 127) throw LayoutError("at most 127 families are supported");
    for (int s : r)
        if (s > 127) throw LayoutError("at most 127 variables per family are supported");
    if (!(R > 0)) throw LayoutError("cutoff R must be positive");
    if (S && !(*S > 0)) throw LayoutError("secondary cutoff S must be positive");
}

std::string describe(const FamilyLayout& layout)
{
    std::ostringstream out;
    out << "n=" << layout.n << " r=(";
    for (int i = 0; i < layout.n; ++i) out << (i ? "," : "") << layout.r[i];
    out << ") R=" << layout.R;
    if (layout.S) out << " S=" << *layout.S;
    return out.str();
}

} // namespace orbfree
