#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace orbfree {

struct LayoutError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct AlphabetError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Families are 1-based throughout, matching the polynomial grammar.
struct FamilyLayout {
    int n = 1;
    std::vector<int> r{1};
    double R = 1.0;
    std::optional<double> S;

    FamilyLayout() = default;
    FamilyLayout(std::vector<int> sizes, double cutoff, std::optional<double> secondary = std::nullopt);

    // n single-variable families
    static FamilyLayout singletons(int n, double cutoff);

    int size(int i) const { return r.at(i - 1); }
    int variable_count() const;
    void validate() const;
    bool contains(int i, int j) const { return i >= 1 && i <= n && j >= 1 && j <= r[i - 1]; }

    bool operator==(const FamilyLayout& o) const { return r == o.r && R == o.R && S == o.S; }
};

std::string describe(const FamilyLayout& layout);

} // namespace orbfree
