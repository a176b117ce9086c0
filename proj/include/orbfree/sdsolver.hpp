#pragma once

#include <algorithm>
#include <memory>
#include <string>
#include <vector>

#include "orbfree/moments.hpp"

namespace orbfree {

struct SDProblem {
    FamilyLayout layout;
    NCPoly h;                      // over x, self-adjoint
    std::vector<MomentTable> tau0; // one-family z marginals, free across families
    int D = 8;
    double damping = 0.5;
    bool picard = false; // undamped updates
    int max_iter = 200;
    double tol = 1e-10;
    // h-nesting depth for words beyond D inside the iteration, and for
    // evaluations of the finished solution
    int closure_levels = 2;
    int ext_levels = 2;
    double small_threshold = 0.05;

    void validate() const;
    std::vector<std::string> warnings() const;
};

struct SDIteration {
    int iteration = 0;
    double residual = 0;
    double max_delta = 0;
    double ratio = 0; // max_delta / previous max_delta
};

struct SDReport {
    bool converged = false;
    int iterations = 0;
    double residual = 0;
    double max_delta = 0;
    std::vector<SDIteration> history;
    std::vector<std::string> warnings;
};

struct SDResidual {
    double equation = 0;    // SD equations whose terms all lie within D
    double marginal = 0;    // z-words against tau0
    double fixed_point = 0; // every solver equation, over-length words by the closure
    double max() const { return std::max({equation, marginal, fixed_point}); }
};

class SDEngine;

class SDSolution {
public:
    SDSolution() = default;
    explicit SDSolution(std::shared_ptr<SDEngine> engine) : engine_(std::move(engine)) {}
    const SDProblem& problem() const;
    // every class of length <= D
    MomentTable table() const;
    // any u,z word; words longer than D go through the closure recursion
    cplx value(const Word& w) const;
    cplx evaluate(const NCPoly& p) const;
    cplx evaluate(const TensorNCPoly& t) const;

private:
    std::shared_ptr<SDEngine> engine_;
};

struct SDResult {
    SDSolution solution;
    SDReport report;
};

SDResult sd_solve(const SDProblem& problem);

// (tau (x) tau) d_i(p) - tau((D_i h) p)
cplx sd_defect(const MomentTable& table, const SDProblem& problem, int i, const Word& p);
// test words p with |p| + deg(D_i h) <= D, plus z-marginal deviation from tau0
SDResidual sd_residual(const MomentTable& table, const SDProblem& problem);

MomentTable pushforward_x(const SDSolution& solution, int m);
// max over i and x-words w, |w| <= m, of |tau(j_i w) - (tau (x) tau) delta_i(w)|
double liberation_check(const SDSolution& solution, const NCPoly& h, int m);

SDProblem sd_problem_from_json(const std::string& text, const std::string& base_dir = ".");
void write_sd_history_csv(const std::string& path, const SDReport& report);

} // namespace orbfree
