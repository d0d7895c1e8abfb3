#pragma once

#include <string>
#include <vector>

#include "tsarch/pareto.hpp"

namespace tsarch {

struct LinearProgram {
    std::vector<double> c;                  // minimize c^T x
    std::vector<std::vector<double>> A_ub;  // A_ub x <= b_ub
    std::vector<double> b_ub;
    std::vector<std::vector<double>> A_eq;  // A_eq x == b_eq
    std::vector<double> b_eq;
    std::vector<double> lo, hi;             // variable bounds (lo must be 0)
};

enum class CertificateStatus { FEASIBLE, INFEASIBLE };

/// Weight vector on the probability simplex certifying weak optimality of a
/// front member under the weighted-sum preference, or an infeasibility marker
/// (the member is a non-supported Pareto point).
struct RediscoveryCertificate {
    CertificateStatus status = CertificateStatus::INFEASIBLE;
    std::vector<double> lambda;  // empty when INFEASIBLE

    bool feasible() const { return status == CertificateStatus::FEASIBLE; }
};

/// Weight-rediscovery LP on re-scaled objectives:
///   min lambda . fhat(x*)
///   s.t. (fhat(x*) - fhat(x)) . lambda <= 0   for every other front member x
///        sum lambda = 1,  0 <= lambda_i <= 1
LinearProgram build_lp(const ParetoFront& front, const std::string& target_key);

/// Dense two-phase simplex with Bland's anti-cycling rule. INFEASIBLE when the
/// phase-1 optimum exceeds 1e-9.
RediscoveryCertificate simplex_solve(const LinearProgram& lp);

/// build_lp + simplex_solve; FEASIBLE certificates are verified by direct
/// constraint substitution (1e-9) before they are returned.
RediscoveryCertificate rediscover(const ParetoFront& front, const std::string& target_key);

}  // namespace tsarch
