#include "tsarch/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tsarch/errors.hpp"

namespace tsarch {

namespace {

constexpr double kPivotTol = 1e-12;
constexpr double kFeasTol = 1e-9;

// Dense tableau for min c^T z, A z = b, z >= 0 with b >= 0.
// Row 0 holds the (negated-cost) objective; Bland's rule everywhere.
class Tableau {
public:
    Tableau(std::vector<std::vector<double>> rows, std::vector<double> rhs, std::size_t n_cols)
        : n_(n_cols), rows_(std::move(rows)), rhs_(std::move(rhs)), basis_(rows_.size(), SIZE_MAX) {}

    std::size_t m() const { return rows_.size(); }
    std::size_t n() const { return n_; }
    double rhs(std::size_t i) const { return rhs_[i]; }
    double at(std::size_t i, std::size_t j) const { return rows_[i][j]; }
    std::size_t basis(std::size_t i) const { return basis_[i]; }
    void set_basis(std::size_t i, std::size_t j) { basis_[i] = j; }

    void pivot(std::size_t pr, std::size_t pc) {
        const double pv = rows_[pr][pc];
        for (std::size_t j = 0; j < n_; ++j) rows_[pr][j] /= pv;
        rhs_[pr] /= pv;
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            if (i == pr) continue;
            const double f = rows_[i][pc];
            if (std::abs(f) < kPivotTol) continue;
            for (std::size_t j = 0; j < n_; ++j) rows_[i][j] -= f * rows_[pr][j];
            rhs_[i] -= f * rhs_[pr];
        }
        basis_[pr] = pc;
    }

    // Minimize sum(costs[j] * z_j) from the current basic feasible point.
    // allowed[j] == false masks a column out (used to retire artificials).
    // Returns the optimal objective value.
    double optimize(const std::vector<double>& costs, const std::vector<char>& allowed) {
        // reduced-cost row: r = costs - costs_B^T B^{-1} A, tracked incrementally
        std::vector<double> red(n_);
        double obj = 0.0;
        for (std::size_t j = 0; j < n_; ++j) red[j] = costs[j];
        for (std::size_t i = 0; i < m(); ++i) {
            const double cb = costs[basis_[i]];
            if (cb == 0.0) continue;
            for (std::size_t j = 0; j < n_; ++j) red[j] -= cb * rows_[i][j];
            obj -= cb * rhs_[i];
        }
        while (true) {
            // Bland: entering column = smallest index with negative reduced cost
            std::size_t pc = SIZE_MAX;
            for (std::size_t j = 0; j < n_; ++j) {
                if (!allowed[j]) continue;
                if (red[j] < -kFeasTol) {
                    pc = j;
                    break;
                }
            }
            if (pc == SIZE_MAX) return -obj;

            // ratio test; Bland tie-break on smallest basis index
            std::size_t pr = SIZE_MAX;
            double best_ratio = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < m(); ++i) {
                if (rows_[i][pc] > kPivotTol) {
                    const double ratio = rhs_[i] / rows_[i][pc];
                    if (ratio < best_ratio - 0.0 ||
                        (ratio == best_ratio && pr != SIZE_MAX && basis_[i] < basis_[pr])) {
                        best_ratio = ratio;
                        pr = i;
                    }
                }
            }
            if (pr == SIZE_MAX)
                throw NumericInstability("unbounded direction in a simplex-bounded program");

            const double enter_red = red[pc];
            pivot(pr, pc);
            // update reduced costs: red -= red[pc] * (pivot row)
            for (std::size_t j = 0; j < n_; ++j) red[j] -= enter_red * rows_[pr][j];
            obj -= enter_red * rhs_[pr];
            red[pc] = 0.0;
        }
    }

private:
    std::size_t n_;
    std::vector<std::vector<double>> rows_;
    std::vector<double> rhs_;
    std::vector<std::size_t> basis_;
};

}  // namespace

LinearProgram build_lp(const ParetoFront& front, const std::string& target_key) {
    const LabeledPoint* target = front.find(target_key);
    if (!target) throw KeyNotInFront(target_key);
    const RescaleMap map = rescale_map(front);
    const ObjectiveVector target_hat = map.apply(target->f);
    const std::size_t n = target_hat.size();

    LinearProgram lp;
    lp.c = target_hat;
    for (const LabeledPoint& m : front.members) {
        if (&m == target) continue;
        const ObjectiveVector m_hat = map.apply(m.f);
        std::vector<double> row(n);
        for (std::size_t i = 0; i < n; ++i) row[i] = target_hat[i] - m_hat[i];
        lp.A_ub.push_back(std::move(row));
        lp.b_ub.push_back(0.0);
    }
    lp.A_eq.push_back(std::vector<double>(n, 1.0));
    lp.b_eq.push_back(1.0);
    lp.lo.assign(n, 0.0);
    lp.hi.assign(n, 1.0);
    return lp;
}

RediscoveryCertificate simplex_solve(const LinearProgram& lp) {
    const std::size_t n = lp.c.size();
    for (double lo : lp.lo)
        if (lo != 0.0) throw NumericInstability("simplex assumes zero lower bounds");

    // standard form: structural vars + finite upper bounds as <= rows
    std::vector<std::vector<double>> rows;
    std::vector<double> rhs;
    for (std::size_t r = 0; r < lp.A_ub.size(); ++r) {
        rows.push_back(lp.A_ub[r]);
        rhs.push_back(lp.b_ub[r]);
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(lp.hi[i])) continue;
        std::vector<double> row(n, 0.0);
        row[i] = 1.0;
        rows.push_back(std::move(row));
        rhs.push_back(lp.hi[i]);
    }
    const std::size_t n_ub = rows.size();
    for (std::size_t r = 0; r < lp.A_eq.size(); ++r) {
        rows.push_back(lp.A_eq[r]);
        rhs.push_back(lp.b_eq[r]);
    }
    const std::size_t m = rows.size();

    // flip rows with negative rhs so b >= 0
    std::vector<char> flipped(m, 0);
    for (std::size_t i = 0; i < m; ++i) {
        if (rhs[i] < 0.0) {
            for (double& v : rows[i]) v = -v;
            rhs[i] = -rhs[i];
            flipped[i] = 1;
        }
    }

    // columns: structural | slacks (ub rows) | artificials (eq rows and flipped ub rows)
    std::vector<std::size_t> art_rows;
    for (std::size_t i = 0; i < m; ++i) {
        const bool is_ub = i < n_ub;
        if (!is_ub || flipped[i]) art_rows.push_back(i);
    }
    const std::size_t n_slack = n_ub;
    const std::size_t n_art = art_rows.size();
    const std::size_t n_total = n + n_slack + n_art;

    std::vector<std::vector<double>> tab(m, std::vector<double>(n_total, 0.0));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) tab[i][j] = rows[i][j];
    for (std::size_t i = 0; i < n_ub; ++i) tab[i][n + i] = flipped[i] ? -1.0 : 1.0;
    for (std::size_t k = 0; k < n_art; ++k) tab[art_rows[k]][n + n_slack + k] = 1.0;

    Tableau t(std::move(tab), rhs, n_total);
    for (std::size_t i = 0; i < n_ub; ++i)
        if (!flipped[i]) t.set_basis(i, n + i);
    for (std::size_t k = 0; k < n_art; ++k) t.set_basis(art_rows[k], n + n_slack + k);

    std::vector<char> allowed(n_total, 1);
    // phase 1: minimize the artificial sum
    if (n_art > 0) {
        std::vector<double> phase1(n_total, 0.0);
        for (std::size_t k = 0; k < n_art; ++k) phase1[n + n_slack + k] = 1.0;
        const double infeasibility = t.optimize(phase1, allowed);
        if (infeasibility > kFeasTol) return RediscoveryCertificate{CertificateStatus::INFEASIBLE, {}};

        // drive remaining artificials out of the basis, then retire their columns
        for (std::size_t i = 0; i < t.m(); ++i) {
            if (t.basis(i) < n + n_slack) continue;
            bool pivoted = false;
            for (std::size_t j = 0; j < n + n_slack && !pivoted; ++j) {
                if (std::abs(t.at(i, j)) > kPivotTol) {
                    t.pivot(i, j);
                    pivoted = true;
                }
            }
            // an all-zero row is redundant; its artificial stays basic at value 0
        }
        for (std::size_t k = 0; k < n_art; ++k) allowed[n + n_slack + k] = 0;
    }

    // phase 2
    std::vector<double> costs(n_total, 0.0);
    for (std::size_t j = 0; j < n; ++j) costs[j] = lp.c[j];
    t.optimize(costs, allowed);

    std::vector<double> x(n, 0.0);
    for (std::size_t i = 0; i < t.m(); ++i)
        if (t.basis(i) < n) x[t.basis(i)] = t.rhs(i);
    for (double& v : x) v = std::clamp(v, 0.0, 1.0);
    return RediscoveryCertificate{CertificateStatus::FEASIBLE, std::move(x)};
}

RediscoveryCertificate rediscover(const ParetoFront& front, const std::string& target_key) {
    const LinearProgram lp = build_lp(front, target_key);
    RediscoveryCertificate cert = simplex_solve(lp);
    if (!cert.feasible()) return cert;

    // verify by direct substitution before handing the certificate out
    double sum = 0.0;
    for (double v : cert.lambda) {
        if (v < -kFeasTol || v > 1.0 + kFeasTol) throw NumericInstability("certificate violates box bounds");
        sum += v;
    }
    if (std::abs(sum - 1.0) > kFeasTol) throw NumericInstability("certificate leaves the simplex");
    for (std::size_t r = 0; r < lp.A_ub.size(); ++r) {
        double lhs = 0.0;
        for (std::size_t j = 0; j < cert.lambda.size(); ++j) lhs += lp.A_ub[r][j] * cert.lambda[j];
        if (lhs > lp.b_ub[r] + kFeasTol) throw NumericInstability("certificate violates a dominance row");
    }
    return cert;
}

}  // namespace tsarch
