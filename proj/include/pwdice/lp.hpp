#pragma once

#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pwdice {

/// Standard-form linear program: min c'x subject to Ax = b, x >= 0.
struct LpProblem {
    Eigen::VectorXd c;
    Eigen::MatrixXd a;
    Eigen::VectorXd b;
    std::vector<std::string> variable_names;  // optional

    int num_rows() const { return static_cast<int>(a.rows()); }
    int num_cols() const { return static_cast<int>(a.cols()); }

    void validate() const {
        if (a.rows() != b.size() || a.cols() != c.size())
            throw std::invalid_argument("LpProblem: inconsistent dimensions");
        if (!a.allFinite() || !b.allFinite() || !c.allFinite())
            throw std::invalid_argument("LpProblem: non-finite data");
        if (!variable_names.empty() && static_cast<int>(variable_names.size()) != num_cols())
            throw std::invalid_argument("LpProblem: wrong number of variable names");
    }
};

enum class LpStatus { optimal, infeasible, unbounded };

inline const char* to_string(LpStatus status) {
    switch (status) {
        case LpStatus::optimal: return "optimal";
        case LpStatus::infeasible: return "infeasible";
        case LpStatus::unbounded: return "unbounded";
    }
    return "unknown";
}

struct LpSolution {
    LpStatus status = LpStatus::infeasible;
    Eigen::VectorXd x;
    double objective = std::numeric_limits<double>::quiet_NaN();
    Eigen::VectorXd dual;           // length m
    std::vector<int> dropped_rows;  // redundant equality rows detected in phase 1
    int pivots = 0;
};

enum class PivotRule { bland, dantzig };

struct SimplexOptions {
    PivotRule rule = PivotRule::bland;
    double eps_pivot = 1e-9;  // smallest usable pivot magnitude
    double eps_cost = 1e-9;   // reduced-cost optimality threshold
    double eps_feas = 1e-8;   // phase-1 optimum considered zero (relative to 1+|b|_inf)
    long max_pivots = 0;      // 0 = automatic cap
};

namespace detail {

// Dense tableau: m_live constraint rows, then the reduced-cost row. Columns
// are n structural, m artificial, then the RHS. Artificial columns are kept
// through phase 2 (they carry the running basis inverse, which is where the
// dual vector is read from); they are never eligible to enter the basis.
class SimplexTableau {
public:
    SimplexTableau(const LpProblem& problem, const SimplexOptions& options)
        : options_(options),
          n_(problem.num_cols()),
          m_(problem.num_rows()),
          m_live_(problem.num_rows()) {
        t_ = Eigen::MatrixXd::Zero(m_ + 1, n_ + m_ + 1);
        basis_.resize(m_);
        row_origin_.resize(m_);
        flipped_.assign(m_, false);
        for (int i = 0; i < m_; ++i) {
            const double sign = problem.b[i] < 0.0 ? -1.0 : 1.0;
            flipped_[i] = sign < 0.0;
            t_.row(i).head(n_) = sign * problem.a.row(i);
            t_(i, n_ + i) = 1.0;
            t_(i, rhs()) = sign * problem.b[i];
            basis_[i] = n_ + i;
            row_origin_[i] = i;
        }
    }

    int rhs() const { return n_ + m_; }

    // Phase 1: minimize the sum of artificial variables (all basic at start,
    // so the reduced-cost row is minus the sum of the constraint rows on
    // structural columns and zero on basic artificials).
    bool run_phase1(long& pivot_budget, int& pivots) {
        auto z = t_.row(m_live_);
        z.setZero();
        for (int i = 0; i < m_live_; ++i) z -= t_.row(i);
        for (int i = 0; i < m_live_; ++i) z[basis_[i]] = 0.0;
        return iterate(pivot_budget, pivots);
    }

    double phase1_objective() const { return -t_(m_live_, rhs()); }

    // Pivot lingering artificials out of the basis; a row admitting no
    // structural pivot is redundant and is removed from the working tableau.
    void purge_artificials() {
        for (int i = 0; i < m_live_;) {
            if (basis_[i] < n_) {
                ++i;
                continue;
            }
            int col = -1;
            for (int j = 0; j < n_; ++j) {
                if (std::abs(t_(i, j)) > options_.eps_pivot) {
                    col = j;
                    break;
                }
            }
            if (col >= 0) {
                pivot(i, col);
                ++i;
            } else {
                drop_row(i);
            }
        }
    }

    bool run_phase2(const Eigen::VectorXd& c, long& pivot_budget, int& pivots) {
        auto z = t_.row(m_live_);
        z.setZero();
        z.head(n_) = c.transpose();
        for (int i = 0; i < m_live_; ++i) {
            const double cost = basis_[i] < n_ ? c[basis_[i]] : 0.0;
            if (cost != 0.0) z -= cost * t_.row(i);
        }
        return iterate(pivot_budget, pivots);
    }

    Eigen::VectorXd primal() const {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(n_);
        for (int i = 0; i < m_live_; ++i)
            if (basis_[i] < n_) x[basis_[i]] = t_(i, rhs());
        return x;
    }

    // The phase-2 reduced cost of artificial column i is -y_i (zero cost,
    // column e_i in the original system); sign-flipped rows flip back.
    Eigen::VectorXd dual() const {
        Eigen::VectorXd y(m_);
        for (int i = 0; i < m_; ++i) {
            const double value = -t_(m_live_, n_ + i);
            y[i] = flipped_[i] ? -value : value;
        }
        return y;
    }

    std::vector<int> dropped_rows() const { return dropped_; }

private:
    void pivot(int row, int col) {
        t_.row(row) /= t_(row, col);
        for (int i = 0; i <= m_live_; ++i) {
            if (i == row) continue;
            const double factor = t_(i, col);
            if (factor != 0.0) t_.row(i) -= factor * t_.row(row);
        }
        basis_[row] = col;
    }

    void drop_row(int row) {
        dropped_.push_back(row_origin_[row]);
        const int last = m_live_ - 1;
        if (row != last) {
            t_.row(row).swap(t_.row(last));
            std::swap(basis_[row], basis_[last]);
            std::swap(row_origin_[row], row_origin_[last]);
        }
        t_.row(last).swap(t_.row(last + 1));  // objective row moves up
        --m_live_;
    }

    // Entering column: Bland takes the lowest eligible structural index,
    // Dantzig the most negative reduced cost. Leaving row: minimum ratio,
    // ties broken by the lowest basis index (Bland's anti-cycling pair).
    // Artificials never enter; once one leaves the basis it stays at zero.
    bool iterate(long& pivot_budget, int& pivots) {
        while (true) {
            int entering = -1;
            if (options_.rule == PivotRule::bland) {
                for (int j = 0; j < n_; ++j)
                    if (t_(m_live_, j) < -options_.eps_cost) {
                        entering = j;
                        break;
                    }
            } else {
                double best = -options_.eps_cost;
                for (int j = 0; j < n_; ++j)
                    if (t_(m_live_, j) < best) {
                        best = t_(m_live_, j);
                        entering = j;
                    }
            }
            if (entering < 0) return true;  // optimal for this phase

            int leaving = -1;
            double best_ratio = std::numeric_limits<double>::infinity();
            for (int i = 0; i < m_live_; ++i) {
                const double coeff = t_(i, entering);
                if (coeff <= options_.eps_pivot) continue;
                const double ratio = t_(i, rhs()) / coeff;
                if (ratio < best_ratio - 1e-12 ||
                    (ratio < best_ratio + 1e-12 && (leaving < 0 || basis_[i] < basis_[leaving]))) {
                    best_ratio = std::min(ratio, best_ratio);
                    leaving = i;
                }
            }
            if (leaving < 0) return false;  // unbounded direction

            pivot(leaving, entering);
            ++pivots;
            if (--pivot_budget <= 0) throw std::runtime_error("simplex: pivot budget exhausted");
        }
    }

    SimplexOptions options_;
    int n_ = 0;
    int m_ = 0;
    int m_live_ = 0;
    Eigen::MatrixXd t_;
    std::vector<int> basis_;
    std::vector<int> row_origin_;
    std::vector<bool> flipped_;
    std::vector<int> dropped_;
};

}  // namespace detail

/// Two-phase dense primal simplex for standard-form problems. Redundant
/// equality rows are detected in phase 1 (their artificial stays basic at
/// zero with no structural pivot available) and dropped.
inline LpSolution solve_lp(const LpProblem& problem, const SimplexOptions& options = {}) {
    problem.validate();
    const int n = problem.num_cols(), m = problem.num_rows();
    long budget = options.max_pivots > 0 ? options.max_pivots
                                         : 10000L + 400L * static_cast<long>(n + m);

    detail::SimplexTableau tableau(problem, options);
    LpSolution solution;
    if (!tableau.run_phase1(budget, solution.pivots))
        throw std::runtime_error("simplex: phase 1 reported unbounded");
    const double feas_tol = options.eps_feas * (1.0 + problem.b.cwiseAbs().maxCoeff());
    if (tableau.phase1_objective() > feas_tol) {
        solution.status = LpStatus::infeasible;
        return solution;
    }
    tableau.purge_artificials();

    if (!tableau.run_phase2(problem.c, budget, solution.pivots)) {
        solution.status = LpStatus::unbounded;
        return solution;
    }

    solution.status = LpStatus::optimal;
    solution.x = tableau.primal();
    solution.objective = problem.c.dot(solution.x);
    solution.dual = tableau.dual();
    solution.dropped_rows = tableau.dropped_rows();
    return solution;
}

struct CertificateCheck {
    std::string name;
    double residual = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct CertificateReport {
    std::vector<CertificateCheck> checks;
    bool all_pass = true;

    void add(const std::string& name, double residual, double tolerance) {
        const bool pass = residual <= tolerance;
        checks.push_back({name, residual, tolerance, pass});
        all_pass = all_pass && pass;
    }
};

/// Recompute feasibility, stationarity, and the duality gap from the raw
/// problem data; nothing here trusts the solver's internal state.
inline CertificateReport verify_solution(const LpProblem& problem, const LpSolution& solution) {
    if (solution.status != LpStatus::optimal)
        throw std::invalid_argument("verify_solution: solution is not optimal");
    CertificateReport report;
    const Eigen::VectorXd residual = problem.a * solution.x - problem.b;
    report.add("primal_feasibility", residual.cwiseAbs().maxCoeff(),
               1e-8 * (1.0 + problem.b.cwiseAbs().maxCoeff()));
    report.add("nonnegativity", std::max(0.0, -solution.x.minCoeff()), 1e-10);
    const Eigen::VectorXd reduced = problem.c - problem.a.transpose() * solution.dual;
    report.add("reduced_costs", std::max(0.0, -reduced.minCoeff()), 1e-8);
    report.add("complementary_slackness",
               solution.x.cwiseProduct(reduced).cwiseAbs().maxCoeff(), 1e-7);
    report.add("duality_gap", std::abs(problem.c.dot(solution.x) - problem.b.dot(solution.dual)),
               1e-7 * (1.0 + std::abs(solution.objective)));
    return report;
}

/// Plain-text dump for cross-checking with external tools: a dimensions
/// header, the cost row, then each constraint row with its RHS appended.
inline void dump_lp(std::ostream& out, const LpProblem& problem) {
    out << problem.num_rows() << " " << problem.num_cols() << "\n";
    for (int j = 0; j < problem.num_cols(); ++j) out << (j ? " " : "") << problem.c[j];
    out << "\n";
    for (int i = 0; i < problem.num_rows(); ++i) {
        for (int j = 0; j < problem.num_cols(); ++j) out << problem.a(i, j) << " ";
        out << problem.b[i] << "\n";
    }
}

}  // namespace pwdice
