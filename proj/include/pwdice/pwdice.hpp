#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pwdice/adam.hpp"
#include "pwdice/dataset.hpp"
#include "pwdice/lp.hpp"
#include "pwdice/mdp.hpp"

namespace pwdice {

enum class CostKind {
    zero_one,
    smodice_log_ratio,
    discriminator_r,
    combined_contrastive,
    euclidean,
    cosine,
    custom,
};

inline const char* to_string(CostKind kind) {
    switch (kind) {
        case CostKind::zero_one: return "zero_one";
        case CostKind::smodice_log_ratio: return "smodice_log_ratio";
        case CostKind::discriminator_r: return "discriminator_R";
        case CostKind::combined_contrastive: return "combined_contrastive";
        case CostKind::euclidean: return "euclidean";
        case CostKind::cosine: return "cosine";
        case CostKind::custom: return "custom";
    }
    return "unknown";
}

/// Ground distance table c(s_i, s_j). The first index ranges over learner
/// (task-agnostic) states, the second over expert states.
struct CostSpec {
    Eigen::MatrixXd matrix;  // S x S
    CostKind kind = CostKind::custom;

    void validate() const {
        if (!matrix.allFinite()) throw std::invalid_argument("CostSpec: non-finite entries");
        if (kind == CostKind::zero_one) {
            for (int i = 0; i < matrix.rows(); ++i)
                if (matrix(i, i) != 0.0)
                    throw std::invalid_argument("CostSpec: zero_one diagonal must be 0");
        }
    }
};

/// Lagrange vector of length 3|S|. The first block is value-like, the second
/// prices loading mass out of the learner occupancy, the third unloading it
/// onto the expert marginal. No normalization: constant shifts of the last
/// two blocks in opposite directions are a gauge freedom of the objective.
struct DualVariables {
    Eigen::VectorXd lambda;

    int num_states() const { return static_cast<int>(lambda.size()) / 3; }
    Eigen::VectorBlock<const Eigen::VectorXd> value_head() const {
        return lambda.segment(0, num_states());
    }
    Eigen::VectorBlock<const Eigen::VectorXd> loading() const {
        return lambda.segment(num_states(), num_states());
    }
    Eigen::VectorBlock<const Eigen::VectorXd> unloading() const {
        return lambda.segment(2 * num_states(), num_states());
    }
};

enum class Divergence { kl, chi2 };

inline const char* to_string(Divergence d) { return d == Divergence::kl ? "kl" : "chi2"; }

struct PwdiceConfig {
    double eps1 = 0.01;
    double eps2 = 0.01;
    Divergence divergence = Divergence::kl;
    double gamma = 0.95;
    OptimizerConfig optimizer;

    void validate_dual() const {
        if (!(eps1 > 0.0 && eps2 > 0.0))
            throw std::invalid_argument("PwdiceConfig: dual mode needs eps1 > 0 and eps2 > 0");
        if (!(gamma > 0.0 && gamma < 1.0))
            throw std::invalid_argument("PwdiceConfig: gamma must lie in (0, 1)");
    }
};

// ---------------------------------------------------------------------------
// Primal LP
// ---------------------------------------------------------------------------

/// Condensed LP over x = [Pi row-major; d_sa row-major]: 3|S| equality rows
/// (Bellman flow, coupling row marginals, coupling column marginals) and the
/// ground cost on the Pi block only.
inline LpProblem assemble_primal_lp(const EmpiricalModel& model, const CostSpec& cost) {
    const int S = model.num_states, A = model.num_actions;
    if (cost.matrix.rows() != S || cost.matrix.cols() != S)
        throw std::invalid_argument("assemble_primal_lp: cost matrix must be |S| x |S|");
    const int n_pi = S * S, n = n_pi + S * A, m = 3 * S;

    LpProblem lp;
    lp.c = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < S; ++i)
        for (int j = 0; j < S; ++j) lp.c[i * S + j] = cost.matrix(i, j);

    lp.a = Eigen::MatrixXd::Zero(m, n);
    lp.b = Eigen::VectorXd::Zero(m);
    // Bellman flow: sum_a d_sa(s,a) - gamma sum_{j,k} p(s|j,k) d_sa(j,k) = (1-gamma) p0(s)
    for (int s = 0; s < S; ++s) {
        for (int j = 0; j < S; ++j)
            for (int k = 0; k < A; ++k) {
                double coeff = -model.gamma * model.p_hat(j * A + k, s);
                if (j == s) coeff += 1.0;
                lp.a(s, n_pi + j * A + k) = coeff;
            }
        lp.b[s] = (1.0 - model.gamma) * model.p0_hat[s];
    }
    // Row marginals: sum_j Pi(i,j) - sum_a d_sa(i,a) = 0
    for (int i = 0; i < S; ++i) {
        for (int j = 0; j < S; ++j) lp.a(S + i, i * S + j) = 1.0;
        for (int a = 0; a < A; ++a) lp.a(S + i, n_pi + i * A + a) = -1.0;
    }
    // Column marginals: sum_i Pi(i,j) = dE_s(j)
    for (int j = 0; j < S; ++j) {
        for (int i = 0; i < S; ++i) lp.a(2 * S + j, i * S + j) = 1.0;
        lp.b[2 * S + j] = model.dE_s[j];
    }

    lp.variable_names.reserve(n);
    for (int i = 0; i < S; ++i)
        for (int j = 0; j < S; ++j)
            lp.variable_names.push_back("Pi(" + std::to_string(i) + "," + std::to_string(j) + ")");
    for (int i = 0; i < S; ++i)
        for (int a = 0; a < A; ++a)
            lp.variable_names.push_back("dsa(" + std::to_string(i) + "," + std::to_string(a) + ")");
    return lp;
}

/// Conditional policy pi(a|s) = d_sa(s,a) / sum_a d_sa(s,a); zero-mass rows
/// become uniform. This is the exact optimum of the weighted-BC objective in
/// the tabular case.
inline Policy extract_policy(const Eigen::MatrixXd& d_sa) {
    const int S = static_cast<int>(d_sa.rows()), A = static_cast<int>(d_sa.cols());
    Eigen::MatrixXd probs(S, A);
    for (int s = 0; s < S; ++s) {
        Eigen::VectorXd row = d_sa.row(s).cwiseMax(0.0).transpose();
        const double total = row.sum();
        if (total > 0.0)
            probs.row(s) = (row / total).transpose();
        else
            probs.row(s).setConstant(1.0 / A);
    }
    return Policy{std::move(probs)};
}

struct PrimalLpResult {
    Eigen::MatrixXd pi;    // S x S coupling
    Eigen::MatrixXd d_sa;  // S x A occupancy
    double wasserstein = 0.0;
    Policy policy;
    LpSolution lp_solution;
};

inline PrimalLpResult solve_primal_lp(const EmpiricalModel& model, const CostSpec& cost,
                                      const SimplexOptions& options = {}) {
    const int S = model.num_states, A = model.num_actions;
    const LpProblem lp = assemble_primal_lp(model, cost);
    LpSolution solution = solve_lp(lp, options);
    if (solution.status != LpStatus::optimal)
        throw std::runtime_error(std::string("solve_primal_lp: LP is ") +
                                 to_string(solution.status) +
                                 " (empirical model is inconsistent)");
    PrimalLpResult result;
    result.pi = Eigen::MatrixXd::Zero(S, S);
    for (int i = 0; i < S; ++i)
        for (int j = 0; j < S; ++j) result.pi(i, j) = solution.x[i * S + j];
    result.d_sa = Eigen::MatrixXd::Zero(S, A);
    for (int i = 0; i < S; ++i)
        for (int a = 0; a < A; ++a) result.d_sa(i, a) = solution.x[S * S + i * A + a];
    result.wasserstein = solution.objective;
    result.policy = extract_policy(result.d_sa);
    result.lp_solution = std::move(solution);
    return result;
}

// ---------------------------------------------------------------------------
// Fenchel machinery
// ---------------------------------------------------------------------------

struct FenchelResult {
    double value = 0.0;
    Eigen::VectorXd maximizer;
};

/// KL case of the conjugate over the simplex:
/// max_{p in simplex} E_p[y] - KL(p||q) = log E_q[exp y], maximized by the
/// Gibbs distribution p* = q exp(y) / E_q[exp y].
inline FenchelResult fenchel_kl(const Eigen::VectorXd& y, const Eigen::VectorXd& q) {
    if (y.size() != q.size()) throw std::invalid_argument("fenchel_kl: size mismatch");
    double max_score = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < y.size(); ++i)
        if (q[i] > 0.0) max_score = std::max(max_score, y[i]);
    if (!std::isfinite(max_score)) throw std::invalid_argument("fenchel_kl: q has empty support");
    Eigen::VectorXd weights = Eigen::VectorXd::Zero(y.size());
    for (int i = 0; i < y.size(); ++i)
        if (q[i] > 0.0) weights[i] = q[i] * std::exp(y[i] - max_score);
    const double total = weights.sum();
    return {max_score + std::log(total), weights / total};
}

// ---------------------------------------------------------------------------
// Regularized dual
// ---------------------------------------------------------------------------

namespace detail {

// Scores shared by the objective, its gradient, and the primal recovery:
//   matching block  t1(i,j) = lambda_{S+i} + lambda_{2S+j} - c(i,j)
//   flow block      t2(i,a) = -gamma E_{p_hat(.|i,a)} lambda_k
//                             + lambda_i - lambda_{S+i}
struct DualScores {
    Eigen::MatrixXd t1;  // S x S
    Eigen::MatrixXd t2;  // S x A
};

inline DualScores dual_scores(const Eigen::VectorXd& lambda, const EmpiricalModel& model,
                              const Eigen::MatrixXd& cost, double gamma) {
    const int S = model.num_states, A = model.num_actions;
    if (lambda.size() != 3 * S)
        throw std::invalid_argument("dual objective: lambda must have length 3|S|");
    DualScores scores;
    const auto head = lambda.segment(0, S);
    const auto mid = lambda.segment(S, S);
    const auto tail = lambda.segment(2 * S, S);
    scores.t1 = mid.replicate(1, S) + tail.transpose().replicate(S, 1) - cost;
    const Eigen::VectorXd expected_next = model.p_hat * head;  // length S*A
    scores.t2.resize(S, A);
    for (int i = 0; i < S; ++i)
        for (int a = 0; a < A; ++a)
            scores.t2(i, a) = -gamma * expected_next[i * A + a] + head[i] - mid[i];
    return scores;
}

// Weighted log-sum-exp over the support of q; also returns the softmax
// weights (zero off support).
inline double weighted_lse(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& q,
                           Eigen::MatrixXd& weights) {
    double max_score = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < scores.rows(); ++i)
        for (int j = 0; j < scores.cols(); ++j)
            if (q(i, j) > 0.0) max_score = std::max(max_score, scores(i, j));
    weights = Eigen::MatrixXd::Zero(scores.rows(), scores.cols());
    for (int i = 0; i < scores.rows(); ++i)
        for (int j = 0; j < scores.cols(); ++j)
            if (q(i, j) > 0.0) weights(i, j) = q(i, j) * std::exp(scores(i, j) - max_score);
    const double total = weights.sum();
    weights /= total;
    return max_score + std::log(total);
}

inline Eigen::MatrixXd product_distribution(const EmpiricalModel& model) {
    return model.dI_s * model.dE_s.transpose();
}

}  // namespace detail

struct DualEval {
    double value = 0.0;
    Eigen::VectorXd gradient;
};

/// The final KL dual objective (minimized over lambda):
///   eps1 log E_{(i,j) ~ dI x dE} exp(t1 / eps1)
/// + eps2 log E_{(i,a) ~ dI_sa} exp(t2 / eps2)
/// - [(1-gamma) E_{p0} lambda_{:S} + E_{dE} lambda_{2S:}].
/// Expectations are exact sums over the empirical distributions. The
/// gradient equals A x(lambda) - b for the softmax-recovered primal point,
/// so its norm doubles as the constraint residual of the recovery.
inline DualEval dual_objective_kl(const Eigen::VectorXd& lambda, const EmpiricalModel& model,
                                  const CostSpec& cost, const PwdiceConfig& config) {
    if (config.divergence != Divergence::kl)
        throw std::invalid_argument("dual_objective_kl: config.divergence must be kl");
    config.validate_dual();
    const int S = model.num_states, A = model.num_actions;
    const double gamma = config.gamma;
    const detail::DualScores scores = detail::dual_scores(lambda, model, cost.matrix, gamma);
    const Eigen::MatrixXd u = detail::product_distribution(model);

    Eigen::MatrixXd w1, w2;
    const double lse1 = detail::weighted_lse(scores.t1 / config.eps1, u, w1);
    const double lse2 = detail::weighted_lse(scores.t2 / config.eps2, model.dI_sa, w2);
    const double matching_term = config.eps1 * lse1;
    const double flow_term = config.eps2 * lse2;
    if (!std::isfinite(matching_term))
        throw std::runtime_error("dual_objective_kl: matching log-sum-exp is not finite");
    if (!std::isfinite(flow_term))
        throw std::runtime_error("dual_objective_kl: flow log-sum-exp is not finite");

    const auto head = lambda.segment(0, S);
    const auto tail = lambda.segment(2 * S, S);
    const double linear = (1.0 - gamma) * model.p0_hat.dot(head) + model.dE_s.dot(tail);

    DualEval eval;
    eval.value = matching_term + flow_term - linear;

    Eigen::VectorXd grad = Eigen::VectorXd::Zero(3 * S);
    const Eigen::VectorXd w2_rows = w2.rowwise().sum();
    Eigen::VectorXd w2_flat(S * A);
    for (int i = 0; i < S; ++i)
        for (int a = 0; a < A; ++a) w2_flat[i * A + a] = w2(i, a);
    grad.segment(0, S) = w2_rows - gamma * (model.p_hat.transpose() * w2_flat) -
                         (1.0 - gamma) * model.p0_hat;
    grad.segment(S, S) = w1.rowwise().sum() - w2_rows;
    grad.segment(2 * S, S) = w1.colwise().sum().transpose() - model.dE_s;
    eval.gradient = std::move(grad);
    return eval;
}

/// Half-chi-square analog: quadratic penalties replace the log-sum-exps.
inline DualEval dual_objective_chi2(const Eigen::VectorXd& lambda, const EmpiricalModel& model,
                                    const CostSpec& cost, const PwdiceConfig& config) {
    if (config.divergence != Divergence::chi2)
        throw std::invalid_argument("dual_objective_chi2: config.divergence must be chi2");
    config.validate_dual();
    const int S = model.num_states, A = model.num_actions;
    const double gamma = config.gamma;
    const detail::DualScores scores = detail::dual_scores(lambda, model, cost.matrix, gamma);
    const Eigen::MatrixXd u = detail::product_distribution(model);

    const Eigen::MatrixXd y1 = scores.t1 / config.eps1 + Eigen::MatrixXd::Ones(S, S);
    const Eigen::MatrixXd y2 = scores.t2 / config.eps2 + Eigen::MatrixXd::Ones(S, A);
    const double matching_term = 0.5 * config.eps1 * u.cwiseProduct(y1.cwiseProduct(y1)).sum();
    const double flow_term =
        0.5 * config.eps2 * model.dI_sa.cwiseProduct(y2.cwiseProduct(y2)).sum();
    if (!std::isfinite(matching_term))
        throw std::runtime_error("dual_objective_chi2: matching term is not finite");
    if (!std::isfinite(flow_term))
        throw std::runtime_error("dual_objective_chi2: flow term is not finite");

    const auto head = lambda.segment(0, S);
    const auto tail = lambda.segment(2 * S, S);
    const double linear = (1.0 - gamma) * model.p0_hat.dot(head) + model.dE_s.dot(tail);

    DualEval eval;
    eval.value = matching_term + flow_term - linear;

    const Eigen::MatrixXd g1 = u.cwiseProduct(y1);
    const Eigen::MatrixXd g2 = model.dI_sa.cwiseProduct(y2);
    Eigen::VectorXd g2_flat(S * A);
    for (int i = 0; i < S; ++i)
        for (int a = 0; a < A; ++a) g2_flat[i * A + a] = g2(i, a);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(3 * S);
    const Eigen::VectorXd g2_rows = g2.rowwise().sum();
    grad.segment(0, S) =
        g2_rows - gamma * (model.p_hat.transpose() * g2_flat) - (1.0 - gamma) * model.p0_hat;
    grad.segment(S, S) = g1.rowwise().sum() - g2_rows;
    grad.segment(2 * S, S) = g1.colwise().sum().transpose() - model.dE_s;
    eval.gradient = std::move(grad);
    return eval;
}

inline DualEval dual_objective(const Eigen::VectorXd& lambda, const EmpiricalModel& model,
                               const CostSpec& cost, const PwdiceConfig& config) {
    return config.divergence == Divergence::kl ? dual_objective_kl(lambda, model, cost, config)
                                               : dual_objective_chi2(lambda, model, cost, config);
}

struct DualSolveResult {
    DualVariables lambda;
    double objective = 0.0;      // minimized dual objective
    double grad_inf_norm = 0.0;  // at the final iterate
    int iterations = 0;
    bool converged = false;
};

/// Full-batch Adam from lambda = 0. Optimization is deterministic; the seed
/// argument is part of the interface for stochastic drop-in variants and is
/// unused here.
inline DualSolveResult optimize_dual(const EmpiricalModel& model, const CostSpec& cost,
                                     const PwdiceConfig& config, std::uint64_t /*seed*/ = 0) {
    config.validate_dual();
    const int S = model.num_states;
    auto objective = [&](const Eigen::VectorXd& lambda, Eigen::VectorXd& grad) {
        const DualEval eval = dual_objective(lambda, model, cost, config);
        grad = eval.gradient;
        return eval.value;
    };
    const MinimizeResult min_result =
        adam_minimize(objective, Eigen::VectorXd::Zero(3 * S), config.optimizer);
    DualSolveResult result;
    result.lambda = DualVariables{min_result.x};
    result.objective = min_result.value;
    result.grad_inf_norm = min_result.grad_inf_norm;
    result.iterations = min_result.iterations;
    result.converged = min_result.converged;
    return result;
}

struct RecoveredPrimal {
    Eigen::MatrixXd pi;    // S x S
    Eigen::MatrixXd d_sa;  // S x A
};

/// Fenchel maximizers at lambda (KL divergence): softmax-weighted reference
/// distributions. Both blocks sum to 1 exactly by construction.
inline RecoveredPrimal recover_primal(const DualVariables& dual, const EmpiricalModel& model,
                                      const CostSpec& cost, const PwdiceConfig& config) {
    config.validate_dual();
    const detail::DualScores scores =
        detail::dual_scores(dual.lambda, model, cost.matrix, config.gamma);
    RecoveredPrimal rec;
    detail::weighted_lse(scores.t1 / config.eps1, detail::product_distribution(model), rec.pi);
    detail::weighted_lse(scores.t2 / config.eps2, model.dI_sa, rec.d_sa);
    return rec;
}

/// Policy weights for the half-chi-square divergence: w = max(0, t2/eps2 + 1),
/// with d_sa proportional to dI_sa .* w.
inline Eigen::MatrixXd chi2_policy_weights(const DualVariables& dual, const EmpiricalModel& model,
                                           const PwdiceConfig& config) {
    const int S = model.num_states, A = model.num_actions;
    const Eigen::MatrixXd zero_cost = Eigen::MatrixXd::Zero(S, S);
    const detail::DualScores scores =
        detail::dual_scores(dual.lambda, model, zero_cost, config.gamma);
    return (scores.t2 / config.eps2 + Eigen::MatrixXd::Ones(S, A)).cwiseMax(0.0);
}

/// d_sa for the chi2 divergence, renormalized over the dataset support.
inline Eigen::MatrixXd recover_d_sa_chi2(const DualVariables& dual, const EmpiricalModel& model,
                                         const PwdiceConfig& config) {
    Eigen::MatrixXd d_sa = model.dI_sa.cwiseProduct(chi2_policy_weights(dual, model, config));
    const double total = d_sa.sum();
    if (total > 0.0) d_sa /= total;
    return d_sa;
}

/// Regularized primal value (the objective the dual certifies):
/// <c, Pi> + eps1 D_f(Pi || U) + eps2 D_f(d_sa || dI_sa).
inline double regularized_primal_value(const Eigen::MatrixXd& pi, const Eigen::MatrixXd& d_sa,
                                       const EmpiricalModel& model, const CostSpec& cost,
                                       const PwdiceConfig& config) {
    const Eigen::MatrixXd u = detail::product_distribution(model);
    auto divergence = [&](const Eigen::MatrixXd& p, const Eigen::MatrixXd& q) {
        double total = 0.0;
        for (int i = 0; i < p.rows(); ++i)
            for (int j = 0; j < p.cols(); ++j) {
                if (q(i, j) <= 0.0) {
                    if (p(i, j) > 0.0) return std::numeric_limits<double>::infinity();
                    continue;
                }
                if (p(i, j) <= 0.0 && config.divergence == Divergence::kl) continue;
                if (config.divergence == Divergence::kl)
                    total += p(i, j) * std::log(p(i, j) / q(i, j));
                else {
                    const double ratio = p(i, j) / q(i, j) - 1.0;
                    total += 0.5 * q(i, j) * ratio * ratio;
                }
            }
        return total;
    };
    return cost.matrix.cwiseProduct(pi).sum() + config.eps1 * divergence(pi, u) +
           config.eps2 * divergence(d_sa, model.dI_sa);
}

// ---------------------------------------------------------------------------
// Result serialization
// ---------------------------------------------------------------------------

struct SolveReport {
    std::string method;
    std::string divergence = "none";
    double eps1 = 0.0;
    double eps2 = 0.0;
    double objective = 0.0;
    bool converged = true;
    int iterations = 0;
    Eigen::MatrixXd policy;
    double wasserstein_or_dual_value = 0.0;
};

inline nlohmann::json solve_report_to_json(const SolveReport& report) {
    nlohmann::json j;
    j["method"] = report.method;
    j["divergence"] = report.divergence;
    j["eps1"] = report.eps1;
    j["eps2"] = report.eps2;
    j["objective"] = report.objective;
    j["converged"] = report.converged;
    j["iterations"] = report.iterations;
    nlohmann::json policy = nlohmann::json::array();
    for (int s = 0; s < report.policy.rows(); ++s) {
        std::vector<double> row(report.policy.cols());
        for (int a = 0; a < report.policy.cols(); ++a) row[a] = report.policy(s, a);
        policy.push_back(row);
    }
    j["policy"] = std::move(policy);
    j["wasserstein_or_dual_value"] = report.wasserstein_or_dual_value;
    return j;
}

}  // namespace pwdice
