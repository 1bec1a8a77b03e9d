#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "pwdice/adam.hpp"
#include "pwdice/dataset.hpp"
#include "pwdice/mdp.hpp"
#include "pwdice/pwdice.hpp"

namespace pwdice {

/// Cap substituted for log-ratios whose denominator (or numerator) vanishes.
inline constexpr double kLogCap = 1e4;

struct LogRatioResult {
    Eigen::VectorXd values;  // log(dE_s / dI_s), clamped to [-kLogCap, kLogCap]
    int capped_states = 0;   // states where dI_s = 0 made the ratio undefined
};

inline LogRatioResult log_ratio_vector(const EmpiricalModel& model) {
    const int S = model.num_states;
    LogRatioResult result;
    result.values.resize(S);
    for (int s = 0; s < S; ++s) {
        if (model.dI_s[s] <= 0.0) {
            result.values[s] = model.dE_s[s] > 0.0 ? kLogCap : -kLogCap;
            if (model.dE_s[s] > 0.0) ++result.capped_states;
        } else if (model.dE_s[s] <= 0.0) {
            result.values[s] = -kLogCap;
        } else {
            result.values[s] = std::clamp(std::log(model.dE_s[s] / model.dI_s[s]), -kLogCap, kLogCap);
        }
    }
    return result;
}

/// SMODICE KL dual over the value-like variable V:
///   (1-gamma) E_{p0}[V] + log E_{(s,a) ~ dI_sa} exp[log(dE/dI)(s)
///                                                + gamma E_{p_hat} V(s') - V(s)].
inline DualEval smodice_dual_objective(const Eigen::VectorXd& v, const EmpiricalModel& model,
                                       double gamma) {
    const int S = model.num_states, A = model.num_actions;
    if (v.size() != S) throw std::invalid_argument("smodice_dual_objective: V must have length |S|");
    const Eigen::VectorXd log_ratio = log_ratio_vector(model).values;

    const Eigen::VectorXd expected_next = model.p_hat * v;  // length S*A
    Eigen::MatrixXd scores(S, A);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a)
            scores(s, a) = log_ratio[s] + gamma * expected_next[s * A + a] - v[s];

    Eigen::MatrixXd weights;
    const double lse = detail::weighted_lse(scores, model.dI_sa, weights);

    DualEval eval;
    eval.value = (1.0 - gamma) * model.p0_hat.dot(v) + lse;
    Eigen::VectorXd w_flat(S * A);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) w_flat[s * A + a] = weights(s, a);
    eval.gradient = (1.0 - gamma) * model.p0_hat + gamma * (model.p_hat.transpose() * w_flat) -
                    weights.rowwise().sum();
    return eval;
}

/// Half-chi-square variant: the log-sum-exp becomes a quadratic penalty,
/// E_{dI_sa}[ (score + 1)^2 / 2 ], matching the conjugate convention of the
/// chi2 PW-DICE dual.
inline DualEval smodice_dual_objective_chi2(const Eigen::VectorXd& v, const EmpiricalModel& model,
                                            double gamma) {
    const int S = model.num_states, A = model.num_actions;
    if (v.size() != S)
        throw std::invalid_argument("smodice_dual_objective_chi2: V must have length |S|");
    const Eigen::VectorXd log_ratio = log_ratio_vector(model).values;
    const Eigen::VectorXd expected_next = model.p_hat * v;

    DualEval eval;
    eval.value = (1.0 - gamma) * model.p0_hat.dot(v);
    eval.gradient = (1.0 - gamma) * model.p0_hat;
    Eigen::VectorXd g_flat = Eigen::VectorXd::Zero(S * A);
    Eigen::VectorXd g_rows = Eigen::VectorXd::Zero(S);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            const double y = log_ratio[s] + gamma * expected_next[s * A + a] - v[s] + 1.0;
            eval.value += 0.5 * model.dI_sa(s, a) * y * y;
            const double g = model.dI_sa(s, a) * y;
            g_flat[s * A + a] = g;
            g_rows[s] += g;
        }
    eval.gradient += gamma * (model.p_hat.transpose() * g_flat) - g_rows;
    return eval;
}

struct SmodiceSolveResult {
    Eigen::VectorXd v;
    Eigen::MatrixXd d_sa;  // recovered occupancy
    Policy policy;
    double objective = 0.0;
    int iterations = 0;
    bool converged = false;
    int capped_states = 0;
};

inline SmodiceSolveResult smodice_solve(const EmpiricalModel& model, double gamma,
                                        const OptimizerConfig& optimizer = {},
                                        Divergence divergence = Divergence::kl) {
    const int S = model.num_states, A = model.num_actions;
    auto objective = [&](const Eigen::VectorXd& v, Eigen::VectorXd& grad) {
        const DualEval eval = divergence == Divergence::kl
                                  ? smodice_dual_objective(v, model, gamma)
                                  : smodice_dual_objective_chi2(v, model, gamma);
        grad = eval.gradient;
        return eval.value;
    };
    const MinimizeResult min_result =
        adam_minimize(objective, Eigen::VectorXd::Zero(S), optimizer);

    SmodiceSolveResult result;
    result.v = min_result.x;
    result.objective = min_result.value;
    result.iterations = min_result.iterations;
    result.converged = min_result.converged;
    result.capped_states = log_ratio_vector(model).capped_states;

    const Eigen::VectorXd log_ratio = log_ratio_vector(model).values;
    const Eigen::VectorXd expected_next = model.p_hat * result.v;
    Eigen::MatrixXd scores(S, A);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a)
            scores(s, a) = log_ratio[s] + gamma * expected_next[s * A + a] - result.v[s];
    if (divergence == Divergence::kl) {
        detail::weighted_lse(scores, model.dI_sa, result.d_sa);
    } else {
        result.d_sa = model.dI_sa.cwiseProduct(
            (scores + Eigen::MatrixXd::Ones(S, A)).cwiseMax(0.0));
        const double total = result.d_sa.sum();
        if (total > 0.0) result.d_sa /= total;
    }
    result.policy = extract_policy(result.d_sa);
    return result;
}

/// Discriminator-style state reward with the alpha-mixed denominator that
/// keeps it finite wherever dE > 0 even off the dataset support:
///   R(s) = log[ dE(s) / ((1-alpha) dI(s) + alpha dE(s)) ].
inline Eigen::VectorXd discriminator_reward(const EmpiricalModel& model, double alpha = 0.01) {
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw std::invalid_argument("discriminator_reward: alpha must lie in (0, 1]");
    const int S = model.num_states;
    Eigen::VectorXd r(S);
    for (int s = 0; s < S; ++s) {
        const double denom = (1.0 - alpha) * model.dI_s[s] + alpha * model.dE_s[s];
        if (model.dE_s[s] <= 0.0 || denom <= 0.0)
            r[s] = -kLogCap;
        else
            r[s] = std::clamp(std::log(model.dE_s[s] / denom), -kLogCap, kLogCap);
    }
    return r;
}

struct CostBuildParams {
    double alpha = 0.01;  // mixing weight inside R(s)
    double beta = 5.0;    // embedding-distance weight in the combined cost
    const Eigen::MatrixXd* embeddings = nullptr;      // S x M, for combined_contrastive
    const Eigen::MatrixXd* state_features = nullptr;  // S x F, for euclidean/cosine
};

inline CostSpec build_cost(CostKind kind, const EmpiricalModel& model,
                           const CostBuildParams& params = {}) {
    const int S = model.num_states;
    CostSpec cost;
    cost.kind = kind;
    switch (kind) {
        case CostKind::zero_one:
            cost.matrix = Eigen::MatrixXd::Ones(S, S) - Eigen::MatrixXd::Identity(S, S);
            break;
        case CostKind::smodice_log_ratio: {
            const Eigen::VectorXd log_ratio = log_ratio_vector(model).values;
            cost.matrix = (-log_ratio).replicate(1, S);
            break;
        }
        case CostKind::discriminator_r: {
            const Eigen::VectorXd r = discriminator_reward(model, params.alpha);
            cost.matrix = (-r).replicate(1, S);
            break;
        }
        case CostKind::combined_contrastive: {
            if (params.embeddings == nullptr)
                throw std::invalid_argument("build_cost: combined_contrastive needs embeddings");
            if (params.beta < 0.0)
                throw std::invalid_argument("build_cost: beta must be nonnegative");
            const Eigen::VectorXd r = discriminator_reward(model, params.alpha);
            const Eigen::MatrixXd& g = *params.embeddings;
            if (g.rows() != S)
                throw std::invalid_argument("build_cost: embeddings must have |S| rows");
            cost.matrix.resize(S, S);
            for (int i = 0; i < S; ++i)
                for (int j = 0; j < S; ++j)
                    cost.matrix(i, j) = -r[i] + params.beta * (g.row(i) - g.row(j)).squaredNorm();
            break;
        }
        case CostKind::euclidean:
        case CostKind::cosine: {
            if (params.state_features == nullptr)
                throw std::invalid_argument("build_cost: feature-based cost needs state_features");
            const Eigen::MatrixXd& f = *params.state_features;
            if (f.rows() != S)
                throw std::invalid_argument("build_cost: state_features must have |S| rows");
            cost.matrix.resize(S, S);
            for (int i = 0; i < S; ++i)
                for (int j = 0; j < S; ++j) {
                    if (kind == CostKind::euclidean) {
                        cost.matrix(i, j) = (f.row(i) - f.row(j)).squaredNorm();
                    } else {
                        const double norms = f.row(i).norm() * f.row(j).norm();
                        cost.matrix(i, j) =
                            norms > 0.0 ? 1.0 - f.row(i).dot(f.row(j)) / norms : 1.0;
                    }
                }
            break;
        }
        case CostKind::custom:
            throw std::invalid_argument("build_cost: custom costs are supplied directly");
    }
    cost.validate();
    return cost;
}

/// Expert return minus learner return, both evaluated exactly in the true MDP.
inline double regret(const TabularMDP& mdp, const Policy& learner, const Policy& expert) {
    return policy_return(mdp, expert) - policy_return(mdp, learner);
}

/// Half the L1 distance between two distributions of identical shape.
inline double tv_distance(const Eigen::Ref<const Eigen::MatrixXd>& p,
                          const Eigen::Ref<const Eigen::MatrixXd>& q) {
    if (p.rows() != q.rows() || p.cols() != q.cols())
        throw std::invalid_argument("tv_distance: shape mismatch");
    return 0.5 * (p - q).cwiseAbs().sum();
}

inline double tv_state(const OccupancySet& learner, const OccupancySet& expert) {
    return tv_distance(learner.d_s, expert.d_s);
}

inline double tv_statepair(const OccupancySet& learner, const OccupancySet& expert) {
    return tv_distance(learner.d_ss, expert.d_ss);
}

/// One evaluated run of one method at one sweep point.
struct MetricsRecord {
    std::string method;
    std::string divergence = "none";
    std::string cost_kind = "zero_one";
    double eta = 0.0;
    int expert_size = 0;
    int ta_size = 0;
    std::uint64_t seed = 0;
    double regret = 0.0;
    double tv_state = 0.0;
    double tv_statepair = 0.0;
    double objective = 0.0;
    bool converged = true;
    std::int64_t runtime_ms = 0;
    std::string status = "ok";
};

}  // namespace pwdice
