#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pwdice/rng.hpp"

namespace pwdice {

/// Thrown when an iterative routine hits its iteration cap before reaching
/// its tolerance. Carries the last residual for diagnostics.
class convergence_error : public std::runtime_error {
public:
    convergence_error(const std::string& what, double residual)
        : std::runtime_error(what), residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

/// Finite MDP with dense tabular dynamics.
///
/// The transition kernel is stored as a (|S|*|A|) x |S| matrix whose row
/// s*|A|+a is the distribution p(.|s,a). Rewards are a |S| x |A| table; the
/// random-MDP generator fills it as a function of state only (+1 at the goal).
struct TabularMDP {
    int num_states = 0;
    int num_actions = 0;
    Eigen::MatrixXd transition;    // (S*A) x S, row-stochastic
    Eigen::MatrixXd reward;        // S x A
    Eigen::VectorXd initial_dist;  // length S
    double gamma = 0.95;
    int goal_state = -1;

    Eigen::MatrixXd::ConstRowXpr transition_row(int s, int a) const {
        return transition.row(s * num_actions + a);
    }

    void validate() const {
        if (num_states <= 0 || num_actions <= 0)
            throw std::invalid_argument("TabularMDP: state/action counts must be positive");
        if (!(gamma > 0.0 && gamma < 1.0))
            throw std::invalid_argument("TabularMDP: gamma must lie in (0, 1)");
        if (transition.rows() != num_states * num_actions || transition.cols() != num_states)
            throw std::invalid_argument("TabularMDP: transition has wrong shape");
        if (reward.rows() != num_states || reward.cols() != num_actions)
            throw std::invalid_argument("TabularMDP: reward has wrong shape");
        if (initial_dist.size() != num_states)
            throw std::invalid_argument("TabularMDP: initial_dist has wrong length");
        for (int r = 0; r < transition.rows(); ++r) {
            if (transition.row(r).minCoeff() < 0.0 ||
                std::abs(transition.row(r).sum() - 1.0) > 1e-12)
                throw std::invalid_argument("TabularMDP: transition row " + std::to_string(r) +
                                            " is not a distribution");
        }
        if (initial_dist.minCoeff() < 0.0 || std::abs(initial_dist.sum() - 1.0) > 1e-12)
            throw std::invalid_argument("TabularMDP: initial_dist is not a distribution");
    }
};

/// Row-stochastic policy table pi(a|s).
struct Policy {
    Eigen::MatrixXd probs;  // S x A

    int num_states() const { return static_cast<int>(probs.rows()); }
    int num_actions() const { return static_cast<int>(probs.cols()); }

    void validate() const {
        for (int s = 0; s < probs.rows(); ++s) {
            if (probs.row(s).minCoeff() < 0.0 || std::abs(probs.row(s).sum() - 1.0) > 1e-9)
                throw std::invalid_argument("Policy: row " + std::to_string(s) +
                                            " is not a distribution");
        }
    }
};

/// Discounted visitation frequencies of a policy: states, state-actions, and
/// consecutive state pairs. Each component sums to 1.
struct OccupancySet {
    Eigen::VectorXd d_s;   // length S
    Eigen::MatrixXd d_sa;  // S x A
    Eigen::MatrixXd d_ss;  // S x S
};

struct ValueFunctions {
    Eigen::VectorXd v;  // length S
    Eigen::MatrixXd q;  // S x A
};

/// Value iteration to sup-norm Bellman residual <= tol.
inline ValueFunctions value_iteration(const TabularMDP& mdp, double tol = 1e-10,
                                      int max_iter = 100000) {
    if (tol <= 0.0) throw std::invalid_argument("value_iteration: tol must be positive");
    const int S = mdp.num_states, A = mdp.num_actions;
    Eigen::VectorXd v = Eigen::VectorXd::Zero(S);
    Eigen::MatrixXd q(S, A);
    double residual = std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iter; ++it) {
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a)
                q(s, a) = mdp.reward(s, a) + mdp.gamma * mdp.transition_row(s, a).dot(v);
        Eigen::VectorXd v_next = q.rowwise().maxCoeff();
        residual = (v_next - v).cwiseAbs().maxCoeff();
        v = std::move(v_next);
        if (residual <= tol) {
            for (int s = 0; s < S; ++s)
                for (int a = 0; a < A; ++a)
                    q(s, a) = mdp.reward(s, a) + mdp.gamma * mdp.transition_row(s, a).dot(v);
            return {std::move(v), std::move(q)};
        }
    }
    throw convergence_error("value_iteration: residual " + std::to_string(residual) +
                                " after " + std::to_string(max_iter) + " iterations",
                            residual);
}

enum class GreedyMode { deterministic, softmax };

/// Deterministic mode: one-hot argmax per row, ties to the lowest action
/// index. Softmax mode: pi(a|s) proportional to exp(Q(s,a)/temperature).
inline Policy greedy_policy(const Eigen::MatrixXd& q, GreedyMode mode = GreedyMode::deterministic,
                            double temperature = 1.0) {
    const int S = static_cast<int>(q.rows()), A = static_cast<int>(q.cols());
    Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(S, A);
    if (mode == GreedyMode::deterministic) {
        for (int s = 0; s < S; ++s) {
            int best = 0;
            for (int a = 1; a < A; ++a)
                if (q(s, a) > q(s, best)) best = a;
            probs(s, best) = 1.0;
        }
    } else {
        if (!(temperature > 0.0))
            throw std::invalid_argument("greedy_policy: softmax temperature must be positive");
        for (int s = 0; s < S; ++s) {
            Eigen::VectorXd z = q.row(s).transpose() / temperature;
            z.array() -= z.maxCoeff();
            Eigen::VectorXd e = z.array().exp();
            probs.row(s) = (e / e.sum()).transpose();
        }
    }
    return Policy{std::move(probs)};
}

/// State->state kernel under a fixed policy: P_pi(s,s') = sum_a pi(a|s) p(s'|s,a).
inline Eigen::MatrixXd policy_transition_matrix(const TabularMDP& mdp, const Policy& policy) {
    const int S = mdp.num_states, A = mdp.num_actions;
    Eigen::MatrixXd p_pi = Eigen::MatrixXd::Zero(S, S);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a)
            p_pi.row(s) += policy.probs(s, a) * mdp.transition_row(s, a);
    return p_pi;
}

/// Exact discounted occupancies via the Bellman flow linear system
/// d_s = (1-gamma) p0 + gamma P_pi^T d_s. (I - gamma P_pi^T) is always
/// invertible for gamma < 1, so a direct dense solve suffices.
inline OccupancySet exact_occupancies(const TabularMDP& mdp, const Policy& policy) {
    const int S = mdp.num_states, A = mdp.num_actions;
    const Eigen::MatrixXd p_pi = policy_transition_matrix(mdp, policy);
    const Eigen::MatrixXd system =
        Eigen::MatrixXd::Identity(S, S) - mdp.gamma * p_pi.transpose();
    Eigen::VectorXd d_s = system.partialPivLu().solve((1.0 - mdp.gamma) * mdp.initial_dist);

    Eigen::MatrixXd d_sa(S, A);
    for (int s = 0; s < S; ++s) d_sa.row(s) = d_s[s] * policy.probs.row(s);

    Eigen::MatrixXd d_ss = Eigen::MatrixXd::Zero(S, S);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a)
            d_ss.row(s) += d_sa(s, a) * mdp.transition_row(s, a);
    return {std::move(d_s), std::move(d_sa), std::move(d_ss)};
}

/// Expected discounted return from the initial distribution,
/// sum_{s,a} d_sa(s,a) r(s,a) / (1-gamma).
inline double policy_return(const TabularMDP& mdp, const Policy& policy) {
    const OccupancySet occ = exact_occupancies(mdp, policy);
    return occ.d_sa.cwiseProduct(mdp.reward).sum() / (1.0 - mdp.gamma);
}

namespace detail {

// V*(s0) when the reward is +1 at `candidate` only.
inline double optimal_start_value_for_goal(TabularMDP mdp, int candidate) {
    mdp.reward = Eigen::MatrixXd::Zero(mdp.num_states, mdp.num_actions);
    mdp.reward.row(candidate).setOnes();
    const ValueFunctions vf = value_iteration(mdp, 1e-10, 100000);
    int s0 = 0;
    mdp.initial_dist.maxCoeff(&s0);
    return vf.v[s0];
}

}  // namespace detail

/// Pick the hardest goal: the candidate state (any state except the start)
/// whose optimal value V*(s0) is smallest, ties to the lowest index.
inline int select_goal_state(const TabularMDP& mdp_without_goal) {
    int s0 = 0;
    mdp_without_goal.initial_dist.maxCoeff(&s0);
    int best = -1;
    double best_value = std::numeric_limits<double>::infinity();
    for (int x = 0; x < mdp_without_goal.num_states; ++x) {
        if (x == s0) continue;
        const double v = detail::optimal_start_value_for_goal(mdp_without_goal, x);
        if (v < best_value - 1e-12) {
            best_value = v;
            best = x;
        }
    }
    return best;
}

/// Random benchmark MDP: each (s,a) reaches `branching` distinct successors
/// with probabilities (1-eta)*X + eta*Y, X one-hot uniform over the chosen
/// successors and Y ~ Dirichlet(1,...,1). The start is state 0; the goal is
/// the hardest-to-reach state and pays +1 (reward depends on state only).
inline TabularMDP generate_random_mdp(int num_states, int num_actions, int branching, double eta,
                                      std::uint64_t seed, double gamma = 0.95) {
    if (branching < 1 || branching > num_states)
        throw std::invalid_argument("generate_random_mdp: need 1 <= branching <= num_states");
    if (!(eta >= 0.0 && eta <= 1.0))
        throw std::invalid_argument("generate_random_mdp: eta must lie in [0, 1]");
    if (num_actions < 1) throw std::invalid_argument("generate_random_mdp: num_actions >= 1");

    Rng rng(seed);
    TabularMDP mdp;
    mdp.num_states = num_states;
    mdp.num_actions = num_actions;
    mdp.gamma = gamma;
    mdp.transition = Eigen::MatrixXd::Zero(num_states * num_actions, num_states);
    mdp.reward = Eigen::MatrixXd::Zero(num_states, num_actions);
    mdp.initial_dist = Eigen::VectorXd::Zero(num_states);
    mdp.initial_dist[0] = 1.0;

    for (int s = 0; s < num_states; ++s) {
        for (int a = 0; a < num_actions; ++a) {
            const std::vector<int> succ = rng.sample_without_replacement(num_states, branching);
            const int one_hot = rng.uniform_int(branching);
            const Eigen::VectorXd dir = rng.dirichlet_uniform(branching);
            for (int b = 0; b < branching; ++b) {
                double p = eta * dir[b];
                if (b == one_hot) p += 1.0 - eta;
                mdp.transition(s * num_actions + a, succ[b]) = p;
            }
            // Renormalize away accumulated rounding so rows sum to 1 exactly
            // within 1e-12.
            auto row = mdp.transition.row(s * num_actions + a);
            row /= row.sum();
        }
    }

    mdp.goal_state = select_goal_state(mdp);
    mdp.reward.row(mdp.goal_state).setOnes();
    mdp.validate();
    return mdp;
}

inline nlohmann::json mdp_to_json(const TabularMDP& mdp) {
    nlohmann::json j;
    j["num_states"] = mdp.num_states;
    j["num_actions"] = mdp.num_actions;
    j["gamma"] = mdp.gamma;
    j["goal_state"] = mdp.goal_state;
    j["initial_dist"] = std::vector<double>(mdp.initial_dist.data(),
                                            mdp.initial_dist.data() + mdp.num_states);
    nlohmann::json transition = nlohmann::json::array();
    for (int s = 0; s < mdp.num_states; ++s) {
        nlohmann::json per_action = nlohmann::json::array();
        for (int a = 0; a < mdp.num_actions; ++a) {
            std::vector<double> row(mdp.num_states);
            for (int k = 0; k < mdp.num_states; ++k) row[k] = mdp.transition(s * mdp.num_actions + a, k);
            per_action.push_back(row);
        }
        transition.push_back(per_action);
    }
    j["transition"] = std::move(transition);
    nlohmann::json reward = nlohmann::json::array();
    for (int s = 0; s < mdp.num_states; ++s) {
        std::vector<double> row(mdp.num_actions);
        for (int a = 0; a < mdp.num_actions; ++a) row[a] = mdp.reward(s, a);
        reward.push_back(row);
    }
    j["reward"] = std::move(reward);
    return j;
}

inline TabularMDP mdp_from_json(const nlohmann::json& j) {
    TabularMDP mdp;
    mdp.num_states = j.at("num_states").get<int>();
    mdp.num_actions = j.at("num_actions").get<int>();
    mdp.gamma = j.at("gamma").get<double>();
    mdp.goal_state = j.at("goal_state").get<int>();
    const auto p0 = j.at("initial_dist").get<std::vector<double>>();
    mdp.initial_dist = Eigen::Map<const Eigen::VectorXd>(p0.data(), static_cast<int>(p0.size()));
    mdp.transition = Eigen::MatrixXd::Zero(mdp.num_states * mdp.num_actions, mdp.num_states);
    const auto& transition = j.at("transition");
    for (int s = 0; s < mdp.num_states; ++s)
        for (int a = 0; a < mdp.num_actions; ++a) {
            const auto row = transition.at(s).at(a).get<std::vector<double>>();
            for (int k = 0; k < mdp.num_states; ++k) mdp.transition(s * mdp.num_actions + a, k) = row[k];
        }
    mdp.reward = Eigen::MatrixXd::Zero(mdp.num_states, mdp.num_actions);
    const auto& reward = j.at("reward");
    for (int s = 0; s < mdp.num_states; ++s) {
        const auto row = reward.at(s).get<std::vector<double>>();
        for (int a = 0; a < mdp.num_actions; ++a) mdp.reward(s, a) = row[a];
    }
    mdp.validate();
    return mdp;
}

}  // namespace pwdice
