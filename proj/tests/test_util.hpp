#pragma once

// Shared oracles for the test binaries. Everything here is deliberately
// independent of the library's implementation paths: brute-force rollouts,
// finite differences, and exhaustive enumeration.

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pwdice/mdp.hpp"
#include "pwdice/rng.hpp"

namespace pwdice::testing {

inline Eigen::VectorXd finite_difference_gradient(
    const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
    double h = 1e-5) {
    Eigen::VectorXd grad(x.size());
    Eigen::VectorXd probe = x;
    for (int i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double up = f(probe);
        probe[i] = x[i] - h;
        const double down = f(probe);
        probe[i] = x[i];
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

/// Precomputed cumulative tables for tight rollout loops (the Eigen row
/// expressions are too slow to sample from hundreds of millions of times).
class RolloutSampler {
public:
    RolloutSampler(const TabularMDP& mdp, const Policy& policy, std::uint64_t seed)
        : rng_(seed), num_actions_(mdp.num_actions) {
        const int S = mdp.num_states, A = mdp.num_actions;
        cum_p0_.resize(S);
        double acc = 0.0;
        for (int s = 0; s < S; ++s) cum_p0_[s] = (acc += mdp.initial_dist[s]);
        cum_policy_.resize(S * A);
        for (int s = 0; s < S; ++s) {
            acc = 0.0;
            for (int a = 0; a < A; ++a) cum_policy_[s * A + a] = (acc += policy.probs(s, a));
        }
        cum_transition_.resize(S * A * S);
        for (int r = 0; r < S * A; ++r) {
            acc = 0.0;
            for (int k = 0; k < S; ++k) cum_transition_[r * S + k] = (acc += mdp.transition(r, k));
        }
        num_states_ = S;
    }

    int draw_initial() { return scan(cum_p0_.data(), num_states_); }
    int draw_action(int s) { return scan(cum_policy_.data() + s * num_actions_, num_actions_); }
    int draw_next(int s, int a) {
        return scan(cum_transition_.data() + (s * num_actions_ + a) * num_states_, num_states_);
    }
    double uniform() { return rng_.uniform(); }

private:
    int scan(const double* cum, int n) {
        const double u = rng_.uniform() * cum[n - 1];
        for (int i = 0; i < n - 1; ++i)
            if (u < cum[i]) return i;
        return n - 1;
    }

    Rng rng_;
    int num_states_ = 0;
    int num_actions_ = 0;
    std::vector<double> cum_p0_, cum_policy_, cum_transition_;
};

/// Monte-Carlo estimate of the discounted state occupancy via
/// geometric-horizon rollouts: record each visited state, stop each episode
/// with probability (1-gamma) per step.
inline Eigen::VectorXd mc_state_occupancy(const TabularMDP& mdp, const Policy& policy,
                                          long episodes, std::uint64_t seed) {
    RolloutSampler sampler(mdp, policy, seed);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(mdp.num_states);
    const double stop = 1.0 - mdp.gamma;
    for (long e = 0; e < episodes; ++e) {
        int s = sampler.draw_initial();
        while (true) {
            counts[s] += 1.0;
            if (sampler.uniform() < stop) break;
            const int a = sampler.draw_action(s);
            s = sampler.draw_next(s, a);
        }
    }
    return counts / counts.sum();
}

/// Monte-Carlo estimate of the expected discounted return: the mean over
/// episodes of the discounted reward sum, truncated once the remaining tail
/// is below 1e-7 of the reward scale.
inline double mc_return(const TabularMDP& mdp, const Policy& policy, long episodes,
                        std::uint64_t seed) {
    RolloutSampler sampler(mdp, policy, seed);
    const double cutoff = 1e-7 * (1.0 - mdp.gamma);
    double total = 0.0;
    for (long e = 0; e < episodes; ++e) {
        int s = sampler.draw_initial();
        double disc = 1.0;
        while (disc > cutoff) {
            const int a = sampler.draw_action(s);
            total += disc * mdp.reward(s, a);
            disc *= mdp.gamma;
            s = sampler.draw_next(s, a);
        }
    }
    return total / static_cast<double>(episodes);
}

/// Exhaustive search over all |A|^|S| deterministic policies.
inline std::pair<double, Policy> best_deterministic_policy(const TabularMDP& mdp) {
    const int S = mdp.num_states, A = mdp.num_actions;
    std::vector<int> assignment(S, 0);
    double best_value = -std::numeric_limits<double>::infinity();
    Policy best;
    while (true) {
        Policy policy;
        policy.probs = Eigen::MatrixXd::Zero(S, A);
        for (int s = 0; s < S; ++s) policy.probs(s, assignment[s]) = 1.0;
        const double value = policy_return(mdp, policy);
        if (value > best_value) {
            best_value = value;
            best = policy;
        }
        int pos = 0;
        while (pos < S && ++assignment[pos] == A) assignment[pos++] = 0;
        if (pos == S) break;
    }
    return {best_value, best};
}

/// Deterministic chain 0 -> 1 -> ... -> (n-1) with an absorbing final state
/// that pays +1; single action everywhere... except chains need >= 1 action.
inline TabularMDP make_chain_mdp(int length, double gamma) {
    TabularMDP mdp;
    mdp.num_states = length;
    mdp.num_actions = 1;
    mdp.gamma = gamma;
    mdp.goal_state = length - 1;
    mdp.transition = Eigen::MatrixXd::Zero(length, length);
    for (int s = 0; s + 1 < length; ++s) mdp.transition(s, s + 1) = 1.0;
    mdp.transition(length - 1, length - 1) = 1.0;
    mdp.reward = Eigen::MatrixXd::Zero(length, 1);
    mdp.reward(length - 1, 0) = 1.0;
    mdp.initial_dist = Eigen::VectorXd::Zero(length);
    mdp.initial_dist[0] = 1.0;
    return mdp;
}

inline Policy uniform_policy(int num_states, int num_actions) {
    Policy policy;
    policy.probs = Eigen::MatrixXd::Constant(num_states, num_actions, 1.0 / num_actions);
    return policy;
}

}  // namespace pwdice::testing
