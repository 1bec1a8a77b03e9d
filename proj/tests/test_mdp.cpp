#include "pwdice/mdp.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace pwdice;
namespace pt = pwdice::testing;

TEST(GenerateRandomMdp, BenchmarkInstanceShapeAndInvariants) {
    const TabularMDP mdp = generate_random_mdp(20, 4, 4, 0.1, 42);
    EXPECT_EQ(mdp.num_states, 20);
    EXPECT_EQ(mdp.num_actions, 4);
    EXPECT_DOUBLE_EQ(mdp.gamma, 0.95);
    EXPECT_EQ(mdp.initial_dist[0], 1.0);
    EXPECT_NE(mdp.goal_state, 0);
    for (int r = 0; r < mdp.transition.rows(); ++r) {
        EXPECT_NEAR(mdp.transition.row(r).sum(), 1.0, 1e-12);
        EXPECT_GE(mdp.transition.row(r).minCoeff(), 0.0);
        int nonzeros = 0;
        for (int k = 0; k < mdp.num_states; ++k)
            if (mdp.transition(r, k) != 0.0) ++nonzeros;
        EXPECT_LE(nonzeros, 4);
    }
    // Reward depends on state only: +1 at the goal.
    for (int s = 0; s < mdp.num_states; ++s)
        for (int a = 0; a < mdp.num_actions; ++a)
            EXPECT_DOUBLE_EQ(mdp.reward(s, a), s == mdp.goal_state ? 1.0 : 0.0);
}

TEST(GenerateRandomMdp, EtaZeroIsDeterministic) {
    const TabularMDP mdp = generate_random_mdp(10, 3, 4, 0.0, 7);
    for (int r = 0; r < mdp.transition.rows(); ++r) {
        EXPECT_NEAR(mdp.transition.row(r).maxCoeff(), 1.0, 1e-12);
    }
}

TEST(GenerateRandomMdp, SameSeedBitIdentical) {
    const TabularMDP a = generate_random_mdp(12, 4, 4, 0.3, 123);
    const TabularMDP b = generate_random_mdp(12, 4, 4, 0.3, 123);
    EXPECT_TRUE(a.transition == b.transition);
    EXPECT_TRUE(a.reward == b.reward);
    EXPECT_EQ(a.goal_state, b.goal_state);
    const TabularMDP c = generate_random_mdp(12, 4, 4, 0.3, 124);
    EXPECT_FALSE(a.transition == c.transition);
}

TEST(GenerateRandomMdp, ParameterErrors) {
    EXPECT_THROW(generate_random_mdp(3, 2, 4, 0.5, 0), std::invalid_argument);
    EXPECT_THROW(generate_random_mdp(10, 2, 4, 1.5, 0), std::invalid_argument);
    EXPECT_THROW(generate_random_mdp(10, 2, 0, 0.5, 0), std::invalid_argument);
}

namespace {

// 0 -> 2 -> 1 with 1 and 2 absorbing under their second action; candidate 1
// takes two steps to reach, candidate 2 one step.
TabularMDP two_candidate_mdp() {
    TabularMDP mdp;
    mdp.num_states = 3;
    mdp.num_actions = 2;
    mdp.gamma = 0.95;
    mdp.transition = Eigen::MatrixXd::Zero(6, 3);
    mdp.transition(0 * 2 + 0, 2) = 1.0;
    mdp.transition(0 * 2 + 1, 2) = 1.0;
    mdp.transition(1 * 2 + 0, 1) = 1.0;
    mdp.transition(1 * 2 + 1, 1) = 1.0;
    mdp.transition(2 * 2 + 0, 1) = 1.0;  // onward to 1
    mdp.transition(2 * 2 + 1, 2) = 1.0;  // stay at 2
    mdp.reward = Eigen::MatrixXd::Zero(3, 2);
    mdp.initial_dist = Eigen::Vector3d(1.0, 0.0, 0.0);
    return mdp;
}

}  // namespace

TEST(SelectGoalState, PicksHarderCandidate) {
    const TabularMDP mdp = two_candidate_mdp();
    // Value-iteration oracle over both candidates.
    double values[3] = {0, 0, 0};
    for (int candidate : {1, 2}) {
        TabularMDP probe = mdp;
        probe.reward.row(candidate).setOnes();
        values[candidate] = value_iteration(probe).v[0];
    }
    EXPECT_LT(values[1], values[2]);
    EXPECT_EQ(select_goal_state(mdp), 1);
}

TEST(SelectGoalState, TieBreaksToLowestIndex) {
    // Fully symmetric MDP: every action from every state is uniform over all
    // states, so every candidate has the same V*(s0).
    TabularMDP mdp;
    mdp.num_states = 4;
    mdp.num_actions = 2;
    mdp.gamma = 0.9;
    mdp.transition = Eigen::MatrixXd::Constant(8, 4, 0.25);
    mdp.reward = Eigen::MatrixXd::Zero(4, 2);
    mdp.initial_dist = Eigen::VectorXd::Zero(4);
    mdp.initial_dist[0] = 1.0;
    EXPECT_EQ(select_goal_state(mdp), 1);
}

TEST(ValueIteration, ChainClosedForm) {
    const TabularMDP mdp = pt::make_chain_mdp(3, 0.95);
    const ValueFunctions vf = value_iteration(mdp, 1e-12);
    const double g = 0.95;
    EXPECT_NEAR(vf.v[2], 1.0 / (1.0 - g), 1e-9);
    EXPECT_NEAR(vf.v[1], g / (1.0 - g), 1e-9);
    EXPECT_NEAR(vf.v[0], g * g / (1.0 - g), 1e-9);
    EXPECT_NEAR(vf.q(0, 0), mdp.reward(0, 0) + g * vf.v[1], 1e-12);
}

TEST(ValueIteration, ZeroRewardGivesZeroValues) {
    TabularMDP mdp = generate_random_mdp(8, 3, 3, 0.5, 5);
    mdp.reward.setZero();
    const ValueFunctions vf = value_iteration(mdp);
    EXPECT_NEAR(vf.v.cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(ValueIteration, GreedyPolicyStableAcrossTolerances) {
    const TabularMDP mdp = generate_random_mdp(10, 4, 4, 0.2, 11);
    const Policy tight = greedy_policy(value_iteration(mdp, 1e-10).q);
    const Policy loose = greedy_policy(value_iteration(mdp, 1e-6).q);
    EXPECT_TRUE(tight.probs == loose.probs);
}

TEST(ValueIteration, ConvergenceErrorCarriesResidual) {
    const TabularMDP mdp = pt::make_chain_mdp(3, 0.95);
    try {
        value_iteration(mdp, 1e-12, 2);
        FAIL() << "expected convergence_error";
    } catch (const convergence_error& e) {
        EXPECT_GT(e.residual(), 1e-12);
    }
}

TEST(GreedyPolicy, DeterministicTieBreak) {
    Eigen::MatrixXd q(1, 4);
    q << 1.0, 1.0, 0.0, 0.0;
    const Policy policy = greedy_policy(q);
    EXPECT_DOUBLE_EQ(policy.probs(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(policy.probs(0, 1), 0.0);
}

TEST(GreedyPolicy, SoftmaxUniformOnConstantRow) {
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(1, 4);
    const Policy policy = greedy_policy(q, GreedyMode::softmax, 1.0);
    for (int a = 0; a < 4; ++a) EXPECT_NEAR(policy.probs(0, a), 0.25, 1e-12);
}

TEST(GreedyPolicy, SoftmaxLowTemperatureApproachesArgmax) {
    const TabularMDP mdp = generate_random_mdp(8, 4, 4, 0.7, 3);
    const Eigen::MatrixXd q = value_iteration(mdp).q;
    const Policy hard = greedy_policy(q);
    const Policy soft = greedy_policy(q, GreedyMode::softmax, 1e-4);
    EXPECT_LT((hard.probs - soft.probs).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(ExactOccupancies, OneStateMdp) {
    TabularMDP mdp;
    mdp.num_states = 1;
    mdp.num_actions = 1;
    mdp.gamma = 0.9;
    mdp.transition = Eigen::MatrixXd::Ones(1, 1);
    mdp.reward = Eigen::MatrixXd::Zero(1, 1);
    mdp.initial_dist = Eigen::VectorXd::Ones(1);
    const OccupancySet occ = exact_occupancies(mdp, pt::uniform_policy(1, 1));
    EXPECT_NEAR(occ.d_s[0], 1.0, 1e-12);
    EXPECT_NEAR(occ.d_sa(0, 0), 1.0, 1e-12);
    EXPECT_NEAR(occ.d_ss(0, 0), 1.0, 1e-12);
}

TEST(ExactOccupancies, TwoStateCycleGeometricSeries) {
    TabularMDP mdp;
    mdp.num_states = 2;
    mdp.num_actions = 1;
    mdp.gamma = 0.95;
    mdp.transition = Eigen::MatrixXd::Zero(2, 2);
    mdp.transition(0, 1) = 1.0;
    mdp.transition(1, 0) = 1.0;
    mdp.reward = Eigen::MatrixXd::Zero(2, 1);
    mdp.initial_dist = Eigen::Vector2d(1.0, 0.0);
    const OccupancySet occ = exact_occupancies(mdp, pt::uniform_policy(2, 1));
    EXPECT_NEAR(occ.d_s[0], 1.0 / (1.0 + 0.95), 1e-12);
    EXPECT_NEAR(occ.d_s[1], 0.95 / (1.0 + 0.95), 1e-12);
}

TEST(ExactOccupancies, BellmanFlowResidualAndNormalization) {
    for (std::uint64_t seed : {1, 2, 3}) {
        const TabularMDP mdp = generate_random_mdp(12, 3, 4, 0.6, seed);
        Rng rng(seed);
        Policy policy;
        policy.probs.resize(12, 3);
        for (int s = 0; s < 12; ++s) policy.probs.row(s) = rng.dirichlet_uniform(3).transpose();
        const OccupancySet occ = exact_occupancies(mdp, policy);

        // Bellman flow: d_s = (1-gamma) p0 + gamma P_pi^T d_s, per state.
        const Eigen::MatrixXd p_pi = policy_transition_matrix(mdp, policy);
        const Eigen::VectorXd flow =
            (1.0 - mdp.gamma) * mdp.initial_dist + mdp.gamma * p_pi.transpose() * occ.d_s;
        EXPECT_LT((flow - occ.d_s).cwiseAbs().maxCoeff(), 1e-9);

        EXPECT_NEAR(occ.d_s.sum(), 1.0, 1e-9);
        EXPECT_NEAR(occ.d_sa.sum(), 1.0, 1e-9);
        EXPECT_NEAR(occ.d_ss.sum(), 1.0, 1e-9);
        EXPECT_LT((occ.d_sa.rowwise().sum() - occ.d_s).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_GE(occ.d_s.minCoeff(), 0.0);
    }
}

TEST(ExactOccupancies, MatchesMonteCarloRollouts) {
    const TabularMDP mdp = generate_random_mdp(5, 2, 2, 0.5, 17);
    const Policy policy = pt::uniform_policy(5, 2);
    const OccupancySet occ = exact_occupancies(mdp, policy);
    const Eigen::VectorXd mc = pt::mc_state_occupancy(mdp, policy, 1000000, 99);
    EXPECT_LT((mc - occ.d_s).cwiseAbs().sum(), 3e-3);
}

TEST(PolicyReturn, ZeroRewardIsZero) {
    TabularMDP mdp = generate_random_mdp(6, 2, 3, 0.4, 21);
    mdp.reward.setZero();
    EXPECT_NEAR(policy_return(mdp, pt::uniform_policy(6, 2)), 0.0, 1e-12);
}

TEST(PolicyReturn, ChainClosedForm) {
    const TabularMDP mdp = pt::make_chain_mdp(3, 0.95);
    const double expected = 0.95 * 0.95 / (1.0 - 0.95);
    EXPECT_NEAR(policy_return(mdp, pt::uniform_policy(3, 1)), expected, 1e-9);
}

TEST(PolicyReturn, MatchesMonteCarloRollouts) {
    const TabularMDP mdp = generate_random_mdp(5, 2, 2, 0.5, 31);
    const Policy policy = pt::uniform_policy(5, 2);
    const double exact = policy_return(mdp, policy);
    const double mc = pt::mc_return(mdp, policy, 1000000, 7);
    EXPECT_NEAR(mc, exact, 3e-3);
}

TEST(PolicyReturn, GreedyExpertDominatesAllDeterministicPolicies) {
    for (std::uint64_t seed : {4, 9}) {
        const TabularMDP mdp = generate_random_mdp(5, 2, 2, 0.5, seed);
        const Policy expert = greedy_policy(value_iteration(mdp).q);
        const double expert_return = policy_return(mdp, expert);
        const auto [best_return, best] = pt::best_deterministic_policy(mdp);
        EXPECT_NEAR(expert_return, best_return, 1e-8);
        EXPECT_GE(expert_return, best_return - 1e-9);
    }
}

TEST(MdpJson, RoundTripIsExact) {
    const TabularMDP mdp = generate_random_mdp(9, 3, 3, 0.8, 77);
    const TabularMDP back = mdp_from_json(mdp_to_json(mdp));
    EXPECT_TRUE(mdp.transition == back.transition);
    EXPECT_TRUE(mdp.reward == back.reward);
    EXPECT_TRUE(mdp.initial_dist == back.initial_dist);
    EXPECT_EQ(mdp.goal_state, back.goal_state);
    EXPECT_EQ(mdp.gamma, back.gamma);
}

TEST(MdpValidate, RejectsBrokenInvariants) {
    TabularMDP mdp = generate_random_mdp(4, 2, 2, 0.5, 1);
    mdp.gamma = 1.0;
    EXPECT_THROW(mdp.validate(), std::invalid_argument);
    mdp.gamma = 0.95;
    mdp.transition(0, 0) += 1e-6;
    EXPECT_THROW(mdp.validate(), std::invalid_argument);
}
