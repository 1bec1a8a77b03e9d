#include "pwdice/dataset.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>

#include "pwdice/mdp.hpp"
#include "test_util.hpp"

using namespace pwdice;
namespace pt = pwdice::testing;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/pwdice_test_" + name) {}
    ~TempFile() {
        std::remove(path.c_str());
        std::remove((path + ".meta.json").c_str());
    }
};

}  // namespace

TEST(SampleDataset, OneStateMdpOnlyVisitsZero) {
    TabularMDP mdp;
    mdp.num_states = 1;
    mdp.num_actions = 1;
    mdp.gamma = 0.9;
    mdp.transition = Eigen::MatrixXd::Ones(1, 1);
    mdp.reward = Eigen::MatrixXd::Zero(1, 1);
    mdp.initial_dist = Eigen::VectorXd::Ones(1);
    const ExpertDataset expert = sample_expert_dataset(mdp, pt::uniform_policy(1, 1), 50, 3);
    EXPECT_EQ(expert.size(), 50u);
    for (int s : expert.states) EXPECT_EQ(s, 0);
    const TransitionDataset ta = sample_transition_dataset(mdp, pt::uniform_policy(1, 1), 50, 3);
    EXPECT_EQ(ta.size(), 50u);
    for (const Transition& t : ta.triples) {
        EXPECT_EQ(t.s, 0);
        EXPECT_EQ(t.a, 0);
        EXPECT_EQ(t.s_next, 0);
    }
}

TEST(SampleDataset, RequestedSizesAreExact) {
    const TabularMDP mdp = generate_random_mdp(10, 4, 4, 0.1, 5);
    const Policy uniform = pt::uniform_policy(10, 4);
    for (int n : {10, 100, 1000, 10000}) {
        EXPECT_EQ(sample_expert_dataset(mdp, uniform, n, 1).size(), static_cast<std::size_t>(n));
        EXPECT_EQ(sample_transition_dataset(mdp, uniform, n, 1).size(),
                  static_cast<std::size_t>(n));
    }
}

TEST(SampleDataset, DeterministicPerSeed) {
    const TabularMDP mdp = generate_random_mdp(8, 3, 3, 0.5, 5);
    const Policy uniform = pt::uniform_policy(8, 3);
    const ExpertDataset a = sample_expert_dataset(mdp, uniform, 200, 11);
    const ExpertDataset b = sample_expert_dataset(mdp, uniform, 200, 11);
    EXPECT_EQ(a.states, b.states);
    EXPECT_EQ(a.initial_states, b.initial_states);
    const ExpertDataset c = sample_expert_dataset(mdp, uniform, 200, 12);
    EXPECT_NE(a.states, c.states);
}

TEST(SampleDataset, GeometricModeIsUnbiasedForOccupancy) {
    const TabularMDP mdp = generate_random_mdp(5, 2, 2, 0.5, 17);
    const Policy uniform = pt::uniform_policy(5, 2);
    const ExpertDataset data = sample_expert_dataset(mdp, uniform, 1000000, 23);
    Eigen::VectorXd freq = Eigen::VectorXd::Zero(5);
    for (int s : data.states) freq[s] += 1.0;
    freq /= static_cast<double>(data.size());
    const OccupancySet occ = exact_occupancies(mdp, uniform);
    EXPECT_LT((freq - occ.d_s).cwiseAbs().sum(), 3e-3);
}

TEST(SampleDataset, FixedHorizonProducesFixedLengthEpisodes) {
    const TabularMDP mdp = generate_random_mdp(6, 2, 3, 0.3, 2);
    SampleConfig config;
    config.mode = HorizonMode::fixed;
    config.fixed_length = 25;
    const ExpertDataset data =
        sample_expert_dataset(mdp, pt::uniform_policy(6, 2), 100, 9, config);
    EXPECT_EQ(data.size(), 100u);
    EXPECT_EQ(data.initial_states.size(), 4u);  // 100 / 25 full episodes
    for (int s0 : data.initial_states) EXPECT_EQ(s0, 0);
}

TEST(EstimateEmpiricalModel, SingleRepeatedTransition) {
    ExpertDataset expert;
    expert.states = {2, 2, 2};
    TransitionDataset ta;
    for (int k = 0; k < 10; ++k) ta.triples.push_back({0, 1, 2});
    ta.initial_states = {0};
    const EmpiricalModel m = estimate_empirical_model(expert, ta, 3, 2, 0.95);

    EXPECT_DOUBLE_EQ(m.p_hat(0 * 2 + 1, 2), 1.0);
    // Every unvisited (s,a) row falls back to uniform.
    for (int r = 0; r < 6; ++r) {
        if (r == 1) continue;
        for (int k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(m.p_hat(r, k), 1.0 / 3.0);
    }
    EXPECT_DOUBLE_EQ(m.pi_I(0, 1), 1.0);
    EXPECT_DOUBLE_EQ(m.pi_I(1, 0), 0.5);  // unvisited state row is uniform
    EXPECT_DOUBLE_EQ(m.dE_s[2], 1.0);
    EXPECT_DOUBLE_EQ(m.dI_sa(0, 1), 1.0);
    EXPECT_DOUBLE_EQ(m.p0_hat[0], 1.0);
}

TEST(EstimateEmpiricalModel, DistributionsAreValidAndConsistent) {
    const TabularMDP mdp = generate_random_mdp(7, 3, 3, 0.8, 13);
    const Policy uniform = pt::uniform_policy(7, 3);
    const ExpertDataset expert = sample_expert_dataset(mdp, uniform, 500, 1);
    const TransitionDataset ta = sample_transition_dataset(mdp, uniform, 500, 2);
    const EmpiricalModel m = estimate_empirical_model(expert, ta, 7, 3, 0.95);

    EXPECT_NEAR(m.dE_s.sum(), 1.0, 1e-9);
    EXPECT_NEAR(m.dI_sa.sum(), 1.0, 1e-9);
    EXPECT_NEAR(m.p0_hat.sum(), 1.0, 1e-9);
    EXPECT_GE(m.dE_s.minCoeff(), 0.0);
    for (int r = 0; r < 21; ++r) EXPECT_NEAR(m.p_hat.row(r).sum(), 1.0, 1e-9);
    for (int s = 0; s < 7; ++s) EXPECT_NEAR(m.pi_I.row(s).sum(), 1.0, 1e-9);
    // dI_s is defined as the action marginal of dI_sa; equality is exact.
    EXPECT_DOUBLE_EQ((m.dI_sa.rowwise().sum() - m.dI_s).cwiseAbs().maxCoeff(), 0.0);
}

TEST(EstimateEmpiricalModel, TransitionEstimateConvergesToTruth) {
    // eta = 1 mixes well, so every (s,a) row collects plenty of visits.
    const TabularMDP mdp = generate_random_mdp(5, 2, 4, 1.0, 29);
    const Policy uniform = pt::uniform_policy(5, 2);
    const ExpertDataset expert = sample_expert_dataset(mdp, uniform, 10, 1);
    const TransitionDataset ta = sample_transition_dataset(mdp, uniform, 1000000, 4);
    const EmpiricalModel m = estimate_empirical_model(expert, ta, 5, 2, 0.95);
    Eigen::VectorXd visits = Eigen::VectorXd::Zero(10);
    for (const Transition& t : ta.triples) visits[t.s * 2 + t.a] += 1.0;
    for (int r = 0; r < 10; ++r) {
        ASSERT_GT(visits[r], 10000) << "row " << r;
        const double err = (m.p_hat.row(r) - mdp.transition.row(r)).cwiseAbs().sum();
        EXPECT_LT(err, 5e-3) << "row " << r;
    }
}

TEST(EstimateEmpiricalModel, LawOfLargeNumbersMedianErrorShrinks) {
    const TabularMDP mdp = generate_random_mdp(5, 2, 2, 0.5, 41);
    const Policy uniform = pt::uniform_policy(5, 2);
    const ExpertDataset expert = sample_expert_dataset(mdp, uniform, 10, 1);
    auto median_error = [&](int size) {
        std::vector<double> errors;
        for (std::uint64_t seed = 0; seed < 11; ++seed) {
            const TransitionDataset ta = sample_transition_dataset(mdp, uniform, size, 100 + seed);
            const EmpiricalModel m = estimate_empirical_model(expert, ta, 5, 2, 0.95);
            errors.push_back((m.p_hat - mdp.transition).cwiseAbs().sum());
        }
        std::sort(errors.begin(), errors.end());
        return errors[errors.size() / 2];
    };
    const double e2 = median_error(100);
    const double e3 = median_error(1000);
    const double e4 = median_error(10000);
    EXPECT_GE(e2, e3);
    EXPECT_GE(e3, e4);
}

TEST(DatasetIo, ExpertRoundTripIsIdentity) {
    TempFile file("expert.csv");
    ExpertDataset data;
    data.states = {0, 3, 2, 2, 1, 4, 0, 0, 3, 1};
    data.initial_states = {0, 2};
    DatasetMeta meta;
    meta.seed = 99;
    meta.policy_kind = "expert";
    meta.gamma = 0.95;
    save_dataset(file.path, data, meta);
    const ExpertDataset back = load_expert_dataset(file.path, 5);
    EXPECT_EQ(back.states, data.states);
    EXPECT_EQ(back.initial_states, data.initial_states);
}

TEST(DatasetIo, TransitionRoundTripIsIdentity) {
    TempFile file("ta.csv");
    TransitionDataset data;
    for (int k = 0; k < 10; ++k) data.triples.push_back({k % 4, k % 2, (k + 1) % 4});
    data.initial_states = {0};
    save_dataset(file.path, data);
    const TransitionDataset back = load_transition_dataset(file.path, 4, 2);
    ASSERT_EQ(back.size(), data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        EXPECT_EQ(back.triples[i].s, data.triples[i].s);
        EXPECT_EQ(back.triples[i].a, data.triples[i].a);
        EXPECT_EQ(back.triples[i].s_next, data.triples[i].s_next);
    }
    EXPECT_EQ(back.initial_states, data.initial_states);
}

TEST(DatasetIo, ActionIndexOutOfRangeIsRejected) {
    TempFile file("bad_action.csv");
    {
        std::ofstream out(file.path);
        out << "s,a,s_next\n0,2,1\n";
    }
    EXPECT_THROW(load_transition_dataset(file.path, 4, 2), parse_error);
}

TEST(DatasetIo, CrlfAndLfParseIdentically) {
    TempFile lf("lf.csv");
    TempFile crlf("crlf.csv");
    {
        std::ofstream out(lf.path);
        out << "s,a,s_next\n1,0,2\n2,1,0\n";
    }
    {
        std::ofstream out(crlf.path);
        out << "s,a,s_next\r\n1,0,2\r\n2,1,0\r\n";
    }
    const TransitionDataset a = load_transition_dataset(lf.path, 3, 2);
    const TransitionDataset b = load_transition_dataset(crlf.path, 3, 2);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.triples[i].s, b.triples[i].s);
        EXPECT_EQ(a.triples[i].a, b.triples[i].a);
        EXPECT_EQ(a.triples[i].s_next, b.triples[i].s_next);
    }
}

TEST(DatasetIo, MalformedFileReportsLine) {
    TempFile file("malformed.csv");
    {
        std::ofstream out(file.path);
        out << "s,a,s_next\n0,1,2\nnot,a,number\n";
    }
    try {
        load_transition_dataset(file.path, 4, 2);
        FAIL() << "expected parse_error";
    } catch (const parse_error& e) {
        EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos);
    }
}

TEST(DatasetIo, WrongHeaderIsRejected) {
    TempFile file("header.csv");
    {
        std::ofstream out(file.path);
        out << "state\n0\n";
    }
    EXPECT_THROW(load_expert_dataset(file.path, 4), parse_error);
}
