#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pwdice/mdp.hpp"
#include "pwdice/rng.hpp"

namespace pwdice {

class parse_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// State-only expert demonstrations. `initial_states` keeps the first state
/// of every sampled trajectory so both boundary conventions stay recoverable.
struct ExpertDataset {
    std::vector<int> states;
    std::vector<int> initial_states;

    std::size_t size() const { return states.size(); }
};

struct Transition {
    int s = 0;
    int a = 0;
    int s_next = 0;
};

/// Task-agnostic (s, a, s') triples plus the initial state of each trajectory.
struct TransitionDataset {
    std::vector<Transition> triples;
    std::vector<int> initial_states;

    std::size_t size() const { return triples.size(); }
};

/// Count-based estimates of everything the solvers consume.
struct EmpiricalModel {
    int num_states = 0;
    int num_actions = 0;
    Eigen::MatrixXd p_hat;    // (S*A) x S, row-stochastic
    Eigen::MatrixXd pi_I;     // S x A behavior policy
    Eigen::VectorXd dE_s;     // expert state occupancy
    Eigen::VectorXd dI_s;     // task-agnostic state occupancy
    Eigen::MatrixXd dI_sa;    // task-agnostic state-action occupancy
    Eigen::VectorXd p0_hat;   // initial-state distribution
    double gamma = 0.95;
};

enum class HorizonMode { geometric, fixed };

struct SampleConfig {
    HorizonMode mode = HorizonMode::geometric;
    int fixed_length = 0;  // used by HorizonMode::fixed

    void validate() const {
        if (mode == HorizonMode::fixed && fixed_length < 1)
            throw std::invalid_argument("SampleConfig: fixed horizon needs fixed_length >= 1");
    }
};

/// Roll out `policy` until `num_transitions` expert states are collected.
/// Geometric mode ends each episode with probability (1-gamma) per step, so
/// the recorded states are unbiased draws from the discounted occupancy.
inline ExpertDataset sample_expert_dataset(const TabularMDP& mdp, const Policy& policy,
                                           int num_transitions, std::uint64_t seed,
                                           SampleConfig config = {}) {
    if (num_transitions < 1)
        throw std::invalid_argument("sample_expert_dataset: num_transitions >= 1");
    config.validate();
    Rng rng(seed);
    ExpertDataset out;
    out.states.reserve(num_transitions);
    while (static_cast<int>(out.states.size()) < num_transitions) {
        int s = rng.categorical(mdp.initial_dist);
        out.initial_states.push_back(s);
        int steps = 0;
        while (static_cast<int>(out.states.size()) < num_transitions) {
            out.states.push_back(s);
            ++steps;
            if (config.mode == HorizonMode::geometric) {
                if (rng.uniform() < 1.0 - mdp.gamma) break;
            } else if (steps >= config.fixed_length) {
                break;
            }
            const int a = rng.categorical(policy.probs.row(s).transpose());
            s = rng.categorical(mdp.transition_row(s, a).transpose());
        }
    }
    return out;
}

/// Same rollout scheme, keeping (s, a, s') triples. A triple is recorded for
/// every step actually taken, which leaves the (s, a) frequencies unbiased
/// for the discounted state-action occupancy.
inline TransitionDataset sample_transition_dataset(const TabularMDP& mdp, const Policy& policy,
                                                   int num_transitions, std::uint64_t seed,
                                                   SampleConfig config = {}) {
    if (num_transitions < 1)
        throw std::invalid_argument("sample_transition_dataset: num_transitions >= 1");
    config.validate();
    Rng rng(seed);
    TransitionDataset out;
    out.triples.reserve(num_transitions);
    while (static_cast<int>(out.triples.size()) < num_transitions) {
        int s = rng.categorical(mdp.initial_dist);
        out.initial_states.push_back(s);
        int steps = 0;
        while (static_cast<int>(out.triples.size()) < num_transitions) {
            if (config.mode == HorizonMode::geometric) {
                if (rng.uniform() < 1.0 - mdp.gamma) break;
            } else if (steps >= config.fixed_length) {
                break;
            }
            const int a = rng.categorical(policy.probs.row(s).transpose());
            const int s_next = rng.categorical(mdp.transition_row(s, a).transpose());
            out.triples.push_back({s, a, s_next});
            ++steps;
            s = s_next;
        }
    }
    return out;
}

/// Count-based estimation per the tabular protocol: every zero-denominator
/// row falls back to the uniform distribution. p0_hat comes from the
/// task-agnostic dataset's initial states.
inline EmpiricalModel estimate_empirical_model(const ExpertDataset& expert,
                                               const TransitionDataset& task_agnostic,
                                               int num_states, int num_actions, double gamma) {
    if (expert.states.empty() || task_agnostic.triples.empty())
        throw std::invalid_argument("estimate_empirical_model: datasets must be nonempty");
    const int S = num_states, A = num_actions;
    EmpiricalModel m;
    m.num_states = S;
    m.num_actions = A;
    m.gamma = gamma;

    Eigen::MatrixXd sas_counts = Eigen::MatrixXd::Zero(S * A, S);
    Eigen::MatrixXd sa_counts = Eigen::MatrixXd::Zero(S, A);
    for (const Transition& t : task_agnostic.triples) {
        if (t.s < 0 || t.s >= S || t.a < 0 || t.a >= A || t.s_next < 0 || t.s_next >= S)
            throw std::out_of_range("estimate_empirical_model: transition index out of range");
        sas_counts(t.s * A + t.a, t.s_next) += 1.0;
        sa_counts(t.s, t.a) += 1.0;
    }

    m.p_hat = Eigen::MatrixXd::Zero(S * A, S);
    for (int r = 0; r < S * A; ++r) {
        const double total = sas_counts.row(r).sum();
        if (total > 0.0)
            m.p_hat.row(r) = sas_counts.row(r) / total;
        else
            m.p_hat.row(r).setConstant(1.0 / S);
    }

    m.pi_I = Eigen::MatrixXd::Zero(S, A);
    for (int s = 0; s < S; ++s) {
        const double total = sa_counts.row(s).sum();
        if (total > 0.0)
            m.pi_I.row(s) = sa_counts.row(s) / total;
        else
            m.pi_I.row(s).setConstant(1.0 / A);
    }

    m.dI_sa = sa_counts / sa_counts.sum();
    m.dI_s = m.dI_sa.rowwise().sum();

    m.dE_s = Eigen::VectorXd::Zero(S);
    for (int s : expert.states) {
        if (s < 0 || s >= S) throw std::out_of_range("estimate_empirical_model: expert state out of range");
        m.dE_s[s] += 1.0;
    }
    m.dE_s /= static_cast<double>(expert.states.size());

    m.p0_hat = Eigen::VectorXd::Zero(S);
    if (task_agnostic.initial_states.empty()) {
        m.p0_hat.setConstant(1.0 / S);
    } else {
        for (int s : task_agnostic.initial_states) {
            if (s < 0 || s >= S) throw std::out_of_range("estimate_empirical_model: initial state out of range");
            m.p0_hat[s] += 1.0;
        }
        m.p0_hat /= static_cast<double>(task_agnostic.initial_states.size());
    }
    return m;
}

struct DatasetMeta {
    std::uint64_t seed = 0;
    std::string policy_kind;
    std::string horizon_mode = "geometric";
    double gamma = 0.95;
    std::vector<int> initial_states;
};

namespace detail {

inline std::string sidecar_path(const std::string& path) { return path + ".meta.json"; }

inline void write_sidecar(const std::string& path, const DatasetMeta& meta) {
    nlohmann::json j;
    j["seed"] = meta.seed;
    j["policy_kind"] = meta.policy_kind;
    j["horizon_mode"] = meta.horizon_mode;
    j["gamma"] = meta.gamma;
    j["initial_states"] = meta.initial_states;
    std::ofstream out(sidecar_path(path));
    if (!out) throw std::runtime_error("cannot write " + sidecar_path(path));
    out << j.dump(2) << "\n";
}

inline DatasetMeta read_sidecar(const std::string& path) {
    DatasetMeta meta;
    std::ifstream in(sidecar_path(path));
    if (!in) return meta;  // sidecar is optional on load
    nlohmann::json j;
    in >> j;
    meta.seed = j.value("seed", std::uint64_t{0});
    meta.policy_kind = j.value("policy_kind", std::string{});
    meta.horizon_mode = j.value("horizon_mode", std::string{"geometric"});
    meta.gamma = j.value("gamma", 0.95);
    meta.initial_states = j.value("initial_states", std::vector<int>{});
    return meta;
}

// Splits a CSV record, tolerating a trailing CR from CRLF files.
inline std::vector<std::string> split_csv_line(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    return fields;
}

inline int parse_index(const std::string& field, const std::string& path, int line_no,
                       const char* what, int bound) {
    std::size_t pos = 0;
    int value = 0;
    try {
        value = std::stoi(field, &pos);
    } catch (const std::exception&) {
        throw parse_error(path + ":" + std::to_string(line_no) + ": cannot parse " + what +
                          " from '" + field + "'");
    }
    if (pos != field.size())
        throw parse_error(path + ":" + std::to_string(line_no) + ": trailing characters in '" +
                          field + "'");
    if (value < 0 || (bound > 0 && value >= bound))
        throw parse_error(path + ":" + std::to_string(line_no) + ": " + what + " " +
                          std::to_string(value) + " out of range [0, " + std::to_string(bound) + ")");
    return value;
}

}  // namespace detail

/// Expert CSV: header `s`, one state per row; sidecar `<path>.meta.json`.
inline void save_dataset(const std::string& path, const ExpertDataset& dataset,
                         const DatasetMeta& meta_in = {}) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "s\n";
    for (int s : dataset.states) out << s << "\n";
    DatasetMeta meta = meta_in;
    meta.initial_states = dataset.initial_states;
    detail::write_sidecar(path, meta);
}

/// Task-agnostic CSV: header `s,a,s_next`.
inline void save_dataset(const std::string& path, const TransitionDataset& dataset,
                         const DatasetMeta& meta_in = {}) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "s,a,s_next\n";
    for (const Transition& t : dataset.triples)
        out << t.s << "," << t.a << "," << t.s_next << "\n";
    DatasetMeta meta = meta_in;
    meta.initial_states = dataset.initial_states;
    detail::write_sidecar(path, meta);
}

/// Bounds are checked when positive; pass 0 to skip (e.g. unknown |S|).
inline ExpertDataset load_expert_dataset(const std::string& path, int num_states = 0) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::string line;
    int line_no = 0;
    if (!std::getline(in, line)) throw parse_error(path + ": empty file");
    ++line_no;
    auto header = detail::split_csv_line(line);
    if (header.size() != 1 || header[0] != "s")
        throw parse_error(path + ":1: expected header 's'");
    ExpertDataset dataset;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != 1)
            throw parse_error(path + ":" + std::to_string(line_no) + ": expected 1 field, got " +
                              std::to_string(fields.size()));
        dataset.states.push_back(detail::parse_index(fields[0], path, line_no, "state", num_states));
    }
    dataset.initial_states = detail::read_sidecar(path).initial_states;
    return dataset;
}

inline TransitionDataset load_transition_dataset(const std::string& path, int num_states = 0,
                                                 int num_actions = 0) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::string line;
    int line_no = 0;
    if (!std::getline(in, line)) throw parse_error(path + ": empty file");
    ++line_no;
    auto header = detail::split_csv_line(line);
    if (header.size() != 3 || header[0] != "s" || header[1] != "a" || header[2] != "s_next")
        throw parse_error(path + ":1: expected header 's,a,s_next'");
    TransitionDataset dataset;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != 3)
            throw parse_error(path + ":" + std::to_string(line_no) + ": expected 3 fields, got " +
                              std::to_string(fields.size()));
        Transition t;
        t.s = detail::parse_index(fields[0], path, line_no, "state", num_states);
        t.a = detail::parse_index(fields[1], path, line_no, "action", num_actions);
        t.s_next = detail::parse_index(fields[2], path, line_no, "next state", num_states);
        dataset.triples.push_back(t);
    }
    dataset.initial_states = detail::read_sidecar(path).initial_states;
    return dataset;
}

}  // namespace pwdice
