#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pwdice/dataset.hpp"
#include "pwdice/rng.hpp"

namespace pwdice {

/// Per-state embedding table g(s) in R^M. Tabular states index rows directly
/// (equivalent to a one-hot encoding through a linear layer).
struct Encoder {
    Eigen::MatrixXd embeddings;  // S x M

    int num_states() const { return static_cast<int>(embeddings.rows()); }
    int dim() const { return static_cast<int>(embeddings.cols()); }
};

/// Raw parameter W0 behind the structured score weight
/// W = softplus(W0) softplus(W0)^T, symmetric PSD by construction.
struct BilinearWeight {
    Eigen::MatrixXd w0;  // M x M

    Eigen::MatrixXd effective() const {
        const Eigen::MatrixXd sp = softplus(w0);
        return sp * sp.transpose();
    }

    static Eigen::MatrixXd softplus(const Eigen::MatrixXd& x) {
        // log(1 + exp(x)) with the usual large-x shortcut
        return x.unaryExpr([](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); });
    }
};

struct StatePair {
    int s = 0;
    int s_next = 0;
};

struct InfonceGrads {
    double loss = 0.0;
    Eigen::MatrixXd d_embeddings;  // S x M
    Eigen::MatrixXd d_w0;          // M x M
};

namespace detail {

// Scores, row softmax, and the batch loss for a given effective W.
// loss = mean_i [logsumexp_j L(i,j) - L(i,i)], L(i,j) = g(s_i)^T W g(s'_j).
inline double infonce_forward(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& keys,
                              const Eigen::MatrixXd& w_eff, Eigen::MatrixXd& softmax) {
    const Eigen::MatrixXd scores = queries * w_eff * keys.transpose();
    const int batch = static_cast<int>(scores.rows());
    softmax.resize(batch, batch);
    double loss = 0.0;
    for (int i = 0; i < batch; ++i) {
        const double row_max = scores.row(i).maxCoeff();
        const Eigen::VectorXd e = (scores.row(i).array() - row_max).exp();
        const double total = e.sum();
        softmax.row(i) = (e / total).transpose();
        loss += row_max + std::log(total) - scores(i, i);
    }
    return loss / batch;
}

}  // namespace detail

/// Batch InfoNCE loss (minimized) and analytic gradients with respect to the
/// touched embedding rows and the raw weight W0.
inline InfonceGrads infonce_loss_and_grad(const Encoder& encoder, const BilinearWeight& weight,
                                          const std::vector<StatePair>& batch) {
    const int b = static_cast<int>(batch.size());
    if (b < 2) throw std::invalid_argument("infonce_loss_and_grad: batch needs >= 2 pairs");
    const int m = encoder.dim();

    Eigen::MatrixXd queries(b, m), keys(b, m);
    for (int i = 0; i < b; ++i) {
        queries.row(i) = encoder.embeddings.row(batch[i].s);
        keys.row(i) = encoder.embeddings.row(batch[i].s_next);
    }
    const Eigen::MatrixXd sp = BilinearWeight::softplus(weight.w0);
    const Eigen::MatrixXd w_eff = sp * sp.transpose();

    Eigen::MatrixXd softmax;
    InfonceGrads out;
    out.loss = detail::infonce_forward(queries, keys, w_eff, softmax);

    // dLoss/dScores = (softmax - I) / B
    Eigen::MatrixXd d_scores = softmax;
    d_scores.diagonal().array() -= 1.0;
    d_scores /= static_cast<double>(b);

    const Eigen::MatrixXd d_queries = d_scores * keys * w_eff.transpose();
    const Eigen::MatrixXd d_keys = d_scores.transpose() * queries * w_eff;
    out.d_embeddings = Eigen::MatrixXd::Zero(encoder.num_states(), m);
    for (int i = 0; i < b; ++i) {
        out.d_embeddings.row(batch[i].s) += d_queries.row(i);
        out.d_embeddings.row(batch[i].s_next) += d_keys.row(i);
    }

    const Eigen::MatrixXd d_w = queries.transpose() * d_scores * keys;
    const Eigen::MatrixXd d_sp = (d_w + d_w.transpose()) * sp;
    const Eigen::MatrixXd sigmoid =
        weight.w0.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    out.d_w0 = d_sp.cwiseProduct(sigmoid);
    return out;
}

/// Loss only, for an arbitrary fixed effective weight (used to probe the
/// rotation invariance at W = I without touching the softplus chain).
inline double infonce_loss_fixed_weight(const Encoder& encoder, const Eigen::MatrixXd& w_eff,
                                        const std::vector<StatePair>& batch) {
    const int b = static_cast<int>(batch.size());
    if (b < 2) throw std::invalid_argument("infonce_loss_fixed_weight: batch needs >= 2 pairs");
    Eigen::MatrixXd queries(b, encoder.dim()), keys(b, encoder.dim());
    for (int i = 0; i < b; ++i) {
        queries.row(i) = encoder.embeddings.row(batch[i].s);
        keys.row(i) = encoder.embeddings.row(batch[i].s_next);
    }
    Eigen::MatrixXd softmax;
    return detail::infonce_forward(queries, keys, w_eff, softmax);
}

struct EmbeddingTrainConfig {
    int dim = 32;
    int epochs = 200;
    double learning_rate = 1e-2;
    int batch_size = 0;  // 0: min(4096, dataset size), i.e. full batch at desk scale
    double init_scale = 0.1;
    std::uint64_t seed = 0;
};

struct EmbeddingTrainResult {
    Encoder encoder;
    BilinearWeight weight;
    std::vector<double> loss_trace;  // one entry per epoch
};

/// Gradient descent on the InfoNCE loss over consecutive state pairs from
/// the task-agnostic dataset (actions ignored). Deterministic given the
/// seed; epochs = 0 returns the initialization unchanged.
inline EmbeddingTrainResult train_embedding(const TransitionDataset& dataset, int num_states,
                                            const EmbeddingTrainConfig& config = {}) {
    if (dataset.triples.empty())
        throw std::invalid_argument("train_embedding: dataset must be nonempty");
    const int n = static_cast<int>(dataset.triples.size());
    const int batch_size = config.batch_size > 0 ? std::min(config.batch_size, n)
                                                 : std::min(4096, n);

    Rng rng(config.seed);
    EmbeddingTrainResult result;
    result.encoder.embeddings.resize(num_states, config.dim);
    for (int s = 0; s < num_states; ++s)
        for (int k = 0; k < config.dim; ++k) {
            // Box-Muller keeps the draw independent of the standard library's
            // normal_distribution implementation.
            const double u1 = std::max(rng.uniform(), 1e-300);
            const double u2 = rng.uniform();
            result.encoder.embeddings(s, k) =
                config.init_scale * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        }
    result.weight.w0 = Eigen::MatrixXd::Zero(config.dim, config.dim);

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        // Seeded Fisher-Yates reshuffle per epoch (no-op effect for full batch).
        for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(i + 1)]);
        double epoch_loss = 0.0;
        int batches = 0;
        for (int start = 0; start < n; start += batch_size) {
            const int count = std::min(batch_size, n - start);
            if (count < 2) continue;  // a trailing singleton has no negatives
            std::vector<StatePair> batch(count);
            for (int i = 0; i < count; ++i) {
                const Transition& t = dataset.triples[order[start + i]];
                batch[i] = {t.s, t.s_next};
            }
            const InfonceGrads grads = infonce_loss_and_grad(result.encoder, result.weight, batch);
            if (!std::isfinite(grads.loss))
                throw std::runtime_error("train_embedding: loss diverged at epoch " +
                                         std::to_string(epoch) + " after " +
                                         std::to_string(result.loss_trace.size()) + " epochs");
            result.encoder.embeddings -= config.learning_rate * grads.d_embeddings;
            result.weight.w0 -= config.learning_rate * grads.d_w0;
            epoch_loss += grads.loss;
            ++batches;
        }
        result.loss_trace.push_back(batches > 0 ? epoch_loss / batches : 0.0);
    }
    return result;
}

/// Symmetric zero-diagonal table beta * ||g(s_i) - g(s_j)||^2.
inline Eigen::MatrixXd embedding_cost(const Encoder& encoder, double beta) {
    if (beta < 0.0) throw std::invalid_argument("embedding_cost: beta must be nonnegative");
    const int S = encoder.num_states();
    Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(S, S);
    for (int i = 0; i < S; ++i)
        for (int j = i + 1; j < S; ++j) {
            const double d = (encoder.embeddings.row(i) - encoder.embeddings.row(j)).squaredNorm();
            cost(i, j) = beta * d;
            cost(j, i) = beta * d;
        }
    return cost;
}

inline nlohmann::json encoder_to_json(const Encoder& encoder, const BilinearWeight& weight) {
    nlohmann::json j;
    j["dim"] = encoder.dim();
    nlohmann::json embeddings = nlohmann::json::array();
    for (int s = 0; s < encoder.num_states(); ++s) {
        std::vector<double> row(encoder.dim());
        for (int k = 0; k < encoder.dim(); ++k) row[k] = encoder.embeddings(s, k);
        embeddings.push_back(row);
    }
    j["embeddings"] = std::move(embeddings);
    nlohmann::json w0 = nlohmann::json::array();
    for (int r = 0; r < weight.w0.rows(); ++r) {
        std::vector<double> row(weight.w0.cols());
        for (int c = 0; c < weight.w0.cols(); ++c) row[c] = weight.w0(r, c);
        w0.push_back(row);
    }
    j["W0"] = std::move(w0);
    return j;
}

inline std::pair<Encoder, BilinearWeight> encoder_from_json(const nlohmann::json& j) {
    const int dim = j.at("dim").get<int>();
    const auto embeddings = j.at("embeddings").get<std::vector<std::vector<double>>>();
    Encoder encoder;
    encoder.embeddings.resize(static_cast<int>(embeddings.size()), dim);
    for (int s = 0; s < encoder.num_states(); ++s)
        for (int k = 0; k < dim; ++k) encoder.embeddings(s, k) = embeddings[s][k];
    const auto w0 = j.at("W0").get<std::vector<std::vector<double>>>();
    BilinearWeight weight;
    weight.w0.resize(dim, dim);
    for (int r = 0; r < dim; ++r)
        for (int c = 0; c < dim; ++c) weight.w0(r, c) = w0[r][c];
    return {std::move(encoder), std::move(weight)};
}

}  // namespace pwdice
