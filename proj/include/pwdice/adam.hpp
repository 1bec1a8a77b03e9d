#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <utility>

#include <Eigen/Dense>

namespace pwdice {

enum class StepSchedule { constant, cosine };

struct OptimizerConfig {
    double step_size = 1e-2;
    int max_iters = 20000;
    double tolerance = 1e-7;  // gradient infinity-norm stopping threshold
    StepSchedule schedule = StepSchedule::cosine;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct MinimizeResult {
    Eigen::VectorXd x;           // best-so-far point by objective value
    double value = 0.0;          // objective at x
    double grad_inf_norm = 0.0;  // gradient norm at the last iterate
    int iterations = 0;
    bool converged = false;
};

/// Full-batch Adam on a smooth objective. The callback evaluates the
/// objective and writes its gradient. Stops when the gradient infinity norm
/// drops below `tolerance`; otherwise returns the best iterate seen, with
/// `converged` left false.
inline MinimizeResult adam_minimize(
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& objective,
    Eigen::VectorXd x0, const OptimizerConfig& config = {}) {
    const int dim = static_cast<int>(x0.size());
    Eigen::VectorXd x = std::move(x0);
    Eigen::VectorXd m = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd grad(dim);

    MinimizeResult result;
    result.x = x;
    result.value = std::numeric_limits<double>::infinity();

    for (int it = 1; it <= config.max_iters; ++it) {
        const double value = objective(x, grad);
        result.grad_inf_norm = grad.size() > 0 ? grad.cwiseAbs().maxCoeff() : 0.0;
        if (value < result.value) {
            result.value = value;
            result.x = x;
        }
        result.iterations = it;
        if (result.grad_inf_norm <= config.tolerance) {
            result.converged = true;
            result.x = x;
            result.value = value;
            return result;
        }

        double lr = config.step_size;
        if (config.schedule == StepSchedule::cosine)
            lr *= 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(it - 1) / config.max_iters));

        m = config.beta1 * m + (1.0 - config.beta1) * grad;
        v = config.beta2 * v + (1.0 - config.beta2) * grad.cwiseProduct(grad);
        const double bc1 = 1.0 - std::pow(config.beta1, it);
        const double bc2 = 1.0 - std::pow(config.beta2, it);
        x -= (lr / bc1) *
             m.cwiseQuotient((v / bc2).cwiseSqrt() + Eigen::VectorXd::Constant(dim, config.eps));
    }
    return result;
}

}  // namespace pwdice
