#pragma once

#include <cmath>

#include "rtil/numkit.hpp"

namespace rtil {

enum class OptimizerKind { sgd, adam };

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First-order stepper over one flat parameter vector.
class FlatOptimizer {
public:
    FlatOptimizer(OptimizerKind kind, const AdamParams& params, Eigen::Index dim)
        : kind_(kind), p_(params) {
        if (kind_ == OptimizerKind::adam) {
            m_ = Vec::Zero(dim);
            v_ = Vec::Zero(dim);
        }
    }

    void step(Vec& params, const Vec& grad, double lr) {
        if (kind_ == OptimizerKind::sgd) {
            params -= lr * grad;
            return;
        }
        ++t_;
        m_ = p_.beta1 * m_ + (1.0 - p_.beta1) * grad;
        v_ = p_.beta2 * v_ + (1.0 - p_.beta2) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(p_.beta1, t_);
        const double c2 = 1.0 - std::pow(p_.beta2, t_);
        params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + p_.eps);
    }

private:
    OptimizerKind kind_;
    AdamParams p_;
    Vec m_, v_;
    long t_ = 0;
};

} // namespace rtil
