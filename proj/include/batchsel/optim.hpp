#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

namespace batchsel {

/// Plain stochastic gradient descent: x <- x - eta * g.
class Sgd {
public:
    explicit Sgd(double learning_rate = 0.1);

    void step(std::span<double> x, std::span<const double> g) const;

    double learning_rate() const { return learning_rate_; }

private:
    double learning_rate_;
};

/// AdaDelta with decaying accumulators of squared gradients (v) and squared
/// updates (s). Each step uses s from the previous step, then updates it.
class AdaDelta {
public:
    explicit AdaDelta(std::size_t n, double rho = 0.95, double epsilon = 1e-6);

    void step(std::span<double> x, std::span<const double> g);

    double rho() const { return rho_; }
    double epsilon() const { return epsilon_; }
    const std::vector<double>& grad_accumulator() const { return v_; }
    const std::vector<double>& update_accumulator() const { return s_; }

private:
    double rho_;
    double epsilon_;
    std::vector<double> v_;
    std::vector<double> s_;
};

/// Adam with bias-corrected first and second moment estimates.
///
/// beta1^t and beta2^t are kept as running products rather than recomputed
/// with pow; the two differ by less than 1e-15 over practical step counts.
class Adam {
public:
    explicit Adam(std::size_t n, double alpha = 0.001, double beta1 = 0.9, double beta2 = 0.999,
                  double epsilon = 1e-8);

    void step(std::span<double> x, std::span<const double> g);

    double alpha() const { return alpha_; }
    double beta1() const { return beta1_; }
    double beta2() const { return beta2_; }
    double epsilon() const { return epsilon_; }
    std::uint64_t timestep() const { return t_; }
    const std::vector<double>& first_moment() const { return m_; }
    const std::vector<double>& second_moment() const { return v_; }

private:
    double alpha_;
    double beta1_;
    double beta2_;
    double epsilon_;
    std::vector<double> m_;
    std::vector<double> v_;
    std::uint64_t t_ = 0;
    double beta1_power_ = 1.0;
    double beta2_power_ = 1.0;
};

enum class OptimizerKind { sgd, adadelta, adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double sgd_learning_rate = 0.1;
    double adadelta_rho = 0.95;
    double adadelta_epsilon = 1e-6;
    double adam_alpha = 0.001;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
};

/// Any of the three optimizers behind one step() call.
class Optimizer {
public:
    Optimizer(const OptimizerConfig& config, std::size_t n);

    void step(std::span<double> x, std::span<const double> g);

    OptimizerKind kind() const;

private:
    std::variant<Sgd, AdaDelta, Adam> impl_;
};

}  // namespace batchsel
