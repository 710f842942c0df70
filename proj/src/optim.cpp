#include "batchsel/optim.hpp"

#include <cmath>
#include <string>

#include "batchsel/errors.hpp"

namespace batchsel {

namespace {

void check_lengths(std::size_t x, std::size_t g, std::size_t state) {
    if (x != g || x != state) {
        throw ArgumentError("optimizer step: length mismatch (x=" + std::to_string(x) +
                            ", g=" + std::to_string(g) + ", state=" + std::to_string(state) +
                            ")");
    }
}

void check_decay(double value, const char* name) {
    if (!(value > 0.0 && value < 1.0)) {
        throw ArgumentError(std::string(name) + " must lie in (0, 1)");
    }
}

void check_positive(double value, const char* name) {
    if (!(value > 0.0)) {
        throw ArgumentError(std::string(name) + " must be positive");
    }
}

}  // namespace

Sgd::Sgd(double learning_rate) : learning_rate_(learning_rate) {
    check_positive(learning_rate, "learning rate");
}

void Sgd::step(std::span<double> x, std::span<const double> g) const {
    check_lengths(x.size(), g.size(), x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] -= learning_rate_ * g[i];
    }
}

AdaDelta::AdaDelta(std::size_t n, double rho, double epsilon)
    : rho_(rho), epsilon_(epsilon), v_(n, 0.0), s_(n, 0.0) {
    check_decay(rho, "rho");
    check_positive(epsilon, "epsilon");
}

void AdaDelta::step(std::span<double> x, std::span<const double> g) {
    check_lengths(x.size(), g.size(), v_.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        v_[i] = rho_ * v_[i] + (1.0 - rho_) * g[i] * g[i];
        const double delta = -(std::sqrt(s_[i] + epsilon_) / std::sqrt(v_[i] + epsilon_)) * g[i];
        s_[i] = rho_ * s_[i] + (1.0 - rho_) * delta * delta;
        x[i] += delta;
    }
}

Adam::Adam(std::size_t n, double alpha, double beta1, double beta2, double epsilon)
    : alpha_(alpha), beta1_(beta1), beta2_(beta2), epsilon_(epsilon), m_(n, 0.0), v_(n, 0.0) {
    check_positive(alpha, "alpha");
    check_decay(beta1, "beta1");
    check_decay(beta2, "beta2");
    check_positive(epsilon, "epsilon");
}

void Adam::step(std::span<double> x, std::span<const double> g) {
    check_lengths(x.size(), g.size(), m_.size());
    ++t_;
    beta1_power_ *= beta1_;
    beta2_power_ *= beta2_;
    const double m_correction = 1.0 - beta1_power_;
    const double v_correction = 1.0 - beta2_power_;
    for (std::size_t i = 0; i < x.size(); ++i) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g[i] * g[i];
        const double m_hat = m_[i] / m_correction;
        const double v_hat = v_[i] / v_correction;
        x[i] -= alpha_ * m_hat / (std::sqrt(v_hat) + epsilon_);
    }
}

namespace {

std::variant<Sgd, AdaDelta, Adam> make_optimizer(const OptimizerConfig& config, std::size_t n) {
    switch (config.kind) {
        case OptimizerKind::sgd:
            return Sgd(config.sgd_learning_rate);
        case OptimizerKind::adadelta:
            return AdaDelta(n, config.adadelta_rho, config.adadelta_epsilon);
        case OptimizerKind::adam:
            return Adam(n, config.adam_alpha, config.adam_beta1, config.adam_beta2,
                        config.adam_epsilon);
    }
    throw ArgumentError("unknown optimizer kind");
}

}  // namespace

Optimizer::Optimizer(const OptimizerConfig& config, std::size_t n)
    : impl_(make_optimizer(config, n)) {}

void Optimizer::step(std::span<double> x, std::span<const double> g) {
    std::visit([&](auto& opt) { opt.step(x, g); }, impl_);
}

OptimizerKind Optimizer::kind() const {
    return static_cast<OptimizerKind>(impl_.index());
}

}  // namespace batchsel
