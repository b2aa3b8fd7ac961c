#include "ganselect/optim.hpp"

#include <cmath>

#include "ganselect/error.hpp"

namespace ganselect {

std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }
std::string to_string(LrRule r) { return r == LrRule::fixed ? "fixed" : "linear_scale_128"; }
std::string to_string(SamTargets s) { return s == SamTargets::none ? "none" : "both"; }

OptimizerKind optimizer_kind_from_string(const std::string& s) {
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "adam") return OptimizerKind::adam;
    throw ConfigError("unknown optimizer '" + s + "'");
}

LrRule lr_rule_from_string(const std::string& s) {
    if (s == "fixed") return LrRule::fixed;
    if (s == "linear_scale_128") return LrRule::linear_scale_128;
    throw ConfigError("unknown lr rule '" + s + "'");
}

SamTargets sam_targets_from_string(const std::string& s) {
    if (s == "none") return SamTargets::none;
    if (s == "both") return SamTargets::both;
    throw ConfigError("unknown sam targets '" + s + "'");
}

void sgd_step(std::vector<double>& params, std::span<const double> grads, double lr) {
    if (params.size() != grads.size()) throw ConfigError("sgd_step: gradient length mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
}

void adam_step(std::vector<double>& params, std::span<const double> grads, OptState& state, double lr) {
    if (params.size() != grads.size()) throw ConfigError("adam_step: gradient length mismatch");
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size()) throw ConfigError("adam_step: state does not match parameters");
    ++state.step_count;
    const double t = static_cast<double>(state.step_count);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
}

void optimizer_step(std::vector<double>& params, std::span<const double> grads, OptState& state, double lr) {
    if (state.kind == OptimizerKind::sgd) {
        sgd_step(params, grads, lr);
        ++state.step_count;
    } else {
        adam_step(params, grads, state, lr);
    }
}

std::vector<double> sam_step(const GradClosure& grad, std::vector<double>& params, OptState& state, double lr,
                             double rho) {
    if (!(rho >= 0.0)) throw UsageError("sam_step: rho must be >= 0");
    std::vector<double> g = grad(params);
    if (rho > 0.0) {
        double n2 = 0.0;
        for (double v : g) n2 += v * v;
        if (n2 > 0.0) {
            const double scale = rho / std::sqrt(n2);
            std::vector<double> probe = params;
            for (std::size_t i = 0; i < probe.size(); ++i) probe[i] += scale * g[i];
            g = grad(probe);
        }
    }
    optimizer_step(params, g, state, lr);
    return g;
}

void TrainConfig::validate() const {
    if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
    if (!(base_lr > 0.0)) throw ConfigError("train.base_lr must be positive");
    if (!(rho_sam >= 0.0)) throw ConfigError("train.rho_sam must be >= 0");
    if ((rho_sam == 0.0) != (sam_targets == SamTargets::none))
        throw ConfigError("train.sam_targets must be 'none' exactly when train.rho_sam == 0");
    if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) throw ConfigError("train.ema_decay must lie in [0, 1]");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
        throw ConfigError("train.beta1 and train.beta2 must lie in [0, 1)");
}

TrainConfig default_train_config(ObjectiveKind kind) {
    TrainConfig c;
    switch (kind) {
        case ObjectiveKind::wgan_div:
            break;
        case ObjectiveKind::mmd:
            c.n_critic = 0;
            c.base_lr = 0.001;
            c.lr_rule = LrRule::fixed;
            c.warmup_epochs_lr = 0;
            break;
        default:
            c.n_critic = 1;
            c.base_lr = 0.0002;
            c.lr_rule = LrRule::fixed;
            c.warmup_epochs_lr = 0;
            break;
    }
    return c;
}

double learning_rate(const TrainConfig& config, std::size_t batch_index, std::size_t batches_per_epoch) {
    double lr = config.base_lr;
    if (config.lr_rule == LrRule::linear_scale_128) lr *= static_cast<double>(config.batch_size) / 128.0;
    if (config.warmup_epochs_lr > 0) {
        const double ramp = static_cast<double>(config.warmup_epochs_lr * batches_per_epoch);
        lr *= std::min(1.0, static_cast<double>(batch_index + 1) / ramp);
    }
    return lr;
}

Checkpoint TrainedModel::checkpoint() const {
    Checkpoint c;
    c.sections.push_back({SectionKind::generator, generator_spec, generator});
    c.sections.push_back({SectionKind::generator_ema, generator_spec, generator_ema});
    if (!critic.values.empty()) c.sections.push_back({SectionKind::critic, critic_spec, critic});
    return c;
}

}  // namespace ganselect
