#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ganselect/data.hpp"
#include "ganselect/models.hpp"
#include "ganselect/objectives.hpp"

namespace ganselect {

enum class OptimizerKind { sgd, adam };
enum class LrRule { fixed, linear_scale_128 };
enum class SamTargets { none, both };

std::string to_string(OptimizerKind k);
std::string to_string(LrRule r);
std::string to_string(SamTargets s);
OptimizerKind optimizer_kind_from_string(const std::string& s);
LrRule lr_rule_from_string(const std::string& s);
SamTargets sam_targets_from_string(const std::string& s);

struct OptState {
    OptimizerKind kind = OptimizerKind::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::vector<double> m;
    std::vector<double> v;
    std::size_t step_count = 0;
};

void sgd_step(std::vector<double>& params, std::span<const double> grads, double lr);
void adam_step(std::vector<double>& params, std::span<const double> grads, OptState& state, double lr);
/// Dispatches on state.kind.
void optimizer_step(std::vector<double>& params, std::span<const double> grads, OptState& state, double lr);

using GradClosure = std::function<std::vector<double>(std::span<const double>)>;

/// Sharpness-aware step: ascend to params + rho g/|g|, take the gradient there,
/// and apply the base optimizer at the original params. A zero gradient skips
/// the ascent. Returns the gradient that was applied.
std::vector<double> sam_step(const GradClosure& grad, std::vector<double>& params, OptState& state, double lr,
                             double rho);

struct TrainConfig {
    std::size_t batch_size = 128;
    double base_lr = 0.001;
    LrRule lr_rule = LrRule::linear_scale_128;
    std::size_t warmup_epochs_lr = 10;
    std::size_t epochs = 200;
    std::size_t n_critic = 5;
    double rho_sam = 0.0;
    SamTargets sam_targets = SamTargets::none;
    double ema_decay = 0.999;
    std::size_t ema_warmup_epochs = 20;
    std::uint64_t seed = 0;
    OptimizerKind optimizer = OptimizerKind::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    /// Generated rows used for the per-epoch Gaussian-KL snapshot; 0 disables it.
    std::size_t snapshot_samples = 2000;

    void validate() const;
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Protocol defaults per objective: wgan_div uses base lr 0.001 scaled by
/// |B|/128 with a 10-epoch ramp and 5 critic steps; rgan a fixed 0.0002 and
/// one critic step; js_gan/f_gan follow rgan; mmd has no critic.
TrainConfig default_train_config(ObjectiveKind kind);

/// Learning rate applied at the given zero-based batch index.
double learning_rate(const TrainConfig& config, std::size_t batch_index, std::size_t batches_per_epoch);

struct HistoryRow {
    std::size_t epoch = 0;
    double lr = 0.0;
    double critic_loss = 0.0;
    double generator_loss = 0.0;
    double gaussian_kl = 0.0;
};

struct TrainedModel {
    NetworkSpec generator_spec;
    NetworkSpec critic_spec;
    ParamVector generator;
    ParamVector generator_ema;
    ParamVector critic;
    std::vector<HistoryRow> history;
    std::size_t critic_steps = 0;
    std::size_t generator_steps = 0;

    Checkpoint checkpoint() const;
};

/// Alternating training. `target` enables the per-epoch Gaussian-KL snapshot.
TrainedModel train(const NetworkSpec& gen_spec, const NetworkSpec& critic_spec, const ObjectiveSpec& objective,
                   const TrainConfig& config, const Tensor& data,
                   const std::optional<GaussianMoments>& target = std::nullopt);

}  // namespace ganselect
