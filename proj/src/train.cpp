#include <cmath>
#include <string>

#include "ganselect/error.hpp"
#include "ganselect/eval.hpp"
#include "ganselect/optim.hpp"

namespace ganselect {

namespace {

// RNG stream ids derived from TrainConfig::seed.
enum Stream : std::uint64_t { init_generator = 1, init_critic = 2, batches = 3, steps = 4, snapshot = 5 };

class Trainer {
public:
    Trainer(const NetworkSpec& gen_spec, const NetworkSpec& critic_spec, const ObjectiveSpec& objective,
            const TrainConfig& config)
        : gen_spec_(gen_spec),
          critic_spec_(critic_spec),
          objective_(objective),
          config_(config),
          step_rng_(split_seed(config.seed, steps)) {
        gen_opt_.kind = critic_opt_.kind = config.optimizer;
        gen_opt_.beta1 = critic_opt_.beta1 = config.beta1;
        gen_opt_.beta2 = critic_opt_.beta2 = config.beta2;
    }

    double critic_step(const ParamVector& gen, std::vector<double>& critic, const Tensor& real, double lr) {
        const Tensor fake = generate(gen_spec_, gen, sample_latent({gen_spec_.input_dim}, real.rows(), step_rng_));
        const std::uint64_t seed = step_rng_.next_u64();
        double loss = 0.0;
        bool recorded = false;
        auto closure = [&](std::span<const double> params) {
            Rng rng(seed);
            ad::Tape tape;
            const BoundNetwork net = bind(tape, critic_spec_, ParamVector{{params.begin(), params.end()}}, true);
            const Critic f = [&](ad::Var x) { return net.apply(x); };
            const LossPair pair = compute_losses(objective_, f, tape.constant(real), tape.constant(fake), kernel_, rng,
                                                 LossSide::critic);
            if (!recorded) loss = pair.critic_loss.value().item();
            recorded = true;
            return net.gradient(tape.backward(pair.critic_loss));
        };
        apply(closure, critic, critic_opt_, lr);
        return loss;
    }

    double generator_step(std::vector<double>& gen, const ParamVector& critic, const Tensor& real, double lr) {
        const Tensor z = sample_latent({gen_spec_.input_dim}, real.rows(), step_rng_);
        const std::uint64_t seed = step_rng_.next_u64();
        auto loss_closure = [&](std::span<const double> params) {
            Rng rng(seed);
            ad::Tape tape;
            const BoundNetwork g = bind(tape, gen_spec_, ParamVector{{params.begin(), params.end()}}, true);
            std::optional<BoundNetwork> c;
            if (objective_.has_critic()) c = bind(tape, critic_spec_, critic, false);
            const Critic f = [&](ad::Var x) { return c->apply(x); };
            const ad::Var fake = g.apply(tape.constant(z));
            const LossPair pair =
                compute_losses(objective_, f, tape.constant(real), fake, kernel_, rng, LossSide::generator);
            return ValueAndGrad{pair.generator_loss.value().item(), g.gradient(tape.backward(pair.generator_loss))};
        };
        double loss = 0.0;
        bool recorded = false;
        auto closure = [&](std::span<const double> params) {
            ValueAndGrad vg = objective_.lambda_grad > 0.0
                                  ? add_grad_regularizer(loss_closure, params, objective_.lambda_grad)
                                  : loss_closure(params);
            if (!recorded) loss = vg.value;
            recorded = true;
            return std::move(vg.grad);
        };
        apply(closure, gen, gen_opt_, lr);
        return loss;
    }

    void set_kernel(const Tensor& real) {
        if (objective_.kind == ObjectiveKind::mmd) kernel_ = median_kernel(real, objective_.bandwidth_multipliers);
    }

private:
    template <typename Closure>
    void apply(Closure& closure, std::vector<double>& params, OptState& state, double lr) {
        if (config_.sam_targets == SamTargets::both) {
            sam_step(closure, params, state, lr, config_.rho_sam);
        } else {
            const auto g = closure(params);
            optimizer_step(params, g, state, lr);
        }
    }

    const NetworkSpec& gen_spec_;
    const NetworkSpec& critic_spec_;
    const ObjectiveSpec& objective_;
    const TrainConfig& config_;
    Rng step_rng_;
    KernelSpec kernel_;
    OptState gen_opt_;
    OptState critic_opt_;
};

}  // namespace

TrainedModel train(const NetworkSpec& gen_spec, const NetworkSpec& critic_spec, const ObjectiveSpec& objective,
                   const TrainConfig& config, const Tensor& data, const std::optional<GaussianMoments>& target) {
    gen_spec.validate();
    objective.validate();
    if (data.rank() != 2 || data.cols() != gen_spec.output_dim)
        throw ConfigError("train: generator output_dim " + std::to_string(gen_spec.output_dim) +
                          " does not match data dimension " + std::to_string(data.cols()));
    if (objective.has_critic()) {
        critic_spec.validate();
        if (critic_spec.input_dim != data.cols() || critic_spec.output_dim != 1)
            throw ConfigError("train: critic must map data rows to one value");
    }
    if (config.batch_size == 0 || config.batch_size > data.rows())
        throw ConfigError("train: batch_size must lie in [1, dataset rows]");

    TrainedModel model;
    model.generator_spec = gen_spec;
    model.critic_spec = critic_spec;
    {
        Rng rng(split_seed(config.seed, init_generator));
        model.generator = init_params(gen_spec, rng);
    }
    if (objective.has_critic()) {
        Rng rng(split_seed(config.seed, init_critic));
        model.critic = init_params(critic_spec, rng);
    }
    model.generator_ema = model.generator;
    if (config.epochs == 0) return model;

    Trainer trainer(gen_spec, critic_spec, objective, config);
    BatchSampler sampler(data, config.batch_size, split_seed(config.seed, batches));
    const std::size_t per_epoch = sampler.batches_per_epoch();
    const bool alternating = objective.has_critic() && config.n_critic > 0;

    Tensor snapshot_z;
    if (target && config.snapshot_samples > 0) {
        Rng rng(split_seed(config.seed, snapshot));
        snapshot_z = sample_latent({gen_spec.input_dim}, config.snapshot_samples, rng);
    }

    std::size_t batch_index = 0;
    std::size_t phase = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        HistoryRow row;
        row.epoch = epoch;
        double critic_sum = 0.0, gen_sum = 0.0;
        std::size_t critic_n = 0, gen_n = 0;
        for (std::size_t b = 0; b < per_epoch; ++b, ++batch_index) {
            const double lr = learning_rate(config, batch_index, per_epoch);
            row.lr = lr;
            const Tensor real = sampler.next();
            if (b == 0) trainer.set_kernel(real);
            try {
                bool gen_turn = true;
                if (alternating) {
                    critic_sum += trainer.critic_step(model.generator, model.critic.values, real, lr);
                    ++critic_n;
                    ++model.critic_steps;
                    gen_turn = ++phase == config.n_critic;
                }
                if (gen_turn) {
                    phase = 0;
                    gen_sum += trainer.generator_step(model.generator.values, model.critic, real, lr);
                    ++gen_n;
                    ++model.generator_steps;
                    if (epoch < config.ema_warmup_epochs) model.generator_ema = model.generator;
                    else model.generator_ema = ema_update(model.generator_ema, model.generator, config.ema_decay);
                }
            } catch (const NumericError& e) {
                throw NumericError("train: divergence at epoch " + std::to_string(epoch) + ", batch " +
                                       std::to_string(b) + ": " + e.what(),
                                   batch_index);
            }
        }
        if (epoch + 1 == config.ema_warmup_epochs) model.generator_ema = model.generator;
        row.critic_loss = critic_n ? critic_sum / static_cast<double>(critic_n) : 0.0;
        row.generator_loss = gen_n ? gen_sum / static_cast<double>(gen_n) : 0.0;
        row.gaussian_kl = std::nan("");
        if (!snapshot_z.empty()) row.gaussian_kl = gaussian_kl_or_inf(generate(gen_spec, model.generator, snapshot_z), *target);
        model.history.push_back(row);
    }
    return model;
}

}  // namespace ganselect
