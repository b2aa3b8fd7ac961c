#pragma once

// Gradient, bound and toy-landscape checks shared by the unit and acceptance
// suites. Every oracle here is independent of the library code it checks:
// gradients are compared with central differences of loss values, f-GAN bounds
// with closed-form divergences on discrete distributions.

#include <cmath>
#include <cstdint>
#include <vector>

#include "ganselect/autodiff.hpp"
#include "ganselect/models.hpp"
#include "ganselect/objectives.hpp"
#include "ganselect/optim.hpp"
#include "testing.hpp"

namespace ganselect::testing {

struct GradCheck {
    double critic_rel = 0.0;
    double generator_rel = 0.0;
};

/// Small random instance: a 1-hidden-layer generator and critic with 4 units,
/// 6-row batches, nonzero biases. The critic loss is differentiated w.r.t. the
/// critic parameters, the generator loss (with the lambda_grad penalty when
/// set) w.r.t. the generator parameters.
inline GradCheck check_objective_gradients(const ObjectiveSpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    const NetworkSpec gs = generator_spec(2, 1, 2, 4);
    const NetworkSpec cs = critic_spec(2, 1, 4);
    ParamVector gp = init_params(gs, rng);
    ParamVector cp = init_params(cs, rng);
    for (double& v : gp.values) v += 0.1 * rng.normal();
    for (double& v : cp.values) v += 0.1 * rng.normal();
    const Tensor real = sample_latent({2}, 6, rng);
    const Tensor z = sample_latent({2}, 6, rng);
    const std::uint64_t noise_seed = rng.next_u64();
    const std::vector<double> multipliers = {0.5, 1.0, 2.0};
    const KernelSpec kernel = median_kernel(real, multipliers);

    GradCheck out;
    if (spec.has_critic()) {
        const Tensor fake = generate(gs, gp, z);
        auto eval = [&](std::span<const double> params, bool want_grad, std::vector<double>* grad) {
            Rng r(noise_seed);
            ad::Tape tape;
            const BoundNetwork net = bind(tape, cs, ParamVector{{params.begin(), params.end()}}, true);
            const Critic f = [&](ad::Var x) { return net.apply(x); };
            const LossPair pair =
                compute_losses(spec, f, tape.constant(real), tape.constant(fake), kernel, r, LossSide::critic);
            const double v = pair.critic_loss.value().item();
            if (want_grad) *grad = net.gradient(tape.backward(pair.critic_loss));
            return v;
        };
        std::vector<double> g;
        eval(cp.values, true, &g);
        const auto fd = central_diff([&](const std::vector<double>& p) { return eval(p, false, nullptr); }, cp.values);
        out.critic_rel = rel_err(g, fd);
    }

    const LossClosure loss = [&](std::span<const double> params) {
        Rng r(noise_seed);
        ad::Tape tape;
        const BoundNetwork g = bind(tape, gs, ParamVector{{params.begin(), params.end()}}, true);
        const BoundNetwork c = bind(tape, cs, cp, false);
        const Critic f = [&](ad::Var x) { return c.apply(x); };
        const ad::Var fake = g.apply(tape.constant(z));
        const LossPair pair = compute_losses(spec, f, tape.constant(real), fake, kernel, r, LossSide::generator);
        return ValueAndGrad{pair.generator_loss.value().item(), g.gradient(tape.backward(pair.generator_loss))};
    };
    auto regularized = [&](std::span<const double> params) {
        return add_grad_regularizer(loss, params, spec.lambda_grad);
    };
    const auto analytic = regularized(gp.values).grad;
    const auto fd = central_diff([&](const std::vector<double>& p) { return regularized(p).value; }, gp.values);
    out.generator_rel = rel_err(analytic, fd);
    return out;
}

/// Two-atom distributions on {0, 1}: p = (p0, 1 - p0) real, q = (q0, 1 - q0)
/// fake, realized exactly by row counts out of `rows`.
struct TwoAtom {
    std::size_t p0_count;
    std::size_t q0_count;
    std::size_t rows;
};

inline Tensor atoms(std::size_t zeros, std::size_t rows) {
    Tensor t(Shape{rows, 1});
    for (std::size_t i = zeros; i < rows; ++i) t.at(i, 0) = 1.0;
    return t;
}

/// Maximizes the f-GAN variational bound over a table critic V(0), V(1)
/// (written as a 1x1 affine map, which is exactly a table on {0, 1}) with
/// Adam until the step no longer changes the bound. Returns the bound.
inline double maximize_f_bound(FChoice f, const TwoAtom& d, std::size_t max_steps = 200000) {
    const Tensor real = atoms(d.p0_count, d.rows);
    const Tensor fake = atoms(d.q0_count, d.rows);
    auto eval = [&](const std::vector<double>& params, std::vector<double>* grad) {
        ad::Tape tape;
        const ad::Var w = tape.leaf(Tensor::matrix(1, 1, {params[0]}));
        const ad::Var b = tape.leaf(Tensor::matrix(1, 1, {params[1]}));
        const Critic critic = [&](ad::Var x) { return ad::matmul(x, w) + b; };
        const LossPair pair = f_gan_losses(critic, tape.constant(real), tape.constant(fake), f, LossSide::critic);
        const double bound = -pair.critic_loss.value().item();
        if (grad) {
            const auto g = tape.backward(pair.critic_loss);
            *grad = {g.at(w).item(), g.at(b).item()};
        }
        return bound;
    };
    std::vector<double> params = {0.0, 0.0};
    OptState state;
    double best = eval(params, nullptr);
    for (std::size_t step = 0; step < max_steps; ++step) {
        std::vector<double> g;
        eval(params, &g);
        adam_step(params, g, state, step < max_steps / 2 ? 0.01 : 0.001);
        best = eval(params, nullptr);
        if (std::abs(g[0]) + std::abs(g[1]) < 1e-10) break;
    }
    return best;
}

/// 1-D landscape with two equal-depth minima: a sharp one at x = -1 with
/// curvature 100 and a flat one at x = +1 with curvature 1, joined where the
/// two parabolas meet.
inline double two_minima_loss(double x) {
    const double sharp = 50.0 * (x + 1.0) * (x + 1.0);
    const double flat = 0.5 * (x - 1.0) * (x - 1.0);
    return std::min(sharp, flat);
}

inline double two_minima_grad(double x) {
    const double sharp = 50.0 * (x + 1.0) * (x + 1.0);
    const double flat = 0.5 * (x - 1.0) * (x - 1.0);
    return sharp < flat ? 100.0 * (x + 1.0) : (x - 1.0);
}

/// Gradient-flow basin of the flat minimum: everything outside the interval
/// where the sharp parabola is the lower branch, (-11/9, -9/11).
inline bool in_flat_basin(double x) { return x <= -11.0 / 9.0 || x >= -9.0 / 11.0; }

/// Runs SGD (rho = 0) or SAM-SGD from x0 and reports the basin of the final
/// iterate. A SAM iterate can come to rest at x_sharp + rho, where the ascent
/// step lands exactly on the sharp minimum; that point lies in the flat basin.
inline bool ends_in_flat_basin(double x0, double rho, double lr, std::size_t steps) {
    std::vector<double> x = {x0};
    OptState state;
    state.kind = OptimizerKind::sgd;
    const GradClosure grad = [](std::span<const double> p) { return std::vector<double>{two_minima_grad(p[0])}; };
    for (std::size_t i = 0; i < steps; ++i) {
        if (rho > 0.0) sam_step(grad, x, state, lr, rho);
        else optimizer_step(x, grad(x), state, lr);
        if (!std::isfinite(x[0])) return false;
    }
    return in_flat_basin(x[0]);
}

}  // namespace ganselect::testing
