#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ganselect/autodiff.hpp"
#include "ganselect/rng.hpp"
#include "ganselect/tensor.hpp"

namespace ganselect {

enum class ObjectiveKind { js_gan, f_gan, wgan_div, rgan, mmd };
enum class FChoice { kl, reverse_kl, js, pearson };

std::string to_string(ObjectiveKind k);
std::string to_string(FChoice f);
ObjectiveKind objective_kind_from_string(const std::string& s);
FChoice f_choice_from_string(const std::string& s);

/// Equal-weight mixture of RBF kernels exp(-|x-y|^2 / (2 sigma^2)).
struct KernelSpec {
    std::vector<double> bandwidths;
};

struct ObjectiveSpec {
    ObjectiveKind kind = ObjectiveKind::wgan_div;
    FChoice f_choice = FChoice::js;
    /// MMD bandwidths as multiples of the median pairwise distance of the real batch.
    std::vector<double> bandwidth_multipliers = {0.5, 1.0, 2.0, 4.0};
    double wgan_k = 2.0;
    double wgan_p = 6.0;
    double sigma2_lik = 0.0;
    double lambda_grad = 0.0;

    void validate() const;
    bool has_critic() const noexcept { return kind != ObjectiveKind::mmd; }

    friend bool operator==(const ObjectiveSpec&, const ObjectiveSpec&) = default;
};

/// Maps a batch node [n, D] to one value per row [n, 1].
using Critic = std::function<ad::Var(ad::Var)>;

/// critic_loss is invalid for objectives without a critic (mmd) or when
/// only the generator side was requested.
struct LossPair {
    ad::Var critic_loss;
    ad::Var generator_loss;
};

enum class LossSide { both, critic, generator };

/// fake + N(0, sigma2 I). Training-time only.
Tensor relax_likelihood(const Tensor& fake, double sigma2_lik, Rng& rng);
ad::Var relax_likelihood(ad::Var fake, double sigma2_lik, Rng& rng);

LossPair js_gan_losses(const Critic& critic, ad::Var real, ad::Var fake, LossSide side = LossSide::both);

/// Output activation g_f and Fenchel conjugate f* of the f-GAN families.
double f_activation(FChoice f, double v);
double f_conjugate(FChoice f, double t);
/// f*(g_f(v)), written to stay finite wherever the composition is.
double f_conjugate_of_activation(FChoice f, double v);
/// True f-divergence D_f(p || q) = sum_i q_i f(p_i / q_i) for discrete distributions.
double f_divergence(FChoice f, std::span<const double> p, std::span<const double> q);

LossPair f_gan_losses(const Critic& critic, ad::Var real, ad::Var fake, FChoice f, LossSide side = LossSide::both);

LossPair wgan_div_losses(const Critic& critic, ad::Var real, ad::Var fake, double k, double p, Rng& rng,
                         LossSide side = LossSide::both);

LossPair rgan_losses(const Critic& critic, ad::Var real, ad::Var fake, LossSide side = LossSide::both);

/// Unbiased MMD^2 estimate; differentiable in both arguments.
ad::Var mmd2_unbiased(ad::Var x, ad::Var y, const KernelSpec& kernel);
/// Same estimator without a tape.
double mmd2_unbiased(const Tensor& x, const Tensor& y, const KernelSpec& kernel);

double median_pairwise_distance(const Tensor& x);
KernelSpec median_kernel(const Tensor& real, std::span<const double> multipliers);

/// Dispatches on spec.kind. Fake samples are relaxed with sigma2_lik noise
/// first; real samples are never perturbed.
LossPair compute_losses(const ObjectiveSpec& spec, const Critic& critic, ad::Var real, ad::Var fake,
                        const KernelSpec& kernel, Rng& rng, LossSide side = LossSide::both);

struct ValueAndGrad {
    double value = 0.0;
    std::vector<double> grad;
};

/// Loss as a function of flat generator parameters. Must be deterministic.
using LossClosure = std::function<ValueAndGrad(std::span<const double>)>;

/// L + lambda |grad L|^2, with gradient g + 2 lambda H g. The Hessian-vector
/// product uses central differences with step sqrt(2^-52) (1 + |params|).
ValueAndGrad add_grad_regularizer(const LossClosure& loss, std::span<const double> params, double lambda_grad);

}  // namespace ganselect
