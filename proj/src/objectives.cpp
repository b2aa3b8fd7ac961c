#include "ganselect/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ganselect/error.hpp"

namespace ganselect {

using ad::Var;

std::string to_string(ObjectiveKind k) {
    switch (k) {
        case ObjectiveKind::js_gan: return "js_gan";
        case ObjectiveKind::f_gan: return "f_gan";
        case ObjectiveKind::wgan_div: return "wgan_div";
        case ObjectiveKind::rgan: return "rgan";
        case ObjectiveKind::mmd: return "mmd";
    }
    return "?";
}

std::string to_string(FChoice f) {
    switch (f) {
        case FChoice::kl: return "kl";
        case FChoice::reverse_kl: return "reverse_kl";
        case FChoice::js: return "js";
        case FChoice::pearson: return "pearson";
    }
    return "?";
}

ObjectiveKind objective_kind_from_string(const std::string& s) {
    for (auto k : {ObjectiveKind::js_gan, ObjectiveKind::f_gan, ObjectiveKind::wgan_div, ObjectiveKind::rgan,
                   ObjectiveKind::mmd})
        if (to_string(k) == s) return k;
    throw ConfigError("unknown objective kind '" + s + "'");
}

FChoice f_choice_from_string(const std::string& s) {
    for (auto f : {FChoice::kl, FChoice::reverse_kl, FChoice::js, FChoice::pearson})
        if (to_string(f) == s) return f;
    throw ConfigError("unknown f-divergence '" + s + "'");
}

void ObjectiveSpec::validate() const {
    if (!(sigma2_lik >= 0.0)) throw ConfigError("objective.sigma2_lik must be >= 0");
    if (!(lambda_grad >= 0.0)) throw ConfigError("objective.lambda_grad must be >= 0");
    if (kind == ObjectiveKind::wgan_div && !(wgan_k >= 0.0 && wgan_p > 0.0))
        throw ConfigError("objective.wgan_k must be >= 0 and objective.wgan_p > 0");
    if (kind == ObjectiveKind::mmd) {
        if (bandwidth_multipliers.empty()) throw ConfigError("objective.bandwidth_multipliers must be non-empty");
        for (double b : bandwidth_multipliers)
            if (!(b > 0.0)) throw ConfigError("objective.bandwidth_multipliers must be positive");
    }
}

Tensor relax_likelihood(const Tensor& fake, double sigma2_lik, Rng& rng) {
    if (!(sigma2_lik >= 0.0)) throw UsageError("relax_likelihood: negative variance");
    if (sigma2_lik == 0.0) return fake;
    const double sd = std::sqrt(sigma2_lik);
    Tensor out = fake;
    for (double& v : out.data()) v += sd * rng.normal();
    return out;
}

Var relax_likelihood(Var fake, double sigma2_lik, Rng& rng) {
    if (!(sigma2_lik >= 0.0)) throw UsageError("relax_likelihood: negative variance");
    if (sigma2_lik == 0.0) return fake;
    const double sd = std::sqrt(sigma2_lik);
    Tensor noise(fake.shape());
    for (double& v : noise.data()) v = sd * rng.normal();
    return fake + fake.tape->constant(std::move(noise));
}

namespace {

void check_rows(Var real, Var fake, const char* who) {
    if (real.tape != fake.tape) throw UsageError(std::string(who) + ": real and fake live on different tapes");
    if (real.shape().size() != 2 || fake.shape().size() != 2 || real.shape()[1] != fake.shape()[1])
        throw ConfigError(std::string(who) + ": batches must be [n, D] with equal D, got " + shape_str(real.shape()) +
                          " and " + shape_str(fake.shape()));
}

bool wants_critic(LossSide s) { return s != LossSide::generator; }
bool wants_generator(LossSide s) { return s != LossSide::critic; }

// g_f(V) as tape ops.
Var activation_node(FChoice f, Var v) {
    switch (f) {
        case FChoice::kl:
        case FChoice::pearson: return v;
        case FChoice::reverse_kl: return -ad::exp(-v);
        case FChoice::js: return std::numbers::ln2 - ad::softplus(-v);
    }
    return v;
}

// f*(g_f(V)) as tape ops, in a form that stays finite where the composition
// is finite in exact arithmetic.
Var conjugate_of_activation(FChoice f, Var v) {
    switch (f) {
        case FChoice::kl: return ad::exp(v - 1.0);
        // -1 - log(exp(-v))
        case FChoice::reverse_kl: return v - 1.0;
        // -log(2 - 2 sigmoid(v)) = softplus(v) - log 2
        case FChoice::js: return ad::softplus(v) - std::numbers::ln2;
        case FChoice::pearson: return v * v * 0.25 + v;
    }
    return v;
}

}  // namespace

double f_activation(FChoice f, double v) {
    switch (f) {
        case FChoice::kl:
        case FChoice::pearson: return v;
        case FChoice::reverse_kl: return -std::exp(-v);
        case FChoice::js: return std::numbers::ln2 - std::log1p(std::exp(-v));
    }
    return v;
}

double f_conjugate(FChoice f, double t) {
    switch (f) {
        case FChoice::kl: return std::exp(t - 1.0);
        case FChoice::reverse_kl:
            if (!(t < 0.0)) throw NumericError("f_conjugate: reverse_kl conjugate needs t < 0", 0);
            return -1.0 - std::log(-t);
        case FChoice::js:
            if (!(t < std::numbers::ln2)) throw NumericError("f_conjugate: js conjugate needs t < log 2", 0);
            return -std::log(2.0 - std::exp(t));
        case FChoice::pearson: return t * t / 4.0 + t;
    }
    return t;
}

double f_conjugate_of_activation(FChoice f, double v) {
    switch (f) {
        case FChoice::kl: return std::exp(v - 1.0);
        case FChoice::reverse_kl: return v - 1.0;
        case FChoice::js: return (v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v))) - std::numbers::ln2;
        case FChoice::pearson: return v * v * 0.25 + v;
    }
    return v;
}

double f_divergence(FChoice f, std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw UsageError("f_divergence: size mismatch");
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pi = p[i], qi = q[i];
        switch (f) {
            case FChoice::kl:
                if (pi > 0.0) d += pi * std::log(pi / qi);
                break;
            case FChoice::reverse_kl:
                if (qi > 0.0) d += qi * std::log(qi / pi);
                break;
            case FChoice::js: {
                const double m = 0.5 * (pi + qi);
                if (pi > 0.0) d += pi * std::log(pi / m);
                if (qi > 0.0) d += qi * std::log(qi / m);
                break;
            }
            case FChoice::pearson:
                d += (pi - qi) * (pi - qi) / qi;
                break;
        }
    }
    return d;
}

LossPair js_gan_losses(const Critic& critic, Var real, Var fake, LossSide side) {
    check_rows(real, fake, "js_gan");
    LossPair out;
    const Var f_fake = critic(fake);
    if (wants_critic(side)) {
        const Var f_real = critic(real);
        // -log sigmoid(a) = softplus(-a), -log(1 - sigmoid(a)) = softplus(a)
        out.critic_loss = ad::mean(ad::softplus(-f_real)) + ad::mean(ad::softplus(f_fake));
    }
    if (wants_generator(side)) out.generator_loss = ad::mean(ad::softplus(-f_fake));
    return out;
}

LossPair f_gan_losses(const Critic& critic, Var real, Var fake, FChoice f, LossSide side) {
    check_rows(real, fake, "f_gan");
    LossPair out;
    const Var fake_term = ad::mean(conjugate_of_activation(f, critic(fake)));
    if (wants_critic(side)) {
        const Var bound = ad::mean(activation_node(f, critic(real))) - fake_term;
        out.critic_loss = -bound;
    }
    if (wants_generator(side)) out.generator_loss = -fake_term;
    return out;
}

LossPair wgan_div_losses(const Critic& critic, Var real, Var fake, double k, double p, Rng& rng, LossSide side) {
    check_rows(real, fake, "wgan_div");
    if (real.shape()[0] != fake.shape()[0]) throw UsageError("wgan_div: real and fake batches differ in size");
    if (!(k >= 0.0) || !(p > 0.0)) throw UsageError("wgan_div: need k >= 0 and p > 0");
    LossPair out;
    const Var mean_fake = ad::mean(critic(fake));
    if (wants_critic(side)) {
        Var loss = mean_fake - ad::mean(critic(real));
        const Tensor& r = real.value();
        const Tensor& g = fake.value();
        Tensor mixed(r.shape());
        for (std::size_t i = 0; i < r.rows(); ++i) {
            const double u = rng.uniform();
            for (std::size_t c = 0; c < r.cols(); ++c) mixed.at(i, c) = u * r.at(i, c) + (1.0 - u) * g.at(i, c);
        }
        if (k > 0.0) {
            ad::Tape& tape = *real.tape;
            const Var x_hat = tape.leaf(std::move(mixed), false);
            const Var grad = tape.input_grad(critic(x_hat), x_hat);
            const Var norm_p = ad::pow(ad::sum_cols(grad * grad), p / 2.0);
            loss = loss + ad::mean(norm_p) * k;
        }
        out.critic_loss = loss;
    }
    if (wants_generator(side)) out.generator_loss = -mean_fake;
    return out;
}

LossPair rgan_losses(const Critic& critic, Var real, Var fake, LossSide side) {
    check_rows(real, fake, "rgan");
    if (real.shape()[0] != fake.shape()[0]) throw UsageError("rgan: real and fake batches differ in size");
    LossPair out;
    const Var diff = critic(real) - critic(fake);
    if (wants_critic(side)) out.critic_loss = ad::mean(ad::softplus(-diff));
    if (wants_generator(side)) out.generator_loss = ad::mean(ad::softplus(diff));
    return out;
}

namespace {

void check_kernel(const KernelSpec& kernel) {
    if (kernel.bandwidths.empty()) throw UsageError("mmd: kernel needs at least one bandwidth");
    for (double b : kernel.bandwidths)
        if (!(b > 0.0)) throw UsageError("mmd: bandwidths must be positive");
}

Var sq_dists(Var a, Var b) {
    ad::Tape& t = *a.tape;
    const std::size_t d = a.shape()[1];
    const Var ones = t.constant(Tensor(Shape{1, d}, 1.0));
    const Var a2 = ad::sum_cols(a * a);                     // [m, 1]
    const Var b2 = ad::matmul(ones, b * b, false, true);    // [1, n]
    return (a2 + b2) - ad::matmul(a, b, false, true) * 2.0;  // [m, n]
}

Var kernel_matrix(Var a, Var b, const KernelSpec& kernel) {
    const Var d2 = sq_dists(a, b);
    Var k;
    for (double s : kernel.bandwidths) {
        const Var term = ad::exp(d2 * (-1.0 / (2.0 * s * s)));
        k = k.valid() ? k + term : term;
    }
    return k * (1.0 / static_cast<double>(kernel.bandwidths.size()));
}

Var off_diagonal_sum(Var k) {
    const std::size_t n = k.shape()[0];
    Tensor mask(Shape{n, n}, 1.0);
    for (std::size_t i = 0; i < n; ++i) mask.at(i, i) = 0.0;
    return ad::sum(k * k.tape->constant(std::move(mask)));
}

double kernel_value(const KernelSpec& kernel, const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
    double d2 = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
        const double d = a.at(i, c) - b.at(j, c);
        d2 += d * d;
    }
    double k = 0.0;
    for (double s : kernel.bandwidths) k += std::exp(-d2 / (2.0 * s * s));
    return k / static_cast<double>(kernel.bandwidths.size());
}

}  // namespace

Var mmd2_unbiased(Var x, Var y, const KernelSpec& kernel) {
    check_rows(x, y, "mmd2_unbiased");
    check_kernel(kernel);
    const double m = static_cast<double>(x.shape()[0]);
    const double n = static_cast<double>(y.shape()[0]);
    if (m < 2 || n < 2) throw UsageError("mmd2_unbiased: both samples need at least two rows");
    const Var kxx = off_diagonal_sum(kernel_matrix(x, x, kernel)) * (1.0 / (m * (m - 1.0)));
    const Var kyy = off_diagonal_sum(kernel_matrix(y, y, kernel)) * (1.0 / (n * (n - 1.0)));
    const Var kxy = ad::sum(kernel_matrix(x, y, kernel)) * (2.0 / (m * n));
    return kxx + kyy - kxy;
}

double mmd2_unbiased(const Tensor& x, const Tensor& y, const KernelSpec& kernel) {
    check_kernel(kernel);
    if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.cols()) throw ConfigError("mmd2_unbiased: shape mismatch");
    const std::size_t m = x.rows(), n = y.rows();
    if (m < 2 || n < 2) throw UsageError("mmd2_unbiased: both samples need at least two rows");
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) sxx += kernel_value(kernel, x, i, x, j);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) syy += kernel_value(kernel, y, i, y, j);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) sxy += kernel_value(kernel, x, i, y, j);
    const double dm = static_cast<double>(m), dn = static_cast<double>(n);
    return 2.0 * sxx / (dm * (dm - 1.0)) + 2.0 * syy / (dn * (dn - 1.0)) - 2.0 * sxy / (dm * dn);
}

double median_pairwise_distance(const Tensor& x) {
    const std::size_t n = x.rows();
    if (n < 2) throw UsageError("median_pairwise_distance: need at least two rows");
    std::vector<double> d;
    d.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < x.cols(); ++c) s += (x.at(i, c) - x.at(j, c)) * (x.at(i, c) - x.at(j, c));
            d.push_back(std::sqrt(s));
        }
    const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    double med = *mid;
    if (d.size() % 2 == 0) med = 0.5 * (med + *std::max_element(d.begin(), mid));
    return med;
}

KernelSpec median_kernel(const Tensor& real, std::span<const double> multipliers) {
    double med = median_pairwise_distance(real);
    if (!(med > 0.0)) med = 1.0;
    KernelSpec k;
    for (double m : multipliers) k.bandwidths.push_back(m * med);
    return k;
}

LossPair compute_losses(const ObjectiveSpec& spec, const Critic& critic, Var real, Var fake, const KernelSpec& kernel,
                        Rng& rng, LossSide side) {
    const Var noisy = relax_likelihood(fake, spec.sigma2_lik, rng);
    switch (spec.kind) {
        case ObjectiveKind::js_gan: return js_gan_losses(critic, real, noisy, side);
        case ObjectiveKind::f_gan: return f_gan_losses(critic, real, noisy, spec.f_choice, side);
        case ObjectiveKind::wgan_div: return wgan_div_losses(critic, real, noisy, spec.wgan_k, spec.wgan_p, rng, side);
        case ObjectiveKind::rgan: return rgan_losses(critic, real, noisy, side);
        case ObjectiveKind::mmd: {
            LossPair out;
            if (wants_generator(side)) out.generator_loss = mmd2_unbiased(real, noisy, kernel);
            return out;
        }
    }
    throw UsageError("compute_losses: unknown objective");
}

ValueAndGrad add_grad_regularizer(const LossClosure& loss, std::span<const double> params, double lambda_grad) {
    if (!(lambda_grad >= 0.0)) throw UsageError("add_grad_regularizer: lambda_grad must be >= 0");
    ValueAndGrad base = loss(params);
    if (lambda_grad == 0.0) return base;

    double g2 = 0.0, p2 = 0.0;
    for (double g : base.grad) g2 += g * g;
    for (double p : params) p2 += p * p;
    ValueAndGrad out{base.value + lambda_grad * g2, base.grad};
    if (g2 == 0.0) return out;

    const double eps = std::sqrt(0x1.0p-52) * (1.0 + std::sqrt(p2));
    const auto grad_fn = [&](std::span<const double> q) { return loss(q).grad; };
    const auto hg = ad::hvp_findiff(grad_fn, params, base.grad, eps);
    for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += 2.0 * lambda_grad * hg[i];
    return out;
}

}  // namespace ganselect
