#include <cmath>
#include <numbers>

#include "doctest.h"
#include "ganselect/error.hpp"
#include "ganselect/objectives.hpp"
#include "objective_checks.hpp"
#include "testing.hpp"

using namespace ganselect;
using ganselect::testing::integrate;

namespace {

Critic constant_critic(double c) {
    return [c](ad::Var x) {
        Tensor t(Shape{x.shape()[0], 1}, c);
        return x.tape->constant(std::move(t)) + ad::sum_cols(x) * 0.0;
    };
}

// f(x) = x . w for a fixed column w.
Critic linear_critic(ad::Tape& tape, std::vector<double> w) {
    const std::size_t d = w.size();
    const ad::Var wv = tape.constant(Tensor(Shape{d, 1}, std::move(w)));
    return [wv](ad::Var x) { return ad::matmul(x, wv); };
}

double brute_mmd(const Tensor& x, const Tensor& y, const KernelSpec& k) {
    auto kern = [&](const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
        double d2 = 0;
        for (std::size_t c = 0; c < a.cols(); ++c) d2 += (a.at(i, c) - b.at(j, c)) * (a.at(i, c) - b.at(j, c));
        double s = 0;
        for (double bw : k.bandwidths) s += std::exp(-d2 / (2 * bw * bw));
        return s / static_cast<double>(k.bandwidths.size());
    };
    const double m = static_cast<double>(x.rows()), n = static_cast<double>(y.rows());
    double sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.rows(); ++j)
            if (i != j) sxx += kern(x, i, x, j);
    for (std::size_t i = 0; i < y.rows(); ++i)
        for (std::size_t j = 0; j < y.rows(); ++j)
            if (i != j) syy += kern(y, i, y, j);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < y.rows(); ++j) sxy += kern(x, i, y, j);
    return sxx / (m * (m - 1)) + syy / (n * (n - 1)) - 2 * sxy / (m * n);
}

Tensor random_rows(std::size_t n, std::size_t d, Rng& rng, double shift = 0.0) {
    Tensor t(Shape{n, d});
    for (double& v : t.data()) v = rng.normal() + shift;
    return t;
}

}  // namespace

TEST_CASE("relax_likelihood") {
    Rng rng(1);
    const Tensor x = random_rows(5, 2, rng);
    CHECK(relax_likelihood(x, 0.0, rng) == x);
    CHECK_THROWS_AS(relax_likelihood(x, -0.1, rng), UsageError);

    const Tensor zeros(Shape{100000, 1});
    const Tensor y = relax_likelihood(zeros, 0.01, rng);
    double mean = 0, var = 0;
    for (double v : y.data()) mean += v / 1e5;
    for (double v : y.data()) var += (v - mean) * (v - mean) / (1e5 - 1);
    CHECK(std::abs(var - 0.01) <= 0.05 * 0.01);
}

TEST_CASE("js_gan examples") {
    ad::Tape tape;
    Rng rng(2);
    const ad::Var real = tape.constant(random_rows(4, 2, rng));
    const ad::Var fake = tape.constant(random_rows(4, 2, rng));
    const LossPair zero = js_gan_losses(constant_critic(0.0), real, fake);
    CHECK(zero.critic_loss.value().item() == doctest::Approx(2 * std::numbers::ln2).epsilon(1e-12));
    CHECK(zero.generator_loss.value().item() == doctest::Approx(std::numbers::ln2).epsilon(1e-12));

    // +20 on the real points, -20 on the fake ones.
    ad::Tape t2;
    const ad::Var r2 = t2.constant(Tensor(Shape{3, 1}, 1.0));
    const ad::Var f2 = t2.constant(Tensor(Shape{3, 1}, -1.0));
    const LossPair sep = js_gan_losses(linear_critic(t2, {20.0}), r2, f2);
    CHECK(sep.critic_loss.value().item() <= 1e-8);
}

TEST_CASE("js_gan optimal critic recovers 2 JS - 2 log 2") {
    // Real atoms: 3 x {0}, 1 x {1}; fake: 1 x {0}, 3 x {1}. The optimal
    // discriminator logit at each atom is log(p/q).
    const Tensor real = testing::atoms(3, 4);
    const Tensor fake = testing::atoms(1, 4);
    const double p[2] = {0.75, 0.25}, q[2] = {0.25, 0.75};
    ad::Tape tape;
    const double l0 = std::log(p[0] / q[0]), l1 = std::log(p[1] / q[1]);
    const ad::Var w = tape.constant(Tensor::matrix(1, 1, {l1 - l0}));
    const ad::Var b = tape.constant(Tensor::matrix(1, 1, {l0}));
    const Critic f = [&](ad::Var x) { return ad::matmul(x, w) + b; };
    const LossPair pair = js_gan_losses(f, tape.constant(real), tape.constant(fake));
    double js = 0;
    for (int i = 0; i < 2; ++i) {
        const double m = 0.5 * (p[i] + q[i]);
        js += 0.5 * p[i] * std::log(p[i] / m) + 0.5 * q[i] * std::log(q[i] / m);
    }
    CHECK(-pair.critic_loss.value().item() == doctest::Approx(2 * js - 2 * std::numbers::ln2).epsilon(1e-12));
}

TEST_CASE("f_gan examples") {
    ad::Tape tape;
    Rng rng(3);
    const ad::Var real = tape.constant(random_rows(4, 2, rng));
    const ad::Var fake = tape.constant(random_rows(4, 2, rng));
    const LossPair js = f_gan_losses(constant_critic(0.0), real, fake, FChoice::js);
    CHECK(std::abs(js.critic_loss.value().item()) <= 1e-15);
    const LossPair kl = f_gan_losses(constant_critic(1.0), real, fake, FChoice::kl);
    CHECK(std::abs(kl.critic_loss.value().item()) <= 1e-15);

    // Conjugate-of-activation shortcut agrees with the literal composition.
    for (FChoice f : {FChoice::kl, FChoice::reverse_kl, FChoice::js, FChoice::pearson})
        for (double v : {-3.0, -0.5, 0.0, 0.7, 2.5})
            CHECK(f_conjugate_of_activation(f, v) ==
                  doctest::Approx(f_conjugate(f, f_activation(f, v))).epsilon(1e-12));
    CHECK_THROWS_AS(f_conjugate(FChoice::js, 1.0), NumericError);
    CHECK_THROWS_AS(f_conjugate(FChoice::reverse_kl, 0.5), NumericError);
}

TEST_CASE("f_gan bound never exceeds the divergence on two atoms") {
    const testing::TwoAtom d{7, 2, 10};
    const double p[2] = {0.7, 0.3}, q[2] = {0.2, 0.8};
    for (FChoice f : {FChoice::kl, FChoice::js, FChoice::pearson, FChoice::reverse_kl}) {
        const double truth = f_divergence(f, p, q);
        const double bound = testing::maximize_f_bound(f, d, 20000);
        CHECK(bound <= truth + 1e-12);
        CHECK(bound >= 0.9 * truth);
    }
}

TEST_CASE("kl bound on 1-D Gaussians with a linear critic") {
    // N(1,1) vs N(0,1); expectations by quadrature. The bound for a linear
    // critic V(x) = a x + b is a + b - exp(b - 1 + a^2/2); its maximum is the
    // true KL 0.5 at a = 1, b = 0.5.
    auto phi = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2 * std::numbers::pi); };
    auto bound = [&](double a, double b) {
        const double real = integrate([&](double x) { return (a * x + b) * phi(x - 1); }, -12, 14);
        const double fake = integrate([&](double x) { return std::exp(a * x + b - 1) * phi(x); }, -14, 14);
        return real - fake;
    };
    // The library's pointwise conjugate reproduces the same number.
    auto library_bound = [&](double a, double b) {
        const double real =
            integrate([&](double x) { return f_activation(FChoice::kl, a * x + b) * phi(x - 1); }, -12, 14);
        const double fake =
            integrate([&](double x) { return f_conjugate_of_activation(FChoice::kl, a * x + b) * phi(x); }, -14, 14);
        return real - fake;
    };
    double best = -1e9;
    for (double a = 0.8; a <= 1.2; a += 0.05)
        for (double b = 0.3; b <= 0.7; b += 0.05) best = std::max(best, library_bound(a, b));
    CHECK(best <= 0.5 + 1e-9);
    CHECK(best >= 0.45);
    CHECK(library_bound(1.0, 0.5) == doctest::Approx(bound(1.0, 0.5)).epsilon(1e-9));
}

TEST_CASE("wgan_div examples") {
    ad::Tape tape;
    Rng rng(4);
    const ad::Var real = tape.constant(random_rows(5, 2, rng));
    const ad::Var fake = tape.constant(random_rows(5, 2, rng));
    Rng r1(9);
    const LossPair c = wgan_div_losses(constant_critic(3.0), real, fake, 2.0, 6.0, r1);
    CHECK(std::abs(c.critic_loss.value().item()) <= 1e-15);

    // Linear critic w = [1, 0] on a fixed 2-row batch:
    // mean f(fake) - mean f(real) + 2 |w|^6 = (0.5 - 2) + 2.
    ad::Tape t2;
    const ad::Var r2 = t2.constant(Tensor::matrix(2, 2, {1.0, 5.0, 3.0, -1.0}));
    const ad::Var f2 = t2.constant(Tensor::matrix(2, 2, {0.0, 2.0, 1.0, 7.0}));
    Rng r2rng(1);
    const LossPair lin = wgan_div_losses(linear_critic(t2, {1.0, 0.0}), r2, f2, 2.0, 6.0, r2rng);
    CHECK(lin.critic_loss.value().item() == doctest::Approx(0.5 - 2.0 + 2.0).epsilon(1e-12));
    CHECK(lin.generator_loss.value().item() == doctest::Approx(-0.5).epsilon(1e-12));

    // k = 0 leaves the plain dual difference.
    ad::Tape t3;
    const Tensor a = random_rows(6, 3, rng), b = random_rows(6, 3, rng);
    const std::vector<double> w = {0.3, -1.2, 0.8};
    Rng r3(5);
    const LossPair plain = wgan_div_losses(linear_critic(t3, w), t3.constant(a), t3.constant(b), 0.0, 6.0, r3);
    double ref = 0;
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t c2 = 0; c2 < 3; ++c2) ref += w[c2] * (b.at(i, c2) - a.at(i, c2)) / 6.0;
    CHECK(plain.critic_loss.value().item() == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("rgan examples") {
    ad::Tape tape;
    Rng rng(6);
    const ad::Var real = tape.constant(random_rows(4, 2, rng));
    const ad::Var fake = tape.constant(random_rows(4, 2, rng));
    const LossPair c = rgan_losses(constant_critic(1.5), real, fake);
    CHECK(c.critic_loss.value().item() == doctest::Approx(std::numbers::ln2).epsilon(1e-12));
    CHECK(c.generator_loss.value().item() == doctest::Approx(std::numbers::ln2).epsilon(1e-12));

    ad::Tape t2;
    const ad::Var r2 = t2.constant(Tensor(Shape{3, 1}, 1.0));
    const ad::Var f2 = t2.constant(Tensor(Shape{3, 1}, 0.0));
    const LossPair sat = rgan_losses(linear_critic(t2, {20.0}), r2, f2);
    CHECK(sat.critic_loss.value().item() <= 1e-8);
    CHECK(sat.generator_loss.value().item() == doctest::Approx(20.0).epsilon(1e-8));

    // Random 4-row batch, linear critic, scalar reference.
    ad::Tape t3;
    const Tensor a = random_rows(4, 2, rng), b = random_rows(4, 2, rng);
    const std::vector<double> w = {0.7, -0.4};
    const LossPair lin = rgan_losses(linear_critic(t3, w), t3.constant(a), t3.constant(b));
    double cref = 0, gref = 0;
    for (std::size_t i = 0; i < 4; ++i) {
        const double d = w[0] * (a.at(i, 0) - b.at(i, 0)) + w[1] * (a.at(i, 1) - b.at(i, 1));
        cref += -std::log(1 / (1 + std::exp(-d))) / 4;
        gref += -std::log(1 / (1 + std::exp(d))) / 4;
    }
    CHECK(lin.critic_loss.value().item() == doctest::Approx(cref).epsilon(1e-12));
    CHECK(lin.generator_loss.value().item() == doctest::Approx(gref).epsilon(1e-12));

    ad::Tape t4;
    CHECK_THROWS_AS(rgan_losses(constant_critic(0), t4.constant(Tensor(Shape{3, 2})), t4.constant(Tensor(Shape{2, 2}))),
                    UsageError);
}

TEST_CASE("mmd2_unbiased against the brute-force double loop") {
    Rng rng(7);
    for (std::size_t m : {2, 5, 17, 64}) {
        const Tensor x = random_rows(m, 2, rng), y = random_rows(m + 3 > 64 ? 64 : m + 3, 2, rng, 0.5);
        const KernelSpec k{{0.5, 1.0, 2.0}};
        const double ref = brute_mmd(x, y, k);
        ad::Tape tape;
        CHECK(std::abs(mmd2_unbiased(tape.constant(x), tape.constant(y), k).value().item() - ref) <= 1e-12);
        CHECK(std::abs(mmd2_unbiased(x, y, k) - ref) <= 1e-12);
    }

    // X = {0}, {0} and Y = {0}, {1} in 1-D, sigma = 1.
    const Tensor x = Tensor::matrix(2, 1, {0.0, 0.0});
    const Tensor y = Tensor::matrix(2, 1, {0.0, 1.0});
    const KernelSpec k1{{1.0}};
    const double e = std::exp(-0.5);
    CHECK(mmd2_unbiased(x, y, k1) == doctest::Approx(1.0 + e - (2.0 + 2.0 * e) / 2.0).epsilon(1e-14));
    CHECK(mmd2_unbiased(x, y, k1) == doctest::Approx(brute_mmd(x, y, k1)).epsilon(1e-14));

    CHECK_THROWS_AS(mmd2_unbiased(Tensor::matrix(1, 1, {0.0}), y, k1), UsageError);
}

TEST_CASE("mmd2_unbiased is invariant under row permutation") {
    Rng rng(8);
    const Tensor x = random_rows(12, 2, rng), y = random_rows(9, 2, rng);
    Tensor xp(x.shape()), yp(y.shape());
    for (std::size_t i = 0; i < 12; ++i)
        for (std::size_t c = 0; c < 2; ++c) xp.at(i, c) = x.at((i * 5) % 12, c);
    for (std::size_t i = 0; i < 9; ++i)
        for (std::size_t c = 0; c < 2; ++c) yp.at(i, c) = y.at(8 - i, c);
    const KernelSpec k{{1.0, 2.0}};
    CHECK(mmd2_unbiased(xp, yp, k) == doctest::Approx(mmd2_unbiased(x, y, k)).epsilon(1e-12));
}

TEST_CASE("mmd2_unbiased concentrates for equal distributions") {
    int within = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        Rng rng(100 + s);
        const Tensor x = random_rows(500, 2, rng), y = random_rows(500, 2, rng);
        const std::vector<double> mult = {0.5, 1.0, 2.0, 4.0};
        within += std::abs(mmd2_unbiased(x, y, median_kernel(x, mult))) <= 4.0 / std::sqrt(500.0);
    }
    CHECK(within == 20);
}

TEST_CASE("median bandwidths") {
    const Tensor x = Tensor::matrix(3, 1, {0.0, 1.0, 3.0});
    CHECK(median_pairwise_distance(x) == 2.0);
    const std::vector<double> mult = {0.5, 2.0};
    const KernelSpec k = median_kernel(x, mult);
    CHECK(k.bandwidths == std::vector<double>{1.0, 4.0});
}

TEST_CASE("gradient regularizer on a quadratic") {
    // L = a psi^2 / 2 with a = 2, psi = 1: value 1 + lambda 4, gradient 2 + 2 lambda a^2 psi.
    const LossClosure quad = [](std::span<const double> p) {
        return ValueAndGrad{p[0] * p[0], {2.0 * p[0]}};
    };
    const std::vector<double> psi = {1.0};
    const ValueAndGrad r = add_grad_regularizer(quad, psi, 0.001);
    CHECK(r.value == doctest::Approx(1.004).epsilon(1e-12));
    CHECK(r.grad[0] == doctest::Approx(2.008).epsilon(1e-9));
    const ValueAndGrad off = add_grad_regularizer(quad, psi, 0.0);
    CHECK(off.value == 1.0);
    CHECK(off.grad[0] == 2.0);
    CHECK_THROWS_AS(add_grad_regularizer(quad, psi, -1.0), UsageError);
}

TEST_CASE("objective gradients match central differences") {
    std::vector<ObjectiveSpec> specs;
    for (ObjectiveKind k : {ObjectiveKind::js_gan, ObjectiveKind::f_gan, ObjectiveKind::wgan_div, ObjectiveKind::rgan,
                            ObjectiveKind::mmd}) {
        ObjectiveSpec s;
        s.kind = k;
        specs.push_back(s);
    }
    ObjectiveSpec reg;
    reg.lambda_grad = 0.5;
    reg.sigma2_lik = 0.01;
    specs.push_back(reg);
    for (const auto& s : specs)
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto r = testing::check_objective_gradients(s, seed);
            CHECK(r.critic_rel <= 1e-4);
            CHECK(r.generator_rel <= 1e-4);
        }
}

TEST_CASE("objective spec validation") {
    ObjectiveSpec s;
    CHECK_NOTHROW(s.validate());
    s.sigma2_lik = -1;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    CHECK(objective_kind_from_string("wgan_div") == ObjectiveKind::wgan_div);
    CHECK(to_string(FChoice::reverse_kl) == "reverse_kl");
    CHECK_THROWS_AS(objective_kind_from_string("nope"), ConfigError);
}
