#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "ganselect/error.hpp"
#include "ganselect/eval.hpp"
#include "testing.hpp"

using namespace ganselect;

namespace {

// Two-point 1-D sample whose moments (with 1/(n-1)) are exactly (mu, var).
Tensor two_point(double mu, double var) {
    const double c = std::sqrt(var / 2.0);
    return Tensor::matrix(2, 1, {mu - c, mu + c});
}

double log_normal_pdf(double x, double mu, double var) {
    return -0.5 * std::log(2 * std::numbers::pi * var) - 0.5 * (x - mu) * (x - mu) / var;
}

Tensor normal_rows(std::size_t n, std::size_t d, Rng& rng, double shift0 = 0.0) {
    Tensor t(Shape{n, d});
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) t.at(r, c) = rng.normal() + (c == 0 ? shift0 : 0.0);
    return t;
}

}  // namespace

TEST_CASE("gaussian_kl examples") {
    const Tensor x = Tensor::matrix(3, 2, {1.0, 0.0, -1.0, 0.0, 0.0, 0.0});
    // Moments: mean 0, cov diag(1, 0) -> singular.
    CHECK_THROWS_AS(gaussian_kl(x, std::vector<double>{0, 0}, std::vector<double>{1, 0, 0, 1}), NumericError);
    CHECK(std::isinf(gaussian_kl_or_inf(x, GaussianMoments{{0, 0}, {1, 0, 0, 1}})));

    // Exact (0, I) moments.
    const double s = std::sqrt(1.5);
    const Tensor e = Tensor::matrix(4, 2, {s, 0, -s, 0, 0, s, 0, -s});
    CHECK(std::abs(gaussian_kl(e, std::vector<double>{0, 0}, std::vector<double>{1, 0, 0, 1})) <= 1e-12);

    CHECK(gaussian_kl(two_point(1, 1), std::vector<double>{0}, std::vector<double>{1}) ==
          doctest::Approx(0.5).epsilon(1e-12));
    CHECK(gaussian_kl(two_point(0, 4), std::vector<double>{0}, std::vector<double>{1}) ==
          doctest::Approx(0.5 * (4 - 1 + std::log(0.25))).epsilon(1e-12));
}

TEST_CASE("gaussian_kl matches numerical integration in 1-D") {
    struct Case {
        double mf, vf, mt, vt;
    };
    const Case cases[] = {{1, 1, 0, 1}, {0, 4, 0, 1}, {0.3, 0.5, -0.2, 2.0}, {2, 0.25, 0, 1}, {-1, 3, 0.5, 0.7}};
    for (const Case& c : cases) {
        const double sd = std::sqrt(c.vf);
        const double oracle = testing::integrate(
            [&](double x) {
                const double lp = log_normal_pdf(x, c.mf, c.vf);
                return std::exp(lp) * (lp - log_normal_pdf(x, c.mt, c.vt));
            },
            c.mf - 14 * sd, c.mf + 14 * sd, 400000);
        const double kl = gaussian_kl(two_point(c.mf, c.vf), std::vector<double>{c.mt}, std::vector<double>{c.vt});
        CHECK(std::abs(kl - oracle) <= 1e-6);
    }
}

TEST_CASE("frechet_distance") {
    Rng rng(1);
    const Tensor a = normal_rows(200, 2, rng);
    CHECK(std::abs(frechet_distance(a, a)) <= 1e-10);

    // Equal covariances, means differing by (3, 4).
    Tensor b = a;
    for (std::size_t r = 0; r < b.rows(); ++r) {
        b.at(r, 0) += 3.0;
        b.at(r, 1) += 4.0;
    }
    CHECK(frechet_distance(a, b) == doctest::Approx(25.0).epsilon(1e-10));

    // Scalar formula (mu_a - mu_b)^2 + (sd_a - sd_b)^2 in 1-D.
    CHECK(frechet_distance(two_point(0, 1), two_point(0, 4)) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(frechet_distance(two_point(0, 1), two_point(0, 2)) == doctest::Approx(3 - 2 * std::sqrt(2.0)).epsilon(1e-10));
    const Tensor c = normal_rows(50, 1, rng), d = normal_rows(70, 1, rng, 0.4);
    auto moments = [](const Tensor& t) {
        double m = 0, v = 0;
        for (double x : t.data()) m += x / static_cast<double>(t.size());
        for (double x : t.data()) v += (x - m) * (x - m) / static_cast<double>(t.size() - 1);
        return std::pair{m, v};
    };
    const auto [mc, vc] = moments(c);
    const auto [md, vd] = moments(d);
    const double ref = (mc - md) * (mc - md) + (std::sqrt(vc) - std::sqrt(vd)) * (std::sqrt(vc) - std::sqrt(vd));
    CHECK(std::abs(frechet_distance(c, d) - ref) <= 1e-10);
    CHECK(frechet_distance(c, d) == doctest::Approx(frechet_distance(d, c)).epsilon(1e-12));
}

TEST_CASE("sliced_wasserstein") {
    Rng rng(2);
    const Tensor a = normal_rows(300, 2, rng);
    CHECK(sliced_wasserstein(a, a, 32, rng) == 0.0);
    CHECK(sliced_wasserstein(Tensor::matrix(1, 1, {0.0}), Tensor::matrix(1, 1, {1.0}), 8, rng) ==
          doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(sliced_wasserstein(a, a.slice_rows(0, 10), 4, rng), UsageError);

    // N(0, I) vs N((1, 0), I): E[(e . (1, 0))^2] = 1/2 over uniform directions.
    const Tensor x = normal_rows(10000, 2, rng), y = normal_rows(10000, 2, rng, 1.0);
    Rng dirs(3);
    const double sw = sliced_wasserstein(x, y, 128, dirs);
    CHECK(std::abs(sw - 0.5) <= 0.05);

    // Simultaneous rotation of both samples.
    const double th = 0.7;
    auto rotate = [&](const Tensor& t) {
        Tensor out(t.shape());
        for (std::size_t r = 0; r < t.rows(); ++r) {
            out.at(r, 0) = std::cos(th) * t.at(r, 0) - std::sin(th) * t.at(r, 1);
            out.at(r, 1) = std::sin(th) * t.at(r, 0) + std::cos(th) * t.at(r, 1);
        }
        return out;
    };
    Rng dirs2(4);
    CHECK(std::abs(sliced_wasserstein(rotate(x), rotate(y), 128, dirs2) - sw) <= 0.05);
}

TEST_CASE("evaluate_generator") {
    DatasetSpec ds;
    ds.seed = 3;
    const Tensor data = make_dataset(ds);
    const auto target = target_moments(ds, data);
    // Identity generator on P=2 is an exact sampler of N(0, I).
    const auto spec = generator_spec(2, 0, 2);
    const ParamVector identity{{1, 0, 0, 1, 0, 0}};
    EvalOptions opt;
    opt.n_samples = 4000;
    opt.mmd_samples = 300;
    const auto reps = evaluate_generator(spec, identity, data, target, opt, 5);
    REQUIRE(reps.size() == 3);
    for (const auto& r : reps) {
        CHECK(r.gaussian_kl < 0.01);
        CHECK(r.frechet < 0.02);
        CHECK(std::abs(r.mmd2) < 0.02);
        CHECK(r.n_samples == 4000);
    }
    CHECK(reps[0].seed != reps[1].seed);
    const auto again = evaluate_generator(spec, identity, data, target, opt, 5);
    CHECK(again[2].gaussian_kl == reps[2].gaussian_kl);
    CHECK(again[2].sliced_w2 == reps[2].sliced_w2);

    // P=1 linear generator: a line in the plane.
    const auto line = generator_spec(1, 0, 2);
    const auto degenerate = evaluate_generator(line, ParamVector{{1, 1, 0, 0}}, data, target, opt, 5);
    CHECK(std::isinf(degenerate[0].gaussian_kl));
    CHECK(std::isnan(evaluate_generator(spec, identity, data, std::nullopt, opt, 5)[0].gaussian_kl));
}

TEST_CASE("flatness probe on quadratics") {
    const ParamObjective quad = [](std::span<const double> p) {
        double s = 0;
        for (double v : p) s += 0.5 * v * v;
        return s;
    };
    const std::vector<double> psi(10, 0.2);
    const std::vector<double> alphas = {0.0, 0.1};
    const ProbeReport r = flatness_probe(psi, quad, alphas, 10000, 7);
    CHECK(r.baseline == quad(psi));
    for (double v : r.values[0]) CHECK(v == r.baseline);
    double mean = 0;
    for (double v : r.values[1]) mean += v / 10000.0;
    const double expected = r.baseline + 0.01 * 10 / 2;
    CHECK(std::abs(mean - expected) <= 0.05 * (expected - r.baseline));

    const std::vector<double> grid = {0.0, 0.001, 0.003, 0.01, 0.03, 0.1, 0.3};
    // At the minimum the median degradation grows with alpha.
    const std::vector<double> origin(10, 0.0);
    const ProbeReport g = flatness_probe(origin, quad, grid, 200, 8);
    for (std::size_t a = 1; a < grid.size(); ++a)
        CHECK(g.median_degradation(a) >= g.median_degradation(a - 1));
    CHECK(g.alpha_index(0.03) == 4);
    CHECK_THROWS_AS(g.alpha_index(0.05), UsageError);

    // Same seed, same report.
    const ProbeReport h = flatness_probe(origin, quad, grid, 200, 8);
    CHECK(h.values == g.values);
}

TEST_CASE("probe on a trained-shape model") {
    DatasetSpec ds;
    const Tensor data = make_dataset(ds);
    Rng rng(4);
    const auto gs = generator_spec(2, 1, 2, 8);
    const auto cs = critic_spec(2, 1, 8);
    const ParamVector gp = init_params(gs, rng), cp = init_params(cs, rng);
    ProbeOptions opt;
    opt.repeats = 5;
    opt.eval_batch = 256;
    for (ObjectiveKind k : {ObjectiveKind::js_gan, ObjectiveKind::f_gan, ObjectiveKind::wgan_div, ObjectiveKind::rgan,
                            ObjectiveKind::mmd}) {
        ObjectiveSpec o;
        o.kind = k;
        const ProbeReport r = probe_model(gs, gp, cs, cp, o, data, opt, 1);
        CHECK(r.values.size() == opt.alphas.size());
        for (double v : r.values[0]) CHECK(v == r.baseline);
        CHECK(std::isfinite(r.baseline));
    }
    opt.include_critic = true;
    const ProbeReport both = probe_model(gs, gp, cs, cp, ObjectiveSpec{}, data, opt, 1);
    CHECK(both.values[0][0] == both.baseline);
    opt.include_critic = false;
    opt.quantity = ProbeQuantity::mmd2;
    const ProbeReport m = probe_model(gs, gp, cs, cp, ObjectiveSpec{}, data, opt, 1);
    CHECK(m.values[0][0] == m.baseline);
}

TEST_CASE("int8 quantization") {
    const std::vector<double> zeros(17, 0.0);
    const QuantizedTensor qz = quantize_tensor(zeros);
    CHECK(qz.scale == 0.0);
    CHECK(qz.dequantize() == zeros);

    std::vector<double> lin(256);
    for (int i = 0; i < 256; ++i) lin[i] = -1.0 + 2.0 * i / 255.0;
    const QuantizedTensor ql = quantize_tensor(lin);
    CHECK(ql.scale == doctest::Approx(2.0 / 255.0).epsilon(1e-15));
    CHECK(ql.codes.front() == -128);
    CHECK(ql.codes.back() == 127);
    const auto back = ql.dequantize();
    for (int i = 0; i < 256; ++i) CHECK(std::abs(back[i] - lin[i]) <= 1.0 / 255.0 + 1e-15);

    Rng rng(5);
    for (int t = 0; t < 20; ++t) {
        std::vector<double> w(1 + rng.below(300));
        const double spread = std::exp(4 * rng.normal());
        for (double& v : w) v = spread * rng.normal() + rng.normal();
        const QuantizedTensor q = quantize_tensor(w);
        const auto r = q.dequantize();
        for (std::size_t i = 0; i < w.size(); ++i) CHECK(std::abs(r[i] - w[i]) <= q.scale / 2 * (1 + 1e-12));
    }
}

TEST_CASE("quantization report") {
    DatasetSpec ds;
    const Tensor data = make_dataset(ds);
    const auto target = target_moments(ds, data);
    const auto spec = generator_spec(2, 1, 2, 8);
    const ParamVector zero{std::vector<double>(spec.param_count(), 0.0)};
    EvalOptions opt;
    opt.n_samples = 500;
    opt.mmd_samples = 100;
    opt.repeats = 1;
    // A generator with all-zero weights emits a point mass; its metrics are
    // reproduced exactly after quantization.
    const QuantReport r = quantization_report(spec, zero, data, target, opt, 3);
    CHECK(r.before[0].frechet == r.after[0].frechet);
    CHECK(r.before[0].mmd2 == r.after[0].mmd2);
    for (double s : r.scales) CHECK(s == 0.0);
    for (double e : r.max_abs_error) CHECK(e == 0.0);

    Rng rng(6);
    const ParamVector p = init_params(spec, rng);
    const QuantReport q = quantization_report(spec, p, data, target, opt, 3);
    REQUIRE(q.scales.size() == 4);
    for (std::size_t i = 0; i < q.scales.size(); ++i) CHECK(q.max_abs_error[i] <= q.scales[i] / 2 * (1 + 1e-12));
}
