#include <cmath>

#include "doctest.h"
#include "ganselect/error.hpp"
#include "ganselect/models.hpp"

using namespace ganselect;

namespace {

// Scalar reference evaluator, written without the library's loops.
std::vector<double> reference_forward(const NetworkSpec& spec, const ParamVector& p, std::vector<double> x) {
    std::size_t off = 0;
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
        const std::size_t in = spec.fan_in(l), out = spec.fan_out(l);
        std::vector<double> y(out);
        for (std::size_t j = 0; j < out; ++j) {
            double s = p.values[off + in * out + j];
            for (std::size_t k = 0; k < in; ++k) s += x[k] * p.values[off + k * out + j];
            const Activation a = l == spec.hidden_layers ? spec.output_activation : spec.hidden_activation;
            if (a == Activation::relu) s = std::max(s, 0.0);
            if (a == Activation::leaky_relu) s = s > 0 ? s : 0.2 * s;
            if (a == Activation::tanh) s = std::tanh(s);
            y[j] = s;
        }
        off += in * out + out;
        x = y;
    }
    return x;
}

}  // namespace

TEST_CASE("sample_latent") {
    Rng rng(1);
    const Tensor z = sample_latent({2}, 4, rng);
    CHECK(z.shape() == Shape{4, 2});
    for (std::size_t c = 0; c < 2; ++c) {
        double m = 0;
        for (std::size_t r = 0; r < 4; ++r) m += z.at(r, c) / 4.0;
        CHECK(std::abs(m) <= 3.0 / 2.0);
    }
    Rng a(42), b(42);
    CHECK(sample_latent({3}, 10, a) == sample_latent({3}, 10, b));

    Rng big(2);
    const Tensor w = sample_latent({1}, 100000, big);
    double mean = 0, var = 0;
    for (double v : w.data()) mean += v / 1e5;
    for (double v : w.data()) var += (v - mean) * (v - mean) / (1e5 - 1);
    CHECK(var >= 0.98);
    CHECK(var <= 1.02);
}

TEST_CASE("init_params layout and scale") {
    Rng rng(3);
    const auto mlp0 = generator_spec(2, 0, 2);
    const auto p0 = init_params(mlp0, rng);
    REQUIRE(p0.size() == 6);
    CHECK(p0.values[4] == 0.0);
    CHECK(p0.values[5] == 0.0);

    const auto mlp2 = generator_spec(2, 2, 2, 64);
    CHECK(mlp2.param_count() == 2 * 64 + 64 + 64 * 64 + 64 + 64 * 2 + 2);
    CHECK(mlp2.param_count() == 4482);
    const auto p2 = init_params(mlp2, rng);
    const auto layers = unflatten(mlp2, p2);
    double s2 = 0;
    for (double v : layers[1].weight.data()) s2 += v * v;
    const double sd = std::sqrt(s2 / 4096.0);
    CHECK(std::abs(sd - std::sqrt(2.0 / 64.0)) <= 0.1 * std::sqrt(2.0 / 64.0));
    for (const auto& l : layers)
        for (double v : l.bias.data()) CHECK(v == 0.0);
    CHECK(flatten(mlp2, layers) == p2);
}

TEST_CASE("generate") {
    const auto spec = generator_spec(2, 0, 2);
    const Tensor z = Tensor::matrix(3, 2, {1, 2, -3, 0.5, 0, 7});
    ParamVector identity{{1, 0, 0, 1, 0, 0}};
    CHECK(generate(spec, identity, z) == z);

    ParamVector constant{{0, 0, 0, 0, 1.5, -2}};
    const Tensor out = generate(spec, constant, z);
    for (std::size_t r = 0; r < 3; ++r) {
        CHECK(out.at(r, 0) == 1.5);
        CHECK(out.at(r, 1) == -2.0);
    }

    Rng rng(4);
    for (const Activation act : {Activation::relu, Activation::leaky_relu, Activation::tanh}) {
        NetworkSpec mlp1{3, 1, 16, 2, act, Activation::tanh};
        const auto p = init_params(mlp1, rng);
        const Tensor zz = sample_latent({3}, 5, rng);
        const Tensor y = generate(mlp1, p, zz);
        for (std::size_t r = 0; r < 5; ++r) {
            const auto ref = reference_forward(mlp1, p, {zz.at(r, 0), zz.at(r, 1), zz.at(r, 2)});
            CHECK(y.at(r, 0) == doctest::Approx(ref[0]).epsilon(1e-12));
            CHECK(y.at(r, 1) == doctest::Approx(ref[1]).epsilon(1e-12));
        }
        // The tape path computes the same function.
        ad::Tape tape;
        const auto net = bind(tape, mlp1, p, false);
        const auto yv = net.apply(tape.constant(zz));
        for (std::size_t i = 0; i < y.size(); ++i) CHECK(yv.value()[i] == doctest::Approx(y[i]).epsilon(1e-12));
    }

    CHECK_THROWS_AS(generate(spec, identity, Tensor(Shape{3, 3})), ConfigError);
}

TEST_CASE("ema_update") {
    const ParamVector shadow{{1.0, -2.0}}, current{{3.0, 5.0}};
    CHECK(ema_update(shadow, current, 0.0) == current);
    CHECK(ema_update(current, current, 0.37) == current);
    CHECK_THROWS_AS(ema_update(shadow, ParamVector{{1.0}}, 0.5), ConfigError);

    // Scalar recurrence: gap shrinks by decay^steps.
    ParamVector s{{0.0}};
    const ParamVector c{{1.0}};
    for (int i = 0; i < 1000; ++i) s = ema_update(s, c, 0.999);
    const double remaining = 1.0 - s.values[0];
    CHECK(remaining == doctest::Approx(std::pow(0.999, 1000)).epsilon(1e-9));
    CHECK(remaining == doctest::Approx(0.368).epsilon(0.01));
}

TEST_CASE("flatten/unflatten is a bijection on random specs") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        NetworkSpec spec{1 + rng.below(5), rng.below(3), 1 + rng.below(9), 1 + rng.below(4), Activation::relu,
                         Activation::identity};
        ParamVector p;
        for (std::size_t i = 0; i < spec.param_count(); ++i) p.values.push_back(rng.normal());
        CHECK(flatten(spec, unflatten(spec, p)) == p);
    }
}

TEST_CASE("checkpoint round trip and corruption") {
    Rng rng(6);
    Checkpoint ck;
    const auto g = generator_spec(10, 2, 2);
    const auto c = critic_spec(2);
    ck.sections.push_back({SectionKind::generator, g, init_params(g, rng)});
    ck.sections.push_back({SectionKind::critic, c, init_params(c, rng)});
    const auto bytes = encode_checkpoint(ck);
    const auto back = decode_checkpoint(bytes);
    REQUIRE(back.sections.size() == 2);
    CHECK(back.find(SectionKind::generator)->params == ck.sections[0].params);
    CHECK(back.find(SectionKind::critic)->spec == c);
    CHECK(back.find(SectionKind::generator_ema) == nullptr);

    CHECK(bytes[0] == 'G');
    CHECK(bytes[8] == 2);  // section count, little-endian

    auto truncated = bytes;
    truncated.pop_back();
    CHECK_THROWS_AS(decode_checkpoint(truncated), ConfigError);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad_magic), ConfigError);
}
