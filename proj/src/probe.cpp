#include <algorithm>
#include <cmath>
#include <string>

#include "ganselect/error.hpp"
#include "ganselect/eval.hpp"

namespace ganselect {

double ProbeReport::median_degradation(std::size_t alpha_index) const {
    std::vector<double> d;
    for (double v : values.at(alpha_index)) d.push_back(v - baseline);
    if (d.empty()) return 0.0;
    std::sort(d.begin(), d.end());
    const std::size_t n = d.size();
    return n % 2 ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
}

std::size_t ProbeReport::alpha_index(double alpha) const {
    for (std::size_t i = 0; i < alphas.size(); ++i)
        if (std::abs(alphas[i] - alpha) <= 1e-12 * std::max(1.0, std::abs(alpha))) return i;
    throw UsageError("probe: alpha " + std::to_string(alpha) + " was not probed");
}

ProbeReport flatness_probe(std::span<const double> params, const ParamObjective& objective,
                           std::span<const double> alphas, std::size_t repeats, std::uint64_t seed) {
    if (repeats == 0) throw UsageError("flatness_probe: need at least one repeat");
    ProbeReport report;
    report.alphas.assign(alphas.begin(), alphas.end());
    report.baseline = objective(params);
    std::vector<double> perturbed(params.size());
    for (std::size_t a = 0; a < alphas.size(); ++a) {
        if (!(alphas[a] >= 0.0)) throw UsageError("flatness_probe: alphas must be non-negative");
        std::vector<double> vals;
        vals.reserve(repeats);
        for (std::size_t m = 0; m < repeats; ++m) {
            if (alphas[a] == 0.0) {
                vals.push_back(objective(params));
                continue;
            }
            Rng rng(split_seed(seed, a * repeats + m));
            for (std::size_t i = 0; i < params.size(); ++i) perturbed[i] = params[i] + alphas[a] * rng.normal();
            vals.push_back(objective(perturbed));
        }
        report.values.push_back(std::move(vals));
    }
    return report;
}

namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double mean_of(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data()) s += v;
    return s / static_cast<double>(t.size());
}

// Largest batch used for the O(n^2) MMD probe quantity.
constexpr std::size_t kMmdProbeRows = 512;

}  // namespace

ParamObjective make_probe_objective(const NetworkSpec& gen_spec, const NetworkSpec& critic_spec, const ParamVector& critic_params,
                                    const ObjectiveSpec& objective, const Tensor& data, const ProbeOptions& options,
                                    std::uint64_t seed) {
    if (options.eval_batch < 2) throw ConfigError("probe.eval_batch must be at least 2");
    const bool uses_critic =
        options.quantity == ProbeQuantity::generator_objective && objective.kind != ObjectiveKind::mmd;
    if (uses_critic && critic_params.size() != critic_spec.param_count())
        throw ConfigError("probe: critic parameters do not match the critic spec");
    if (options.include_critic && !uses_critic) throw ConfigError("probe: include_critic needs a critic objective");

    Rng rng(seed);
    const Tensor z = sample_latent({gen_spec.input_dim}, options.eval_batch, rng);
    Tensor real(Shape{options.eval_batch, data.cols()});
    for (std::size_t r = 0; r < options.eval_batch; ++r) {
        const std::size_t src = rng.below(data.rows());
        for (std::size_t c = 0; c < data.cols(); ++c) real.at(r, c) = data.at(src, c);
    }

    const std::size_t n_gen = gen_spec.param_count();
    if (!uses_critic) {
        const std::size_t rows = std::min(options.eval_batch, kMmdProbeRows);
        const Tensor real_sub = real.slice_rows(0, rows);
        const Tensor z_sub = z.slice_rows(0, rows);
        static const std::vector<double> default_multipliers{0.5, 1.0, 2.0, 4.0};
        const KernelSpec kernel = median_kernel(
            real_sub, objective.kind == ObjectiveKind::mmd ? objective.bandwidth_multipliers : default_multipliers);
        return [=](std::span<const double> params) {
            if (params.size() != n_gen) throw UsageError("probe: parameter vector has the wrong length");
            const ParamVector p{{params.begin(), params.end()}};
            return mmd2_unbiased(real_sub, generate(gen_spec, p, z_sub), kernel);
        };
    }

    const Tensor real_scores = generate(critic_spec, critic_params, real);
    const bool include_critic = options.include_critic;
    return [=](std::span<const double> params) {
        const std::size_t expected = n_gen + (include_critic ? critic_spec.param_count() : 0);
        if (params.size() != expected) throw UsageError("probe: parameter vector has the wrong length");
        const ParamVector g{{params.begin(), params.begin() + static_cast<std::ptrdiff_t>(n_gen)}};
        ParamVector c = critic_params;
        Tensor f_real = real_scores;
        if (include_critic) {
            c.values.assign(params.begin() + static_cast<std::ptrdiff_t>(n_gen), params.end());
            f_real = generate(critic_spec, c, real);
        }
        const Tensor f_fake = generate(critic_spec, c, generate(gen_spec, g, z));
        switch (objective.kind) {
            case ObjectiveKind::wgan_div: return mean_of(f_real) - mean_of(f_fake);
            case ObjectiveKind::f_gan: {
                double a = 0.0, b = 0.0;
                for (double v : f_real.data()) a += f_activation(objective.f_choice, v);
                for (double v : f_fake.data()) b += f_conjugate_of_activation(objective.f_choice, v);
                return (a - b) / static_cast<double>(f_real.size());
            }
            case ObjectiveKind::js_gan: {
                double s = 0.0;
                for (double v : f_fake.data()) s += softplus(-v);
                return s / static_cast<double>(f_fake.size());
            }
            case ObjectiveKind::rgan: {
                double s = 0.0;
                for (std::size_t i = 0; i < f_fake.size(); ++i) s += softplus(f_real[i] - f_fake[i]);
                return s / static_cast<double>(f_fake.size());
            }
            case ObjectiveKind::mmd: break;
        }
        throw UsageError("probe: unsupported objective");
    };
}

ProbeReport probe_model(const NetworkSpec& gen_spec, const ParamVector& gen_params, const NetworkSpec& critic_spec,
                        const ParamVector& critic_params, const ObjectiveSpec& objective, const Tensor& data,
                        const ProbeOptions& options, std::uint64_t seed) {
    if (gen_params.size() != gen_spec.param_count()) throw ConfigError("probe: generator parameters do not match spec");
    const ParamObjective f =
        make_probe_objective(gen_spec, critic_spec, critic_params, objective, data, options, split_seed(seed, 0));
    std::vector<double> params = gen_params.values;
    if (options.include_critic) params.insert(params.end(), critic_params.values.begin(), critic_params.values.end());
    return flatness_probe(params, f, options.alphas, options.repeats, split_seed(seed, 1));
}

}  // namespace ganselect
