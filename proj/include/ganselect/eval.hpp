#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "ganselect/data.hpp"
#include "ganselect/models.hpp"
#include "ganselect/objectives.hpp"
#include "ganselect/rng.hpp"

namespace ganselect {

/// KL(N(sample moments) || N(target_mean, target_cov)); the sample covariance
/// uses 1/(n-1). Throws NumericError when the fitted covariance is singular.
double gaussian_kl(const Tensor& sample, std::span<const double> target_mean, std::span<const double> target_cov);

/// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2}) on sample moments.
double frechet_distance(const Tensor& a, const Tensor& b);

/// Mean over random unit directions of the squared 2-Wasserstein distance
/// between the sorted 1-D projections.
double sliced_wasserstein(const Tensor& a, const Tensor& b, std::size_t n_dirs, Rng& rng);

struct MetricReport {
    /// NaN when no target is known, +inf when the generated sample is degenerate.
    double gaussian_kl = 0.0;
    double frechet = 0.0;
    double mmd2 = 0.0;
    double sliced_w2 = 0.0;
    std::size_t n_samples = 0;
    std::uint64_t seed = 0;
};

struct EvalOptions {
    std::size_t n_samples = 10000;
    std::size_t repeats = 3;
    std::size_t mmd_samples = 1000;
    std::size_t sw_dirs = 128;
};

/// One report per repetition; repetition r uses seed split_seed(seed, r).
std::vector<MetricReport> evaluate_generator(const NetworkSpec& spec, const ParamVector& params, const Tensor& data,
                                             const std::optional<GaussianMoments>& target, const EvalOptions& options,
                                             std::uint64_t seed);

/// Gaussian KL of generated samples, +inf for degenerate samples.
double gaussian_kl_or_inf(const Tensor& sample, const GaussianMoments& target);

// Flatness probe -------------------------------------------------------------

struct ProbeReport {
    std::vector<double> alphas;
    /// values[a][m] is the objective after the m-th perturbation at alphas[a].
    std::vector<std::vector<double>> values;
    double baseline = 0.0;

    /// Median of (values[a] - baseline).
    double median_degradation(std::size_t alpha_index) const;
    std::size_t alpha_index(double alpha) const;
};

using ParamObjective = std::function<double(std::span<const double>)>;

/// Evaluates objective(params + delta) for M draws of delta ~ N(0, alpha^2 I)
/// per alpha. Draw m at alphas[a] uses the stream split_seed(seed, a * M + m).
ProbeReport flatness_probe(std::span<const double> params, const ParamObjective& objective,
                           std::span<const double> alphas, std::size_t repeats, std::uint64_t seed);

/// What the probe measures.
enum class ProbeQuantity {
    /// The value the generator minimizes, including its data-only terms
    /// (wgan_div: critic estimate of W1; f_gan: the variational bound; js_gan
    /// and rgan: the generator loss; mmd: MMD^2).
    generator_objective,
    /// MMD^2 between generated and real evaluation batches (critic free).
    mmd2,
};

struct ProbeOptions {
    std::vector<double> alphas = {0.0, 0.001, 0.003, 0.01, 0.03, 0.1};
    std::size_t repeats = 50;
    std::size_t eval_batch = 2048;
    ProbeQuantity quantity = ProbeQuantity::generator_objective;
    /// Perturb critic parameters together with the generator's.
    bool include_critic = false;
};

/// Builds the probe closure on fixed evaluation batches. The parameter vector
/// it accepts is the generator's, or [generator, critic] when include_critic.
ParamObjective make_probe_objective(const NetworkSpec& gen_spec, const NetworkSpec& critic_spec, const ParamVector& critic_params,
                                    const ObjectiveSpec& objective, const Tensor& data, const ProbeOptions& options,
                                    std::uint64_t seed);

ProbeReport probe_model(const NetworkSpec& gen_spec, const ParamVector& gen_params, const NetworkSpec& critic_spec,
                        const ParamVector& critic_params, const ObjectiveSpec& objective, const Tensor& data,
                        const ProbeOptions& options, std::uint64_t seed);

// Post-training quantization --------------------------------------------------

/// Per-tensor affine int8 code: value = min + (q + 128) * scale, so the
/// minimum maps to -128 and the maximum to 127. zero_point = -128 - min/scale.
struct QuantizedTensor {
    std::vector<std::int8_t> codes;
    double scale = 0.0;
    double zero_point = -128.0;
    double min = 0.0;

    std::vector<double> dequantize() const;
};

struct QuantizedParams {
    NetworkSpec spec;
    /// Weight then bias tensor per layer.
    std::vector<QuantizedTensor> tensors;

    ParamVector dequantize() const;
};

QuantizedTensor quantize_tensor(std::span<const double> values);
QuantizedParams quantize_int8(const NetworkSpec& spec, const ParamVector& params);

struct QuantReport {
    std::vector<double> scales;
    std::vector<double> zero_points;
    std::vector<double> max_abs_error;
    std::vector<MetricReport> before;
    std::vector<MetricReport> after;
};

QuantReport quantization_report(const NetworkSpec& spec, const ParamVector& params, const Tensor& data,
                                const std::optional<GaussianMoments>& target, const EvalOptions& options,
                                std::uint64_t seed);

}  // namespace ganselect
