#include "ganselect/eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ganselect/error.hpp"

namespace ganselect {

namespace {

struct Moments {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

Moments sample_moments(const Tensor& x) {
    if (x.rank() != 2) throw ConfigError("moments: sample must be [n, D]");
    const std::size_t n = x.rows(), d = x.cols();
    if (n <= d) throw UsageError("moments: need more rows (" + std::to_string(n) + ") than dimensions (" +
                                 std::to_string(d) + ")");
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
        x.values().data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    Moments out;
    out.mean = m.colwise().mean().transpose();
    const Eigen::MatrixXd centered = m.rowwise() - out.mean.transpose();
    out.cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
    return out;
}

Eigen::MatrixXd sym_sqrt(const Eigen::MatrixXd& a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
    const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double gaussian_kl(const Tensor& sample, std::span<const double> target_mean, std::span<const double> target_cov) {
    const Moments fit = sample_moments(sample);
    const auto d = fit.mean.size();
    if (static_cast<Eigen::Index>(target_mean.size()) != d || static_cast<Eigen::Index>(target_cov.size()) != d * d)
        throw ConfigError("gaussian_kl: target moments do not match sample dimension");
    const Eigen::VectorXd mu_t = Eigen::Map<const Eigen::VectorXd>(target_mean.data(), d);
    const Eigen::MatrixXd cov_t =
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(target_cov.data(), d, d);

    const Eigen::LLT<Eigen::MatrixXd> llt_t(cov_t);
    if (llt_t.info() != Eigen::Success) throw ConfigError("gaussian_kl: target covariance is not positive definite");

    // Relative eigenvalue floor decides whether the fit is degenerate.
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fit.cov);
    const double max_ev = es.eigenvalues().maxCoeff();
    const double min_ev = es.eigenvalues().minCoeff();
    if (!(max_ev > 0.0) || min_ev <= 1e-12 * max_ev)
        throw NumericError("gaussian_kl: fitted covariance is singular (degenerate sample)", 0);

    const Eigen::VectorXd diff = mu_t - fit.mean;
    const double trace_term = llt_t.solve(fit.cov).trace();
    const double maha = diff.dot(llt_t.solve(diff));
    const Eigen::MatrixXd lt = llt_t.matrixL();
    const double logdet_t = 2.0 * lt.diagonal().array().log().sum();
    const double logdet_f = es.eigenvalues().array().log().sum();
    const double kl = 0.5 * (trace_term + maha - static_cast<double>(d) + logdet_t - logdet_f);
    return std::max(kl, 0.0);
}

double gaussian_kl_or_inf(const Tensor& sample, const GaussianMoments& target) {
    try {
        return gaussian_kl(sample, target.mean, target.cov);
    } catch (const NumericError&) {
        return std::numeric_limits<double>::infinity();
    }
}

double frechet_distance(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) throw ConfigError("frechet_distance: dimension mismatch");
    const Moments ma = sample_moments(a);
    const Moments mb = sample_moments(b);
    const Eigen::MatrixXd sa = sym_sqrt(ma.cov);
    const Eigen::MatrixXd inner = sa * mb.cov * sa;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()));
    const double scale = std::max(1.0, inner.trace());
    double tr_sqrt = 0.0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        const double ev = es.eigenvalues()[i];
        if (ev < -1e-8 * scale) throw NumericError("frechet_distance: covariance product is not PSD", 0);
        tr_sqrt += std::sqrt(std::max(ev, 0.0));
    }
    const double value = (ma.mean - mb.mean).squaredNorm() + ma.cov.trace() + mb.cov.trace() - 2.0 * tr_sqrt;
    return std::max(value, 0.0);
}

double sliced_wasserstein(const Tensor& a, const Tensor& b, std::size_t n_dirs, Rng& rng) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) throw ConfigError("sliced_wasserstein: shape mismatch");
    if (a.rows() != b.rows()) throw UsageError("sliced_wasserstein: samples must have equal counts");
    if (n_dirs == 0) throw UsageError("sliced_wasserstein: need at least one direction");
    const std::size_t n = a.rows(), d = a.cols();
    std::vector<double> dir(d), pa(n), pb(n);
    double total = 0.0;
    for (std::size_t k = 0; k < n_dirs; ++k) {
        double norm = 0.0;
        do {
            norm = 0.0;
            for (double& v : dir) {
                v = rng.normal();
                norm += v * v;
            }
        } while (norm == 0.0);
        norm = std::sqrt(norm);
        for (double& v : dir) v /= norm;
        for (std::size_t i = 0; i < n; ++i) {
            double sa = 0.0, sb = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                sa += a.at(i, c) * dir[c];
                sb += b.at(i, c) * dir[c];
            }
            pa[i] = sa;
            pb[i] = sb;
        }
        std::sort(pa.begin(), pa.end());
        std::sort(pb.begin(), pb.end());
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += (pa[i] - pb[i]) * (pa[i] - pb[i]);
        total += s / static_cast<double>(n);
    }
    return total / static_cast<double>(n_dirs);
}

namespace {

Tensor first_rows(const Tensor& x, std::size_t n) { return x.slice_rows(0, std::min(n, x.rows())); }

}  // namespace

std::vector<MetricReport> evaluate_generator(const NetworkSpec& spec, const ParamVector& params, const Tensor& data,
                                             const std::optional<GaussianMoments>& target, const EvalOptions& options,
                                             std::uint64_t seed) {
    if (options.n_samples <= spec.output_dim) throw ConfigError("eval.n_samples must exceed the data dimension");
    std::vector<MetricReport> out;
    for (std::size_t r = 0; r < options.repeats; ++r) {
        const std::uint64_t rep_seed = split_seed(seed, r);
        Rng rng(rep_seed);
        const Tensor sample = generate(spec, params, sample_latent({spec.input_dim}, options.n_samples, rng));
        MetricReport m;
        m.seed = rep_seed;
        m.n_samples = options.n_samples;
        m.gaussian_kl = target ? gaussian_kl_or_inf(sample, *target) : std::nan("");
        m.frechet = frechet_distance(sample, data);
        const Tensor real_sub = first_rows(data, options.mmd_samples);
        const Tensor fake_sub = first_rows(sample, real_sub.rows());
        m.mmd2 = mmd2_unbiased(real_sub, fake_sub, median_kernel(real_sub, std::vector<double>{0.5, 1.0, 2.0, 4.0}));
        const std::size_t n_sw = std::min(sample.rows(), data.rows());
        m.sliced_w2 = sliced_wasserstein(first_rows(sample, n_sw), first_rows(data, n_sw), options.sw_dirs, rng);
        out.push_back(m);
    }
    return out;
}

}  // namespace ganselect
