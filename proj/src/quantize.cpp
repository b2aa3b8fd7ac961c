#include <algorithm>
#include <cmath>

#include "ganselect/error.hpp"
#include "ganselect/eval.hpp"

namespace ganselect {

std::vector<double> QuantizedTensor::dequantize() const {
    std::vector<double> out(codes.size());
    for (std::size_t i = 0; i < codes.size(); ++i) out[i] = min + (static_cast<double>(codes[i]) + 128.0) * scale;
    return out;
}

QuantizedTensor quantize_tensor(std::span<const double> values) {
    QuantizedTensor q;
    q.codes.resize(values.size(), -128);
    if (values.empty()) return q;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    q.min = *lo;
    q.scale = (*hi - *lo) / 255.0;
    if (q.scale == 0.0) return q;
    q.zero_point = -128.0 - q.min / q.scale;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double level = std::clamp(std::round((values[i] - q.min) / q.scale), 0.0, 255.0);
        q.codes[i] = static_cast<std::int8_t>(static_cast<int>(level) - 128);
    }
    return q;
}

QuantizedParams quantize_int8(const NetworkSpec& spec, const ParamVector& params) {
    QuantizedParams out;
    out.spec = spec;
    for (const auto& layer : unflatten(spec, params)) {
        out.tensors.push_back(quantize_tensor(layer.weight.values()));
        out.tensors.push_back(quantize_tensor(layer.bias.values()));
    }
    return out;
}

ParamVector QuantizedParams::dequantize() const {
    ParamVector p;
    p.values.reserve(spec.param_count());
    for (const auto& t : tensors) {
        const auto v = t.dequantize();
        p.values.insert(p.values.end(), v.begin(), v.end());
    }
    if (p.size() != spec.param_count()) throw ConfigError("quantize: tensor layout does not match spec");
    return p;
}

QuantReport quantization_report(const NetworkSpec& spec, const ParamVector& params, const Tensor& data,
                                const std::optional<GaussianMoments>& target, const EvalOptions& options,
                                std::uint64_t seed) {
    const QuantizedParams q = quantize_int8(spec, params);
    const ParamVector restored = q.dequantize();
    QuantReport report;
    std::size_t off = 0;
    for (const auto& t : q.tensors) {
        report.scales.push_back(t.scale);
        report.zero_points.push_back(t.zero_point);
        const auto v = t.dequantize();
        double worst = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) worst = std::max(worst, std::abs(v[i] - params.values[off + i]));
        report.max_abs_error.push_back(worst);
        off += v.size();
    }
    report.before = evaluate_generator(spec, params, data, target, options, seed);
    report.after = evaluate_generator(spec, restored, data, target, options, seed);
    return report;
}

}  // namespace ganselect
