#include "ganselect/models.hpp"

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "ganselect/error.hpp"

namespace ganselect {

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::leaky_relu: return "leaky_relu";
        case Activation::tanh: return "tanh";
    }
    return "?";
}

Activation activation_from_string(std::string_view s) {
    if (s == "identity") return Activation::identity;
    if (s == "relu") return Activation::relu;
    if (s == "leaky_relu") return Activation::leaky_relu;
    if (s == "tanh") return Activation::tanh;
    throw ConfigError("unknown activation '" + std::string(s) + "'");
}

std::size_t NetworkSpec::fan_in(std::size_t layer) const noexcept { return layer == 0 ? input_dim : hidden_units; }

std::size_t NetworkSpec::fan_out(std::size_t layer) const noexcept {
    return layer == hidden_layers ? output_dim : hidden_units;
}

std::size_t NetworkSpec::param_count() const noexcept {
    std::size_t n = 0;
    for (std::size_t l = 0; l < layer_count(); ++l) n += fan_in(l) * fan_out(l) + fan_out(l);
    return n;
}

void NetworkSpec::validate() const {
    if (input_dim == 0 || output_dim == 0) throw ConfigError("network: input_dim and output_dim must be positive");
    if (hidden_layers > 0 && hidden_units == 0) throw ConfigError("network: hidden_units must be positive");
    if (hidden_activation == Activation::identity && hidden_layers > 0)
        throw ConfigError("network: hidden activation must be relu, leaky_relu or tanh");
    if (output_activation != Activation::identity && output_activation != Activation::tanh)
        throw ConfigError("network: output activation must be identity or tanh");
}

NetworkSpec generator_spec(std::size_t latent_dim, std::size_t hidden_layers, std::size_t data_dim,
                           std::size_t hidden_units) {
    return {latent_dim, hidden_layers, hidden_units, data_dim, Activation::relu, Activation::identity};
}

NetworkSpec critic_spec(std::size_t data_dim, std::size_t hidden_layers, std::size_t hidden_units) {
    return {data_dim, hidden_layers, hidden_units, 1, Activation::leaky_relu, Activation::identity};
}

std::vector<LayerParams> unflatten(const NetworkSpec& spec, const ParamVector& params) {
    if (params.size() != spec.param_count())
        throw ConfigError("params: expected " + std::to_string(spec.param_count()) + " values, got " +
                          std::to_string(params.size()));
    std::vector<LayerParams> layers;
    std::size_t off = 0;
    auto take = [&](std::size_t n) {
        std::vector<double> v(params.values.begin() + static_cast<std::ptrdiff_t>(off),
                              params.values.begin() + static_cast<std::ptrdiff_t>(off + n));
        off += n;
        return v;
    };
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
        const std::size_t in = spec.fan_in(l);
        const std::size_t out = spec.fan_out(l);
        LayerParams lp;
        lp.weight = Tensor(Shape{in, out}, take(in * out));
        lp.bias = Tensor(Shape{1, out}, take(out));
        layers.push_back(std::move(lp));
    }
    return layers;
}

ParamVector flatten(const NetworkSpec& spec, const std::vector<LayerParams>& layers) {
    if (layers.size() != spec.layer_count()) throw ConfigError("params: wrong number of layers");
    ParamVector p;
    p.values.reserve(spec.param_count());
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (layers[l].weight.size() != spec.fan_in(l) * spec.fan_out(l) || layers[l].bias.size() != spec.fan_out(l))
            throw ConfigError("params: layer " + std::to_string(l) + " has the wrong shape");
        p.values.insert(p.values.end(), layers[l].weight.data().begin(), layers[l].weight.data().end());
        p.values.insert(p.values.end(), layers[l].bias.data().begin(), layers[l].bias.data().end());
    }
    return p;
}

Tensor sample_latent(const LatentPrior& prior, std::size_t n, Rng& rng) {
    if (n == 0 || prior.dim == 0) throw UsageError("sample_latent: n and dim must be positive");
    Tensor z(Shape{n, prior.dim});
    for (double& v : z.data()) v = rng.normal();
    return z;
}

ParamVector init_params(const NetworkSpec& spec, Rng& rng) {
    spec.validate();
    ParamVector p;
    p.values.reserve(spec.param_count());
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
        const Activation act = l == spec.hidden_layers ? spec.output_activation : spec.hidden_activation;
        const bool rectifier = act == Activation::relu || act == Activation::leaky_relu;
        const double stddev = std::sqrt((rectifier ? 2.0 : 1.0) / static_cast<double>(spec.fan_in(l)));
        for (std::size_t i = 0; i < spec.fan_in(l) * spec.fan_out(l); ++i) p.values.push_back(stddev * rng.normal());
        p.values.insert(p.values.end(), spec.fan_out(l), 0.0);
    }
    return p;
}

namespace {

double activate(double x, Activation a) {
    switch (a) {
        case Activation::identity: return x;
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::leaky_relu: return x > 0.0 ? x : kLeakySlope * x;
        case Activation::tanh: return std::tanh(x);
    }
    return x;
}

}  // namespace

Tensor generate(const NetworkSpec& spec, const ParamVector& params, const Tensor& z) {
    if (z.rank() != 2 || z.shape()[1] != spec.input_dim)
        throw ConfigError("generate: latent batch " + shape_str(z.shape()) + " does not match input_dim " +
                          std::to_string(spec.input_dim));
    if (params.size() != spec.param_count()) throw ConfigError("generate: parameter count mismatch");
    const std::size_t n = z.shape()[0];
    std::vector<double> cur(z.data());
    std::vector<double> next;
    const double* p = params.values.data();
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
        const std::size_t in = spec.fan_in(l);
        const std::size_t out = spec.fan_out(l);
        const double* w = p;
        const double* b = p + in * out;
        p += in * out + out;
        const Activation act = l == spec.hidden_layers ? spec.output_activation : spec.hidden_activation;
        next.resize(n * out);
        using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        Eigen::Map<RowMat> y(next.data(), n, out);
        y.noalias() = Eigen::Map<const RowMat>(cur.data(), n, in) * Eigen::Map<const RowMat>(w, in, out);
        y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b, out);
        if (act != Activation::identity)
            for (double& v : next) v = activate(v, act);
        cur.swap(next);
    }
    return Tensor(Shape{n, spec.output_dim}, std::move(cur));
}

ParamVector ema_update(const ParamVector& shadow, const ParamVector& current, double decay) {
    if (shadow.size() != current.size()) throw ConfigError("ema_update: shape mismatch");
    if (!(decay >= 0.0 && decay <= 1.0)) throw UsageError("ema_update: decay must lie in [0, 1]");
    ParamVector out;
    out.values.resize(shadow.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out.values[i] = decay * shadow.values[i] + (1.0 - decay) * current.values[i];
    return out;
}

ad::Var apply_activation(ad::Var x, Activation a) {
    switch (a) {
        case Activation::identity: return x;
        case Activation::relu: return ad::relu(x);
        case Activation::leaky_relu: return ad::leaky_relu(x, kLeakySlope);
        case Activation::tanh: return ad::tanh(x);
    }
    return x;
}

BoundNetwork bind(ad::Tape& tape, const NetworkSpec& spec, const ParamVector& params, bool differentiable) {
    BoundNetwork net;
    net.spec = spec;
    for (auto& layer : unflatten(spec, params)) {
        if (differentiable) {
            net.weights.push_back(tape.leaf(std::move(layer.weight)));
            net.biases.push_back(tape.leaf(std::move(layer.bias)));
        } else {
            net.weights.push_back(tape.constant(std::move(layer.weight)));
            net.biases.push_back(tape.constant(std::move(layer.bias)));
        }
    }
    return net;
}

ad::Var BoundNetwork::apply(ad::Var x) const {
    ad::Var h = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        h = ad::matmul(h, weights[l]) + biases[l];
        h = apply_activation(h, l == spec.hidden_layers ? spec.output_activation : spec.hidden_activation);
    }
    return h;
}

std::vector<double> BoundNetwork::gradient(const ad::Gradients& g) const {
    std::vector<double> out;
    out.reserve(spec.param_count());
    for (std::size_t l = 0; l < weights.size(); ++l) {
        const Tensor& gw = g.at(weights[l]);
        const Tensor& gb = g.at(biases[l]);
        out.insert(out.end(), gw.data().begin(), gw.data().end());
        out.insert(out.end(), gb.data().begin(), gb.data().end());
    }
    return out;
}

std::vector<ad::Var> BoundNetwork::leaves() const {
    std::vector<ad::Var> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        out.push_back(weights[l]);
        out.push_back(biases[l]);
    }
    return out;
}

}  // namespace ganselect
