#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ganselect/autodiff.hpp"
#include "ganselect/rng.hpp"
#include "ganselect/tensor.hpp"

namespace ganselect {

enum class Activation : std::uint8_t { identity = 0, relu = 1, leaky_relu = 2, tanh = 3 };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view s);

inline constexpr double kLeakySlope = 0.2;

/// Fully connected network. hidden_layers == 0 is a single affine map.
struct NetworkSpec {
    std::size_t input_dim = 1;
    std::size_t hidden_layers = 0;
    std::size_t hidden_units = 64;
    std::size_t output_dim = 1;
    Activation hidden_activation = Activation::relu;
    Activation output_activation = Activation::identity;

    std::size_t layer_count() const noexcept { return hidden_layers + 1; }
    std::size_t fan_in(std::size_t layer) const noexcept;
    std::size_t fan_out(std::size_t layer) const noexcept;
    std::size_t param_count() const noexcept;
    void validate() const;

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Generator default for the 2-D experiments: relu hidden units, identity output.
NetworkSpec generator_spec(std::size_t latent_dim, std::size_t hidden_layers, std::size_t data_dim,
                           std::size_t hidden_units = 64);
/// Critic default: leaky-relu(0.2) hidden units, one raw output per row.
NetworkSpec critic_spec(std::size_t data_dim, std::size_t hidden_layers = 2, std::size_t hidden_units = 64);

/// Flat parameters. Layout: for each layer, the weight block (fan_in x fan_out,
/// row-major) followed by the bias block (fan_out).
struct ParamVector {
    std::vector<double> values;

    std::size_t size() const noexcept { return values.size(); }
    friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

/// One layer's (weight, bias) as tensors.
struct LayerParams {
    Tensor weight;
    Tensor bias;
};

std::vector<LayerParams> unflatten(const NetworkSpec& spec, const ParamVector& params);
ParamVector flatten(const NetworkSpec& spec, const std::vector<LayerParams>& layers);

struct LatentPrior {
    std::size_t dim = 1;
};

Tensor sample_latent(const LatentPrior& prior, std::size_t n, Rng& rng);

/// Weights ~ N(0, 2/fan_in) for layers followed by relu or leaky-relu,
/// N(0, 1/fan_in) otherwise; biases zero.
ParamVector init_params(const NetworkSpec& spec, Rng& rng);

/// Noise-free forward pass, z is [n, input_dim].
Tensor generate(const NetworkSpec& spec, const ParamVector& params, const Tensor& z);

/// shadow' = decay * shadow + (1 - decay) * current.
ParamVector ema_update(const ParamVector& shadow, const ParamVector& current, double decay);

/// Network parameters bound as tape leaves.
struct BoundNetwork {
    NetworkSpec spec;
    std::vector<ad::Var> weights;
    std::vector<ad::Var> biases;

    ad::Var apply(ad::Var x) const;
    /// Flat gradient in ParamVector layout.
    std::vector<double> gradient(const ad::Gradients& g) const;
    std::vector<ad::Var> leaves() const;
};

BoundNetwork bind(ad::Tape& tape, const NetworkSpec& spec, const ParamVector& params, bool differentiable);

ad::Var apply_activation(ad::Var x, Activation a);

// Checkpoints ---------------------------------------------------------------

enum class SectionKind : std::uint8_t { generator = 0, critic = 1, generator_ema = 2 };

struct CheckpointSection {
    SectionKind kind = SectionKind::generator;
    NetworkSpec spec;
    ParamVector params;
};

struct Checkpoint {
    std::vector<CheckpointSection> sections;

    const CheckpointSection* find(SectionKind kind) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ganselect
