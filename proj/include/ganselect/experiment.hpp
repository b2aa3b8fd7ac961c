#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ganselect/data.hpp"
#include "ganselect/eval.hpp"
#include "ganselect/models.hpp"
#include "ganselect/objectives.hpp"
#include "ganselect/optim.hpp"

namespace ganselect {

/// Everything one experiment needs. Serialized as JSON; see docs/config.md.
struct ExperimentConfig {
    DatasetSpec dataset;
    NetworkSpec generator = generator_spec(2, 0, 2);
    NetworkSpec critic = critic_spec(2);
    ObjectiveSpec objective;
    TrainConfig train = default_train_config(ObjectiveKind::wgan_div);
    EvalOptions eval;
    ProbeOptions probe;
    std::string output_dir = "out";

    /// Cross-field checks (dimensions agree, sub-structures valid).
    void validate() const;
};

std::string to_string(ProbeQuantity q);
ProbeQuantity probe_quantity_from_string(const std::string& s);

/// Missing keys keep their defaults; unknown keys and type mismatches throw
/// ConfigError naming the field path, e.g. "train.epochs: expected an unsigned integer".
ExperimentConfig parse_config(std::string_view text);
/// Every field, two-space indented. parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

bool operator==(const EvalOptions& a, const EvalOptions& b);
bool operator==(const ProbeOptions& a, const ProbeOptions& b);
bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

/// A grid over config fields. Axis values are JSON literals stored as text.
struct SweepSpec {
    ExperimentConfig base;
    /// field path ("train.rho_sam") -> candidate values, in file order.
    std::vector<std::pair<std::string, std::vector<std::string>>> axes;
    std::size_t repeats = 1;
};

SweepSpec parse_sweep(std::string_view text);
SweepSpec load_sweep(const std::filesystem::path& path);

struct SweepCell {
    std::size_t index = 0;
    /// (path, value) per axis, in axis order.
    std::vector<std::pair<std::string, std::string>> assignment;
    ExperimentConfig config;
};

/// Cross product of the axes, last axis fastest. Axis values are type-checked
/// against the base config here. When train.rho_sam is an axis and
/// train.sam_targets is not, sam_targets follows rho (none at 0, both otherwise).
std::vector<SweepCell> expand_sweep(const SweepSpec& sweep);

// Runners ---------------------------------------------------------------------

/// Loads config.dataset and its Gaussian target moments.
struct LoadedData {
    Tensor data;
    GaussianMoments target;
};
LoadedData load_data(const DatasetSpec& spec);

struct TrainResult {
    TrainedModel model;
    std::vector<MetricReport> raw;
    std::vector<MetricReport> ema;
};

/// Writes checkpoint.gsck, history.csv and metrics.csv (raw and EMA generator)
/// into out_dir.
TrainResult run_train(const ExperimentConfig& config, const std::filesystem::path& out_dir);

/// Evaluates every generator section of the checkpoint; writes metrics.csv.
std::vector<std::pair<std::string, std::vector<MetricReport>>> run_eval(const ExperimentConfig& config,
                                                                       const std::filesystem::path& checkpoint,
                                                                       const std::filesystem::path& out_dir);

/// Flatness probe of the checkpoint's raw generator; writes probe.csv.
ProbeReport run_probe(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
                      const std::filesystem::path& out_dir);

/// int8 round trip of the raw generator; writes quant.csv (metric deltas,
/// after - before) and quant_tensors.csv (scale, zero point, error per tensor).
QuantReport run_quantize(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
                         const std::filesystem::path& out_dir);

struct SweepOutcome {
    std::size_t rows = 0;
    std::size_t failures = 0;
};

/// Runs every cell x repeat on up to `parallelism` threads, each in its own
/// staging directory under out_dir/cells. Writes sweep.csv (one row per
/// cell-repeat, failures in the error column) and sweep_summary.csv (mean and
/// sample std per cell).
SweepOutcome run_sweep(const SweepSpec& sweep, const std::filesystem::path& out_dir, std::size_t parallelism);

struct Figure1Cell {
    std::size_t latent_dim = 0;
    std::size_t hidden_layers = 0;
    double gaussian_kl = 0.0;  // mean over eval repeats, raw generator
    ProbeReport probe;
};

/// Latent sizes and architectures of the grid.
inline constexpr std::size_t kFigure1Latents[] = {1, 2, 10};
inline constexpr std::size_t kFigure1Layers[] = {0, 1, 2};

/// Trains the 3x3 grid (P in {1, 2, 10}, MLP0..MLP2) from `base` with the
/// generator replaced per cell and probes each model. Writes figure1.csv,
/// figure1_cells.csv and one boxplot SVG per cell.
std::vector<Figure1Cell> run_figure1(const ExperimentConfig& base, const std::filesystem::path& out_dir,
                                     std::uint64_t seed, std::size_t parallelism);

// Artifact writers -------------------------------------------------------------

/// Headered CSV with deterministic number formatting.
void write_table(const std::filesystem::path& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows);

/// Standalone SVG: one box (quartiles, median, min/max whiskers) per group
/// and a horizontal rule at `baseline`.
std::string boxplot_svg(const std::string& title, const std::vector<std::string>& labels,
                        const std::vector<std::vector<double>>& groups, double baseline);

/// Quantile with linear interpolation between order statistics.
double quantile(std::vector<double> values, double q);

// Logging ----------------------------------------------------------------------

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

/// Level from GANSELECT_LOG (error, warn, info, debug); warn when unset.
LogLevel log_level();
void log(LogLevel level, const std::string& message);

}  // namespace ganselect
