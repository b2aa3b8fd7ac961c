#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "ganselect/error.hpp"
#include "ganselect/experiment.hpp"

namespace fs = std::filesystem;
using namespace ganselect;

namespace {

enum ExitCode : int { ok = 0, failure = 1, config_error = 2, divergence = 3, partial_sweep = 4 };

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string checkpoint;
    std::size_t parallelism = 1;
};

ExperimentConfig resolve(const Options& o) {
    ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
    if (o.seed) c.train.seed = *o.seed;
    if (!o.out.empty()) c.output_dir = o.out;
    c.validate();
    return c;
}

fs::path checkpoint_path(const Options& o, const ExperimentConfig& c) {
    return o.checkpoint.empty() ? fs::path(c.output_dir) / "checkpoint.gsck" : fs::path(o.checkpoint);
}

void echo_config(const ExperimentConfig& c) {
    fs::create_directories(c.output_dir);
    std::ofstream(fs::path(c.output_dir) / "config.json", std::ios::binary) << serialize_config(c);
}

int run(const std::string& command, const Options& o) {
    if (command == "train") {
        const ExperimentConfig c = resolve(o);
        echo_config(c);
        run_train(c, c.output_dir);
    } else if (command == "eval") {
        const ExperimentConfig c = resolve(o);
        run_eval(c, checkpoint_path(o, c), c.output_dir);
    } else if (command == "probe") {
        const ExperimentConfig c = resolve(o);
        run_probe(c, checkpoint_path(o, c), c.output_dir);
    } else if (command == "quantize") {
        const ExperimentConfig c = resolve(o);
        run_quantize(c, checkpoint_path(o, c), c.output_dir);
    } else if (command == "sweep") {
        if (o.config.empty()) throw ConfigError("sweep: --config is required");
        SweepSpec s = load_sweep(o.config);
        if (o.seed) s.base.train.seed = *o.seed;
        const fs::path out = o.out.empty() ? fs::path(s.base.output_dir) : fs::path(o.out);
        const SweepOutcome r = run_sweep(s, out, o.parallelism);
        if (r.failures > 0) {
            std::cerr << "sweep: " << r.failures << " of " << r.rows << " runs failed; see sweep.csv\n";
            return partial_sweep;
        }
    } else if (command == "figure1") {
        ExperimentConfig c = resolve(o);
        run_figure1(c, c.output_dir, o.seed.value_or(0), o.parallelism);
    }
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GAN objective and flatness laboratory"};
    app.require_subcommand(1);
    Options o;
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"train", "train a generator/critic pair; writes checkpoint, history and metrics"},
        {"eval", "evaluate a checkpoint's generators"},
        {"probe", "flatness probe of a checkpoint's generator"},
        {"quantize", "int8 round trip of a checkpoint's generator and metric deltas"},
        {"sweep", "grid of training runs from a sweep file"},
        {"figure1", "latent size x architecture grid with flatness probes"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", o.config, name == "sweep" ? "sweep file (JSON)" : "experiment config (JSON)");
        sub->add_option("--seed", o.seed, "override the master seed");
        sub->add_option("--out", o.out, "output directory");
        sub->add_option("--parallelism", o.parallelism, "worker threads")->check(CLI::PositiveNumber);
        if (name == "eval" || name == "probe" || name == "quantize")
            sub->add_option("--checkpoint", o.checkpoint, "checkpoint file (default OUT/checkpoint.gsck)");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config_error;
    }
    const std::string command = app.get_subcommands().front()->get_name();
    try {
        return run(command, o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return config_error;
    } catch (const IngestionError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return config_error;
    } catch (const NumericError& e) {
        std::cerr << "numeric divergence: " << e.what() << "\n";
        return divergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return failure;
    }
}
