#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <thread>

#include "ganselect/error.hpp"
#include "ganselect/experiment.hpp"

namespace ganselect {

namespace {

// Streams derived from train.seed; 1..5 belong to the trainer.
constexpr std::uint64_t kEvalStream = 16;
constexpr std::uint64_t kProbeStream = 17;

const std::vector<std::string> kMetricNames = {"gaussian_kl", "frechet", "mmd2", "sliced_w2"};

std::vector<double> metric_values(const MetricReport& r) { return {r.gaussian_kl, r.frechet, r.mmd2, r.sliced_w2}; }

std::vector<double> mean_metrics(const std::vector<MetricReport>& reports) {
    std::vector<double> m(kMetricNames.size(), 0.0);
    for (const auto& r : reports) {
        const auto v = metric_values(r);
        for (std::size_t i = 0; i < v.size(); ++i) m[i] += v[i] / static_cast<double>(reports.size());
    }
    return m;
}

std::string text(std::uint64_t v) { return std::to_string(v); }

void append_metric_rows(std::vector<std::vector<std::string>>& rows, const std::string& label,
                        const std::vector<MetricReport>& reports) {
    for (std::size_t r = 0; r < reports.size(); ++r) {
        std::vector<std::string> row = {label, text(r), text(reports[r].seed), text(reports[r].n_samples)};
        for (double v : metric_values(reports[r])) row.push_back(format_double(v));
        rows.push_back(std::move(row));
    }
}

void write_metrics(const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, std::vector<MetricReport>>>& sets) {
    std::vector<std::string> header = {"params", "repeat", "seed", "n_samples"};
    header.insert(header.end(), kMetricNames.begin(), kMetricNames.end());
    std::vector<std::vector<std::string>> rows;
    for (const auto& [label, reports] : sets) append_metric_rows(rows, label, reports);
    write_table(path, header, rows);
}

std::vector<std::vector<std::string>> probe_rows(const ProbeReport& p, const std::vector<std::string>& prefix) {
    std::vector<std::vector<std::string>> rows;
    auto row = [&](const std::string& kind, double alpha, std::size_t repeat, double value) {
        std::vector<std::string> r = prefix;
        r.insert(r.end(), {kind, format_double(alpha), text(repeat), format_double(value)});
        rows.push_back(std::move(r));
    };
    row("baseline", 0.0, 0, p.baseline);
    for (std::size_t a = 0; a < p.alphas.size(); ++a)
        for (std::size_t m = 0; m < p.values[a].size(); ++m) row("perturbed", p.alphas[a], m, p.values[a][m]);
    return rows;
}

const CheckpointSection& require_section(const Checkpoint& c, SectionKind kind, const std::string& name) {
    const CheckpointSection* s = c.find(kind);
    if (!s) throw ConfigError("checkpoint has no " + name + " section");
    return *s;
}

// Runs task(i) for i in [0, n) on up to `parallelism` threads. Exceptions are
// captured per task; the caller decides what a failure means.
void parallel_for(std::size_t n, std::size_t parallelism, const std::function<void(std::size_t)>& task,
                  std::vector<std::exception_ptr>& errors) {
    errors.assign(n, nullptr);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                task(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::max<std::size_t>(1, std::min(parallelism, n));
    if (threads == 1) {
        worker();
        return;
    }
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
}

std::string describe(const std::exception_ptr& e) {
    try {
        std::rethrow_exception(e);
    } catch (const std::exception& ex) {
        return ex.what();
    } catch (...) {
        return "unknown error";
    }
}

std::string unquote(const std::string& json_literal) {
    if (json_literal.size() >= 2 && json_literal.front() == '"' && json_literal.back() == '"')
        return json_literal.substr(1, json_literal.size() - 2);
    return json_literal;
}

}  // namespace

LoadedData load_data(const DatasetSpec& spec) {
    LoadedData d{make_dataset(spec), {}};
    if (d.data.cols() != spec.dim)
        throw ConfigError("dataset.dim is " + std::to_string(spec.dim) + " but the data has " +
                          std::to_string(d.data.cols()) + " columns");
    d.target = target_moments(spec, d.data);
    return d;
}

TrainResult run_train(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
    config.validate();
    const LoadedData d = load_data(config.dataset);
    log(LogLevel::info, "train: " + std::to_string(config.train.epochs) + " epochs, generator " +
                            std::to_string(config.generator.param_count()) + " parameters");
    TrainResult r;
    r.model = train(config.generator, config.critic, config.objective, config.train, d.data, d.target);
    const std::uint64_t eval_seed = split_seed(config.train.seed, kEvalStream);
    r.raw = evaluate_generator(config.generator, r.model.generator, d.data, d.target, config.eval, eval_seed);
    r.ema = evaluate_generator(config.generator, r.model.generator_ema, d.data, d.target, config.eval, eval_seed);

    std::filesystem::create_directories(out_dir);
    save_checkpoint(out_dir / "checkpoint.gsck", r.model.checkpoint());
    std::vector<std::vector<std::string>> history;
    for (const HistoryRow& h : r.model.history)
        history.push_back({text(h.epoch), format_double(h.lr), format_double(h.critic_loss),
                           format_double(h.generator_loss), format_double(h.gaussian_kl)});
    write_table(out_dir / "history.csv", {"epoch", "lr", "critic_loss", "generator_loss", "gaussian_kl"}, history);
    write_metrics(out_dir / "metrics.csv", {{"raw", r.raw}, {"ema", r.ema}});
    return r;
}

std::vector<std::pair<std::string, std::vector<MetricReport>>> run_eval(const ExperimentConfig& config,
                                                                       const std::filesystem::path& checkpoint,
                                                                       const std::filesystem::path& out_dir) {
    config.validate();
    const Checkpoint c = load_checkpoint(checkpoint);
    const LoadedData d = load_data(config.dataset);
    const std::uint64_t eval_seed = split_seed(config.train.seed, kEvalStream);
    std::vector<std::pair<std::string, std::vector<MetricReport>>> sets;
    for (const auto& [kind, label] : {std::pair{SectionKind::generator, "raw"}, {SectionKind::generator_ema, "ema"}}) {
        if (const CheckpointSection* s = c.find(kind))
            sets.emplace_back(label, evaluate_generator(s->spec, s->params, d.data, d.target, config.eval, eval_seed));
    }
    if (sets.empty()) throw ConfigError("checkpoint has no generator section");
    write_metrics(out_dir / "metrics.csv", sets);
    return sets;
}

ProbeReport run_probe(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
                      const std::filesystem::path& out_dir) {
    config.validate();
    const Checkpoint c = load_checkpoint(checkpoint);
    const LoadedData d = load_data(config.dataset);
    const CheckpointSection& g = require_section(c, SectionKind::generator, "generator");
    NetworkSpec critic_spec = config.critic;
    ParamVector critic;
    if (const CheckpointSection* s = c.find(SectionKind::critic)) {
        critic_spec = s->spec;
        critic = s->params;
    }
    const ProbeReport p = probe_model(g.spec, g.params, critic_spec, critic, config.objective, d.data, config.probe,
                                      split_seed(config.train.seed, kProbeStream));
    write_table(out_dir / "probe.csv", {"kind", "alpha", "repeat", "objective"}, probe_rows(p, {}));
    return p;
}

QuantReport run_quantize(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
                         const std::filesystem::path& out_dir) {
    config.validate();
    const Checkpoint c = load_checkpoint(checkpoint);
    const LoadedData d = load_data(config.dataset);
    const CheckpointSection& g = require_section(c, SectionKind::generator, "generator");
    const QuantReport q = quantization_report(g.spec, g.params, d.data, d.target, config.eval,
                                              split_seed(config.train.seed, kEvalStream));

    std::vector<std::vector<std::string>> rows;
    for (std::size_t r = 0; r < q.before.size(); ++r) {
        const auto before = metric_values(q.before[r]);
        const auto after = metric_values(q.after[r]);
        // An unchanged value has delta 0, including inf before and after.
        for (std::size_t m = 0; m < kMetricNames.size(); ++m)
            rows.push_back({kMetricNames[m], text(r), format_double(before[m]), format_double(after[m]),
                            format_double(before[m] == after[m] ? 0.0 : after[m] - before[m])});
    }
    write_table(out_dir / "quant.csv", {"metric", "repeat", "before", "after", "delta"}, rows);

    std::vector<std::vector<std::string>> tensors;
    for (std::size_t t = 0; t < q.scales.size(); ++t)
        tensors.push_back({text(t / 2), t % 2 == 0 ? "weight" : "bias", format_double(q.scales[t]),
                           format_double(q.zero_points[t]), format_double(q.max_abs_error[t])});
    write_table(out_dir / "quant_tensors.csv", {"layer", "tensor", "scale", "zero_point", "max_abs_error"}, tensors);
    return q;
}

SweepOutcome run_sweep(const SweepSpec& sweep, const std::filesystem::path& out_dir, std::size_t parallelism) {
    const std::vector<SweepCell> cells = expand_sweep(sweep);
    const std::size_t n_tasks = cells.size() * sweep.repeats;
    struct TaskResult {
        std::uint64_t seed = 0;
        std::vector<double> raw, ema;
    };
    std::vector<TaskResult> results(n_tasks);
    std::vector<std::exception_ptr> errors;
    parallel_for(
        n_tasks, parallelism,
        [&](std::size_t t) {
            const SweepCell& cell = cells[t / sweep.repeats];
            const std::size_t repeat = t % sweep.repeats;
            ExperimentConfig config = cell.config;
            config.train.seed = split_seed(cell.config.train.seed, repeat);
            results[t].seed = config.train.seed;
            const auto dir = out_dir / "cells" / ("cell" + text(cell.index) + "_rep" + text(repeat));
            log(LogLevel::info, "sweep: cell " + text(cell.index) + " repeat " + text(repeat));
            const TrainResult r = run_train(config, dir);
            results[t].raw = mean_metrics(r.raw);
            results[t].ema = mean_metrics(r.ema);
        },
        errors);

    std::vector<std::string> header = {"cell", "repeat", "seed"};
    for (const auto& axis : sweep.axes) header.push_back(axis.first);
    for (const auto& m : kMetricNames) header.push_back(m);
    for (const auto& m : kMetricNames) header.push_back("ema_" + m);
    header.push_back("error");

    SweepOutcome outcome;
    std::vector<std::vector<std::string>> rows;
    for (std::size_t t = 0; t < n_tasks; ++t) {
        const SweepCell& cell = cells[t / sweep.repeats];
        std::vector<std::string> row = {text(cell.index), text(t % sweep.repeats), text(results[t].seed)};
        for (const auto& a : cell.assignment) row.push_back(unquote(a.second));
        const bool failed = errors[t] != nullptr;
        for (std::size_t i = 0; i < 2 * kMetricNames.size(); ++i) {
            const auto& v = i < kMetricNames.size() ? results[t].raw : results[t].ema;
            row.push_back(failed ? "" : format_double(v[i % kMetricNames.size()]));
        }
        std::string error = failed ? describe(errors[t]) : "";
        std::replace(error.begin(), error.end(), '\n', ' ');
        row.push_back(error);
        if (failed) {
            ++outcome.failures;
            log(LogLevel::error, "sweep: cell " + text(cell.index) + " failed: " + error);
        }
        rows.push_back(std::move(row));
    }
    outcome.rows = rows.size();
    write_table(out_dir / "sweep.csv", header, rows);

    std::vector<std::string> summary_header = {"cell"};
    for (const auto& axis : sweep.axes) summary_header.push_back(axis.first);
    summary_header.push_back("n_ok");
    for (const auto& prefix : {"", "ema_"})
        for (const auto& m : kMetricNames) {
            summary_header.push_back(prefix + m + "_mean");
            summary_header.push_back(prefix + m + "_std");
        }
    std::vector<std::vector<std::string>> summary;
    for (const SweepCell& cell : cells) {
        std::vector<std::vector<double>> columns(2 * kMetricNames.size());
        for (std::size_t r = 0; r < sweep.repeats; ++r) {
            const std::size_t t = cell.index * sweep.repeats + r;
            if (errors[t]) continue;
            for (std::size_t i = 0; i < columns.size(); ++i)
                columns[i].push_back(i < kMetricNames.size() ? results[t].raw[i] : results[t].ema[i - kMetricNames.size()]);
        }
        std::vector<std::string> row = {text(cell.index)};
        for (const auto& a : cell.assignment) row.push_back(unquote(a.second));
        row.push_back(text(columns[0].size()));
        for (const auto& col : columns) {
            const double n = static_cast<double>(col.size());
            double mean = 0.0;
            for (double v : col) mean += v / n;
            double ss = 0.0;
            for (double v : col) ss += (v - mean) * (v - mean);
            row.push_back(col.empty() ? "nan" : format_double(mean));
            row.push_back(col.size() < 2 ? "nan" : format_double(std::sqrt(ss / (n - 1.0))));
        }
        summary.push_back(std::move(row));
    }
    write_table(out_dir / "sweep_summary.csv", summary_header, summary);
    return outcome;
}

std::vector<Figure1Cell> run_figure1(const ExperimentConfig& base, const std::filesystem::path& out_dir,
                                     std::uint64_t seed, std::size_t parallelism) {
    std::vector<ExperimentConfig> configs;
    std::vector<Figure1Cell> cells;
    for (std::size_t p : kFigure1Latents)
        for (std::size_t l : kFigure1Layers) {
            ExperimentConfig c = base;
            c.generator = generator_spec(p, l, base.dataset.dim, base.generator.hidden_units);
            c.generator.hidden_activation = base.generator.hidden_activation;
            c.dataset.seed = seed;
            c.train.seed = split_seed(seed, configs.size());
            c.validate();
            configs.push_back(c);
            cells.push_back({p, l, 0.0, {}});
        }
    const LoadedData d = load_data(configs.front().dataset);
    std::filesystem::create_directories(out_dir);

    std::vector<std::exception_ptr> errors;
    parallel_for(
        configs.size(), parallelism,
        [&](std::size_t i) {
            const ExperimentConfig& c = configs[i];
            log(LogLevel::info, "figure1: P=" + text(cells[i].latent_dim) + " MLP" + text(cells[i].hidden_layers));
            const TrainedModel m = train(c.generator, c.critic, c.objective, c.train, d.data, d.target);
            const auto reports = evaluate_generator(c.generator, m.generator, d.data, d.target, c.eval,
                                                    split_seed(c.train.seed, kEvalStream));
            cells[i].gaussian_kl = mean_metrics(reports)[0];
            cells[i].probe = probe_model(c.generator, m.generator, c.critic, m.critic, c.objective, d.data, c.probe,
                                         split_seed(c.train.seed, kProbeStream));
        },
        errors);
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::vector<std::vector<std::string>> rows, summary;
    std::vector<std::string> summary_header = {"latent_dim", "arch", "gaussian_kl", "baseline"};
    for (double a : base.probe.alphas) summary_header.push_back("median_degradation_" + format_double(a));
    for (const Figure1Cell& cell : cells) {
        const std::string arch = "MLP" + text(cell.hidden_layers);
        auto r = probe_rows(cell.probe, {text(cell.latent_dim), arch});
        rows.insert(rows.end(), r.begin(), r.end());

        std::vector<std::string> s = {text(cell.latent_dim), arch, format_double(cell.gaussian_kl),
                                      format_double(cell.probe.baseline)};
        for (std::size_t a = 0; a < cell.probe.alphas.size(); ++a)
            s.push_back(format_double(cell.probe.median_degradation(a)));
        summary.push_back(std::move(s));

        std::vector<std::string> labels;
        for (double a : cell.probe.alphas) labels.push_back(format_double(a));
        const std::string name = "P" + text(cell.latent_dim) + "_" + arch;
        std::ofstream svg(out_dir / ("figure1_" + name + ".svg"), std::ios::binary);
        svg << boxplot_svg("P=" + text(cell.latent_dim) + ", " + arch, labels, cell.probe.values, cell.probe.baseline);
    }
    write_table(out_dir / "figure1.csv", {"latent_dim", "arch", "kind", "alpha", "repeat", "objective"}, rows);
    write_table(out_dir / "figure1_cells.csv", summary_header, summary);
    return cells;
}

}  // namespace ganselect
