#include <fstream>
#include <set>
#include <sstream>

#include "ganselect/error.hpp"
#include "ganselect/experiment.hpp"
#include "json.hpp"

namespace ganselect {

using Json = nlohmann::ordered_json;

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

// Reads one JSON object, tracking which keys were consumed so leftovers can be
// reported as unknown fields.
class Reader {
public:
    Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(path_.empty() ? "config" : path_, "expected an object");
    }

    [[noreturn]] static void fail(const std::string& where, const std::string& what) {
        throw ConfigError(where + ": " + what);
    }

    const Json* find(const std::string& key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void unsigned_int(const std::string& key, std::size_t& out) {
        std::uint64_t v = out;
        u64(key, v);
        out = static_cast<std::size_t>(v);
    }

    void u64(const std::string& key, std::uint64_t& out) {
        if (const Json* v = find(key)) {
            if (!v->is_number_unsigned()) fail(join(path_, key), "expected an unsigned integer");
            out = v->get<std::uint64_t>();
        }
    }

    void real(const std::string& key, double& out) {
        if (const Json* v = find(key)) out = as_real(*v, join(path_, key));
    }

    void boolean(const std::string& key, bool& out) {
        if (const Json* v = find(key)) {
            if (!v->is_boolean()) fail(join(path_, key), "expected true or false");
            out = v->get<bool>();
        }
    }

    void text(const std::string& key, std::string& out) {
        if (const Json* v = find(key)) out = as_text(*v, join(path_, key));
    }

    template <class T, class Parse>
    void tag(const std::string& key, T& out, Parse parse) {
        if (const Json* v = find(key)) {
            const std::string where = join(path_, key);
            try {
                out = parse(as_text(*v, where));
            } catch (const ConfigError& e) {
                fail(where, e.what());
            }
        }
    }

    void reals(const std::string& key, std::vector<double>& out) {
        if (const Json* v = find(key)) {
            const std::string where = join(path_, key);
            if (!v->is_array()) fail(where, "expected an array of numbers");
            std::vector<double> r;
            for (std::size_t i = 0; i < v->size(); ++i) r.push_back(as_real((*v)[i], where + "[" + std::to_string(i) + "]"));
            out = std::move(r);
        }
    }

    template <class F>
    void object(const std::string& key, F&& read) {
        if (const Json* v = find(key)) {
            Reader sub(*v, join(path_, key));
            read(sub);
            sub.finish();
        }
    }

    void finish() const {
        for (const auto& [key, value] : j_.items())
            if (!seen_.contains(key)) fail(join(path_, key), "unknown field");
    }

private:
    static double as_real(const Json& v, const std::string& where) {
        if (!v.is_number()) fail(where, "expected a number");
        return v.get<double>();
    }
    static std::string as_text(const Json& v, const std::string& where) {
        if (!v.is_string()) fail(where, "expected a string");
        return v.get<std::string>();
    }

    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_dataset(Reader& r, DatasetSpec& d) {
    r.tag("kind", d.kind, dataset_kind_from_string);
    r.unsigned_int("dim", d.dim);
    r.unsigned_int("n", d.n);
    r.unsigned_int("n_modes", d.n_modes);
    r.real("radius", d.radius);
    r.real("mode_std", d.mode_std);
    r.text("path", d.path);
    r.boolean("csv_header", d.csv_header);
    r.u64("seed", d.seed);
}

void read_network(Reader& r, NetworkSpec& n) {
    auto activation = [](const std::string& s) { return activation_from_string(s); };
    r.unsigned_int("input_dim", n.input_dim);
    r.unsigned_int("hidden_layers", n.hidden_layers);
    r.unsigned_int("hidden_units", n.hidden_units);
    r.unsigned_int("output_dim", n.output_dim);
    r.tag("hidden_activation", n.hidden_activation, activation);
    r.tag("output_activation", n.output_activation, activation);
}

void read_objective(Reader& r, ObjectiveSpec& o) {
    r.tag("kind", o.kind, objective_kind_from_string);
    r.tag("f_choice", o.f_choice, f_choice_from_string);
    r.reals("bandwidth_multipliers", o.bandwidth_multipliers);
    r.real("wgan_k", o.wgan_k);
    r.real("wgan_p", o.wgan_p);
    r.real("sigma2_lik", o.sigma2_lik);
    r.real("lambda_grad", o.lambda_grad);
}

void read_train(Reader& r, TrainConfig& t) {
    r.unsigned_int("batch_size", t.batch_size);
    r.real("base_lr", t.base_lr);
    r.tag("lr_rule", t.lr_rule, lr_rule_from_string);
    r.unsigned_int("warmup_epochs_lr", t.warmup_epochs_lr);
    r.unsigned_int("epochs", t.epochs);
    r.unsigned_int("n_critic", t.n_critic);
    r.real("rho_sam", t.rho_sam);
    // An omitted tag follows rho_sam.
    t.sam_targets = t.rho_sam == 0.0 ? SamTargets::none : SamTargets::both;
    r.tag("sam_targets", t.sam_targets, sam_targets_from_string);
    r.real("ema_decay", t.ema_decay);
    r.unsigned_int("ema_warmup_epochs", t.ema_warmup_epochs);
    r.u64("seed", t.seed);
    r.tag("optimizer", t.optimizer, optimizer_kind_from_string);
    r.real("beta1", t.beta1);
    r.real("beta2", t.beta2);
    r.unsigned_int("snapshot_samples", t.snapshot_samples);
}

void read_eval(Reader& r, EvalOptions& e) {
    r.unsigned_int("n_samples", e.n_samples);
    r.unsigned_int("repeats", e.repeats);
    r.unsigned_int("mmd_samples", e.mmd_samples);
    r.unsigned_int("sw_dirs", e.sw_dirs);
}

void read_probe(Reader& r, ProbeOptions& p) {
    r.reals("alphas", p.alphas);
    r.unsigned_int("repeats", p.repeats);
    r.unsigned_int("eval_batch", p.eval_batch);
    r.tag("quantity", p.quantity, probe_quantity_from_string);
    r.boolean("include_critic", p.include_critic);
}

Json network_json(const NetworkSpec& n) {
    Json j;
    j["input_dim"] = n.input_dim;
    j["hidden_layers"] = n.hidden_layers;
    j["hidden_units"] = n.hidden_units;
    j["output_dim"] = n.output_dim;
    j["hidden_activation"] = std::string(to_string(n.hidden_activation));
    j["output_activation"] = std::string(to_string(n.output_activation));
    return j;
}

Json config_json(const ExperimentConfig& c) {
    Json j;
    const DatasetSpec& d = c.dataset;
    j["dataset"] = {{"kind", to_string(d.kind)},   {"dim", d.dim},
                    {"n", d.n},                    {"n_modes", d.n_modes},
                    {"radius", d.radius},          {"mode_std", d.mode_std},
                    {"path", d.path},              {"csv_header", d.csv_header},
                    {"seed", d.seed}};
    j["generator"] = network_json(c.generator);
    j["critic"] = network_json(c.critic);
    const ObjectiveSpec& o = c.objective;
    j["objective"] = {{"kind", to_string(o.kind)},
                      {"f_choice", to_string(o.f_choice)},
                      {"bandwidth_multipliers", o.bandwidth_multipliers},
                      {"wgan_k", o.wgan_k},
                      {"wgan_p", o.wgan_p},
                      {"sigma2_lik", o.sigma2_lik},
                      {"lambda_grad", o.lambda_grad}};
    const TrainConfig& t = c.train;
    j["train"] = {{"batch_size", t.batch_size},
                  {"base_lr", t.base_lr},
                  {"lr_rule", to_string(t.lr_rule)},
                  {"warmup_epochs_lr", t.warmup_epochs_lr},
                  {"epochs", t.epochs},
                  {"n_critic", t.n_critic},
                  {"rho_sam", t.rho_sam},
                  {"sam_targets", to_string(t.sam_targets)},
                  {"ema_decay", t.ema_decay},
                  {"ema_warmup_epochs", t.ema_warmup_epochs},
                  {"seed", t.seed},
                  {"optimizer", to_string(t.optimizer)},
                  {"beta1", t.beta1},
                  {"beta2", t.beta2},
                  {"snapshot_samples", t.snapshot_samples}};
    j["eval"] = {{"n_samples", c.eval.n_samples},
                 {"repeats", c.eval.repeats},
                 {"mmd_samples", c.eval.mmd_samples},
                 {"sw_dirs", c.eval.sw_dirs}};
    j["probe"] = {{"alphas", c.probe.alphas},
                  {"repeats", c.probe.repeats},
                  {"eval_batch", c.probe.eval_batch},
                  {"quantity", to_string(c.probe.quantity)},
                  {"include_critic", c.probe.include_critic}};
    j["output_dir"] = c.output_dir;
    return j;
}

ExperimentConfig config_from_json(const Json& j, const std::string& path) {
    ExperimentConfig c;
    Reader r(j, path);
    // The objective decides the protocol defaults, so it is read first.
    r.object("objective", [&](Reader& s) { read_objective(s, c.objective); });
    c.train = default_train_config(c.objective.kind);
    r.object("dataset", [&](Reader& s) { read_dataset(s, c.dataset); });
    r.object("generator", [&](Reader& s) { read_network(s, c.generator); });
    r.object("critic", [&](Reader& s) { read_network(s, c.critic); });
    r.object("train", [&](Reader& s) { read_train(s, c.train); });
    r.object("eval", [&](Reader& s) { read_eval(s, c.eval); });
    r.object("probe", [&](Reader& s) { read_probe(s, c.probe); });
    r.text("output_dir", c.output_dir);
    r.finish();
    c.validate();
    return c;
}

Json parse_json(std::string_view text) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Splits "train.rho_sam" into a JSON pointer into the config object.
Json::json_pointer field_pointer(const std::string& path) {
    std::string p;
    std::size_t start = 0;
    while (start <= path.size()) {
        const std::size_t dot = path.find('.', start);
        const std::string part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("axes: malformed field path '" + path + "'");
        p += "/" + part;
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    return Json::json_pointer(p);
}

}  // namespace

std::string to_string(ProbeQuantity q) {
    return q == ProbeQuantity::mmd2 ? "mmd2" : "generator_objective";
}

ProbeQuantity probe_quantity_from_string(const std::string& s) {
    if (s == "generator_objective") return ProbeQuantity::generator_objective;
    if (s == "mmd2") return ProbeQuantity::mmd2;
    throw ConfigError("unknown probe quantity '" + s + "'");
}

void ExperimentConfig::validate() const {
    generator.validate();
    objective.validate();
    train.validate();
    if (dataset.dim == 0 || dataset.n == 0) throw ConfigError("dataset: dim and n must be positive");
    if (dataset.kind == DatasetKind::csv && dataset.path.empty()) throw ConfigError("dataset.path: required for csv");
    if (generator.output_dim != dataset.dim) throw ConfigError("generator.output_dim must equal dataset.dim");
    if (objective.has_critic()) {
        critic.validate();
        if (critic.input_dim != dataset.dim) throw ConfigError("critic.input_dim must equal dataset.dim");
        if (critic.output_dim != 1) throw ConfigError("critic.output_dim must be 1");
        if (train.n_critic == 0) throw ConfigError("train.n_critic must be positive for objectives with a critic");
    }
    if (train.batch_size > dataset.n) throw ConfigError("train.batch_size must not exceed dataset.n");
    if (eval.n_samples <= dataset.dim) throw ConfigError("eval.n_samples must exceed dataset.dim");
    if (eval.repeats == 0) throw ConfigError("eval.repeats must be positive");
    if (eval.mmd_samples < 2) throw ConfigError("eval.mmd_samples must be at least 2");
    if (eval.sw_dirs == 0) throw ConfigError("eval.sw_dirs must be positive");
    for (double a : probe.alphas)
        if (!(a >= 0.0)) throw ConfigError("probe.alphas must be >= 0");
    if (probe.repeats == 0) throw ConfigError("probe.repeats must be positive");
    if (probe.eval_batch < 2) throw ConfigError("probe.eval_batch must be at least 2");
}

ExperimentConfig parse_config(std::string_view text) { return config_from_json(parse_json(text), ""); }

std::string serialize_config(const ExperimentConfig& config) { return config_json(config).dump(2) + "\n"; }

ExperimentConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

bool operator==(const EvalOptions& a, const EvalOptions& b) {
    return a.n_samples == b.n_samples && a.repeats == b.repeats && a.mmd_samples == b.mmd_samples &&
           a.sw_dirs == b.sw_dirs;
}

bool operator==(const ProbeOptions& a, const ProbeOptions& b) {
    return a.alphas == b.alphas && a.repeats == b.repeats && a.eval_batch == b.eval_batch &&
           a.quantity == b.quantity && a.include_critic == b.include_critic;
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    return a.dataset == b.dataset && a.generator == b.generator && a.critic == b.critic &&
           a.objective == b.objective && a.train == b.train && a.eval == b.eval && a.probe == b.probe &&
           a.output_dir == b.output_dir;
}

SweepSpec parse_sweep(std::string_view text) {
    const Json j = parse_json(text);
    Reader r(j, "");
    SweepSpec s;
    if (const Json* base = r.find("base")) s.base = config_from_json(*base, "base");
    if (const Json* axes = r.find("axes")) {
        if (!axes->is_object()) Reader::fail("axes", "expected an object of field path -> array");
        for (const auto& [path, values] : axes->items()) {
            if (!values.is_array() || values.empty()) Reader::fail("axes." + path, "expected a non-empty array");
            std::vector<std::string> vs;
            for (const auto& v : values) vs.push_back(v.dump());
            s.axes.emplace_back(path, std::move(vs));
        }
    }
    r.unsigned_int("repeats", s.repeats);
    r.finish();
    if (s.repeats == 0) throw ConfigError("repeats: must be positive");
    expand_sweep(s);  // type-check every axis value up front
    return s;
}

SweepSpec load_sweep(const std::filesystem::path& path) { return parse_sweep(read_file(path)); }

std::vector<SweepCell> expand_sweep(const SweepSpec& sweep) {
    const Json base = config_json(sweep.base);
    bool rho_axis = false, targets_axis = false;
    for (const auto& [path, values] : sweep.axes) {
        rho_axis |= path == "train.rho_sam";
        targets_axis |= path == "train.sam_targets";
        const auto ptr = field_pointer(path);
        if (!base.contains(ptr)) throw ConfigError("axes." + path + ": no such config field");
    }
    std::size_t total = 1;
    for (const auto& axis : sweep.axes) total *= axis.second.size();

    std::vector<SweepCell> cells;
    for (std::size_t index = 0; index < total; ++index) {
        SweepCell cell;
        cell.index = index;
        Json j = base;
        std::size_t rest = index;
        std::vector<std::size_t> pick(sweep.axes.size());
        for (std::size_t a = sweep.axes.size(); a-- > 0;) {
            pick[a] = rest % sweep.axes[a].second.size();
            rest /= sweep.axes[a].second.size();
        }
        for (std::size_t a = 0; a < sweep.axes.size(); ++a) {
            const auto& [path, values] = sweep.axes[a];
            j[field_pointer(path)] = Json::parse(values[pick[a]]);
            cell.assignment.emplace_back(path, values[pick[a]]);
        }
        if (rho_axis && !targets_axis) {
            const Json& rho = j["train"]["rho_sam"];
            j["train"]["sam_targets"] = rho.is_number() && rho.get<double>() == 0.0 ? "none" : "both";
        }
        try {
            cell.config = config_from_json(j, "");
        } catch (const ConfigError& e) {
            std::string where;
            for (const auto& [path, value] : cell.assignment) where += (where.empty() ? "" : ", ") + path + "=" + value;
            throw ConfigError("sweep cell {" + where + "}: " + e.what());
        }
        cells.push_back(std::move(cell));
    }
    return cells;
}

}  // namespace ganselect
