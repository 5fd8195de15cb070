#include "cmt/cli.hpp"

#include <algorithm>
#include <functional>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "cmt/checkpoint.hpp"
#include "cmt/data.hpp"
#include "cmt/errors.hpp"
#include "cmt/metrics.hpp"

namespace cmt {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

json RunConfig::to_json() const {
    json j = cmt::to_json(model);
    j["lr"] = train.lr;
    j["epochs"] = train.epochs;
    j["batch_size"] = train.batch_size;
    j["lr_period"] = train.lr_period;
    j["seed"] = train.seed;
    j["checkpoint_interval"] = train.checkpoint_interval;
    j["lambda1"] = train.loss.lambda1;
    j["lambda2"] = train.loss.lambda2;
    j["wavelet_levels"] = train.loss.wavelet_levels;
    return j;
}

RunConfig RunConfig::from_json(const json& j, const ModelConfig& base) {
    if (!j.is_object()) throw ConfigError("run config must be a JSON object");
    RunConfig r;
    r.model = base;
    if (j.contains("preset")) {
        const auto preset = j.at("preset").get<std::string>();
        if (preset == "toy")
            r.model = ModelConfig::toy();
        else if (preset == "default")
            r.model = ModelConfig{};
        else
            throw ConfigError(fmt::format("unknown preset '{}' (expected toy or default)", preset));
    }
    auto& m = r.model;
    auto& t = r.train;
    using Setter = std::function<void(const json&)>;
    auto size = [](std::size_t& dst) -> Setter { return [&dst](const json& v) { dst = v.get<std::size_t>(); }; };
    auto real = [](double& dst) -> Setter { return [&dst](const json& v) { dst = v.get<double>(); }; };
    const std::map<std::string, Setter> setters = {
        {"preset", [](const json&) {}},
        {"bands", size(m.bands)},
        {"channels", size(m.channels)},
        {"heads", size(m.heads)},
        {"cmab_blocks", size(m.cmab_blocks)},
        {"resnet_extract", size(m.resnet_extract)},
        {"resnet_aggregate", size(m.resnet_aggregate)},
        {"ratio", size(m.ratio)},
        {"dffn_expansion", size(m.dffn_expansion)},
        {"variant", [&m](const json& v) { m.variant = parse_variant(v.get<std::string>()); }},
        {"lr", real(t.lr)},
        {"epochs", size(t.epochs)},
        {"batch_size", size(t.batch_size)},
        {"lr_period", size(t.lr_period)},
        {"seed", [&t](const json& v) { t.seed = v.get<std::uint64_t>(); }},
        {"checkpoint_interval", size(t.checkpoint_interval)},
        {"lambda1", real(t.loss.lambda1)},
        {"lambda2", real(t.loss.lambda2)},
        {"wavelet_levels", size(t.loss.wavelet_levels)},
    };
    for (const auto& [key, value] : j.items()) {
        const auto it = setters.find(key);
        if (it == setters.end()) throw ConfigError(fmt::format("unknown config key '{}'", key));
        try {
            it->second(value);
        } catch (const json::exception& e) {
            throw ConfigError(fmt::format("config key '{}': {}", key, e.what()));
        }
    }
    return r;
}

RunConfig RunConfig::from_file(const fs::path& path, const ModelConfig& base) {
    if (!fs::exists(path)) throw ConfigError(fmt::format("config file {} does not exist", path.string()));
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("config file {} is not valid JSON: {}", path.string(), e.what()));
    }
    return from_json(j, base);
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

namespace {

struct TrainOverrides {
    std::optional<std::size_t> epochs, batch_size, lr_period, checkpoint_interval;
    std::optional<double> lr;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> variant;

    void attach(CLI::App* cmd) {
        cmd->add_option("--epochs", epochs, "Training epochs");
        cmd->add_option("--batch-size", batch_size, "Samples per Adam step");
        cmd->add_option("--lr", lr, "Initial learning rate");
        cmd->add_option("--lr-period", lr_period, "Halve the learning rate every N epochs");
        cmd->add_option("--checkpoint-interval", checkpoint_interval, "Extra checkpoint every N epochs (0: none)");
        cmd->add_option("--seed", seed, "Run seed");
    }

    void apply(RunConfig& r) const {
        if (epochs) r.train.epochs = *epochs;
        if (batch_size) r.train.batch_size = *batch_size;
        if (lr) r.train.lr = *lr;
        if (lr_period) r.train.lr_period = *lr_period;
        if (checkpoint_interval) r.train.checkpoint_interval = *checkpoint_interval;
        if (seed) r.train.seed = *seed;
        if (variant) r.model.variant = parse_variant(*variant);
    }
};

RunConfig resolve_config(const std::string& config_path, const TrainOverrides& o, const ModelConfig& base = {}) {
    RunConfig r = config_path.empty() ? RunConfig{base, {}} : RunConfig::from_file(config_path, base);
    o.apply(r);
    r.model.validate();
    r.train.validate();
    return r;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_json_file(path, text);
}

void echo_config(const fs::path& dir, const std::string& command, const RunConfig& r) {
    json j = r.to_json();
    j["command"] = command;
    write_text(dir / "effective_config.json", j.dump(2) + "\n");
}

std::string dims(const Tensor& t) {
    std::string s;
    for (std::size_t i = 0; i < t.rank(); ++i) s += (i ? "x" : "") + std::to_string(t.dim(i));
    return s;
}

int cmd_synth_data(const SynthSpec& spec, const fs::path& out_dir, std::ostream& out) {
    const Dataset ds = synthesize_dataset(spec);
    save_dataset(ds, out_dir);
    out << fmt::format("wrote {} {} samples to {} (seed {}, ratio {}, blur sigma {})\n", ds.samples.size(),
                       to_string(spec.protocol), out_dir.string(), spec.seed, spec.ratio, ds.manifest.blur_sigma);
    if (!ds.samples.empty()) {
        const auto& s = ds.samples.front();
        out << fmt::format("  pan {}  lrms {}  gt {}\n", dims(s.pan), dims(s.lrms), s.gt ? dims(*s.gt) : "absent");
    }
    return kExitOk;
}

void check_compatible(const ModelConfig& model, const Dataset& ds, const char* what) {
    if (ds.samples.empty()) return;
    if (ds.manifest.bands != model.bands || ds.manifest.ratio != model.ratio)
        throw IntegrityError(fmt::format("{}: model expects {} bands at ratio {}, dataset has {} bands at ratio {}", what,
                                         model.bands, model.ratio, ds.manifest.bands, ds.manifest.ratio));
}

int cmd_train(const fs::path& data, const RunConfig& r, const fs::path& out_dir, std::ostream& out) {
    const Dataset ds = load_dataset(data);
    check_compatible(r.model, ds, "train");
    fs::create_directories(out_dir);
    echo_config(out_dir, "train", r);
    const TrainResult result = train(ds, r.model, r.train, out_dir);
    write_text(out_dir / "loss_history.csv", loss_history_csv(result.history));
    write_text(out_dir / "shuffle_audit.txt", result.shuffle_digest + "\n");
    const auto& first = result.history.front().loss;
    const auto& last = result.history.back().loss;
    out << fmt::format("trained variant {} for {} epochs ({} steps, {} parameters)\n", to_string(r.model.variant),
                       result.history.size(), result.steps, result.params.scalar_count());
    out << fmt::format("  total loss {:.6g} -> {:.6g}\n", first.total, last.total);
    out << fmt::format("  shuffle digest {}\n", result.shuffle_digest);
    out << fmt::format("  checkpoint {}\n", (out_dir / "checkpoint").string());
    return kExitOk;
}

void print_report(const MetricsReport& rep, std::ostream& out) {
    for (std::size_t j = 0; j < rep.columns.size(); ++j)
        out << fmt::format("  {:<9} {:.6f} +- {:.6f}\n", rep.columns[j], rep.mean[j], rep.stddev[j]);
}

int cmd_eval(const fs::path& data, const fs::path& checkpoint, const fs::path& report_path,
             const std::optional<std::string>& protocol, std::ostream& out) {
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    const Dataset ds = load_dataset(data);
    check_compatible(ckpt.config, ds, "eval");
    const Protocol p = protocol ? parse_protocol(*protocol) : ds.manifest.protocol;
    const MetricsReport rep = evaluate(ckpt.params, ckpt.config, ds, p);
    write_text(report_path, rep.to_csv());
    out << fmt::format("evaluated {} samples ({} protocol) -> {}\n", ds.samples.size(), to_string(p), report_path.string());
    print_report(rep, out);
    return kExitOk;
}

std::string summary_csv(const std::vector<std::pair<std::string, MetricsReport>>& runs) {
    std::string out = "variant";
    for (const auto& c : runs.front().second.columns) out += fmt::format(",{}_mean,{}_std", c, c);
    out += "\n";
    for (const auto& [label, rep] : runs) {
        out += label;
        for (std::size_t j = 0; j < rep.columns.size(); ++j) out += fmt::format(",{:.17g},{:.17g}", rep.mean[j], rep.stddev[j]);
        out += "\n";
    }
    return out;
}

// V1 must coincide with the full model whose two modulators are forced to ones.
bool v1_matches_forced_ones(const ParamSet& params, const ModelConfig& v1_model, const SamplePair& s) {
    ModelConfig full = v1_model;
    full.variant = Variant::Full;
    const std::size_t h = s.pan.dim(0), w = s.pan.dim(1);
    const ModulatorOverride ones{Tensor::ones({h * w, full.channels}), Tensor::ones({h * w, full.channels})};
    const ParamBindings b = params.bind(false);
    const Tensor a = forward(Var(s.pan), Var(s.lrms), b, v1_model).value();
    const Tensor f = forward(Var(s.pan), Var(s.lrms), b, full, ones).value();
    return a == f;
}

int cmd_ablate(const fs::path& reduced_dir, const fs::path& full_dir, const RunConfig& base, const fs::path& out_dir,
               std::ostream& out) {
    const Dataset reduced = load_dataset(reduced_dir);
    const Dataset full = load_dataset(full_dir);
    check_compatible(base.model, reduced, "ablate");
    check_compatible(base.model, full, "ablate");
    if (full.manifest.protocol != Protocol::Full)
        throw ProtocolError(fmt::format("ablate: {} is not a full-resolution dataset", full_dir.string()));
    fs::create_directories(out_dir);
    echo_config(out_dir, "ablate", base);

    const std::vector<std::pair<std::string, Variant>> variants = {
        {"V1", Variant::V1}, {"V2", Variant::V2}, {"V3", Variant::V3}, {"CMT", Variant::Full}};
    std::vector<std::pair<std::string, MetricsReport>> full_rows, reduced_rows;
    std::string audit = "variant,shuffle_digest\n";
    std::vector<std::string> digests;
    bool v1_ok = true;
    for (const auto& [label, variant] : variants) {
        RunConfig r = base;
        r.model.variant = variant;
        const fs::path run_dir = out_dir / label;
        fs::create_directories(run_dir);
        echo_config(run_dir, "train", r);
        const TrainResult result = train(reduced, r.model, r.train, run_dir);
        write_text(run_dir / "loss_history.csv", loss_history_csv(result.history));
        digests.push_back(result.shuffle_digest);
        audit += fmt::format("{},{}\n", label, result.shuffle_digest);
        if (variant == Variant::V1) {
            const SamplePair& probe = full.samples.empty() ? reduced.samples.front() : full.samples.front();
            v1_ok = v1_matches_forced_ones(result.params, r.model, probe);
            out << fmt::format("V1 equals full model with ones modulators: {}\n", v1_ok ? "yes" : "NO");
        }
        full_rows.emplace_back(label, evaluate(result.params, r.model, full, Protocol::Full));
        reduced_rows.emplace_back(label, evaluate(result.params, r.model, reduced, Protocol::Reduced));
        write_text(run_dir / "report_full.csv", full_rows.back().second.to_csv());
        write_text(run_dir / "report_reduced.csv", reduced_rows.back().second.to_csv());
        const auto& rep = full_rows.back().second;
        out << fmt::format("{:<4} D_lambda {:.4f}+-{:.4f}  D_s {:.4f}+-{:.4f}  HQNR {:.4f}+-{:.4f}\n", label, rep.mean[0],
                           rep.stddev[0], rep.mean[1], rep.stddev[1], rep.mean[2], rep.stddev[2]);
    }
    write_text(out_dir / "ablation_full.csv", summary_csv(full_rows));
    write_text(out_dir / "ablation_reduced.csv", summary_csv(reduced_rows));
    write_text(out_dir / "shuffle_audit.csv", audit);

    std::vector<std::size_t> order(full_rows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return full_rows[a].second.mean[2] > full_rows[b].second.mean[2]; });
    std::string ranking;
    for (std::size_t i : order) ranking += (ranking.empty() ? "" : " > ") + full_rows[i].first;
    out << "HQNR ranking (reported, not asserted): " << ranking << "\n";

    const bool same_shuffle = std::all_of(digests.begin(), digests.end(), [&](const auto& d) { return d == digests[0]; });
    out << fmt::format("shuffle sequences identical across variants: {}\n", same_shuffle ? "yes" : "NO");
    return v1_ok && same_shuffle ? kExitOk : kExitCheckFailed;
}

int cmd_gradcheck(const RunConfig& r, double tolerance, std::size_t extent, std::ostream& out) {
    const GradCheckReport rep = grad_check(r.model, r.train.seed, extent);
    std::size_t failures = 0;
    for (const auto& e : rep.entries) {
        const bool ok = e.max_rel_error < tolerance;
        failures += ok ? 0 : 1;
        out << fmt::format("{:<4} {:<44} n={:<5} rel={:.3e} abs={:.3e}\n", ok ? "ok" : "FAIL", e.name, e.size,
                           e.max_rel_error, e.max_abs_error);
    }
    const auto& worst = rep.worst();
    out << fmt::format("{} parameters, {} failed at tolerance {:.1e}; worst {} ({:.3e})\n", rep.entries.size(), failures,
                       tolerance, worst.name, worst.max_rel_error);
    return failures == 0 ? kExitOk : kExitCheckFailed;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Cross-modulation transformer pansharpening toolkit"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    // synth-data
    SynthSpec synth;
    std::string synth_out, synth_protocol = "reduced";
    auto* synth_cmd = app.add_subcommand("synth-data", "Generate a synthetic dataset");
    synth_cmd->add_option("--out", synth_out, "Output directory")->required();
    synth_cmd->add_option("--samples", synth.samples, "Number of samples")->capture_default_str();
    synth_cmd->add_option("--size", synth.size, "PAN extent H = W")->capture_default_str();
    synth_cmd->add_option("--bands", synth.bands, "Multispectral bands")->capture_default_str();
    synth_cmd->add_option("--ratio", synth.ratio, "Resolution ratio")->capture_default_str();
    synth_cmd->add_option("--seed", synth.seed, "Seed")->capture_default_str();
    synth_cmd->add_option("--protocol", synth_protocol, "reduced or full")->capture_default_str();

    // train
    std::string train_data, train_config, train_out;
    TrainOverrides train_over;
    auto* train_cmd = app.add_subcommand("train", "Train a model on a reduced-resolution dataset");
    train_cmd->add_option("--data", train_data, "Dataset directory")->required();
    train_cmd->add_option("--config", train_config, "Flat JSON run config");
    train_cmd->add_option("--out", train_out, "Output directory")->required();
    train_cmd->add_option("--variant", train_over.variant, "full, v1, v2 or v3");
    train_over.attach(train_cmd);

    // eval
    std::string eval_data, eval_ckpt, eval_out;
    std::optional<std::string> eval_protocol;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval_cmd->add_option("--data", eval_data, "Dataset directory")->required();
    eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint directory or its manifest.json")->required();
    eval_cmd->add_option("--out", eval_out, "Report CSV path")->required();
    eval_cmd->add_option("--protocol", eval_protocol, "reduced or full (default: the dataset's)");

    // ablate
    std::string ab_reduced, ab_full, ab_config, ab_out;
    TrainOverrides ab_over;
    auto* ab_cmd = app.add_subcommand("ablate", "Train and compare the V1/V2/V3/CMT variants");
    ab_cmd->add_option("--data-reduced", ab_reduced, "Reduced-resolution training dataset")->required();
    ab_cmd->add_option("--data-full", ab_full, "Full-resolution evaluation dataset")->required();
    ab_cmd->add_option("--config", ab_config, "Flat JSON run config");
    ab_cmd->add_option("--out", ab_out, "Output directory")->required();
    ab_over.attach(ab_cmd);

    // gradcheck
    std::string gc_config;
    double gc_tol = 1e-4;
    std::size_t gc_extent = 8;
    std::optional<std::uint64_t> gc_seed;
    auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every parameter gradient");
    gc_cmd->add_option("--config", gc_config, "Flat JSON run config (default: toy model)");
    gc_cmd->add_option("--tolerance", gc_tol, "Maximum relative error")->capture_default_str();
    gc_cmd->add_option("--extent", gc_extent, "Image extent H = W")->capture_default_str();
    gc_cmd->add_option("--seed", gc_seed, "Seed for weights and data");

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e, out, err);
            return kExitOk;
        }
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (*synth_cmd) {
            synth.protocol = parse_protocol(synth_protocol);
            return cmd_synth_data(synth, synth_out, out);
        }
        if (*train_cmd) return cmd_train(train_data, resolve_config(train_config, train_over), train_out, out);
        if (*eval_cmd) return cmd_eval(eval_data, eval_ckpt, eval_out, eval_protocol, out);
        if (*ab_cmd) return cmd_ablate(ab_reduced, ab_full, resolve_config(ab_config, ab_over), ab_out, out);
        if (*gc_cmd) {
            TrainOverrides o;
            o.seed = gc_seed;
            return cmd_gradcheck(resolve_config(gc_config, o, ModelConfig::toy()), gc_tol, gc_extent, out);
        }
    } catch (const std::invalid_argument& e) {  // argument, dimension, structure and config errors
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ProtocolError& e) {
        err << "protocol error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const IntegrityError& e) {
        err << "integrity error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitCheckFailed;
    }
    return kExitUsage;
}

int run_cli(int argc, char** argv) {
    return run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

}  // namespace cmt
