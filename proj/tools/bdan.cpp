// bdan: synth | train | eval | bench | report

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "bdan/bench.hpp"
#include "bdan/report.hpp"
#include "bdan/runtime.hpp"
#include "bdan/train.hpp"

namespace fs = std::filesystem;
using namespace bdan;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

struct Common {
    std::string config;
    std::string out;
    std::vector<std::string> overrides;
};

json load_config(const Common& c) {
    json cfg = c.config.empty() ? json::object() : read_json(c.config);
    if (!cfg.is_object()) throw ConfigError("<root>", "configuration must be a JSON object");
    return apply_overrides(std::move(cfg), c.overrides);
}

std::set<std::string> with(std::set<std::string> keys, std::initializer_list<const char*> extra) {
    for (const char* k : extra) keys.insert(k);
    return keys;
}

fs::path ensure_out(const std::string& out) {
    if (out.empty()) throw ConfigError("out", "an output directory is required");
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create " + out + ": " + ec.message());
    return out;
}

int cmd_synth(const Common& c) {
    json cfg = load_config(c);
    check_known_keys(cfg, with(drift_config_keys(), {"subjects", "seed"}));
    json subjects = cfg.value("subjects", json::array({{{"subject_id", "S1"}, {"subject_seed", 1}},
                                                        {{"subject_id", "S2"}, {"subject_seed", 2}}}));
    if (!subjects.is_array() || subjects.empty()) throw ConfigError("subjects", "expected a non-empty array");
    const std::uint64_t seed = cfg.value("seed", std::uint64_t{2024});
    cfg.erase("subjects");
    cfg.erase("seed");

    const fs::path dir = ensure_out(c.out);
    json truth = json::object();
    std::vector<std::string> files;
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        json merged = cfg;
        if (!subjects[i].is_object()) throw ConfigError("subjects", "entries must be objects");
        for (const auto& [k, v] : subjects[i].items()) {
            if (!drift_config_keys().count(k)) throw ConfigError("subjects." + k, "unknown key");
            merged[k] = v;
        }
        if (!merged.contains("subject_id")) merged["subject_id"] = "S" + std::to_string(i + 1);
        if (!merged.contains("subject_seed")) merged["subject_seed"] = i + 1;
        const DriftConfig dc = drift_config_from_json(merged);
        Rng rng = derive_rng(seed, {i});
        const auto [set, rec] = synth_generate(dc, rng);
        const std::string name = dc.subject_id + ".eegc";
        save_container(set, dir / name);
        files.push_back(name);
        truth[dc.subject_id] = to_json(rec);
    }
    write_text(dir / "drift_truth.json", truth.dump(2) + "\n");
    files.push_back("drift_truth.json");
    write_manifest(dir, files);
    for (const auto& f : files) std::cout << (dir / f).string() << "\n";
    return kExitOk;
}

int cmd_train(const Common& c) {
    const json cfg = load_config(c);
    check_known_keys(cfg, with(train_config_keys(), {"source", "target", "task", "save_checkpoints"}));
    if (!cfg.contains("source")) throw ConfigError("source", "missing dataset path");
    if (!cfg.contains("target")) throw ConfigError("target", "missing dataset path");
    json train_part = json::object();
    for (const auto& [k, v] : cfg.items())
        if (train_config_keys().count(k)) train_part[k] = v;
    const TrainConfig tc = train_config_from_json(train_part);
    const std::uint64_t task = cfg.value("task", std::uint64_t{0});
    const bool save_ckpt = cfg.value("save_checkpoints", true);

    const EpochSet source = load_container(cfg.at("source").get<std::string>());
    const EpochSet target = load_container(cfg.at("target").get<std::string>());
    const fs::path dir = ensure_out(c.out);

    std::vector<ModelParams> params;
    const TaskResult res = run_sts_task(source, target, tc, task, save_ckpt ? &params : nullptr);

    json result = to_json(res);
    result["config"] = cfg;
    result["config"].update(to_json(tc));
    result["weights_defaulted"] = !cfg.contains("w_s") || !cfg.contains("w_t");
    std::vector<std::string> files{"result.json", "results.csv", "loss_reports.jsonl"};
    write_text(dir / "result.json", result.dump(2) + "\n");
    write_text(dir / "results.csv", results_csv({res}));
    write_text(dir / "loss_reports.jsonl", loss_reports_jsonl(res));
    for (std::size_t f = 0; f < params.size(); ++f) {
        const std::string name = "fold" + std::to_string(f + 1) + ".bdck";
        save_checkpoint(dir / name, params[f]);
        files.push_back(name);
    }
    write_manifest(dir, files);
    std::printf("%s -> %s mean accuracy %.4f (%zu folds, %.1f s)\n", res.source_subject.c_str(),
                res.target_subject.c_str(), res.mean_accuracy, res.fold_accuracies.size(), res.wall_seconds);
    return kExitOk;
}

int cmd_eval(const Common& c, std::string checkpoint, std::string data) {
    const json cfg = load_config(c);
    check_known_keys(cfg, {"checkpoint", "data", "zscore"});
    if (checkpoint.empty()) checkpoint = cfg.value("checkpoint", std::string());
    if (data.empty()) data = cfg.value("data", std::string());
    if (checkpoint.empty()) throw ConfigError("checkpoint", "missing checkpoint path");
    if (data.empty()) throw ConfigError("data", "missing dataset path");

    ModelParams params = load_checkpoint(checkpoint);
    EpochSet set = load_container(data);
    if (cfg.value("zscore", false)) set = zscore_normalize(set);
    if (set.electrodes != params.dims.electrodes || set.time_points != params.dims.time_points ||
        set.class_count != params.dims.classes)
        throw std::invalid_argument("eval: dataset shape does not match the checkpoint");
    const double acc = evaluate(params, set);
    const json out{{"checkpoint", checkpoint}, {"data", data}, {"trials", set.size()}, {"accuracy", acc}};
    if (!c.out.empty()) {
        const fs::path dir = ensure_out(c.out);
        write_text(dir / "eval.json", out.dump(2) + "\n");
        write_manifest(dir, {"eval.json"});
    }
    std::cout << out.dump() << "\n";
    return kExitOk;
}

int cmd_bench(const Common& c) {
    const json cfg = load_config(c);
    check_known_keys(cfg, {"sizes", "reps", "seed"});
    const auto sizes = cfg.value("sizes", std::vector<std::vector<std::size_t>>{{2, 1, 1}, {118, 40, 352}});
    const std::size_t reps = cfg.value("reps", std::size_t{10});
    const std::uint64_t seed = cfg.value("seed", std::uint64_t{2024});
    if (reps < 1) throw ConfigError("reps", "must be at least 1");
    std::vector<LambdaTiming> rows;
    for (const auto& s : sizes) {
        if (s.size() != 3) throw ConfigError("sizes", "each entry must be [e, n, t]");
        rows.push_back(time_lambda_paths(s[0], s[1], s[2], reps, seed));
    }
    const std::string csv = lambda_timing_csv(rows);
    if (!c.out.empty()) {
        const fs::path dir = ensure_out(c.out);
        write_text(dir / "bench.csv", csv);
        write_manifest(dir, {"bench.csv"});
    }
    std::cout << csv;
    return kExitOk;
}

int cmd_report(const Common& c, const std::vector<std::string>& inputs) {
    if (inputs.empty()) throw ConfigError("inputs", "no result files given");
    std::vector<TaskResult> results;
    for (const auto& in : inputs) {
        const fs::path p = fs::is_directory(in) ? fs::path(in) / "result.json" : fs::path(in);
        try {
            results.push_back(task_result_from_json(read_json(p)));
        } catch (const json::exception& e) {
            throw ConfigError(p.string(), std::string("not a result file: ") + e.what());
        }
    }
    const std::string csv = results_csv(results);
    if (!c.out.empty()) {
        const fs::path dir = ensure_out(c.out);
        write_text(dir / "results.csv", csv);
        write_manifest(dir, {"results.csv"});
    }
    std::cout << csv;
    return kExitOk;
}

void add_common(CLI::App* sub, Common& c, bool out_required) {
    sub->add_option("-c,--config", c.config, "JSON configuration file");
    auto* out = sub->add_option("-o,--out", c.out, "output directory");
    if (out_required) out->required();
    sub->add_option("-O,--override", c.overrides, "dotted.key=value, applied after the file (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
    configure_allocator();
    CLI::App app{"Bridging-domain adaptation for cross-subject EEG"};
    app.require_subcommand(1);

    Common synth, train, eval, bench, report;
    std::string checkpoint, data;
    std::vector<std::string> inputs;

    auto* s = app.add_subcommand("synth", "generate synthetic subjects with session drift");
    add_common(s, synth, true);
    auto* t = app.add_subcommand("train", "run one source->target task");
    add_common(t, train, true);
    auto* e = app.add_subcommand("eval", "score a checkpoint on a dataset");
    add_common(e, eval, false);
    e->add_option("--checkpoint", checkpoint, "checkpoint file");
    e->add_option("--data", data, "EEGC dataset");
    auto* b = app.add_subcommand("bench", "time naive vs fast Lambda");
    add_common(b, bench, false);
    auto* r = app.add_subcommand("report", "collect result.json files into one CSV");
    add_common(r, report, false);
    r->add_option("inputs", inputs, "result.json files or run directories");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        app.exit(ex);
        return kExitConfig;
    }

    try {
        if (*s) return cmd_synth(synth);
        if (*t) return cmd_train(train);
        if (*e) return cmd_eval(eval, checkpoint, data);
        if (*b) return cmd_bench(bench);
        if (*r) return cmd_report(report, inputs);
    } catch (const ConfigError& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return kExitConfig;
    } catch (const IoError& ex) {
        std::cerr << "i/o error: " << ex.what() << "\n";
        return kExitIo;
    } catch (const FormatError& ex) {
        std::cerr << "i/o error: " << ex.what() << "\n";
        return kExitIo;
    } catch (const json::exception& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}
