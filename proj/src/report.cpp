#include "bdan/report.hpp"

#include <zlib.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "le_io.hpp"

namespace bdan {

namespace {

json parse_value(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error&) {
        return text;
    }
}

template <class T>
T get_as(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(key, std::string("wrong type (") + e.what() + ")");
    }
}

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

json stat_json(const PairDistanceStat& s) {
    return {{"lambda_aa", s.lambda_aa}, {"lambda_gg", s.lambda_gg}, {"lambda_ag", s.lambda_ag},
            {"bracket", s.bracket},     {"denom", s.denom},         {"loss", s.loss},
            {"clamped", s.clamped}};
}

}  // namespace

json apply_overrides(json cfg, const std::vector<std::string>& overrides) {
    for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError(ov, "override must look like key=value");
        const std::string key = ov.substr(0, eq);
        std::string pointer;
        std::stringstream ss(key);
        for (std::string part; std::getline(ss, part, '.');) pointer += "/" + part;
        cfg[json::json_pointer(pointer)] = parse_value(ov.substr(eq + 1));
    }
    return cfg;
}

void check_known_keys(const json& cfg, const std::set<std::string>& known) {
    if (!cfg.is_object()) throw ConfigError("<root>", "configuration must be a JSON object");
    for (const auto& [key, _] : cfg.items())
        if (!known.count(key)) throw ConfigError(key, "unknown key");
}

const std::set<std::string>& train_config_keys() {
    static const std::set<std::string> keys{
        "epochs", "batch_size", "seed",  "lr",       "lr_milestone_every", "lr_decay_factor", "w_s",
        "w_t",    "source_adapt", "target_adapt", "stages", "gaussian_perturb", "optimizer", "beta1",
        "beta2",  "adam_eps",   "momentum", "folds", "zscore"};
    return keys;
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    c.epochs = get_as(j, "epochs", c.epochs);
    c.batch_size = get_as(j, "batch_size", c.batch_size);
    c.seed = get_as(j, "seed", c.seed);
    c.lr = get_as(j, "lr", c.lr);
    c.lr_milestone_every = get_as(j, "lr_milestone_every", c.lr_milestone_every);
    c.lr_decay_factor = get_as(j, "lr_decay_factor", c.lr_decay_factor);
    c.w_s = get_as(j, "w_s", c.w_s);
    c.w_t = get_as(j, "w_t", c.w_t);
    c.source_adapt = get_as(j, "source_adapt", c.source_adapt);
    c.target_adapt = get_as(j, "target_adapt", c.target_adapt);
    c.stages = get_as(j, "stages", c.stages);
    c.gaussian_perturb = get_as(j, "gaussian_perturb", c.gaussian_perturb);
    const std::string opt = get_as<std::string>(j, "optimizer", "adam");
    if (opt == "adam")
        c.optimizer = OptimizerKind::adam;
    else if (opt == "momentum")
        c.optimizer = OptimizerKind::momentum;
    else
        throw ConfigError("optimizer", "expected 'adam' or 'momentum', got '" + opt + "'");
    c.beta1 = get_as(j, "beta1", c.beta1);
    c.beta2 = get_as(j, "beta2", c.beta2);
    c.adam_eps = get_as(j, "adam_eps", c.adam_eps);
    c.momentum = get_as(j, "momentum", c.momentum);
    c.folds = get_as(j, "folds", c.folds);
    c.zscore = get_as(j, "zscore", c.zscore);
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        throw ConfigError(msg.substr(0, msg.find(':')), msg.substr(msg.find(':') + 2));
    }
    return c;
}

json to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"seed", c.seed},
            {"lr", c.lr},
            {"lr_milestone_every", c.lr_milestone_every},
            {"lr_decay_factor", c.lr_decay_factor},
            {"w_s", c.w_s},
            {"w_t", c.w_t},
            {"source_adapt", c.source_adapt},
            {"target_adapt", c.target_adapt},
            {"stages", c.stages},
            {"gaussian_perturb", c.gaussian_perturb},
            {"optimizer", c.optimizer == OptimizerKind::adam ? "adam" : "momentum"},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"adam_eps", c.adam_eps},
            {"momentum", c.momentum},
            {"folds", c.folds},
            {"zscore", c.zscore}};
}

const std::set<std::string>& drift_config_keys() {
    static const std::set<std::string> keys{"electrodes",  "time_points", "sample_rate_hz", "sessions",
                                            "trials_per_session_per_class", "classes", "rhythm_freqs",
                                            "class_amplitudes", "gain_step", "offset_step", "noise_std",
                                            "subject_seed", "subject_id"};
    return keys;
}

DriftConfig drift_config_from_json(const json& j) {
    DriftConfig c;
    c.electrodes = get_as(j, "electrodes", c.electrodes);
    c.time_points = get_as(j, "time_points", c.time_points);
    c.sample_rate_hz = get_as(j, "sample_rate_hz", c.sample_rate_hz);
    c.sessions = get_as(j, "sessions", c.sessions);
    c.trials_per_session_per_class = get_as(j, "trials_per_session_per_class", c.trials_per_session_per_class);
    c.classes = get_as(j, "classes", c.classes);
    c.rhythm_freqs = get_as(j, "rhythm_freqs", c.rhythm_freqs);
    c.class_amplitudes = get_as(j, "class_amplitudes", c.class_amplitudes);
    c.gain_step = get_as(j, "gain_step", c.gain_step);
    c.offset_step = get_as(j, "offset_step", c.offset_step);
    c.noise_std = get_as(j, "noise_std", c.noise_std);
    c.subject_seed = get_as(j, "subject_seed", c.subject_seed);
    c.subject_id = get_as(j, "subject_id", c.subject_id);
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        throw ConfigError(msg.substr(0, msg.find(' ')), msg);
    }
    return c;
}

json to_json(const LossReport& r) {
    return {{"step", r.step},
            {"epoch", r.epoch},
            {"L_cls", r.L_cls},
            {"Ls1", r.Ls1},
            {"Ls2", r.Ls2},
            {"Lt1", r.Lt1},
            {"Lt2", r.Lt2},
            {"J", r.J},
            {"enabled", {{"Ls1", r.Ls1_enabled}, {"Ls2", r.Ls2_enabled}, {"Lt1", r.Lt1_enabled}, {"Lt2", r.Lt2_enabled}}},
            {"lambda", {{"Ls1", stat_json(r.s1)}, {"Ls2", stat_json(r.s2)}, {"Lt1", stat_json(r.t1)}, {"Lt2", stat_json(r.t2)}}},
            {"denom", {{"Ls1", r.s1.denom}, {"Ls2", r.s2.denom}, {"Lt1", r.t1.denom}, {"Lt2", r.t2.denom}}},
            {"clamp_hits", r.clamp_hits}};
}

json to_json(const DriftRecord& r) { return {{"gains", r.gains}, {"offsets", r.offsets}, {"mixing", r.mixing}}; }

json to_json(const TaskResult& r, bool include_steps) {
    json epochs = json::array();
    for (const auto& fold : r.epoch_reports) {
        json f = json::array();
        for (const auto& e : fold) f.push_back(to_json(e));
        epochs.push_back(std::move(f));
    }
    json out{{"source_subject", r.source_subject},
             {"target_subject", r.target_subject},
             {"fold_accuracies", r.fold_accuracies},
             {"mean_accuracy", r.mean_accuracy},
             {"epoch_reports", std::move(epochs)},
             {"wall_seconds", r.wall_seconds}};
    if (include_steps) {
        json steps = json::array();
        for (const auto& fold : r.step_reports) {
            json f = json::array();
            for (const auto& s : fold) f.push_back(to_json(s));
            steps.push_back(std::move(f));
        }
        out["step_reports"] = std::move(steps);
    }
    return out;
}

TaskResult task_result_from_json(const json& j) {
    TaskResult r;
    r.source_subject = j.at("source_subject").get<std::string>();
    r.target_subject = j.at("target_subject").get<std::string>();
    r.fold_accuracies = j.at("fold_accuracies").get<std::vector<double>>();
    r.mean_accuracy = j.at("mean_accuracy").get<double>();
    r.wall_seconds = j.value("wall_seconds", 0.0);
    return r;
}

std::string results_csv(const std::vector<TaskResult>& results) {
    std::size_t folds = 0;
    for (const auto& r : results) folds = std::max(folds, r.fold_accuracies.size());
    std::ostringstream os;
    os << "task";
    for (std::size_t f = 0; f < folds; ++f) os << ",fold" << (f + 1);
    os << ",mean\n";
    for (const auto& r : results) {
        os << r.source_subject << "->" << r.target_subject;
        for (std::size_t f = 0; f < folds; ++f)
            os << ',' << (f < r.fold_accuracies.size() ? fmt6(r.fold_accuracies[f]) : std::string());
        os << ',' << fmt6(r.mean_accuracy) << '\n';
    }
    return os.str();
}

std::string loss_reports_jsonl(const TaskResult& r) {
    std::ostringstream os;
    for (std::size_t f = 0; f < r.step_reports.size(); ++f)
        for (const auto& s : r.step_reports[f]) {
            json line = to_json(s);
            line["fold"] = f;
            os << line.dump() << '\n';
        }
    return os.str();
}

std::string file_checksum(const std::filesystem::path& path) {
    const auto bytes = le::read_file(path.string());
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
    return buf;
}

void write_manifest(const std::filesystem::path& dir, const std::vector<std::string>& files) {
    json list = json::array();
    for (const auto& f : files)
        list.push_back({{"file", f}, {"crc32", file_checksum(dir / f)}, {"bytes", std::filesystem::file_size(dir / f)}});
    write_text(dir / "manifest.json", json{{"files", list}}.dump(2) + "\n");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string(), std::string("invalid JSON: ") + e.what());
    }
}

}  // namespace bdan
