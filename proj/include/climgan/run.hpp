// SPDX-License-Identifier: Apache-2.0
//
// Run configuration files and the training driver behind `climgan train`.

#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include "climgan/eval.hpp"
#include "climgan/train.hpp"

namespace climgan {

inline constexpr int kRunConfigVersion = 1;

struct EvalSettings {
    std::string metric = "mmd";
    std::string extractor = "full";
    std::size_t permutations = 199;
    double alpha = 0.05;
    std::uint64_t seed = 0;
    std::size_t locations = 5;

    void validate() const {
        if (metric != "mmd" && metric != "me") throw std::invalid_argument("eval.metric must be mmd or me");
        Extractor::parse(extractor);
        if (metric == "mmd" && permutations < kMinPermutations)
            throw std::invalid_argument("eval.permutations must be at least " + std::to_string(kMinPermutations));
        if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("eval.alpha must lie in (0, 1)");
        if (locations == 0) throw std::invalid_argument("eval.locations must be positive");
    }
};

inline void to_json(json& j, const EvalSettings& e) {
    j = json{{"metric", e.metric}, {"extractor", e.extractor}, {"permutations", e.permutations},
             {"alpha", e.alpha},   {"seed", e.seed},           {"locations", e.locations}};
}

inline void from_json(const json& j, EvalSettings& e) {
    reject_unknown_keys(j, {"metric", "extractor", "permutations", "alpha", "seed", "locations"}, "eval");
    EvalSettings d;
    e.metric = j.value("metric", d.metric);
    e.extractor = j.value("extractor", d.extractor);
    e.permutations = j.value("permutations", d.permutations);
    e.alpha = j.value("alpha", d.alpha);
    e.seed = j.value("seed", d.seed);
    e.locations = j.value("locations", d.locations);
    e.validate();
}

/// One JSON file describing a run. "model" is either a preset name ("desk",
/// "paper") or an object whose optional "preset" key picks the base that the
/// remaining keys override (default "paper").
struct RunConfig {
    int config_version = kRunConfigVersion;
    ModelSpec model = ModelSpec::desk();
    TrainConfig train;
    std::string archive;
    /// Empty: the archive's stats sidecar, or stats computed on its training split.
    std::string stats;
    std::string output_dir;
    std::optional<EvalSettings> eval;
};

inline ModelSpec model_from_json(const json& j) {
    auto preset = [](const std::string& name) {
        if (name == "desk") return ModelSpec::desk();
        if (name == "paper") return ModelSpec::paper();
        throw std::invalid_argument("unknown model preset '" + name + "'");
    };
    if (j.is_string()) return preset(j.get<std::string>());
    if (!j.is_object()) throw FormatError("model must be a preset name or an object");
    json rest = j;
    ModelSpec s = ModelSpec::paper();
    if (rest.contains("preset")) {
        s = preset(rest.at("preset").get<std::string>());
        rest.erase("preset");
    }
    from_json(rest, s);
    return s;
}

inline void to_json(json& j, const RunConfig& c) {
    j = json{{"config_version", c.config_version},
             {"model", c.model},
             {"train", c.train},
             {"data", {{"archive", c.archive}, {"stats", c.stats}}},
             {"output_dir", c.output_dir}};
    if (c.eval) j["eval"] = *c.eval;
}

/// Relative paths resolve against `base_dir`.
inline RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir = {}) {
    if (!j.is_object()) throw FormatError("run config must be a JSON object");
    reject_unknown_keys(j, {"config_version", "model", "train", "data", "output_dir", "eval"}, "run config");
    RunConfig c;
    if (!j.contains("config_version")) throw FormatError("run config: missing config_version");
    c.config_version = j.at("config_version").get<int>();
    if (c.config_version != kRunConfigVersion)
        throw FormatError("run config: unsupported config_version " + std::to_string(c.config_version));
    if (j.contains("model")) c.model = model_from_json(j.at("model"));
    c.model.validate();
    if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
    if (!j.contains("data")) throw FormatError("run config: missing data section");
    const json& data = j.at("data");
    reject_unknown_keys(data, {"archive", "stats"}, "data");
    if (!data.contains("archive")) throw FormatError("run config: missing data.archive");
    auto resolve = [&](const std::string& p) {
        if (p.empty()) return p;
        const std::filesystem::path path(p);
        return (path.is_absolute() || base_dir.empty() ? path : base_dir / path).lexically_normal().string();
    };
    c.archive = resolve(data.at("archive").get<std::string>());
    c.stats = resolve(data.value("stats", std::string{}));
    if (!j.contains("output_dir")) throw FormatError("run config: missing output_dir");
    c.output_dir = resolve(j.at("output_dir").get<std::string>());
    if (j.contains("eval")) c.eval = j.at("eval").get<EvalSettings>();
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config '" + path + "'");
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    try {
        return run_config_from_json(j, std::filesystem::path(path).parent_path());
    } catch (const json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
}

//------------------------------------------------------------------------------
// Training driver
//
// <output_dir>/resolved_config.json  config after defaults and path resolution
// <output_dir>/stats.json            normalization stats used by the run
// <output_dir>/pretrain.json         probe losses, when pretraining ran
// <output_dir>/metrics.csv           step, loss_D, loss_G, D_real, D_fake
// <output_dir>/checkpoints/step_NNNNNN.ckpt
//------------------------------------------------------------------------------

struct TrainingSummary {
    std::size_t start_step = 0, end_step = 0;
    std::optional<PretrainReport> pretrain;
    std::string last_checkpoint;
    double seconds = 0;
};

inline std::string checkpoint_path(const std::string& output_dir, std::size_t step) {
    std::ostringstream name;
    name << "step_" << std::setw(6) << std::setfill('0') << step << ".ckpt";
    return (std::filesystem::path(output_dir) / "checkpoints" / name.str()).string();
}

inline std::string format_metrics_row(std::size_t step, const StepMetrics& m) {
    std::ostringstream os;
    os << std::setprecision(17) << step << ',' << m.loss_D << ',' << m.loss_G << ',' << m.D_real << ',' << m.D_fake;
    return os.str();
}

inline constexpr const char* kMetricsHeader = "step,loss_D,loss_G,D_real,D_fake";

namespace detail {

/// Rows of an existing metrics log up to and including `step`.
inline std::vector<std::string> metrics_prefix(const std::string& path, std::size_t step) {
    std::vector<std::string> rows;
    std::ifstream is(path);
    std::string line;
    if (!is || !std::getline(is, line)) return rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (std::stoull(line.substr(0, line.find(','))) > step) break;
        rows.push_back(line);
    }
    return rows;
}

inline NormalizationStats resolve_stats(const RunConfig& cfg, const ClimateArchive& phys) {
    if (!cfg.stats.empty()) return load_stats(cfg.stats);
    if (std::filesystem::exists(stats_path_for(cfg.archive))) return load_stats(stats_path_for(cfg.archive));
    return compute_stats(phys);
}

inline void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream os(path);
    os << j.dump(2) << '\n';
    if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
}

}  // namespace detail

/// Pretrains (once per run) and then trains to cfg.train.total_steps. With
/// `resume`, continues from that checkpoint; total_steps and
/// checkpoint_every may change, every other training setting must match.
inline TrainingSummary run_training(const RunConfig& cfg, const std::optional<std::string>& resume = std::nullopt,
                                    std::ostream* log = nullptr) {
    const auto t0 = std::chrono::steady_clock::now();
    namespace fs = std::filesystem;
    const fs::path out(cfg.output_dir);
    fs::create_directories(out / "checkpoints");

    const ClimateArchive phys = load_archive(cfg.archive);
    std::optional<Trainer> trainer;
    if (resume) {
        trainer.emplace(Trainer::load(*resume, &cfg.model));
        TrainConfig stored = trainer->config(), wanted = cfg.train;
        stored.total_steps = wanted.total_steps;
        stored.checkpoint_every = wanted.checkpoint_every;
        if (json(stored) != json(wanted))
            throw std::invalid_argument("resume: training settings differ from the checkpoint's");
        trainer->config() = wanted;
    } else {
        trainer.emplace(cfg.model, cfg.train, detail::resolve_stats(cfg, phys));
    }
    const ClimateArchive norm = normalize(phys, trainer->stats());
    trainer->check_archive(norm);

    json resolved = cfg;
    resolved["data"]["stats_resolved"] = (out / "stats.json").string();
    if (resume) resolved["resume"] = *resume;
    detail::write_json(out / "resolved_config.json", resolved);
    save_stats((out / "stats.json").string(), trainer->stats());

    TrainingSummary summary;
    summary.start_step = trainer->step();
    if (!trainer->pretrained() && cfg.train.pretrain_epochs > 0) {
        summary.pretrain = trainer->pretrain(norm);
        detail::write_json(out / "pretrain.json", {{"initial_loss", summary.pretrain->initial_loss},
                                                   {"final_loss", summary.pretrain->final_loss},
                                                   {"steps", summary.pretrain->steps}});
        if (log)
            *log << "pretrain: " << summary.pretrain->steps << " updates, probe loss " << summary.pretrain->initial_loss
                 << " -> " << summary.pretrain->final_loss << '\n';
    }

    const std::string metrics_path = (out / "metrics.csv").string();
    const auto kept = resume ? detail::metrics_prefix(metrics_path, trainer->step()) : std::vector<std::string>{};
    std::ofstream metrics(metrics_path, std::ios::trunc);
    if (!metrics) throw std::runtime_error("cannot write '" + metrics_path + "'");
    metrics << kMetricsHeader << '\n';
    for (const auto& row : kept) metrics << row << '\n';
    metrics.flush();

    auto checkpoint = [&] {
        summary.last_checkpoint = checkpoint_path(cfg.output_dir, trainer->step());
        trainer->save(summary.last_checkpoint);
    };
    if (!resume) checkpoint();
    while (trainer->step() < cfg.train.total_steps) {
        const StepMetrics m = trainer->train_step(norm);
        metrics << format_metrics_row(trainer->step(), m) << '\n';
        metrics.flush();
        if (log && (trainer->step() % 10 == 0 || trainer->step() == cfg.train.total_steps))
            *log << "step " << trainer->step() << " loss_D " << m.loss_D << " loss_G " << m.loss_G << '\n';
        if (cfg.train.checkpoint_every && trainer->step() % cfg.train.checkpoint_every == 0) checkpoint();
    }
    if (summary.last_checkpoint != checkpoint_path(cfg.output_dir, trainer->step())) checkpoint();
    if (!metrics) throw std::runtime_error("failed writing '" + metrics_path + "'");

    summary.end_step = trainer->step();
    summary.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return summary;
}

}  // namespace climgan
