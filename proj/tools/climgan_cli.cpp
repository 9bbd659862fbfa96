// SPDX-License-Identifier: Apache-2.0
//
// climgan: synth | train | generate | evaluate

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "climgan/rollout.hpp"
#include "climgan/run.hpp"

using namespace climgan;

namespace {

void write_json_file(const std::string& path, const json& j) {
    std::ofstream os(path);
    os << j.dump(2) << '\n';
    if (!os) throw std::runtime_error("cannot write '" + path + "'");
}

void emit(const std::string& out, const std::string& text) {
    if (out.empty() || out == "-") {
        std::cout << text;
        std::cout.flush();
        if (!std::cout) throw std::runtime_error("cannot write to stdout");
        return;
    }
    const std::string tmp = out + ".tmp";
    {
        std::ofstream os(tmp);
        os << text;
        if (!os) throw std::runtime_error("cannot write '" + out + "'");
    }
    std::filesystem::rename(tmp, out);
}

//------------------------------------------------------------------------------

struct SynthArgs {
    std::string out;
    std::size_t h = 16, w = 32, years = 1;
    std::uint64_t seed = 0;
};

void run_synth(const SynthArgs& a) {
    const ClimateArchive phys = synthesize_archive(a.h, a.w, a.years, a.seed);
    save_archive(a.out, phys);
    save_stats(stats_path_for(a.out), compute_stats(phys));
    std::cerr << "wrote " << a.out << " (" << phys.days << " days, " << a.h << "x" << a.w << ")\n";
}

//------------------------------------------------------------------------------

struct TrainArgs {
    std::string config, resume;
};

void run_train(const TrainArgs& a) {
    const RunConfig cfg = load_run_config(a.config);
    const auto summary =
        run_training(cfg, a.resume.empty() ? std::nullopt : std::optional<std::string>(a.resume), &std::cerr);
    std::cerr << "trained steps " << summary.start_step << " -> " << summary.end_step << " in " << summary.seconds
              << " s; checkpoint " << summary.last_checkpoint << '\n';
}

//------------------------------------------------------------------------------

struct GenerateArgs {
    std::string checkpoint, script, out;
    std::size_t months = 1;
    std::uint64_t seed = 0;
};

void run_generate(const GenerateArgs& a) {
    Trainer trainer = Trainer::load(a.checkpoint);
    const ModelSpec& spec = trainer.spec();
    const ClimateArchive head = load_archive(a.script);
    ScenarioScript script;
    if (head.names == std::vector<std::string>{"pr_norm", "tas_norm"}) {
        script = load_script(a.script, spec, trainer.stats());
        if (script.months() < a.months)
            throw std::invalid_argument("script holds " + std::to_string(script.months()) + " months, requested " +
                                        std::to_string(a.months));
        script.c1.resize(a.months);
    } else {
        if (!head.has_canonical_variables())
            throw FormatError(a.script + ": expected a script (pr_norm, tas_norm) or a 7-variable climate archive");
        script = scripted_c1_from_archive(normalize(head, trainer.stats()), spec, a.months);
    }
    script.seed = a.seed;
    const ClimateArchive out = months_to_archive(rollout(trainer.generator(), script), spec, trainer.stats());
    save_archive(a.out, out);
    save_stats(stats_path_for(a.out), trainer.stats());
    write_json_file(a.out + ".run.json", {{"command", "generate"},
                                          {"checkpoint", a.checkpoint},
                                          {"script", a.script},
                                          {"months", a.months},
                                          {"seed", a.seed},
                                          {"days", out.days}});
    std::cerr << "wrote " << a.out << " (" << out.days << " days)\n";
}

//------------------------------------------------------------------------------

struct EvaluateArgs {
    std::string real, gen, stats, out, histogram;
    std::size_t days = 32, bins = 50, power = 0, power_n = 0;
    bool physical = false;
    EvalSettings eval;
};

void run_evaluate(const EvaluateArgs& a) {
    const ClimateArchive real = load_archive(a.real), gen = load_archive(a.gen);
    real.require_canonical(a.real);
    gen.require_canonical(a.gen);

    if (!a.histogram.empty()) {
        const std::size_t v = variable_index(a.histogram);
        const auto h = marginal_histogram(variable_values(real, v), variable_values(gen, v), a.bins);
        std::ostringstream os;
        write_histogram_csv(os, h);
        emit(a.out, os.str());
        std::cerr << "tv_distance " << h.tv_distance << '\n';
        return;
    }

    a.eval.validate();
    ClimateArchive real_f = real, gen_f = gen;
    if (!a.physical) {
        NormalizationStats stats;
        if (!a.stats.empty())
            stats = load_stats(a.stats);
        else if (std::filesystem::exists(stats_path_for(a.real)))
            stats = load_stats(stats_path_for(a.real));
        else
            stats = compute_stats(real);
        real_f = normalize(real, stats);
        gen_f = normalize(gen, stats);
    }
    const Extractor ex = Extractor::parse(a.eval.extractor);
    const SampleSet x = month_features(real_f, a.days, ex), y = month_features(gen_f, a.days, ex);
    require_two_samples(x, y, "evaluate");

    TestReport report;
    if (a.power > 0) {
        auto bootstrap = [](const SampleSet& s) {
            return [&s](std::size_t n, Rng& rng) {
                Eigen::MatrixXd m(n, s.dim());
                for (std::size_t i = 0; i < n; ++i) m.row(i) = s.x.row(rng.uniform_index(s.size()));
                return SampleSet(std::move(m));
            };
        };
        const std::size_t n = a.power_n ? a.power_n : std::min(x.size(), y.size());
        StatisticFactory make;
        if (a.eval.metric == "mmd")
            make = [] { return std::make_unique<MmdStatistic>(); };
        else
            make = [&] { return std::make_unique<MeStatistic>(a.eval.locations, 0.0, a.eval.seed); };
        report = power_estimate(make, bootstrap(x), bootstrap(y), n, a.eval.alpha, a.power,
                                std::max(a.eval.permutations, kMinPermutations), a.eval.seed);
    } else if (a.eval.metric == "mmd") {
        Rng rng(a.eval.seed);
        MmdStatistic stat;
        report = permutation_test(stat, x, y, a.eval.permutations, a.eval.alpha, rng);
        report.seed = a.eval.seed;
    } else {
        Rng rng(a.eval.seed);
        report = me_test(x, y, a.eval.locations, 0.0, a.eval.alpha, rng);
        report.seed = a.eval.seed;
    }
    json j = report;
    j["extractor"] = ex.name();
    j["n_real"] = x.size();
    j["n_gen"] = y.size();
    j["dim"] = x.dim();
    j["space"] = a.physical ? "physical" : "normalized";
    emit(a.out, j.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conditional spatio-temporal GAN for daily climate fields"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Write a synthetic climate archive and its stats sidecar");
    // --h is the grid height here, so help is long-form only.
    s->set_help_flag("--help", "Print this help message and exit");
    s->add_option("--out", synth.out, "Output .cgb path")->required();
    s->add_option("--h", synth.h, "Grid height")->required();
    s->add_option("--w", synth.w, "Grid width")->required();
    s->add_option("--years", synth.years, "Years of 365 days")->required();
    s->add_option("--seed", synth.seed, "Random seed");

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Pretrain and train from a JSON run config");
    t->add_option("--config", train.config, "Run config JSON")->required()->check(CLI::ExistingFile);
    t->add_option("--resume", train.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Roll a trained generator forward month by month");
    g->add_option("--checkpoint", gen.checkpoint, "Trained checkpoint")->required()->check(CLI::ExistingFile);
    g->add_option("--script", gen.script, "Script (.cgb with pr_norm, tas_norm) or a 7-variable archive")
        ->required()
        ->check(CLI::ExistingFile);
    g->add_option("--months", gen.months, "Months to generate")->check(CLI::PositiveNumber);
    g->add_option("--seed", gen.seed, "Noise seed");
    g->add_option("--out", gen.out, "Output .cgb path")->required();

    EvaluateArgs ev;
    std::string eval_config;
    auto* e = app.add_subcommand("evaluate", "Two-sample test or marginal histogram of real vs generated");
    e->add_option("--real", ev.real, "Reference archive")->required()->check(CLI::ExistingFile);
    e->add_option("--gen", ev.gen, "Generated archive")->required()->check(CLI::ExistingFile);
    e->add_option("--config", eval_config, "Run config whose eval section supplies defaults")->check(CLI::ExistingFile);
    auto* metric = e->add_option("--metric", ev.eval.metric, "mmd or me")->check(CLI::IsMember({"mmd", "me"}));
    auto* extractor = e->add_option("--extractor", ev.eval.extractor, "full, spatial_mean or var:NAME");
    auto* perms = e->add_option("--permutations", ev.eval.permutations, "Permutation count (min 99)");
    auto* alpha = e->add_option("--alpha", ev.eval.alpha, "Test level");
    auto* seed = e->add_option("--seed", ev.eval.seed, "Random seed");
    auto* locs = e->add_option("--locations", ev.eval.locations, "ME test locations");
    auto* days = e->add_option("--days", ev.days, "Days per compared item (default: model T from --config, else 32)");
    e->add_option("--stats", ev.stats, "Normalization stats (default: sidecar of --real)");
    e->add_flag("--physical", ev.physical, "Compare physical units instead of normalized");
    e->add_option("--power", ev.power, "Monte-Carlo power trials on bootstrap draws");
    e->add_option("--power-n", ev.power_n, "Items per side in each power trial");
    e->add_option("--histogram", ev.histogram, "Write a paired histogram CSV of this variable");
    e->add_option("--bins", ev.bins, "Histogram bins")->check(CLI::PositiveNumber);
    e->add_option("--out", ev.out, "Output file (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*s) run_synth(synth);
        if (*t) run_train(train);
        if (*g) run_generate(gen);
        if (*e) {
            if (!eval_config.empty()) {
                const RunConfig cfg = load_run_config(eval_config);
                if (cfg.eval) {
                    const EvalSettings flags = ev.eval;
                    ev.eval = *cfg.eval;
                    if (metric->count()) ev.eval.metric = flags.metric;
                    if (extractor->count()) ev.eval.extractor = flags.extractor;
                    if (perms->count()) ev.eval.permutations = flags.permutations;
                    if (alpha->count()) ev.eval.alpha = flags.alpha;
                    if (seed->count()) ev.eval.seed = flags.seed;
                    if (locs->count()) ev.eval.locations = flags.locations;
                }
                if (!days->count()) ev.days = cfg.model.days;
            }
            run_evaluate(ev);
        }
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 1;
    }
    return 0;
}
