// Command-line front end: pipeline stages and the synthetic-data generator.
// Thread count: MOBILITY_THREADS (default: hardware concurrency).

#include "mobility/error.hpp"
#include "mobility/pipeline.hpp"
#include "mobility/synthetic.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace mobility;

namespace {

struct CommonOptions {
    std::string config;
    std::vector<std::string> sets;
    std::string input;
    std::string out;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* app, CommonOptions& o)
{
    app->add_option("-c,--config", o.config, "key = value configuration file")->check(CLI::ExistingFile);
    app->add_option("-s,--set", o.sets, "override a setting, key=value (repeatable; wins over the file)");
    app->add_option("-i,--input", o.input, "population CSV (same as --set input=...)");
    app->add_option("-o,--out", o.out, "output directory (same as --set output_dir=...)");
    app->add_option("--seed", o.seed, "master seed (same as --set seed=...)");
}

int run_stages(const CommonOptions& o, const std::optional<Stage>& only)
{
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& s : o.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw Error("--set expects key=value, got '" + s + "'");
        overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    if (!o.input.empty()) overrides.emplace_back("input", o.input);
    if (!o.out.empty()) overrides.emplace_back("output_dir", o.out);
    if (o.seed) overrides.emplace_back("seed", std::to_string(*o.seed));
    if (only) overrides.emplace_back("stages", stage_name(*only));

    const PipelineConfig config =
        load_config(o.config.empty() ? std::nullopt : std::optional<std::filesystem::path>(o.config), overrides);
    const PipelineResult result = run_pipeline(config);
    for (const auto& s : result.stages) {
        std::cerr << stage_name(s.stage) << ": " << s.status;
        if (!s.error.empty()) std::cerr << " (" << s.error << ")";
        std::cerr << "\n";
    }
    return result.ok ? 0 : 1;
}

std::vector<int> parse_cohorts(const std::string& text)
{
    const auto dash = text.find('-', 1);
    if (dash == std::string::npos) return {static_cast<int>(parse_integer(text, "cohorts"))};
    const int a = static_cast<int>(parse_integer(text.substr(0, dash), "cohorts"));
    const int b = static_cast<int>(parse_integer(text.substr(dash + 1), "cohorts"));
    if (a > b) throw Error("empty cohort range '" + text + "'");
    std::vector<int> out;
    for (int c = a; c <= b; ++c) out.push_back(c);
    return out;
}

ModelParams parse_planted(const std::string& text)
{
    ModelParams p = sweden_1951_params();
    for (const auto& kv : split_fields(text, ',')) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw Error("--planted expects name=value pairs, got '" + kv + "'");
        const std::string name = kv.substr(0, eq);
        set(p, parameter_from_name(name), parse_double(kv.substr(eq + 1), name));
    }
    p.validate();
    return p;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Intergenerational mobility toolkit"};
    app.require_subcommand(1);

    struct Sub {
        const char* name;
        const char* help;
        std::optional<Stage> stage;
    };
    const std::vector<Sub> subs{
        {"estimate", "IRA/IGE estimates and trends", Stage::estimate},
        {"lw", "Lubotsky-Wittenberg proxy estimates", Stage::lw},
        {"calibrate", "moment targets, quantile maps and calibrated parameters", Stage::calibrate},
        {"decompose", "counterfactual trend decomposition from a calibration run", Stage::decompose},
        {"pipeline", "the configured stages in order", std::nullopt},
    };
    std::vector<CommonOptions> options(subs.size());
    std::vector<CLI::App*> apps;
    for (std::size_t i = 0; i < subs.size(); ++i) {
        apps.push_back(app.add_subcommand(subs[i].name, subs[i].help));
        add_common(apps.back(), options[i]);
    }

    auto* synth = app.add_subcommand("synth", "synthetic population with planted parameters");
    std::string synth_out, params_file, planted, cohorts = "1951";
    std::size_t families = 1000;
    std::uint64_t synth_seed = 1;
    synth->add_option("-o,--out", synth_out, "microdata CSV to write (ground truth goes to <out>.truth.tsv)")->required();
    auto* params_opt = synth->add_option("--params", params_file, "TSV of per-cohort parameters (ground-truth or calibration output)")
                           ->check(CLI::ExistingFile);
    synth->add_option("--planted", planted, "name=value overrides of the 1951 Sweden parameters, comma separated")
        ->excludes(params_opt);
    synth->add_option("--cohorts", cohorts, "cohort or start-end range for --planted");
    synth->add_option("-n,--families", families, "families per cohort");
    synth->add_option("--seed", synth_seed, "seed");

    CLI11_PARSE(app, argc, argv);

    try {
        for (std::size_t i = 0; i < subs.size(); ++i)
            if (apps[i]->parsed()) return run_stages(options[i], subs[i].stage);

        std::vector<PlantedCohort> chain;
        if (!params_file.empty()) {
            chain = planted_from_tsv(load_tsv(params_file));
        } else {
            const ModelParams p = planted.empty() ? sweden_1951_params() : parse_planted(planted);
            for (int c : parse_cohorts(cohorts)) chain.push_back({c, p});
        }
        save_synthetic(synth_out, generate_synthetic(chain, reference_maps(), families, synth_seed));
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
