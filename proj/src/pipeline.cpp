#include "mobility/pipeline.hpp"

#include "mobility/decomposition.hpp"
#include "mobility/error.hpp"
#include "mobility/lw.hpp"
#include "mobility/model.hpp"
#include "mobility/random.hpp"
#include "mobility/tsv.hpp"

#include <json.hpp>

#include <algorithm>
#include <set>
#include <sstream>

namespace mobility {

std::string stage_name(Stage s)
{
    switch (s) {
    case Stage::estimate: return "estimate";
    case Stage::lw: return "lw";
    case Stage::calibrate: return "calibrate";
    case Stage::decompose: return "decompose";
    }
    return "?";
}

Stage stage_from_name(const std::string& name)
{
    for (Stage s : {Stage::estimate, Stage::lw, Stage::calibrate, Stage::decompose})
        if (stage_name(s) == name) return s;
    throw Error("unknown stage '" + name + "'");
}

namespace {

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v)
{
    std::vector<std::string> out;
    for (const auto& f : split_fields(v, ','))
        if (auto t = trim(f); !t.empty()) out.push_back(t);
    return out;
}

bool parse_bool(const std::string& v, const std::string& key)
{
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw Error("config: " + key + " expects true/false, got '" + v + "'");
}

int parse_int(const std::string& v, const std::string& key) { return static_cast<int>(parse_integer(v, key)); }

std::pair<int, int> parse_range(const std::string& v, const std::string& key)
{
    const auto dash = v.find('-', 1);
    if (dash == std::string::npos) throw Error("config: " + key + " expects start-end, got '" + v + "'");
    const std::pair<int, int> r{parse_int(trim(v.substr(0, dash)), key), parse_int(trim(v.substr(dash + 1)), key)};
    if (r.first > r.second) throw Error("config: empty range '" + v + "' in " + key);
    return r;
}

std::string scope_name(ParticipationScope s)
{
    switch (s) {
    case ParticipationScope::child: return "child";
    case ParticipationScope::parent: return "parent";
    case ParticipationScope::both: return "both";
    }
    return "?";
}

std::string anchor_name(IncomeWindow::Anchor a) { return a == IncomeWindow::Anchor::child_age ? "child_age" : "own_age"; }

IncomeWindow::Anchor parse_anchor(const std::string& v, const std::string& key)
{
    if (v == "child_age") return IncomeWindow::Anchor::child_age;
    if (v == "own_age") return IncomeWindow::Anchor::own_age;
    throw Error("config: " + key + " expects child_age or own_age, got '" + v + "'");
}

} // namespace

void PipelineConfig::set(const std::string& key, const std::string& raw)
{
    const std::string v = trim(raw);
    auto& c = calibration;
    if (key == "input") input = v;
    else if (key == "output_dir") output_dir = v;
    else if (key == "stages") {
        stages.clear();
        for (const auto& s : split_list(v)) stages.push_back(stage_from_name(s));
    }
    else if (key == "child_center_age") child_window.center_age = parse_int(v, key);
    else if (key == "child_half_width") child_window.half_width = parse_int(v, key);
    else if (key == "child_anchor") child_window.anchor = parse_anchor(v, key);
    else if (key == "parent_center_age") parent_window.center_age = parse_int(v, key);
    else if (key == "parent_half_width") parent_window.half_width = parse_int(v, key);
    else if (key == "parent_anchor") parent_window.anchor = parse_anchor(v, key);
    else if (key == "participation_threshold") participation_threshold = parse_double(v, key);
    else if (key == "participation") {
        if (v == "none") participation.reset();
        else if (v == "child") participation = ParticipationScope::child;
        else if (v == "parent") participation = ParticipationScope::parent;
        else if (v == "both") participation = ParticipationScope::both;
        else throw Error("config: participation expects none/child/parent/both, got '" + v + "'");
    }
    else if (key == "cohort_min") cohort_min = parse_int(v, key);
    else if (key == "cohort_max") cohort_max = parse_int(v, key);
    else if (key == "gender_rerank") gender_rerank = parse_bool(v, key);
    else if (key == "ige") estimate_ige = parse_bool(v, key);
    else if (key == "token_log") {
        if (v == "auto") token_log.reset();
        else token_log = parse_double(v, key);
    }
    else if (key == "calib.n_sim") c.n_sim = static_cast<std::size_t>(parse_integer(v, key));
    else if (key == "calib.max_iters") c.max_iters = parse_int(v, key);
    else if (key == "calib.initial_step") c.initial_step = parse_double(v, key);
    else if (key == "calib.max_backtracks") c.max_backtracks = parse_int(v, key);
    else if (key == "calib.fd_step") c.fd_step = parse_double(v, key);
    else if (key == "calib.tolerance") c.tolerance = parse_double(v, key);
    else if (key == "calib.patience") c.patience = parse_int(v, key);
    else if (key == "calib.min_improvement") c.min_improvement = parse_double(v, key);
    else if (key == "calib.plain_gradient") c.plain_gradient = parse_bool(v, key);
    else if (key == "calib.weights") {
        const auto w = split_list(v);
        if (w.size() != 5) throw Error("config: calib.weights expects 5 values");
        for (std::size_t i = 0; i < 5; ++i) c.weights[i] = parse_double(w[i], key);
    }
    else if (key == "ranges") {
        ranges.clear();
        for (const auto& r : split_list(v)) ranges.push_back(parse_range(r, key));
    }
    else if (key == "baseline_cohort") {
        if (v == "auto") baseline_cohort.reset();
        else baseline_cohort = parse_int(v, key);
    }
    else if (key == "decompose_n") decompose_n = static_cast<std::size_t>(parse_integer(v, key));
    else if (key == "seed") seed = static_cast<std::uint64_t>(parse_integer(v, key));
    else throw Error("config: unknown key '" + key + "'");
}

void PipelineConfig::validate() const
{
    if (stages.empty()) throw Error("config: no stages selected");
    const bool needs_input = std::any_of(stages.begin(), stages.end(), [](Stage s) { return s != Stage::decompose; });
    if (needs_input) {
        if (input.empty()) throw Error("config: input is required");
        if (!std::filesystem::exists(input)) throw Error("config: input " + input.string() + " does not exist");
    }
    if (cohort_min && cohort_max && *cohort_min > *cohort_max) throw Error("config: empty cohort range");
    for (const auto* w : {&child_window, &parent_window})
        if (w->half_width < 0 || w->center_age <= 0) throw Error("config: invalid income window");
    if (!(participation_threshold >= 0)) throw Error("config: participation_threshold must be non-negative");
    if (!token_log && !(participation_threshold > 0))
        throw Error("config: token_log must be set when participation_threshold is 0");
    if (decompose_n < 2) throw Error("config: decompose_n must be at least 2");
    calibration.validate();
}

std::string PipelineConfig::canonical() const
{
    std::map<std::string, std::string> kv;
    const auto& c = calibration;
    kv["input"] = input.string();
    kv["output_dir"] = output_dir.string();
    std::string st;
    for (Stage s : stages) st += (st.empty() ? "" : ",") + stage_name(s);
    kv["stages"] = st;
    kv["child_center_age"] = std::to_string(child_window.center_age);
    kv["child_half_width"] = std::to_string(child_window.half_width);
    kv["child_anchor"] = anchor_name(child_window.anchor);
    kv["parent_center_age"] = std::to_string(parent_window.center_age);
    kv["parent_half_width"] = std::to_string(parent_window.half_width);
    kv["parent_anchor"] = anchor_name(parent_window.anchor);
    kv["participation_threshold"] = format_number(participation_threshold);
    kv["participation"] = participation ? scope_name(*participation) : "none";
    kv["cohort_min"] = cohort_min ? std::to_string(*cohort_min) : "none";
    kv["cohort_max"] = cohort_max ? std::to_string(*cohort_max) : "none";
    kv["gender_rerank"] = gender_rerank ? "true" : "false";
    kv["ige"] = estimate_ige ? "true" : "false";
    kv["token_log"] = token_log ? format_number(*token_log) : "auto";
    kv["calib.n_sim"] = std::to_string(c.n_sim);
    kv["calib.max_iters"] = std::to_string(c.max_iters);
    kv["calib.initial_step"] = format_number(c.initial_step);
    kv["calib.max_backtracks"] = std::to_string(c.max_backtracks);
    kv["calib.fd_step"] = format_number(c.fd_step);
    kv["calib.tolerance"] = format_number(c.tolerance);
    kv["calib.patience"] = std::to_string(c.patience);
    kv["calib.min_improvement"] = format_number(c.min_improvement);
    kv["calib.plain_gradient"] = c.plain_gradient ? "true" : "false";
    std::string w;
    for (double x : c.weights) w += (w.empty() ? "" : ",") + format_number(x);
    kv["calib.weights"] = w;
    std::string rg;
    for (auto [a, b] : ranges) rg += (rg.empty() ? "" : ",") + std::to_string(a) + "-" + std::to_string(b);
    kv["ranges"] = rg.empty() ? "all" : rg;
    kv["baseline_cohort"] = baseline_cohort ? std::to_string(*baseline_cohort) : "auto";
    kv["decompose_n"] = std::to_string(decompose_n);
    kv["seed"] = std::to_string(seed);

    std::string out;
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
}

std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text)
{
    std::vector<std::pair<std::string, std::string>> out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw Error("config line " + std::to_string(lineno) + ": expected key = value");
        out.emplace_back(trim(std::string_view(line).substr(0, eq)), trim(std::string_view(line).substr(eq + 1)));
    }
    return out;
}

PipelineConfig load_config(const std::optional<std::filesystem::path>& file,
                           const std::vector<std::pair<std::string, std::string>>& overrides)
{
    PipelineConfig config;
    if (file)
        for (const auto& [k, v] : parse_config_text(read_text_file(*file))) config.set(k, v);
    for (const auto& [k, v] : overrides) config.set(k, v);
    return config;
}

std::string fnv1a_hex(const std::string& bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    return out;
}

namespace {

constexpr std::size_t kMapKnots = 1001;
constexpr std::array<const char*, 4> kRoleNames{"father", "mother", "son", "daughter"};

struct RunState {
    const PipelineConfig& config;
    std::optional<PersonTable> persons;
    std::optional<PairTable> pairs;
    nlohmann::ordered_json outputs = nlohmann::ordered_json::array();

    void write(const std::string& relative, const std::string& content, StageStatus& status)
    {
        write_text_file(config.output_dir / relative, content);
        status.outputs.push_back(relative);
        outputs.push_back({{"file", relative}, {"fnv1a", fnv1a_hex(content)}});
    }

    const PersonTable& load_persons()
    {
        if (!persons) persons = load_microdata(config.input);
        return *persons;
    }

    const PairTable& load_pairs()
    {
        if (pairs) return *pairs;
        PairTable all = build_pairs(load_persons(), config.child_window, config.parent_window);
        if (config.participation) all = participation_filter(all, config.participation_threshold, *config.participation);
        PairTable kept;
        kept.exclusions = all.exclusions;
        for (auto& p : all.pairs)
            if ((!config.cohort_min || p.child_cohort >= *config.cohort_min) &&
                (!config.cohort_max || p.child_cohort <= *config.cohort_max))
                kept.pairs.push_back(std::move(p));
        if (kept.pairs.empty()) throw DataError("no pairs in the configured cohort range");
        pairs = std::move(kept);
        return *pairs;
    }

    std::vector<int> cohorts()
    {
        std::set<int> s;
        for (const auto& p : load_pairs().pairs) s.insert(p.child_cohort);
        return {s.begin(), s.end()};
    }
};

std::vector<std::pair<int, int>> analysis_ranges(const PipelineConfig& config, const std::vector<int>& cohorts)
{
    if (!config.ranges.empty()) return config.ranges;
    if (cohorts.empty()) throw DataError("no cohorts to analyze");
    return {{cohorts.front(), cohorts.back()}};
}

void run_estimate(RunState& run, StageStatus& status)
{
    const auto& pairs = run.load_pairs();
    const auto specs = standard_specs();
    EstimationOptions options;
    options.gender_rerank = run.config.gender_rerank;
    const auto estimates = estimate_ira(pairs, specs, options);
    run.write("estimates.tsv", estimates_tsv(estimates).to_string(), status);
    if (run.config.estimate_ige) run.write("ige.tsv", estimates_tsv(estimate_ige(pairs, specs, options)).to_string(), status);

    std::map<std::string, std::vector<EstimateRecord>> by_spec;
    for (const auto& e : estimates) by_spec[e.spec_label].push_back(e);
    std::vector<TrendRecord> trends;
    for (auto range : analysis_ranges(run.config, run.cohorts()))
        for (const auto& spec : specs) {
            const auto& series = by_spec[spec.label];
            const auto in_range = std::count_if(series.begin(), series.end(), [&](const EstimateRecord& e) {
                return e.cohort >= range.first && e.cohort <= range.second;
            });
            if (in_range < 3) continue;
            TrendRecord t = trend_fit(series, range);
            // Daughters are tested against sons with the same parent.
            if (spec.label.starts_with("daughter-")) {
                const auto& sons = by_spec["son-" + spec.label.substr(9)];
                try {
                    t.p_equal_trends = trend_equality_pvalue(series, sons, range);
                } catch (const DegenerateError&) {
                }
            }
            trends.push_back(std::move(t));
        }
    run.write("trends.tsv", trends_tsv(trends).to_string(), status);
}

void run_lw(RunState& run, StageStatus& status)
{
    LWOptions options;
    options.token_log = run.config.token_log.value_or(default_token_log(run.config.participation_threshold));
    const auto lw = estimate_lw(run.load_persons(), run.load_pairs(), standard_lw_specs(), options);
    run.write("lw.tsv", lw_tsv(lw).to_string(), status);
}

QuantileMap compact_map(std::vector<double> earnings)
{
    if (earnings.empty()) throw DataError("no earnings to build a quantile map from");
    const QuantileMap full = fit_quantile_map(std::move(earnings));
    if (full.size() <= kMapKnots) return full;
    std::vector<double> p(kMapKnots), v(kMapKnots);
    for (std::size_t i = 0; i < kMapKnots; ++i) {
        p[i] = static_cast<double>(i) / (kMapKnots - 1);
        v[i] = full.quantile(p[i]);
    }
    return QuantileMap::from_knots(std::move(p), std::move(v));
}

RoleMaps cohort_maps(const PairTable& pairs, int cohort)
{
    std::map<std::size_t, double> fathers, mothers;
    std::vector<double> sons, daughters;
    for (const auto& p : pairs.pairs) {
        if (p.child_cohort != cohort) continue;
        if (p.father && p.father_income) fathers[*p.father] = *p.father_income;
        if (p.mother && p.mother_income) mothers[*p.mother] = *p.mother_income;
        (p.child_sex == Sex::male ? sons : daughters).push_back(p.child_income);
    }
    auto values = [](const std::map<std::size_t, double>& m) {
        std::vector<double> v;
        for (const auto& [k, x] : m) v.push_back(x);
        return v;
    };
    return {compact_map(values(fathers)), compact_map(values(mothers)), compact_map(sons), compact_map(daughters)};
}

std::string map_file(int cohort, std::size_t role)
{
    return "maps/" + std::to_string(cohort) + "_" + kRoleNames[role] + ".tsv";
}

void run_calibrate(RunState& run, StageStatus& status)
{
    const auto& pairs = run.load_pairs();
    std::vector<CohortTarget> targets;
    std::vector<std::pair<int, MomentVector>> target_rows;
    for (int cohort : run.cohorts()) {
        CohortTarget t;
        t.cohort = cohort;
        t.targets = moment_vector(moment_data(pairs, cohort));
        t.maps = cohort_maps(pairs, cohort);
        const std::array<const QuantileMap*, 4> maps{&t.maps.father, &t.maps.mother, &t.maps.son, &t.maps.daughter};
        for (std::size_t r = 0; r < 4; ++r) run.write(map_file(cohort, r), maps[r]->to_tsv().to_string(), status);
        target_rows.emplace_back(cohort, t.targets);
        targets.push_back(std::move(t));
    }
    run.write("targets.tsv", targets_tsv(target_rows).to_string(), status);

    CalibrationSettings settings = run.config.calibration;
    settings.seed = stage_seed(run.config.seed, SeedStage::calibrate);
    const ModelParams init = random_init(stage_seed(run.config.seed, SeedStage::init), settings);
    const auto chain = calibrate_sequence(targets, settings, init);
    run.write("calibration.tsv", calibration_tsv(chain, settings), status);
}

void run_decompose(RunState& run, StageStatus& status)
{
    const auto& dir = run.config.output_dir;
    const auto params = params_from_tsv(load_tsv(dir / "calibration.tsv"));
    if (params.empty()) throw DataError("calibration.tsv has no cohorts");
    std::vector<CohortModel> chain;
    std::vector<int> cohorts;
    for (const auto& [cohort, p] : params) {
        CohortModel m{cohort, p, {}};
        std::array<QuantileMap*, 4> maps{&m.maps.father, &m.maps.mother, &m.maps.son, &m.maps.daughter};
        for (std::size_t r = 0; r < 4; ++r) *maps[r] = QuantileMap::from_tsv(load_tsv(dir / map_file(cohort, r)));
        chain.push_back(std::move(m));
        cohorts.push_back(cohort);
    }

    std::vector<EstimateRecord> observed;
    if (std::filesystem::exists(dir / "estimates.tsv"))
        for (auto& e : estimates_from_tsv(load_tsv(dir / "estimates.tsv")))
            if (e.spec_label == "all") observed.push_back(std::move(e));

    const std::uint64_t seed = stage_seed(run.config.seed, SeedStage::decompose);
    std::vector<DecompositionResult> results;
    for (auto range : analysis_ranges(run.config, cohorts)) {
        const int baseline = run.config.baseline_cohort.value_or(range.first);
        std::vector<CohortModel> sub;
        std::vector<EstimateRecord> obs;
        for (const auto& m : chain)
            if (m.cohort >= range.first && m.cohort <= range.second) sub.push_back(m);
        for (const auto& e : observed)
            if (e.cohort >= range.first && e.cohort <= range.second) obs.push_back(e);
        if (sub.size() < 3)
            throw DataError("range " + std::to_string(range.first) + "-" + std::to_string(range.second) +
                            " has fewer than 3 calibrated cohorts");
        if (obs.size() != sub.size()) obs.clear(); // observed series incomplete: report NA
        results.push_back(decompose(sub, obs, range, baseline, run.config.decompose_n, seed));
    }
    run.write("decomposition.tsv", decomposition_tsv(results).to_string(), status);

    TsvTable series;
    for (const auto& r : results) {
        TsvTable t = beta_tilde_tsv(r);
        if (series.columns.empty()) {
            series.columns = {"range"};
            series.columns.insert(series.columns.end(), t.columns.begin(), t.columns.end());
        }
        const std::string label = std::to_string(r.range.first) + "-" + std::to_string(r.range.second);
        for (auto& row : t.rows) {
            row.insert(row.begin(), label);
            series.rows.push_back(std::move(row));
        }
    }
    run.write("beta_tilde.tsv", series.to_string(), status);
}

} // namespace

PipelineResult run_pipeline(const PipelineConfig& config)
{
    PipelineResult result;
    RunState run{config, {}, {}};

    nlohmann::ordered_json manifest;
    manifest["version"] = kVersion;
    manifest["config_hash"] = fnv1a_hex(config.canonical());
    manifest["seed"] = config.seed;
    manifest["stage_seeds"] = {{"calibrate", stage_seed(config.seed, SeedStage::calibrate)},
                               {"init", stage_seed(config.seed, SeedStage::init)},
                               {"decompose", stage_seed(config.seed, SeedStage::decompose)}};
    nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
    for (const auto& [k, v] : parse_config_text(config.canonical())) cfg[k] = v;
    manifest["config"] = cfg;

    std::vector<Stage> order;
    for (Stage s : {Stage::estimate, Stage::lw, Stage::calibrate, Stage::decompose})
        if (std::find(config.stages.begin(), config.stages.end(), s) != config.stages.end()) order.push_back(s);

    std::optional<std::string> failed_stage;
    try {
        config.validate();
    } catch (const std::exception& e) {
        result.ok = false;
        failed_stage = "config";
        manifest["error"] = e.what();
    }

    for (Stage s : order) {
        StageStatus status;
        status.stage = s;
        if (failed_stage) {
            status.status = "not_run";
        } else {
            try {
                switch (s) {
                case Stage::estimate: run_estimate(run, status); break;
                case Stage::lw: run_lw(run, status); break;
                case Stage::calibrate: run_calibrate(run, status); break;
                case Stage::decompose: run_decompose(run, status); break;
                }
                status.status = "ok";
            } catch (const std::exception& e) {
                status.status = "failed";
                status.error = e.what();
                result.ok = false;
                failed_stage = stage_name(s);
            }
        }
        result.stages.push_back(std::move(status));
    }

    nlohmann::ordered_json stages = nlohmann::ordered_json::array();
    for (const auto& s : result.stages) {
        nlohmann::ordered_json j{{"name", stage_name(s.stage)}, {"status", s.status}};
        if (!s.error.empty()) j["error"] = s.error;
        stages.push_back(j);
    }
    manifest["stages"] = stages;
    manifest["outputs"] = run.outputs;
    manifest["status"] = result.ok ? "ok" : "failed";
    manifest["failed_stage"] = failed_stage ? nlohmann::ordered_json(*failed_stage) : nlohmann::ordered_json(nullptr);
    write_text_file(config.output_dir / "manifest.json", manifest.dump(2) + "\n");
    return result;
}

} // namespace mobility
