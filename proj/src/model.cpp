#include "mobility/model.hpp"

#include "mobility/parallel.hpp"
#include "mobility/random.hpp"

#include <algorithm>
#include <limits>

namespace mobility {

double inverse_normal_cdf(double p)
{
    if (!(p >= 0.0 && p <= 1.0)) throw Error("inverse_normal_cdf: probability outside [0,1]");
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();

    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r +
                    45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
                 133.14166789178437745) * r + 3.387132872796366608) /
               (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r +
                    21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
                 42.313330701600911252) * r + 1.0);
    }
    double r = q < 0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
                   1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
                4.6303378461565452959) * r + 1.42343711074968357734) /
              (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
                   0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
                2.05319162663775882187) * r + 1.0);
    } else {
        r -= 5.0;
        val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
                   0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
                5.4637849111641143699) * r + 6.6579046435011037772) /
              (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
                   7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
                0.59983220655588793769) * r + 1.0);
    }
    return q < 0 ? -val : val;
}

double ModelParams::gamma1() const
{
    return std::sqrt(kappa * kappa * mix_variance(alpha, parental_correlation()) + (1 - kappa) * (1 - kappa));
}

void ModelParams::validate() const
{
    auto unit = [](double v, const char* name) {
        if (!(v >= 0.0 && v <= 1.0)) throw Error(std::string("ModelParams: ") + name + " outside [0,1]");
    };
    unit(psi, "psi");
    unit(kappa, "kappa");
    unit(alpha, "alpha");
    for (double phi : {phi_f, phi_m, phi_s, phi_d})
        if (!(phi >= 0.0) || !std::isfinite(phi)) throw Error("ModelParams: phi must be finite and non-negative");
    if (std::max(phi_f, phi_m) == 0.0 || std::max(phi_s, phi_d) == 0.0)
        throw Error("ModelParams: a generation has all-zero skill returns");
}

std::string parameter_name(Parameter p)
{
    switch (p) {
    case Parameter::psi: return "psi";
    case Parameter::kappa: return "kappa";
    case Parameter::alpha: return "alpha";
    case Parameter::phi_m: return "phi_m";
    case Parameter::phi_d: return "phi_d";
    }
    throw Error("parameter_name: invalid parameter");
}

Parameter parameter_from_name(const std::string& name)
{
    for (Parameter p : kCalibratedParameters)
        if (parameter_name(p) == name) return p;
    throw Error("unknown parameter '" + name + "'");
}

double get(const ModelParams& m, Parameter p)
{
    switch (p) {
    case Parameter::psi: return m.psi;
    case Parameter::kappa: return m.kappa;
    case Parameter::alpha: return m.alpha;
    case Parameter::phi_m: return m.phi_m;
    case Parameter::phi_d: return m.phi_d;
    }
    throw Error("get: invalid parameter");
}

void set(ModelParams& m, Parameter p, double v)
{
    switch (p) {
    case Parameter::psi: m.psi = v; return;
    case Parameter::kappa: m.kappa = v; return;
    case Parameter::alpha: m.alpha = v; return;
    case Parameter::phi_m: m.phi_m = v; return;
    case Parameter::phi_d: m.phi_d = v; return;
    }
    throw Error("set: invalid parameter");
}

ModelParams sweden_1951_params() { return {0.131, 0.301, 0.580, 1.0, 0.286, 1.0, 0.511}; }

double effective_phi(const ModelParams& params, Role role)
{
    const bool parent = role == Role::father || role == Role::mother;
    const double denom = parent ? std::max(params.phi_f, params.phi_m) : std::max(params.phi_s, params.phi_d);
    if (!(denom > 0.0)) throw Error("effective_phi: zero skill returns in a generation");
    switch (role) {
    case Role::father: return params.phi_f / denom;
    case Role::mother: return params.phi_m / denom;
    case Role::son: return params.phi_s / denom;
    case Role::daughter: return params.phi_d / denom;
    }
    throw Error("effective_phi: invalid role");
}

QuantileMap QuantileMap::from_sample(std::vector<double> sample)
{
    if (sample.empty()) throw Error("QuantileMap: empty sample");
    for (double v : sample)
        if (!std::isfinite(v)) throw DataError("QuantileMap: non-finite earnings");
    std::sort(sample.begin(), sample.end());
    QuantileMap m;
    const std::size_t n = sample.size();
    if (n == 1) {
        m.probs_ = {0.0, 1.0};
        m.values_ = {sample[0], sample[0]};
    } else {
        m.probs_.resize(n);
        for (std::size_t i = 0; i < n; ++i) m.probs_[i] = static_cast<double>(i) / static_cast<double>(n - 1);
        m.values_ = std::move(sample);
    }
    m.uniform_ = true;
    return m;
}

QuantileMap QuantileMap::from_knots(std::vector<double> probabilities, std::vector<double> values)
{
    if (probabilities.size() != values.size() || probabilities.empty())
        throw DataError("QuantileMap: knot columns must be non-empty and of equal length");
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        if (!(probabilities[i] >= 0.0 && probabilities[i] <= 1.0) || !std::isfinite(values[i]))
            throw DataError("QuantileMap: invalid knot");
        if (i > 0 && !(probabilities[i] > probabilities[i - 1]))
            throw DataError("QuantileMap: probabilities must increase strictly");
        if (i > 0 && values[i] < values[i - 1]) throw DataError("QuantileMap: values must be non-decreasing");
    }
    QuantileMap m;
    if (probabilities.size() == 1) {
        probabilities = {0.0, 1.0};
        values = {values[0], values[0]};
    }
    m.probs_ = std::move(probabilities);
    m.values_ = std::move(values);
    return m;
}

double QuantileMap::quantile(double p) const
{
    if (values_.empty()) throw Error("QuantileMap: empty map");
    if (std::isnan(p)) throw Error("QuantileMap: NaN probability");
    if (p <= probs_.front()) return values_.front();
    if (p >= probs_.back()) return values_.back();
    std::size_t hi;
    if (uniform_) {
        const double h = p * static_cast<double>(values_.size() - 1);
        hi = std::min(values_.size() - 1, static_cast<std::size_t>(h) + 1);
    } else {
        hi = static_cast<std::size_t>(std::upper_bound(probs_.begin(), probs_.end(), p) - probs_.begin());
    }
    const std::size_t lo = hi - 1;
    const double w = std::clamp((p - probs_[lo]) / (probs_[hi] - probs_[lo]), 0.0, 1.0);
    // Tie runs (e.g. a mass of zeros) stay flat.
    if (values_[lo] == values_[hi]) return values_[lo];
    return values_[lo] + w * (values_[hi] - values_[lo]);
}

TsvTable QuantileMap::to_tsv() const
{
    TsvTable t;
    t.columns = {"probability", "earnings"};
    for (std::size_t i = 0; i < values_.size(); ++i) t.rows.push_back({format_number(probs_[i]), format_number(values_[i])});
    return t;
}

QuantileMap QuantileMap::from_tsv(const TsvTable& table)
{
    const auto cp = table.column("probability");
    const auto ce = table.column("earnings");
    std::vector<double> p, v;
    for (const auto& r : table.rows) {
        p.push_back(parse_double(r[cp], "probability"));
        v.push_back(parse_double(r[ce], "earnings"));
    }
    return from_knots(std::move(p), std::move(v));
}

const QuantileMap& RoleMaps::operator[](Role r) const
{
    switch (r) {
    case Role::father: return father;
    case Role::mother: return mother;
    case Role::son: return son;
    case Role::daughter: return daughter;
    }
    throw Error("RoleMaps: invalid role");
}

BaseDraws draw_base(std::size_t n, std::uint64_t seed)
{
    if (n == 0) throw Error("draw_base: n must be positive");
    const auto N = static_cast<Eigen::Index>(n);
    BaseDraws d;
    d.seed = seed;
    for (Eigen::VectorXd* v : {&d.father_skill, &d.mating_noise, &d.child_noise, &d.eps_father, &d.eps_mother,
                               &d.eps_son, &d.eps_daughter})
        v->resize(N);

    const std::size_t blocks = (n + kDrawBlock - 1) / kDrawBlock;
    parallel_for(blocks, [&](std::size_t b) {
        NormalStream rng(stream_seed(seed, b));
        const std::size_t end = std::min(n, (b + 1) * kDrawBlock);
        for (std::size_t i = b * kDrawBlock; i < end; ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            d.father_skill(k) = rng();
            d.mating_noise(k) = rng();
            d.child_noise(k) = rng();
            d.eps_father(k) = rng();
            d.eps_mother(k) = rng();
            d.eps_son(k) = rng();
            d.eps_daughter(k) = rng();
        }
    });
    return d;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> draw_parental_skills(double psi, std::size_t n, std::uint64_t seed)
{
    if (!(psi >= 0.0 && psi <= 1.0)) throw Error("draw_parental_skills: psi outside [0,1]");
    const auto d = draw_base(n, seed);
    return {d.father_skill, mother_skills(psi, d.father_skill, d.mating_noise)};
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> transmit_skills(double kappa, double alpha, double parental_correlation,
                                                            const Eigen::Ref<const Eigen::VectorXd>& father,
                                                            const Eigen::Ref<const Eigen::VectorXd>& mother,
                                                            const Eigen::Ref<const Eigen::VectorXd>& child_noise)
{
    if (!(kappa >= 0.0 && kappa <= 1.0) || !(alpha >= 0.0 && alpha <= 1.0))
        throw Error("transmit_skills: kappa and alpha must lie in [0,1]");
    if (father.size() != mother.size() || father.size() != child_noise.size())
        throw Error("transmit_skills: length mismatch");
    const double g1 = std::sqrt(kappa * kappa * mix_variance(alpha, parental_correlation) + (1 - kappa) * (1 - kappa));
    if (!(g1 > 0.0)) throw Error("transmit_skills: non-positive normalizer");
    Eigen::VectorXd son = (kappa * (alpha * father + (1 - alpha) * mother) + (1 - kappa) * child_noise) / g1;
    Eigen::VectorXd daughter = (kappa * (alpha * mother + (1 - alpha) * father) + (1 - kappa) * child_noise) / g1;
    return {std::move(son), std::move(daughter)};
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> transmit_skills(double kappa, double alpha, double parental_correlation,
                                                            const Eigen::Ref<const Eigen::VectorXd>& father,
                                                            const Eigen::Ref<const Eigen::VectorXd>& mother,
                                                            std::uint64_t seed)
{
    const auto d = draw_base(static_cast<std::size_t>(father.size()), seed);
    return transmit_skills(kappa, alpha, parental_correlation, father, mother, d.child_noise);
}

QuantileMap fit_quantile_map(std::vector<double> earnings) { return QuantileMap::from_sample(std::move(earnings)); }

namespace {

Eigen::VectorXd map_earnings(const Eigen::VectorXd& index, double sd, const QuantileMap& map)
{
    Eigen::VectorXd out(index.size());
    for (Eigen::Index i = 0; i < index.size(); ++i) out(i) = map(index(i) / sd);
    return out;
}

} // namespace

SimPopulation simulate_from_draws(const ModelParams& params, const RoleMaps& maps, const BaseDraws& draws)
{
    params.validate();
    SimPopulation pop;
    pop.seed = draws.seed;
    pop.skill_father = draws.father_skill;
    pop.skill_mother = mother_skills(params.psi, draws.father_skill, draws.mating_noise);
    auto [son, daughter] = transmit_skills(params.kappa, params.alpha, params.parental_correlation(), pop.skill_father,
                                           pop.skill_mother, draws.child_noise);
    pop.skill_son = std::move(son);
    pop.skill_daughter = std::move(daughter);

    pop.index_father = earnings_index(params, pop.skill_father, draws.eps_father, Role::father);
    pop.index_mother = earnings_index(params, pop.skill_mother, draws.eps_mother, Role::mother);
    pop.index_son = earnings_index(params, pop.skill_son, draws.eps_son, Role::son);
    pop.index_daughter = earnings_index(params, pop.skill_daughter, draws.eps_daughter, Role::daughter);

    pop.earn_father = map_earnings(pop.index_father, index_sd(params, Role::father), maps.father);
    pop.earn_mother = map_earnings(pop.index_mother, index_sd(params, Role::mother), maps.mother);
    pop.earn_son = map_earnings(pop.index_son, index_sd(params, Role::son), maps.son);
    pop.earn_daughter = map_earnings(pop.index_daughter, index_sd(params, Role::daughter), maps.daughter);
    pop.earn_parents = pop.earn_father + pop.earn_mother;
    return pop;
}

SimPopulation simulate_population(const ModelParams& params, const RoleMaps& maps, std::size_t n, std::uint64_t seed)
{
    return simulate_from_draws(params, maps, draw_base(n, seed));
}

} // namespace mobility
