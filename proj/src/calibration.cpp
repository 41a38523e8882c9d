#include "mobility/calibration.hpp"

#include "mobility/random.hpp"
#include "mobility/ranking.hpp"
#include "mobility/regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mobility {

MomentData moment_data(const SimPopulation& population)
{
    const Eigen::Index n = population.size();
    MomentData d;
    d.father.resize(2 * n);
    d.mother.resize(2 * n);
    d.child.resize(2 * n);
    d.child_sex.resize(static_cast<std::size_t>(2 * n));
    d.father << population.earn_father, population.earn_father;
    d.mother << population.earn_mother, population.earn_mother;
    d.child << population.earn_son, population.earn_daughter;
    std::fill(d.child_sex.begin(), d.child_sex.begin() + n, Sex::male);
    std::fill(d.child_sex.begin() + n, d.child_sex.end(), Sex::female);
    return d;
}

MomentData moment_data(const PairTable& pairs, int cohort)
{
    std::vector<const PairRecord*> rows;
    for (const auto& p : pairs.pairs)
        if (p.child_cohort == cohort) rows.push_back(&p);
    const auto n = static_cast<Eigen::Index>(rows.size());
    MomentData d;
    d.father.resize(n);
    d.mother.resize(n);
    d.child.resize(n);
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& p = *rows[static_cast<std::size_t>(i)];
        d.father(i) = p.father_income.value_or(nan);
        d.mother(i) = p.mother_income.value_or(nan);
        d.child(i) = p.child_income;
        d.child_sex.push_back(p.child_sex);
    }
    return d;
}

namespace {

/// Ranks of the finite entries of v among themselves; NaN elsewhere.
Eigen::VectorXd ranks_where_present(const Eigen::VectorXd& v, const std::vector<bool>& include)
{
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (include[static_cast<std::size_t>(i)] && !std::isnan(v(i))) idx.push_back(i);
    Eigen::VectorXd sub(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) sub(static_cast<Eigen::Index>(k)) = v(idx[k]);
    const Eigen::VectorXd r = percentile_ranks(sub);
    Eigen::VectorXd out = Eigen::VectorXd::Constant(v.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t k = 0; k < idx.size(); ++k) out(idx[k]) = r(static_cast<Eigen::Index>(k));
    return out;
}

double slope_of(const Eigen::VectorXd& y, const Eigen::VectorXd& x, const char* moment)
{
    std::vector<double> ys, xs;
    ys.reserve(static_cast<std::size_t>(y.size()));
    xs.reserve(static_cast<std::size_t>(y.size()));
    for (Eigen::Index i = 0; i < y.size(); ++i)
        if (!std::isnan(y(i)) && !std::isnan(x(i))) {
            ys.push_back(y(i));
            xs.push_back(x(i));
        }
    const Eigen::Map<const Eigen::VectorXd> yv(ys.data(), static_cast<Eigen::Index>(ys.size()));
    const Eigen::Map<const Eigen::VectorXd> xv(xs.data(), static_cast<Eigen::Index>(xs.size()));
    try {
        return fit_line(yv, xv).slope;
    } catch (const DegenerateError& e) {
        throw DegenerateError(std::string("moment ") + moment + ": " + e.what());
    }
}

} // namespace

MomentVector moment_vector(const MomentData& data)
{
    const Eigen::Index n = data.child.size();
    if (data.father.size() != n || data.mother.size() != n || static_cast<Eigen::Index>(data.child_sex.size()) != n)
        throw Error("moment_vector: column length mismatch");

    const std::vector<bool> all(static_cast<std::size_t>(n), true);
    std::vector<bool> sons(static_cast<std::size_t>(n)), daughters(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < data.child_sex.size(); ++i) {
        sons[i] = data.child_sex[i] == Sex::male;
        daughters[i] = !sons[i];
    }
    const Eigen::VectorXd father = ranks_where_present(data.father, all);
    const Eigen::VectorXd mother = ranks_where_present(data.mother, all);
    const Eigen::VectorXd son = ranks_where_present(data.child, sons);
    const Eigen::VectorXd daughter = ranks_where_present(data.child, daughters);
    const Eigen::VectorXd mother_ventile =
        mother.unaryExpr([](double r) { return std::isnan(r) ? r : ventile_midpoint(ventile_of(r)); });

    MomentVector m;
    m[0] = slope_of(father, mother_ventile, kMomentNames[0]);
    m[1] = slope_of(father, son, kMomentNames[1]);
    m[2] = slope_of(father, daughter, kMomentNames[2]);
    m[3] = slope_of(mother, son, kMomentNames[3]);
    m[4] = slope_of(mother, daughter, kMomentNames[4]);
    return m;
}

void CalibrationSettings::validate() const
{
    if (n_sim < 1000) throw Error("CalibrationSettings: n_sim must be at least 1000");
    if (!(tolerance > 0)) throw Error("CalibrationSettings: tolerance must be positive");
    if (!(fd_step > 0)) throw Error("CalibrationSettings: fd_step must be positive");
    if (max_iters < 0 || patience < 1 || max_backtracks < 0) throw Error("CalibrationSettings: invalid iteration limits");
    for (const auto& b : bounds)
        if (!(b.lower < b.upper)) throw Error("CalibrationSettings: empty bound");
    if (bounds[0].lower < 0 || bounds[0].upper > 1 || bounds[1].lower < 0 || bounds[1].upper > 1 ||
        bounds[2].lower < 0 || bounds[2].upper > 1 || bounds[3].lower < 0 || bounds[4].lower < 0)
        throw Error("CalibrationSettings: bounds exceed the parameter domain");
    for (double w : weights)
        if (!(w >= 0)) throw Error("CalibrationSettings: negative moment weight");
}

SimulatedMoments::SimulatedMoments(RoleMaps maps, std::size_t n, std::uint64_t seed)
    : maps_(std::move(maps)), draws_(draw_base(n, seed))
{
}

SimulatedMoments::SimulatedMoments(RoleMaps maps, BaseDraws draws) : maps_(std::move(maps)), draws_(std::move(draws)) {}

MomentVector SimulatedMoments::operator()(const ModelParams& params) const
{
    return moment_vector(moment_data(simulate_from_draws(params, maps_, draws_)));
}

double moment_loss(const MomentVector& simulated, const MomentVector& target, const std::array<double, 5>& weights)
{
    double loss = 0;
    for (std::size_t i = 0; i < 5; ++i) {
        const double gap = simulated[i] - target[i];
        loss += weights[i] * gap * gap;
    }
    return loss;
}

ModelParams random_init(std::uint64_t seed, const CalibrationSettings& settings)
{
    NormalStream rng(stream_seed(seed, static_cast<std::uint64_t>(SeedStage::init)));
    ModelParams p;
    for (std::size_t j = 0; j < kCalibratedParameters.size(); ++j) {
        const auto& b = settings.bounds[j];
        // Stay away from the box faces: the middle 80% (phi capped at 1.5).
        const double hi = j >= 3 ? std::min(b.upper, 1.5) : b.upper;
        const double lo = b.lower + 0.1 * (hi - b.lower);
        const double top = hi - 0.1 * (hi - b.lower);
        set(p, kCalibratedParameters[j], lo + (top - lo) * rng.uniform());
    }
    return p;
}

ModelParams project(ModelParams params, const CalibrationSettings& settings)
{
    for (std::size_t j = 0; j < kCalibratedParameters.size(); ++j) {
        const auto& b = settings.bounds[j];
        set(params, kCalibratedParameters[j], std::clamp(get(params, kCalibratedParameters[j]), b.lower, b.upper));
    }
    return params;
}

namespace {

using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat5 = Eigen::Matrix<double, 5, 5>;

Vec5 to_vec(const ModelParams& p)
{
    Vec5 v;
    for (std::size_t j = 0; j < 5; ++j) v(static_cast<Eigen::Index>(j)) = get(p, kCalibratedParameters[j]);
    return v;
}

ModelParams from_vec(ModelParams base, const Vec5& v)
{
    for (std::size_t j = 0; j < 5; ++j) set(base, kCalibratedParameters[j], v(static_cast<Eigen::Index>(j)));
    return base;
}

std::string dump_trace(const std::vector<TraceEntry>& trace)
{
    std::ostringstream os;
    for (const auto& t : trace)
        os << "\n  iter " << t.iteration << ": psi=" << t.params.psi << " kappa=" << t.params.kappa
           << " alpha=" << t.params.alpha << " phi_m=" << t.params.phi_m << " phi_d=" << t.params.phi_d
           << " loss=" << t.loss;
    return os.str();
}

} // namespace

CalibratedParams calibrate_cohort(const MomentVector& targets, const ModelParams& init,
                                  const CalibrationSettings& settings, const SimulatedMoments& simulator)
{
    settings.validate();
    for (double t : targets.beta)
        if (!std::isfinite(t)) throw Error("calibrate_cohort: non-finite target moment");
    init.validate();
    for (std::size_t j = 0; j < 5; ++j) {
        const double v = get(init, kCalibratedParameters[j]);
        if (v < settings.bounds[j].lower || v > settings.bounds[j].upper)
            throw Error("calibrate_cohort: initial " + parameter_name(kCalibratedParameters[j]) + " outside bounds");
    }

    std::vector<TraceEntry> trace;
    Vec5 sqrt_w;
    for (std::size_t i = 0; i < 5; ++i) sqrt_w(static_cast<Eigen::Index>(i)) = std::sqrt(settings.weights[i]);

    struct Eval {
        Vec5 residual;
        double loss;
        MomentVector moments;
    };
    auto evaluate = [&](const Vec5& theta) -> Eval {
        const MomentVector m = simulator(from_vec(init, theta));
        Eval e;
        e.moments = m;
        e.residual = (m.vec() - targets.vec()).cwiseProduct(sqrt_w);
        e.loss = e.residual.squaredNorm();
        if (!std::isfinite(e.loss))
            throw CalibrationError("calibrate_cohort: non-finite loss; trace:" + dump_trace(trace), trace);
        return e;
    };

    Vec5 lower, upper;
    for (std::size_t j = 0; j < 5; ++j) {
        lower(static_cast<Eigen::Index>(j)) = settings.bounds[j].lower;
        upper(static_cast<Eigen::Index>(j)) = settings.bounds[j].upper;
    }

    Vec5 theta = to_vec(init);
    Eval current = evaluate(theta);
    trace.push_back({0, init, current.loss});

    CalibratedParams out;
    double lambda = 1e-3;
    double mark = current.loss;
    int stall = 0;
    int iter = 0;
    while (current.loss >= settings.tolerance && iter < settings.max_iters) {
        ++iter;
        // Central differences, one-sided at a box face.
        Mat5 J;
        for (Eigen::Index j = 0; j < 5; ++j) {
            Vec5 plus = theta, minus = theta;
            plus(j) = std::min(upper(j), theta(j) + settings.fd_step);
            minus(j) = std::max(lower(j), theta(j) - settings.fd_step);
            J.col(j) = (evaluate(plus).residual - evaluate(minus).residual) / (plus(j) - minus(j));
        }
        const Vec5 grad = J.transpose() * current.residual;

        bool accepted = false;
        Vec5 direction;
        if (settings.plain_gradient) {
            direction = -grad;
        } else {
            Mat5 A = J.transpose() * J;
            const Vec5 diag = A.diagonal().cwiseMax(1e-12);
            A.diagonal() += lambda * diag;
            direction = -A.ldlt().solve(grad);
        }
        double step = settings.initial_step;
        for (int k = 0; k <= settings.max_backtracks; ++k, step *= 0.5) {
            const Vec5 candidate = (theta + step * direction).cwiseMax(lower).cwiseMin(upper);
            if (candidate == theta) break;
            const Eval trial = evaluate(candidate);
            if (trial.loss < current.loss) {
                theta = candidate;
                current = trial;
                accepted = true;
                break;
            }
        }
        lambda = accepted ? std::max(lambda / 3.0, 1e-9) : std::min(lambda * 10.0, 1e9);
        trace.push_back({iter, from_vec(init, theta), current.loss});

        if (current.loss < mark * (1.0 - settings.min_improvement)) {
            mark = current.loss;
            stall = 0;
        } else if (++stall >= settings.patience) {
            break;
        }
    }

    out.params = from_vec(init, theta);
    out.moments = current.moments;
    out.fit_distance = current.loss;
    out.iterations = iter;
    out.converged = current.loss < settings.tolerance;
    out.trace = std::move(trace);
    return out;
}

CalibratedParams calibrate_cohort(const MomentVector& targets, const ModelParams& init,
                                  const CalibrationSettings& settings, const RoleMaps& maps)
{
    settings.validate();
    return calibrate_cohort(targets, init, settings, SimulatedMoments(maps, settings.n_sim, settings.seed));
}

std::vector<CohortCalibration> calibrate_sequence(const std::vector<CohortTarget>& cohorts,
                                                  const CalibrationSettings& settings, std::optional<ModelParams> init)
{
    settings.validate();
    for (std::size_t i = 1; i < cohorts.size(); ++i)
        if (!(cohorts[i].cohort > cohorts[i - 1].cohort)) throw Error("calibrate_sequence: cohorts must be increasing");

    const BaseDraws draws = draw_base(settings.n_sim, settings.seed);
    ModelParams start = init ? *init : random_init(settings.seed, settings);
    std::vector<CohortCalibration> out;
    for (const auto& c : cohorts) {
        CohortCalibration cc;
        cc.cohort = c.cohort;
        try {
            const SimulatedMoments sim(c.maps, draws);
            cc.result = calibrate_cohort(c.targets, start, settings, sim);
            start = cc.result->params;
        } catch (const std::exception& e) {
            cc.error = e.what();
        }
        cc.params = start;
        out.push_back(std::move(cc));
    }
    return out;
}

TsvTable targets_tsv(const std::vector<std::pair<int, MomentVector>>& targets)
{
    TsvTable t;
    t.columns = {"cohort"};
    for (const char* n : kMomentNames) t.columns.emplace_back(n);
    for (const auto& [cohort, m] : targets) {
        std::vector<std::string> row{std::to_string(cohort)};
        for (double b : m.beta) row.push_back(format_number(b));
        t.rows.push_back(std::move(row));
    }
    return t;
}

std::vector<std::pair<int, MomentVector>> targets_from_tsv(const TsvTable& table)
{
    const auto cc = table.column("cohort");
    std::array<std::size_t, 5> cols{};
    for (std::size_t i = 0; i < 5; ++i) cols[i] = table.column(kMomentNames[i]);
    std::vector<std::pair<int, MomentVector>> out;
    for (const auto& r : table.rows) {
        MomentVector m;
        for (std::size_t i = 0; i < 5; ++i) m[i] = parse_double(r[cols[i]], kMomentNames[i]);
        out.emplace_back(static_cast<int>(parse_integer(r[cc], "cohort")), m);
    }
    return out;
}

std::string calibration_tsv(const std::vector<CohortCalibration>& chain, const CalibrationSettings& settings)
{
    std::string out;
    out += "# n_sim=" + std::to_string(settings.n_sim) + "\n";
    out += "# seed=" + std::to_string(settings.seed) + "\n";
    out += "# tolerance=" + format_number(settings.tolerance) + "\n";
    out += "# fd_step=" + format_number(settings.fd_step) + "\n";
    out += "# patience=" + std::to_string(settings.patience) + "\n";
    out += "# max_iters=" + std::to_string(settings.max_iters) + "\n";
    out += std::string("# direction=") + (settings.plain_gradient ? "gradient" : "damped_gauss_newton") + "\n";
    out += "# weights=";
    for (std::size_t i = 0; i < 5; ++i) out += (i ? "," : "") + format_number(settings.weights[i]);
    out += "\n";

    TsvTable t;
    t.columns = {"cohort", "psi", "kappa", "alpha", "phi_m", "phi_d", "fit_distance", "iterations", "converged", "status"};
    for (const auto& c : chain) {
        const auto& p = c.params;
        std::vector<std::string> row{std::to_string(c.cohort), format_number(p.psi),   format_number(p.kappa),
                                     format_number(p.alpha),   format_number(p.phi_m), format_number(p.phi_d)};
        if (c.result) {
            row.push_back(format_number(c.result->fit_distance));
            row.push_back(std::to_string(c.result->iterations));
            row.push_back(c.result->converged ? "1" : "0");
            row.push_back("ok");
        } else {
            row.insert(row.end(), {"NA", "0", "0", "failed"});
        }
        t.rows.push_back(std::move(row));
    }
    return out + t.to_string();
}

std::vector<std::pair<int, ModelParams>> params_from_tsv(const TsvTable& table)
{
    const auto cc = table.column("cohort");
    std::vector<std::pair<int, ModelParams>> out;
    for (const auto& r : table.rows) {
        ModelParams p;
        for (Parameter q : kCalibratedParameters)
            set(p, q, parse_double(r[table.column(parameter_name(q))], parameter_name(q)));
        p.validate();
        out.emplace_back(static_cast<int>(parse_integer(r[cc], "cohort")), p);
    }
    return out;
}

} // namespace mobility
