#include "popcast/solver.hpp"

#include "popcast/csv.hpp"
#include "popcast/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace popcast {

VitalRateField VitalRateField::from_model(const MortalityModel& model, double migration_per_capita) {
    model.validate();
    VitalRateField f;
    f.mortality = [model, migration_per_capita](double a, double t) {
        // per-capita net migration folds into the reaction coefficient
        return mortality_rate(a, t, model) - migration_per_capita;
    };
    return f;
}

VitalRateField VitalRateField::from_table(const RateTable& mortality_table, double migration_per_capita) {
    mortality_table.validate();
    VitalRateField f;
    f.mortality = [mortality_table, migration_per_capita](double a, double t) {
        return mortality_table.at(a, t) - migration_per_capita;
    };
    return f;
}

double VitalRateField::mu(double age, double t) const {
    return mortality ? mortality(age, t) : 0.0;
}

double VitalRateField::src(double age, double t) const {
    return source ? source(age, t) : 0.0;
}

double VitalRateField::inflow(double t) const {
    return boundary_inflow ? boundary_inflow(t) : 0.0;
}

void SolverConfig::validate() const {
    grid.validate();
    if (substeps < 1) {
        throw config_error("solver requires substeps >= 1");
    }
    if (dt() > grid.age_step * (1.0 + 1e-12)) {
        throw config_error("CFL violation: internal dt exceeds age_step");
    }
    if (scheme == Scheme::Characteristics &&
        std::abs(dt() - grid.age_step) > 1e-12 * grid.age_step) {
        throw config_error("characteristics scheme needs dt == age_step");
    }
}

StepResult step_upwind(std::span<const double> n_col, double t, double dt,
                       const VitalRateField& rates, const FertilityModel& fert,
                       const AgeTimeGrid& grid, double female_fraction) {
    const std::size_t n = grid.n_ages();
    if (n_col.size() != n) {
        throw data_error("age slice length does not match grid");
    }
    const double da = grid.age_step;
    if (dt > da * (1.0 + 1e-12)) {
        throw config_error("CFL violation: dt exceeds age_step");
    }
    const double c = dt / da;

    StepResult out;
    out.density.resize(n);
    StepBalance& bal = out.balance;
    bal.t = t;
    bal.dt = dt;

    double deaths = 0.0;
    double source = 0.0;
    double clamped = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
        const double a = grid.age(i);
        const double mu_i = rates.mu(a, t);
        const double b_i = rates.src(a, t);
        const double raw =
            n_col[i] - c * (n_col[i] - n_col[i - 1]) - dt * mu_i * n_col[i] + dt * b_i;
        const double v = std::max(0.0, raw);
        out.density[i] = v;
        deaths += dt * mu_i * n_col[i] * da;
        source += dt * b_i * da;
        clamped += (v - raw) * da;
    }

    const double fert_inflow = birth_inflow(n_col, t, fert, grid, female_fraction);
    const double births_rate = fert_inflow + rates.inflow(t);
    out.density[0] = births_rate / da;

    bal.eq_births = fert_inflow * dt;
    bal.deaths = deaths;
    bal.source = source;
    bal.clamped = clamped;
    bal.outflow = dt * n_col[n - 1];
    // boundary-cell net exchange: the Dirichlet reset plus the flux it sheds
    // into the interior
    bal.births = (out.density[0] - n_col[0]) * da + dt * n_col[0];

    double total_new = 0.0;
    double total_old = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        total_new += out.density[i];
        total_old += n_col[i];
    }
    bal.delta_total = (total_new - total_old) * da;
    return out;
}

namespace {

StepResult step_characteristics(std::span<const double> n_col, double t, double dt,
                                const VitalRateField& rates, const FertilityModel& fert,
                                const AgeTimeGrid& grid, double female_fraction) {
    const std::size_t n = grid.n_ages();
    const double da = grid.age_step;

    StepResult out;
    out.density.resize(n);
    StepBalance& bal = out.balance;
    bal.t = t;
    bal.dt = dt;

    double deaths = 0.0;
    double source = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
        const double a = grid.age(i);
        const double mu_mid = 0.5 * (rates.mu(a - da, t) + rates.mu(a, t));
        const double decay = std::exp(-mu_mid * dt);
        const double b_i = rates.src(a, t);
        out.density[i] = n_col[i - 1] * decay + dt * b_i;
        deaths += n_col[i - 1] * (1.0 - decay) * da;
        source += dt * b_i * da;
    }

    const double fert_inflow = birth_inflow(n_col, t, fert, grid, female_fraction);
    out.density[0] = (fert_inflow + rates.inflow(t)) / da;

    bal.eq_births = fert_inflow * dt;
    bal.deaths = deaths;
    bal.source = source;
    bal.outflow = n_col[n - 1] * da;
    bal.births = out.density[0] * da;

    double total_new = 0.0;
    double total_old = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        total_new += out.density[i];
        total_old += n_col[i];
    }
    bal.delta_total = (total_new - total_old) * da;
    return out;
}

} // namespace

SolveResult solve(std::span<const double> initial, const SolverConfig& cfg,
                  const VitalRateField& rates, const FertilityModel& fert,
                  double female_fraction) {
    cfg.validate();
    const AgeTimeGrid& grid = cfg.grid;
    if (initial.size() != grid.n_ages()) {
        throw data_error("initial slice length does not match grid");
    }
    for (double v : initial) {
        if (v < 0.0) {
            throw data_error("initial slice has negative density");
        }
    }

    SolveResult result{PopulationGrid(grid), {}};
    result.grid.set_row(0, initial);
    result.balances.reserve((grid.n_times() - 1) * static_cast<std::size_t>(cfg.substeps));

    std::vector<double> state(initial.begin(), initial.end());
    const double dt = cfg.dt();
    for (std::size_t k = 0; k + 1 < grid.n_times(); ++k) {
        for (int s = 0; s < cfg.substeps; ++s) {
            const double t = grid.time(k) + static_cast<double>(s) * dt;
            StepResult step =
                cfg.scheme == Scheme::Upwind
                    ? step_upwind(state, t, dt, rates, fert, grid, female_fraction)
                    : step_characteristics(state, t, dt, rates, fert, grid, female_fraction);
            state = std::move(step.density);
            result.balances.push_back(step.balance);
        }
        result.grid.set_row(k + 1, state);
    }
    return result;
}

double closed_form_decay(const std::function<double(double)>& initial_fn, double mu0, double age,
                         double t_elapsed) {
    if (mu0 < 0.0) {
        throw eval_error("closed_form_decay requires mu0 >= 0");
    }
    if (age < t_elapsed) {
        return 0.0;
    }
    return initial_fn(age - t_elapsed) * std::exp(-mu0 * t_elapsed);
}

std::vector<PyramidBand> population_pyramid(std::span<const double> n_col, const AgeTimeGrid& grid,
                                            double bucket, double female_fraction) {
    if (n_col.size() != grid.n_ages()) {
        throw data_error("age slice length does not match grid");
    }
    if (!(bucket > 0.0)) {
        throw config_error("pyramid bucket must be positive");
    }
    const double span = grid.age_max - grid.age_min;
    const double ratio = span / bucket;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 * std::max(1.0, ratio)) {
        throw config_error("pyramid bucket must divide the age span");
    }
    const std::size_t full_bands = static_cast<std::size_t>(std::round(ratio));
    const std::size_t n_bands = full_bands + 1; // the top node gets its own band

    std::vector<PyramidBand> bands(n_bands);
    for (std::size_t b = 0; b < n_bands; ++b) {
        bands[b].band_lo = grid.age_min + static_cast<double>(b) * bucket;
        bands[b].band_hi = bands[b].band_lo + bucket;
    }
    for (std::size_t i = 0; i < n_col.size(); ++i) {
        const double a = grid.age(i);
        std::size_t b = static_cast<std::size_t>(std::floor((a - grid.age_min) / bucket + 1e-9));
        b = std::min(b, n_bands - 1);
        const double mass = n_col[i] * grid.age_step;
        bands[b].female += female_fraction * mass;
        bands[b].male += (1.0 - female_fraction) * mass;
    }
    return bands;
}

namespace {

struct BandMasses {
    double youth = 0.0;
    double working = 0.0;
    double elderly = 0.0;
};

BandMasses band_masses(std::span<const double> n_col, const AgeTimeGrid& grid) {
    if (n_col.size() != grid.n_ages()) {
        throw data_error("age slice length does not match grid");
    }
    BandMasses m;
    for (std::size_t i = 0; i < n_col.size(); ++i) {
        const double a = grid.age(i);
        const double mass = n_col[i] * grid.age_step;
        if (a < 15.0) {
            m.youth += mass;
        } else if (a < 65.0) {
            m.working += mass;
        } else {
            m.elderly += mass;
        }
    }
    return m;
}

} // namespace

BandShares band_shares(std::span<const double> n_col, const AgeTimeGrid& grid) {
    const BandMasses m = band_masses(n_col, grid);
    const double total = m.youth + m.working + m.elderly;
    if (!(total > 0.0)) {
        throw eval_error("band shares of an empty population");
    }
    return {m.youth / total, m.working / total, m.elderly / total};
}

double dependency_ratio(std::span<const double> n_col, const AgeTimeGrid& grid) {
    const BandMasses m = band_masses(n_col, grid);
    if (!(m.working > 0.0)) {
        throw eval_error("dependency ratio undefined: empty working-age population");
    }
    return (m.youth + m.elderly) / m.working;
}

double old_age_dependency_ratio(std::span<const double> n_col, const AgeTimeGrid& grid) {
    const BandMasses m = band_masses(n_col, grid);
    if (!(m.working > 0.0)) {
        throw eval_error("dependency ratio undefined: empty working-age population");
    }
    return m.elderly / m.working;
}

void export_population_grid_csv(const std::filesystem::path& path, const PopulationGrid& grid) {
    csv::Writer w(path);
    w.row({"age", "year", "density"});
    const auto& g = grid.grid();
    for (std::size_t k = 0; k < g.n_times(); ++k) {
        for (std::size_t i = 0; i < g.n_ages(); ++i) {
            w.row({csv::format_double(g.age(i)), csv::format_double(g.time(k)),
                   csv::format_double(grid.at(k, i))});
        }
    }
    w.flush();
}

PopulationGrid import_population_grid_csv(const std::filesystem::path& path) {
    const auto table = csv::read_file(path);
    const std::size_t age_col = table.column("age");
    const std::size_t year_col = table.column("year");
    const std::size_t density_col = table.column("density");

    std::set<double> ages;
    std::set<double> years;
    std::map<std::pair<double, double>, double> values;
    for (const auto& row : table.rows) {
        const double a = csv::parse_double(row[age_col]);
        const double y = csv::parse_double(row[year_col]);
        ages.insert(a);
        years.insert(y);
        values[{y, a}] = csv::parse_double(row[density_col]);
    }
    if (ages.size() < 2 || years.size() < 2) {
        throw data_error("population grid CSV needs >= 2 ages and >= 2 years");
    }
    if (values.size() != ages.size() * years.size()) {
        throw data_error("population grid CSV is not a full lattice");
    }

    AgeTimeGrid g;
    g.age_min = *ages.begin();
    g.age_max = *ages.rbegin();
    g.age_step = (g.age_max - g.age_min) / static_cast<double>(ages.size() - 1);
    g.t_min = *years.begin();
    g.t_max = *years.rbegin();
    g.t_step = (g.t_max - g.t_min) / static_cast<double>(years.size() - 1);
    g.validate();

    PopulationGrid out(g);
    std::size_t k = 0;
    for (double y : years) {
        std::size_t i = 0;
        for (double a : ages) {
            out.at(k, i) = values.at({y, a});
            ++i;
        }
        ++k;
    }
    return out;
}

void export_pyramid_csv(const std::filesystem::path& path, std::span<const PyramidBand> bands) {
    csv::Writer w(path);
    w.row({"band_lo", "band_hi", "male", "female"});
    for (const auto& b : bands) {
        w.row({csv::format_double(b.band_lo), csv::format_double(b.band_hi),
               csv::format_double(b.male), csv::format_double(b.female)});
    }
    w.flush();
}

std::vector<PyramidBand> import_pyramid_csv(const std::filesystem::path& path) {
    const auto table = csv::read_file(path);
    const std::size_t lo = table.column("band_lo");
    const std::size_t hi = table.column("band_hi");
    const std::size_t male = table.column("male");
    const std::size_t female = table.column("female");
    std::vector<PyramidBand> out;
    out.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        out.push_back({csv::parse_double(row[lo]), csv::parse_double(row[hi]),
                       csv::parse_double(row[male]), csv::parse_double(row[female])});
    }
    return out;
}

} // namespace popcast
