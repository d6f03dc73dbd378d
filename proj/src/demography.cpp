#include "popcast/demography.hpp"

#include "popcast/csv.hpp"
#include "popcast/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace popcast {

namespace {
constexpr double kSqrt2Pi = 2.506628274631000502415765284811;
}

void FertilityWindow::validate() const {
    if (!(sigma > 0.0)) {
        throw config_error("fertility window requires sigma > 0");
    }
    if (!(a_lo < a_hi)) {
        throw config_error("fertility window requires a_lo < a_hi");
    }
}

void PolicyEvent::validate() const {
    if (!(rate > 0.0)) {
        throw config_error("policy event requires a positive kernel rate");
    }
}

AgeWeight AgeWeight::policy_target_profile(const FertilityWindow& window) {
    AgeWeight w;
    w.knot_ages = {window.a_lo, 20.0, 30.0, window.a_hi};
    w.knot_values = {0.0, 1.0, 1.0, 0.0};
    return w;
}

double AgeWeight::operator()(double age) const {
    if (knot_ages.empty() || age < knot_ages.front() || age > knot_ages.back()) {
        return 0.0;
    }
    auto it = std::upper_bound(knot_ages.begin(), knot_ages.end(), age);
    if (it == knot_ages.begin()) {
        return knot_values.front();
    }
    if (it == knot_ages.end()) {
        return knot_values.back();
    }
    const std::size_t hi = static_cast<std::size_t>(it - knot_ages.begin());
    const std::size_t lo = hi - 1;
    const double w = (age - knot_ages[lo]) / (knot_ages[hi] - knot_ages[lo]);
    return knot_values[lo] + w * (knot_values[hi] - knot_values[lo]);
}

void AgeWeight::validate() const {
    if (knot_ages.size() != knot_values.size() || knot_ages.size() < 2) {
        throw config_error("age weight needs >= 2 matching knots");
    }
    for (std::size_t i = 1; i < knot_ages.size(); ++i) {
        if (!(knot_ages[i] > knot_ages[i - 1])) {
            throw config_error("age weight knots must be strictly increasing");
        }
    }
    for (double v : knot_values) {
        if (v < 0.0) {
            throw config_error("age weight values must be nonnegative");
        }
    }
}

double FertilityModel::beta(double t) const {
    if (beta_years.empty()) {
        return 0.0;
    }
    if (t <= beta_years.front()) {
        return beta_values.front();
    }
    if (t >= beta_years.back()) {
        return beta_values.back();
    }
    auto it = std::upper_bound(beta_years.begin(), beta_years.end(), t);
    const std::size_t hi = static_cast<std::size_t>(it - beta_years.begin());
    const std::size_t lo = hi - 1;
    const double w = (t - beta_years[lo]) / (beta_years[hi] - beta_years[lo]);
    return beta_values[lo] + w * (beta_values[hi] - beta_values[lo]);
}

void FertilityModel::validate() const {
    window.validate();
    theta.validate();
    if (beta_years.size() != beta_values.size()) {
        throw config_error("beta path years/values length mismatch");
    }
    for (double b : beta_values) {
        if (b < 0.0) {
            throw config_error("beta path must be nonnegative");
        }
    }
    for (const auto& p : policies) {
        p.validate();
    }
}

FertilityModel FertilityModel::constant_beta(double beta, FertilityWindow window) {
    FertilityModel m;
    m.window = window;
    m.theta = AgeWeight::policy_target_profile(window);
    m.beta_years = {0.0};
    m.beta_values = {beta};
    return m;
}

void MortalityModel::validate() const {
    if (c_infant < 0.0 || c_base < 0.0 || c_old < 0.0) {
        throw config_error("mortality coefficients must be nonnegative");
    }
    if (!(drift < 1.0)) {
        throw config_error("mortality drift must be below 1");
    }
    if (c_infant + c_base + c_old <= 0.0) {
        throw config_error("mortality must be positive somewhere");
    }
}

MortalityModel MortalityModel::india_2024() {
    MortalityModel m;
    m.c_infant = 0.02665;
    m.d_infant = 1.2;
    m.c_base = 0.0013;
    m.c_old = 5.0e-5;
    m.d_old = 0.095;
    m.drift = 0.01;
    m.t_ref = 2024.0;
    return m;
}

MortalityModel MortalityModel::constant(double mu0) {
    MortalityModel m;
    m.c_base = mu0;
    m.d_infant = 1.0;
    m.d_old = 0.0;
    return m;
}

double fertility_window_value(double age, const FertilityWindow& window) {
    if (age < window.a_lo || age > window.a_hi) {
        return 0.0;
    }
    const double z = (age - window.mu) / window.sigma;
    return std::exp(-0.5 * z * z) / (window.sigma * kSqrt2Pi);
}

double policy_signal(double t, std::span<const PolicyEvent> policies) {
    double signal = 0.0;
    for (const auto& p : policies) {
        const double x = t - p.year;
        switch (p.kernel) {
        case PolicyEvent::Kernel::Logistic:
            signal += p.strength / (1.0 + std::exp(-p.rate * x));
            break;
        case PolicyEvent::Kernel::ExpDecay:
            if (x >= 0.0) {
                signal += p.strength * std::exp(-p.rate * x);
            }
            break;
        }
    }
    return signal;
}

double fertility(double age, double t, const FertilityModel& model) {
    const double baseline = model.beta(t) * fertility_window_value(age, model.window);
    const double perturbation =
        model.policies.empty() ? 0.0 : model.theta(age) * policy_signal(t, model.policies);
    return std::max(0.0, baseline + perturbation);
}

std::vector<double> fertile_quadrature_ages(const AgeTimeGrid& grid, const FertilityWindow& window) {
    std::vector<double> nodes;
    const std::size_t n = grid.n_ages();
    for (std::size_t i = 0; i < n; ++i) {
        const double a = grid.age(i);
        if (a >= window.a_lo && a <= window.a_hi) {
            nodes.push_back(a);
        }
    }
    if (nodes.empty() || nodes.front() > window.a_lo) {
        if (window.a_lo >= grid.age_min && window.a_lo <= grid.age_max) {
            nodes.insert(nodes.begin(), window.a_lo);
        }
    }
    if (nodes.empty() || nodes.back() < window.a_hi) {
        if (window.a_hi >= grid.age_min && window.a_hi <= grid.age_max) {
            nodes.push_back(window.a_hi);
        }
    }
    if (nodes.size() < 2) {
        throw config_error("fertile window does not overlap the age grid");
    }
    return nodes;
}

double trapezoid(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2) {
        throw eval_error("trapezoid needs >= 2 matching nodes");
    }
    double acc = 0.0;
    for (std::size_t i = 1; i < xs.size(); ++i) {
        acc += 0.5 * (xs[i] - xs[i - 1]) * (ys[i] + ys[i - 1]);
    }
    return acc;
}

double total_fertility_rate(double t, const FertilityModel& model, const AgeTimeGrid& grid) {
    const auto nodes = fertile_quadrature_ages(grid, model.window);
    std::vector<double> f(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        f[i] = fertility(nodes[i], t, model);
    }
    return trapezoid(nodes, f);
}

namespace {

// TFR of the zero-policy model is beta * window quadrature mass.
double window_mass(const FertilityModel& model, const AgeTimeGrid& grid) {
    const auto nodes = fertile_quadrature_ages(grid, model.window);
    std::vector<double> g(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        g[i] = fertility_window_value(nodes[i], model.window);
    }
    return trapezoid(nodes, g);
}

} // namespace

FertilityModel calibrate_beta(std::span<const double> target_tfr, const FertilityModel& model,
                              const AgeTimeGrid& grid) {
    const std::size_t n_years = grid.n_times();
    if (target_tfr.size() != n_years) {
        throw config_error("target TFR path must supply one value per grid year");
    }
    const double mass = window_mass(model, grid);
    if (!(mass > 0.0)) {
        throw config_error("calibration failed: fertility window has zero quadrature mass");
    }

    FertilityModel out = model;
    out.beta_years.resize(n_years);
    out.beta_values.resize(n_years);
    for (std::size_t k = 0; k < n_years; ++k) {
        const double target = target_tfr[k];
        if (target < 0.0) {
            throw config_error("target TFR must be nonnegative");
        }
        out.beta_years[k] = grid.time(k);
        if (target == 0.0) {
            out.beta_values[k] = 0.0;
            continue;
        }
        // Bisection of beta -> beta * mass against the target. The map is
        // linear so this converges to a tight bracket quickly.
        double lo = 0.0;
        double hi = std::max(1.0, 4.0 * target / mass);
        while (hi * mass < target) {
            hi *= 2.0;
        }
        for (int iter = 0; iter < 200; ++iter) {
            const double mid = 0.5 * (lo + hi);
            if (mid * mass < target) {
                lo = mid;
            } else {
                hi = mid;
            }
            if (hi - lo <= 1e-15 * std::max(1.0, hi)) {
                break;
            }
        }
        out.beta_values[k] = 0.5 * (lo + hi);
    }
    return out;
}

double mortality_rate(double age, double t, const MortalityModel& model) {
    const double shape = model.c_infant * std::exp(-model.d_infant * age) + model.c_base +
                         model.c_old * std::exp(model.d_old * age);
    const double improvement = std::pow(1.0 - model.drift, t - model.t_ref);
    return shape * improvement;
}

double birth_inflow(std::span<const double> n_col, double t, const FertilityModel& model,
                    const AgeTimeGrid& grid, double female_fraction) {
    if (n_col.size() != grid.n_ages()) {
        throw data_error("age slice length does not match grid");
    }
    for (double v : n_col) {
        if (v < 0.0) {
            throw data_error("birth_inflow: negative population density");
        }
    }
    const auto nodes = fertile_quadrature_ages(grid, model.window);
    std::vector<double> integrand(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const double a = nodes[i];
        // density at a: nodes are grid ages except possibly the window bounds
        const double pos = (a - grid.age_min) / grid.age_step;
        const std::size_t lo = static_cast<std::size_t>(
            std::clamp(std::floor(pos), 0.0, static_cast<double>(n_col.size() - 2)));
        const double w = pos - static_cast<double>(lo);
        const double density = n_col[lo] + w * (n_col[lo + 1] - n_col[lo]);
        integrand[i] = fertility(a, t, model) * density;
    }
    return female_fraction * trapezoid(nodes, integrand);
}

void RateTable::validate() const {
    if (ages.size() < 2 || years.size() < 1) {
        throw data_error("rate table needs >= 2 ages and >= 1 year");
    }
    if (rates.size() != ages.size() * years.size()) {
        throw data_error("rate table dimensions mismatch");
    }
}

double RateTable::at(double age, double year) const {
    auto bracket = [](const std::vector<double>& xs, double x, std::size_t& lo, double& w) {
        if (x <= xs.front()) {
            lo = 0;
            w = 0.0;
            return;
        }
        if (x >= xs.back()) {
            lo = xs.size() - 2;
            w = 1.0;
            return;
        }
        auto it = std::upper_bound(xs.begin(), xs.end(), x);
        lo = static_cast<std::size_t>(it - xs.begin()) - 1;
        w = (x - xs[lo]) / (xs[lo + 1] - xs[lo]);
    };
    std::size_t ai = 0;
    std::size_t yi = 0;
    double aw = 0.0;
    double yw = 0.0;
    bracket(ages, age, ai, aw);
    if (years.size() == 1) {
        const double r0 = rates[ai];
        const double r1 = rates[ai + 1];
        return r0 + aw * (r1 - r0);
    }
    bracket(years, year, yi, yw);
    const std::size_t na = ages.size();
    const double r00 = rates[yi * na + ai];
    const double r01 = rates[yi * na + ai + 1];
    const double r10 = rates[(yi + 1) * na + ai];
    const double r11 = rates[(yi + 1) * na + ai + 1];
    const double r0 = r00 + aw * (r01 - r00);
    const double r1 = r10 + aw * (r11 - r10);
    return r0 + yw * (r1 - r0);
}

RateTable load_rate_table_csv(const std::filesystem::path& path) {
    const auto table = csv::read_file(path);
    const std::size_t age_col = table.column("age");
    const std::size_t year_col = table.column("year");
    const std::size_t rate_col = table.column("rate");

    std::map<double, std::map<double, double>> by_year;
    for (const auto& row : table.rows) {
        const double a = csv::parse_double(row[age_col]);
        const double y = csv::parse_double(row[year_col]);
        const double r = csv::parse_double(row[rate_col]);
        by_year[y][a] = r;
    }
    if (by_year.empty()) {
        throw data_error("rate table CSV has no rows: " + path.string());
    }

    RateTable out;
    const auto& first_ages = by_year.begin()->second;
    for (const auto& [a, _] : first_ages) {
        out.ages.push_back(a);
    }
    for (const auto& [y, row] : by_year) {
        if (row.size() != out.ages.size()) {
            throw data_error("rate table CSV is not rectangular: " + path.string());
        }
        out.years.push_back(y);
        for (const auto& [a, r] : row) {
            out.rates.push_back(r);
        }
    }
    out.validate();
    return out;
}

void save_rate_table_csv(const std::filesystem::path& path, const RateTable& table) {
    table.validate();
    csv::Writer w(path);
    w.row({"age", "year", "rate"});
    for (std::size_t yi = 0; yi < table.years.size(); ++yi) {
        for (std::size_t ai = 0; ai < table.ages.size(); ++ai) {
            w.row({csv::format_double(table.ages[ai]), csv::format_double(table.years[yi]),
                   csv::format_double(table.rates[yi * table.ages.size() + ai])});
        }
    }
    w.flush();
}

RateTable tabulate_fertility(const FertilityModel& model, const AgeTimeGrid& grid) {
    RateTable out;
    out.ages = grid.ages();
    out.years = grid.times();
    out.rates.reserve(out.ages.size() * out.years.size());
    for (double y : out.years) {
        for (double a : out.ages) {
            out.rates.push_back(fertility(a, y, model));
        }
    }
    return out;
}

RateTable tabulate_mortality(const MortalityModel& model, const AgeTimeGrid& grid) {
    RateTable out;
    out.ages = grid.ages();
    out.years = grid.times();
    out.rates.reserve(out.ages.size() * out.years.size());
    for (double y : out.years) {
        for (double a : out.ages) {
            out.rates.push_back(mortality_rate(a, y, model));
        }
    }
    return out;
}

} // namespace popcast
