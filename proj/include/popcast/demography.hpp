#pragma once

#include "popcast/grid.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace popcast {

/// Share of births that are female in the one-sex model.
inline constexpr double kFemaleFraction = 0.48;

/// Gaussian reproductive-age window: peak age mu, dispersion sigma,
/// hard support [a_lo, a_hi].
struct FertilityWindow {
    double mu = 28.0;
    double sigma = 6.0;
    double a_lo = 15.0;
    double a_hi = 49.0;

    void validate() const;
};

/// One fertility intervention: a signed strength applied through a temporal
/// adoption kernel anchored at the introduction year.
struct PolicyEvent {
    enum class Kernel { Logistic, ExpDecay };

    double year = 2024.0;       // introduction year
    double strength = 0.0;      // signed, positive promotes fertility
    Kernel kernel = Kernel::Logistic;
    double rate = 0.5;          // logistic adoption rate, or exponential decay rate

    void validate() const;
};

/// Piecewise-linear age weight theta(a); zero outside its knot range.
struct AgeWeight {
    std::vector<double> knot_ages;
    std::vector<double> knot_values;

    /// 0 at a_lo, plateau of 1 over [20, 30], back to 0 at a_hi.
    static AgeWeight policy_target_profile(const FertilityWindow& window);

    double operator()(double age) const;
    void validate() const;
};

/// Policy-aware fertility: f(a,t) = max(0, beta(t) g(a) + theta(a) P(t)).
/// beta is tabulated per year and linearly interpolated between tabulated years.
struct FertilityModel {
    std::vector<double> beta_years;
    std::vector<double> beta_values;
    FertilityWindow window;
    AgeWeight theta;
    std::vector<PolicyEvent> policies;

    double beta(double t) const;
    void validate() const;

    static FertilityModel constant_beta(double beta, FertilityWindow window = {});
};

/// Parametric baseline mortality: infant exponential + constant + old-age
/// exponential, uniformly improved by a per-year drift factor:
///   mu(a,t) = [c_infant e^(-d_infant a) + c_base + c_old e^(d_old a)] (1-drift)^(t-t_ref)
struct MortalityModel {
    double c_infant = 0.0;
    double d_infant = 1.0;
    double c_base = 0.0;
    double c_old = 0.0;
    double d_old = 0.0;
    double drift = 0.0;
    double t_ref = 2024.0;

    void validate() const;

    /// Constants fitted against a 2024 abridged life table for India
    /// (infant rate ~0.028/yr, e0 ~ 70yr, 1%/yr improvement).
    static MortalityModel india_2024();

    /// Constant mortality, handy for synthetic problems.
    static MortalityModel constant(double mu0);
};

/// Gaussian window density; zero outside [a_lo, a_hi].
double fertility_window_value(double age, const FertilityWindow& window);

/// P(t) = sum_k alpha_k h_k(t - t_k).
double policy_signal(double t, std::span<const PolicyEvent> policies);

/// f(a,t), clamped at zero.
double fertility(double age, double t, const FertilityModel& model);

/// Age nodes of `grid` restricted to the fertile window (window bounds are
/// inserted when they fall between nodes). These are the quadrature nodes for
/// every fertility integral in the project.
std::vector<double> fertile_quadrature_ages(const AgeTimeGrid& grid, const FertilityWindow& window);

/// Trapezoid rule over arbitrary (sorted) nodes.
double trapezoid(std::span<const double> xs, std::span<const double> ys);

/// TFR(t): trapezoid quadrature of f(a,t) over the fertile window at grid resolution.
double total_fertility_rate(double t, const FertilityModel& model, const AgeTimeGrid& grid);

/// Returns a copy of `model` whose beta path hits `target_tfr` (one value per
/// grid year) to ~1e-12 relative, calibrated against the zero-policy TFR by
/// bisection. theta and policies are preserved on the returned model.
FertilityModel calibrate_beta(std::span<const double> target_tfr, const FertilityModel& model,
                              const AgeTimeGrid& grid);

double mortality_rate(double age, double t, const MortalityModel& model);

/// Newborn inflow in millions/year: female_fraction * integral of f(a,t) n(a,t) da
/// over the fertile window. n_col must be a full age slice on `grid`.
/// Throws data_error on negative densities.
double birth_inflow(std::span<const double> n_col, double t, const FertilityModel& model,
                    const AgeTimeGrid& grid, double female_fraction = kFemaleFraction);

/// Rectangular age x year rate table with bilinear interpolation, used for
/// CSV-supplied fertility/mortality schedules.
struct RateTable {
    std::vector<double> ages;
    std::vector<double> years;
    std::vector<double> rates; // row-major [year][age]

    double at(double age, double year) const;
    void validate() const;
};

/// CSV schema: header `age,year,rate`; one row per (age, year) pair.
RateTable load_rate_table_csv(const std::filesystem::path& path);
void save_rate_table_csv(const std::filesystem::path& path, const RateTable& table);

RateTable tabulate_fertility(const FertilityModel& model, const AgeTimeGrid& grid);
RateTable tabulate_mortality(const MortalityModel& model, const AgeTimeGrid& grid);

} // namespace popcast
