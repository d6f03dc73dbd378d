#pragma once

#include "popcast/demography.hpp"
#include "popcast/grid.hpp"

#include <functional>
#include <span>
#include <vector>

namespace popcast {

/// Rate fields consumed by the finite-difference solver.
/// `source` is the interior inflow term of the transport-reaction equation
/// (zero in the purely mechanistic run; carries learned refinements in hybrid
/// reruns). `boundary_inflow` is an optional exogenous newborn inflow in
/// millions/year added to the fertility-driven boundary births.
struct VitalRateField {
    std::function<double(double age, double t)> mortality;
    std::function<double(double age, double t)> source;
    std::function<double(double t)> boundary_inflow;

    static VitalRateField from_model(const MortalityModel& model, double migration_per_capita = 0.0);
    static VitalRateField from_table(const RateTable& mortality_table, double migration_per_capita = 0.0);

    double mu(double age, double t) const;
    double src(double age, double t) const;
    double inflow(double t) const;
};

enum class Scheme {
    Upwind,          // first-order donor upwind, explicit Euler reaction
    Characteristics, // lattice-aligned shift with exponential decay (needs dt == age_step)
};

struct SolverConfig {
    AgeTimeGrid grid;
    Scheme scheme = Scheme::Upwind;
    int substeps = 4; // internal dt = t_step / substeps

    double dt() const { return grid.t_step / static_cast<double>(substeps); }
    /// Throws config_error on bad grid, substeps < 1 or CFL violation (dt > age_step).
    void validate() const;
};

/// Exact per-substep mass bookkeeping of the scheme, all in millions:
///   delta_total == births - deaths - outflow + source + clamped
/// holds to rounding error by construction.
struct StepBalance {
    double t = 0.0;            // time at the start of the substep
    double dt = 0.0;
    double births = 0.0;       // net boundary-cell injection
    double eq_births = 0.0;    // fertility-driven inflow rate * dt (reporting)
    double deaths = 0.0;
    double outflow = 0.0;      // advective loss past age_max
    double source = 0.0;
    double clamped = 0.0;      // mass restored by the nonnegativity clamp
    double delta_total = 0.0;

    double imbalance() const {
        return delta_total - (births - deaths - outflow + source + clamped);
    }
};

struct StepResult {
    std::vector<double> density;
    StepBalance balance;
};

/// Advances one explicit substep. Interior cells follow
///   n_i <- n_i - (dt/da)(n_i - n_{i-1}) - dt mu_i n_i + dt B_i
/// and the newborn boundary cell is set to births/da (births from the
/// fertility integral over the pre-step column plus any exogenous inflow).
StepResult step_upwind(std::span<const double> n_col, double t, double dt,
                       const VitalRateField& rates, const FertilityModel& fert,
                       const AgeTimeGrid& grid, double female_fraction = kFemaleFraction);

struct SolveResult {
    PopulationGrid grid;
    std::vector<StepBalance> balances;
};

/// Runs the full horizon from the initial age slice at t_min.
SolveResult solve(std::span<const double> initial, const SolverConfig& cfg,
                  const VitalRateField& rates, const FertilityModel& fert,
                  double female_fraction = kFemaleFraction);

/// Analytic characteristics solution of the constant-mortality, birth-free
/// problem: n(a,t) = n0(a - t) e^(-mu0 t) for a >= t, else 0. Test oracle.
double closed_form_decay(const std::function<double(double)>& initial_fn, double mu0, double age,
                         double t_elapsed);

struct PyramidBand {
    double band_lo = 0.0;
    double band_hi = 0.0;
    double male = 0.0;   // millions
    double female = 0.0; // millions
};

/// Buckets an age slice into bands of `bucket` years ([lo, lo+bucket) on node
/// ages; the top node falls into a final band) and splits each band by the
/// fixed female fraction. Band masses sum to the slice total exactly.
std::vector<PyramidBand> population_pyramid(std::span<const double> n_col, const AgeTimeGrid& grid,
                                            double bucket, double female_fraction = kFemaleFraction);

struct BandShares {
    double youth = 0.0;   // ages [0, 15)
    double working = 0.0; // ages [15, 65)
    double elderly = 0.0; // ages 65+
};

/// Population shares of the three standard bands (fractions summing to 1).
BandShares band_shares(std::span<const double> n_col, const AgeTimeGrid& grid);

/// (pop 0-14 + pop 65+) / pop 15-64. Throws eval_error on an empty working band.
double dependency_ratio(std::span<const double> n_col, const AgeTimeGrid& grid);

/// pop 65+ / pop 15-64, the ageing-focused companion measure.
double old_age_dependency_ratio(std::span<const double> n_col, const AgeTimeGrid& grid);

/// CSV export, header `age,year,density`, one row per lattice point.
void export_population_grid_csv(const std::filesystem::path& path, const PopulationGrid& grid);
PopulationGrid import_population_grid_csv(const std::filesystem::path& path);

/// CSV export, header `band_lo,band_hi,male,female`.
void export_pyramid_csv(const std::filesystem::path& path, std::span<const PyramidBand> bands);
std::vector<PyramidBand> import_pyramid_csv(const std::filesystem::path& path);

} // namespace popcast
