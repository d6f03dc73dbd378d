#pragma once

#include "popcast/autodiff.hpp"
#include "popcast/demography.hpp"
#include "popcast/grid.hpp"
#include "popcast/nn.hpp"
#include "popcast/solver.hpp"

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace popcast {

struct CollocationCounts {
    std::size_t interior = 4096;
    std::size_t ic = 128;
    std::size_t bc = 128;
};

/// Sampled evaluation points for the physics residuals. Regeneration with the
/// same seed reproduces the identical set.
struct CollocationSet {
    std::vector<std::pair<double, double>> interior; // (age, t), uniform in the domain
    std::vector<double> ic_ages;                     // on the age lattice
    std::vector<double> bc_times;                    // uniform in [t_min, t_max]
    std::vector<double> quad_ages;                   // nodes for the boundary integral
    std::uint64_t seed = 0;
};

CollocationSet sample_collocation(const AgeTimeGrid& grid, const CollocationCounts& counts,
                                  std::uint64_t seed);

struct LossWeights {
    double ic = 10.0;
    double bc = 10.0;
    double data = 1.0;
};

struct LossRecord {
    std::size_t epoch = 0;
    double total = 0.0;
    double pde = 0.0;
    double ic = 0.0;
    double bc = 0.0;
    double data = 0.0;
};

using LossHistory = std::vector<LossRecord>;

/// CSV schema: epoch,total,pde,ic,bc,data.
void save_loss_history_csv(const std::filesystem::path& path, const LossHistory& history);

struct TrainConfig {
    std::size_t epochs_adam = 3000;
    std::size_t epochs_lbfgs = 0;
    double lr = 1e-3;
    double lr_decay = 0.5;
    std::size_t lr_decay_interval = 2500;
    CollocationCounts counts;
    std::size_t data_anchors = 256;
    std::size_t resample_interval = 500; // 0 disables resampling
    LossWeights weights;
    std::uint64_t seed = 42;
    std::vector<std::size_t> mlp_hidden = {64, 64, 64, 64};
    // hybrid settings
    bool hybrid = false;
    std::size_t lstm_hidden = 16;
    double eps_mu = 0.05;
    double eps_b = 2.0;
    bool freeze_heads = false; // ablation switch: refinement heads pinned at zero
};

/// Physics bundle a training run needs: domain, vital rates and the observed
/// starting age distribution (raw millions per year of age).
struct TrainingProblem {
    AgeTimeGrid grid;
    FertilityModel fertility;
    std::function<double(double age, double t)> mortality_field;
    std::vector<double> initial;
    double female_fraction = kFemaleFraction;

    static TrainingProblem from_models(const AgeTimeGrid& grid, FertilityModel fert,
                                       const MortalityModel& mortality,
                                       std::vector<double> initial,
                                       double female_fraction = kFemaleFraction,
                                       double migration_per_capita = 0.0);

    /// Densities are trained in units of this scale (max of the initial slice).
    double density_scale() const;
};

/// Maps physical (age, t) onto the network's [0,1]^2 inputs.
struct InputScaling {
    double a0 = 0.0;
    double a_span = 1.0;
    double t0 = 0.0;
    double t_span = 1.0;

    static InputScaling from_grid(const AgeTimeGrid& grid);
    double scale_age(double a) const { return (a - a0) / a_span; }
    double scale_time(double t) const { return (t - t0) / t_span; }
};

/// Surrogate value and physical-unit first derivatives at one point, all as
/// tape nodes (derivatives come from a graph-mode backward pass, so they stay
/// differentiable with respect to the parameters).
struct SurrogatePoint {
    ad::Ad n;
    ad::Ad dn_da;
    ad::Ad dn_dt;
};

SurrogatePoint eval_surrogate(ad::Tape& tape, const MlpBinding& net, const InputScaling& scaling,
                              double age, double t);

/// Transport-reaction residual at a point:
///   dn/dt + dn/da + (mu + delta_mu) n - (b_interior + delta_b)
/// Pass empty optionals for the plain (refinement-free) form.
ad::Ad pde_residual(ad::Tape& tape, const SurrogatePoint& point, double mu, double b_interior,
                    std::optional<ad::Ad> delta_mu = std::nullopt,
                    std::optional<ad::Ad> delta_b = std::nullopt);

/// Initial-condition mismatch n_hat(a, t0) - data.
ad::Ad ic_residual(ad::Tape& tape, ad::Ad n_at_t0, double data_value);

/// Newborn-boundary mismatch, in boundary-density units:
///   n_hat(0, t) - female_fraction * trapz(f(a,t) n_hat(a,t)) / da
ad::Ad bc_residual(ad::Tape& tape, const MlpBinding& net, const InputScaling& scaling, double t,
                   const FertilityModel& fert, std::span<const double> quad_ages,
                   double female_fraction, double age_step);

struct LossParts {
    ad::Ad total;
    double pde = 0.0;
    double ic = 0.0;
    double bc = 0.0;
    double data = 0.0;
};

/// Mean-squared residual per component, combined with the weights.
LossParts total_loss(ad::Tape& tape, std::span<const ad::NodeId> pde,
                     std::span<const ad::NodeId> ic, std::span<const ad::NodeId> bc,
                     std::span<const ad::NodeId> data, const LossWeights& weights);

/// Per-year LSTM input features: scaled TFR, policy signal, scaled year.
std::vector<std::array<double, 3>> build_lstm_features(const TrainingProblem& problem);
inline constexpr double kTfrFeatureScale = 0.25; // TFR / 4 keeps the feature in ~[0,1]

struct TrainResult {
    MlpParams mlp;
    std::optional<LstmParams> lstm;
    LossHistory history;
    bool aborted = false;              // non-finite loss; params are from the last finite epoch
    std::size_t last_finite_epoch = 0;
    bool lbfgs_stalled = false;
};

TrainResult train_pinn(const TrainConfig& cfg, const TrainingProblem& problem,
                       std::optional<MlpParams> warm_start = std::nullopt);

TrainResult train_hybrid(const TrainConfig& cfg, const TrainingProblem& problem,
                         std::optional<MlpParams> warm_mlp = std::nullopt,
                         std::optional<LstmParams> warm_lstm = std::nullopt);

/// Evaluates the surrogate over the full lattice (physical units).
PopulationGrid forecast(const MlpParams& params, const AgeTimeGrid& grid);

} // namespace popcast
