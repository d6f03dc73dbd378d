#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace popcast {

/// Uniform age x calendar-time lattice. Both endpoints are lattice points,
/// so a span of 100 years at step 1 holds 101 age nodes.
struct AgeTimeGrid {
    double age_min = 0.0;
    double age_max = 100.0;
    double age_step = 1.0;
    double t_min = 2024.0;
    double t_max = 2054.0;
    double t_step = 1.0;

    /// Throws config_error unless age_min < age_max, t_min < t_max, steps > 0
    /// and both spans are integer multiples of their steps.
    void validate() const;

    std::size_t n_ages() const;
    std::size_t n_times() const;
    double age(std::size_t i) const { return age_min + static_cast<double>(i) * age_step; }
    double time(std::size_t k) const { return t_min + static_cast<double>(k) * t_step; }
    std::vector<double> ages() const;
    std::vector<double> times() const;

    bool operator==(const AgeTimeGrid&) const = default;
};

/// Discretized population density n(a,t), millions of persons per year of age,
/// stored row-major with one row per time node.
class PopulationGrid {
  public:
    explicit PopulationGrid(AgeTimeGrid grid);

    const AgeTimeGrid& grid() const { return grid_; }

    double at(std::size_t t_idx, std::size_t a_idx) const;
    double& at(std::size_t t_idx, std::size_t a_idx);

    std::span<const double> row(std::size_t t_idx) const;
    void set_row(std::size_t t_idx, std::span<const double> values);

    const std::vector<double>& data() const { return density_; }

  private:
    AgeTimeGrid grid_;
    std::vector<double> density_;
};

} // namespace popcast
