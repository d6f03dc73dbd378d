#include "popcast/grid.hpp"

#include "popcast/errors.hpp"

#include <cmath>

namespace popcast {

namespace {

// span/step must be an integer count of cells (small tolerance for
// non-representable steps like 0.1)
std::size_t cell_count(double span, double step, const char* what) {
    const double ratio = span / step;
    const double rounded = std::round(ratio);
    if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
        throw config_error(std::string(what) + " span is not an integer multiple of the step");
    }
    return static_cast<std::size_t>(rounded);
}

} // namespace

void AgeTimeGrid::validate() const {
    if (!(age_min < age_max)) {
        throw config_error("grid requires age_min < age_max");
    }
    if (!(t_min < t_max)) {
        throw config_error("grid requires t_min < t_max");
    }
    if (!(age_step > 0.0) || !(t_step > 0.0)) {
        throw config_error("grid steps must be positive");
    }
    cell_count(age_max - age_min, age_step, "age");
    cell_count(t_max - t_min, t_step, "time");
}

std::size_t AgeTimeGrid::n_ages() const {
    return cell_count(age_max - age_min, age_step, "age") + 1;
}

std::size_t AgeTimeGrid::n_times() const {
    return cell_count(t_max - t_min, t_step, "time") + 1;
}

std::vector<double> AgeTimeGrid::ages() const {
    std::vector<double> out(n_ages());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = age(i);
    }
    return out;
}

std::vector<double> AgeTimeGrid::times() const {
    std::vector<double> out(n_times());
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = time(k);
    }
    return out;
}

PopulationGrid::PopulationGrid(AgeTimeGrid grid) : grid_(grid) {
    grid_.validate();
    density_.assign(grid_.n_times() * grid_.n_ages(), 0.0);
}

double PopulationGrid::at(std::size_t t_idx, std::size_t a_idx) const {
    return density_[t_idx * grid_.n_ages() + a_idx];
}

double& PopulationGrid::at(std::size_t t_idx, std::size_t a_idx) {
    return density_[t_idx * grid_.n_ages() + a_idx];
}

std::span<const double> PopulationGrid::row(std::size_t t_idx) const {
    return std::span<const double>(density_).subspan(t_idx * grid_.n_ages(), grid_.n_ages());
}

void PopulationGrid::set_row(std::size_t t_idx, std::span<const double> values) {
    if (values.size() != grid_.n_ages()) {
        throw data_error("row length does not match grid ages");
    }
    std::copy(values.begin(), values.end(), density_.begin() + static_cast<std::ptrdiff_t>(t_idx * grid_.n_ages()));
}

} // namespace popcast
