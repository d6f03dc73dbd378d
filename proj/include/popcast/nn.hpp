#pragma once

#include "popcast/autodiff.hpp"
#include "popcast/rng.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace popcast {

/// Fully connected surrogate network: tanh hidden layers, softplus output so
/// predicted densities are nonnegative. Inputs are the scaled (age, time)
/// pair. `output_scale` converts the network output back to physical units
/// and rides along in checkpoints.
struct MlpParams {
    std::vector<std::size_t> widths;            // {2, h1, ..., hk, 1}
    std::vector<std::vector<double>> weights;   // per layer, row-major [out][in]
    std::vector<std::vector<double>> biases;    // per layer [out]
    double output_scale = 1.0;

    static MlpParams zeros(std::vector<std::size_t> widths);
    /// Glorot-uniform weights, zero biases.
    static MlpParams glorot(std::vector<std::size_t> widths, Rng& rng);

    std::size_t parameter_count() const;
    void append_flat(std::vector<double>& out) const;
    std::size_t read_flat(std::span<const double> flat); // returns values consumed
    void validate() const;
};

/// Single-layer LSTM with linear refinement heads for the mortality and birth
/// corrections. Head outputs are squashed to (-eps, eps) so the corrected
/// mortality stays positive.
struct LstmParams {
    std::size_t input_size = 0;
    std::size_t hidden_size = 0;

    // gate weights, row-major [hidden][input+hidden]
    std::vector<double> w_input, w_forget, w_cell, w_output;
    std::vector<double> b_input, b_forget, b_cell, b_output;

    std::vector<double> head_mu_w, head_b_w; // [hidden]
    double head_mu_b = 0.0;
    double head_b_b = 0.0;
    double eps_mu = 0.05; // 1/year bound on the mortality refinement
    double eps_b = 2.0;   // millions/year bound on the birth refinement

    static LstmParams zeros(std::size_t input_size, std::size_t hidden_size);
    /// Uniform(-0.08, 0.08) gates; heads start at zero so the hybrid model
    /// initially reduces to the plain surrogate.
    static LstmParams uniform_init(std::size_t input_size, std::size_t hidden_size, Rng& rng);

    void zero_heads();
    std::size_t parameter_count() const;
    std::size_t head_offset() const; // index of the first head parameter in the flat layout
    void append_flat(std::vector<double>& out) const;
    std::size_t read_flat(std::span<const double> flat);
    void validate() const;
};

/// Tape-resident copy of MLP parameters (leaf nodes in flat order).
struct MlpBinding {
    const MlpParams* params = nullptr;
    std::vector<ad::NodeId> leaves; // flat order matching append_flat
};

MlpBinding bind_mlp(ad::Tape& tape, const MlpParams& params);

/// Forward pass on the tape; differentiable w.r.t. inputs and parameters.
ad::Ad mlp_forward(ad::Tape& tape, const MlpBinding& net, ad::Ad a_scaled, ad::Ad t_scaled);

/// Plain forward pass without a tape (forecasts, explanations).
double mlp_eval(const MlpParams& params, double a_scaled, double t_scaled);

struct LstmBinding {
    const LstmParams* params = nullptr;
    std::vector<ad::NodeId> leaves;
};

LstmBinding bind_lstm(ad::Tape& tape, const LstmParams& params);

struct LstmStep {
    std::vector<ad::Ad> h;
    std::vector<ad::Ad> c;
};

/// One gated update: (h_t, c_t) from (x_t, h_{t-1}, c_{t-1}).
LstmStep lstm_cell(ad::Tape& tape, const LstmBinding& net, std::span<const ad::Ad> x,
                   std::span<const ad::Ad> h_prev, std::span<const ad::Ad> c_prev);

/// Plain-double variant (no tape).
void lstm_cell_eval(const LstmParams& params, std::span<const double> x, std::vector<double>& h,
                    std::vector<double>& c);

struct RefinementHeads {
    ad::Ad delta_mu;
    ad::Ad delta_b;
};

/// delta = eps * tanh((W h + b) / eps): affine heads bounded to (-eps, eps).
RefinementHeads refinement_heads(ad::Tape& tape, const LstmBinding& net,
                                 std::span<const ad::Ad> h);

/// Plain-double variant.
std::pair<double, double> refinement_heads_eval(const LstmParams& params,
                                                std::span<const double> h);

/// Checkpoint format: one CSV line per array, `name,shape,values...` with
/// shape as 'x'-joined dims. Values print in shortest-round-trip form, so a
/// load reproduces the exact doubles.
struct NamedArray {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> values;
};

std::vector<NamedArray> to_named_arrays(const MlpParams& params);
std::vector<NamedArray> to_named_arrays(const LstmParams& params);
MlpParams mlp_from_named_arrays(std::span<const NamedArray> arrays);
LstmParams lstm_from_named_arrays(std::span<const NamedArray> arrays);

void save_checkpoint(const std::filesystem::path& path, std::span<const NamedArray> arrays);
std::vector<NamedArray> load_checkpoint(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, const MlpParams& mlp,
                     const std::optional<LstmParams>& lstm = std::nullopt);
/// Returns the MLP and, when head/gate arrays are present, the LSTM.
std::pair<MlpParams, std::optional<LstmParams>> load_model_checkpoint(
    const std::filesystem::path& path);

} // namespace popcast
