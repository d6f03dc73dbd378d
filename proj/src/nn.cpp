#include "popcast/nn.hpp"

#include "popcast/csv.hpp"
#include "popcast/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace popcast {

MlpParams MlpParams::zeros(std::vector<std::size_t> widths) {
    if (widths.size() < 2) {
        throw config_error("MLP needs at least input and output layers");
    }
    MlpParams p;
    p.widths = std::move(widths);
    for (std::size_t l = 0; l + 1 < p.widths.size(); ++l) {
        p.weights.emplace_back(p.widths[l + 1] * p.widths[l], 0.0);
        p.biases.emplace_back(p.widths[l + 1], 0.0);
    }
    return p;
}

MlpParams MlpParams::glorot(std::vector<std::size_t> widths, Rng& rng) {
    MlpParams p = zeros(std::move(widths));
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        const double fan_in = static_cast<double>(p.widths[l]);
        const double fan_out = static_cast<double>(p.widths[l + 1]);
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        for (double& w : p.weights[l]) {
            w = rng.uniform(-bound, bound);
        }
    }
    return p;
}

std::size_t MlpParams::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        n += weights[l].size() + biases[l].size();
    }
    return n;
}

void MlpParams::append_flat(std::vector<double>& out) const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        out.insert(out.end(), weights[l].begin(), weights[l].end());
        out.insert(out.end(), biases[l].begin(), biases[l].end());
    }
}

std::size_t MlpParams::read_flat(std::span<const double> flat) {
    std::size_t pos = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        std::copy(flat.begin() + pos, flat.begin() + pos + weights[l].size(), weights[l].begin());
        pos += weights[l].size();
        std::copy(flat.begin() + pos, flat.begin() + pos + biases[l].size(), biases[l].begin());
        pos += biases[l].size();
    }
    return pos;
}

void MlpParams::validate() const {
    if (widths.size() < 2 || widths.front() != 2 || widths.back() != 1) {
        throw config_error("surrogate MLP must map 2 inputs to 1 output");
    }
    if (weights.size() != widths.size() - 1 || biases.size() != widths.size() - 1) {
        throw config_error("MLP layer count mismatch");
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].size() != widths[l + 1] * widths[l] || biases[l].size() != widths[l + 1]) {
            throw config_error("MLP layer shape mismatch");
        }
        for (double v : weights[l]) {
            if (!std::isfinite(v)) {
                throw config_error("MLP has non-finite weights");
            }
        }
    }
}

LstmParams LstmParams::zeros(std::size_t input_size, std::size_t hidden_size) {
    if (input_size == 0 || hidden_size == 0) {
        throw config_error("LSTM sizes must be positive");
    }
    LstmParams p;
    p.input_size = input_size;
    p.hidden_size = hidden_size;
    const std::size_t gate = hidden_size * (input_size + hidden_size);
    p.w_input.assign(gate, 0.0);
    p.w_forget.assign(gate, 0.0);
    p.w_cell.assign(gate, 0.0);
    p.w_output.assign(gate, 0.0);
    p.b_input.assign(hidden_size, 0.0);
    p.b_forget.assign(hidden_size, 0.0);
    p.b_cell.assign(hidden_size, 0.0);
    p.b_output.assign(hidden_size, 0.0);
    p.head_mu_w.assign(hidden_size, 0.0);
    p.head_b_w.assign(hidden_size, 0.0);
    return p;
}

LstmParams LstmParams::uniform_init(std::size_t input_size, std::size_t hidden_size, Rng& rng) {
    LstmParams p = zeros(input_size, hidden_size);
    auto fill = [&rng](std::vector<double>& v) {
        for (double& x : v) {
            x = rng.uniform(-0.08, 0.08);
        }
    };
    fill(p.w_input);
    fill(p.w_forget);
    fill(p.w_cell);
    fill(p.w_output);
    fill(p.b_input);
    fill(p.b_forget);
    fill(p.b_cell);
    fill(p.b_output);
    // heads stay zero
    return p;
}

void LstmParams::zero_heads() {
    std::fill(head_mu_w.begin(), head_mu_w.end(), 0.0);
    std::fill(head_b_w.begin(), head_b_w.end(), 0.0);
    head_mu_b = 0.0;
    head_b_b = 0.0;
}

std::size_t LstmParams::parameter_count() const {
    return 4 * (w_input.size() + b_input.size()) + head_mu_w.size() + head_b_w.size() + 2;
}

std::size_t LstmParams::head_offset() const {
    return 4 * (w_input.size() + b_input.size());
}

void LstmParams::append_flat(std::vector<double>& out) const {
    for (const auto* v : {&w_input, &b_input, &w_forget, &b_forget, &w_cell, &b_cell, &w_output,
                          &b_output}) {
        out.insert(out.end(), v->begin(), v->end());
    }
    out.insert(out.end(), head_mu_w.begin(), head_mu_w.end());
    out.push_back(head_mu_b);
    out.insert(out.end(), head_b_w.begin(), head_b_w.end());
    out.push_back(head_b_b);
}

std::size_t LstmParams::read_flat(std::span<const double> flat) {
    std::size_t pos = 0;
    for (auto* v : {&w_input, &b_input, &w_forget, &b_forget, &w_cell, &b_cell, &w_output,
                    &b_output}) {
        std::copy(flat.begin() + pos, flat.begin() + pos + v->size(), v->begin());
        pos += v->size();
    }
    std::copy(flat.begin() + pos, flat.begin() + pos + head_mu_w.size(), head_mu_w.begin());
    pos += head_mu_w.size();
    head_mu_b = flat[pos++];
    std::copy(flat.begin() + pos, flat.begin() + pos + head_b_w.size(), head_b_w.begin());
    pos += head_b_w.size();
    head_b_b = flat[pos++];
    return pos;
}

void LstmParams::validate() const {
    const std::size_t gate = hidden_size * (input_size + hidden_size);
    if (w_input.size() != gate || w_forget.size() != gate || w_cell.size() != gate ||
        w_output.size() != gate) {
        throw config_error("LSTM gate weight shape mismatch");
    }
    if (b_input.size() != hidden_size || head_mu_w.size() != hidden_size ||
        head_b_w.size() != hidden_size) {
        throw config_error("LSTM bias/head shape mismatch");
    }
    if (!(eps_mu > 0.0) || !(eps_b > 0.0)) {
        throw config_error("refinement bounds must be positive");
    }
}

MlpBinding bind_mlp(ad::Tape& tape, const MlpParams& params) {
    params.validate();
    MlpBinding b;
    b.params = &params;
    std::vector<double> flat;
    flat.reserve(params.parameter_count());
    params.append_flat(flat);
    b.leaves.reserve(flat.size());
    for (double v : flat) {
        b.leaves.push_back(tape.leaf(v));
    }
    return b;
}

ad::Ad mlp_forward(ad::Tape& tape, const MlpBinding& net, ad::Ad a_scaled, ad::Ad t_scaled) {
    const MlpParams& p = *net.params;
    std::vector<ad::NodeId> act = {a_scaled.id, t_scaled.id};
    std::vector<ad::NodeId> next;
    std::size_t pos = 0;
    for (std::size_t l = 0; l + 1 < p.widths.size(); ++l) {
        const std::size_t in = p.widths[l];
        const std::size_t out = p.widths[l + 1];
        if (act.size() != in) {
            throw config_error("MLP forward shape mismatch");
        }
        next.clear();
        next.reserve(out);
        for (std::size_t o = 0; o < out; ++o) {
            ad::NodeId acc = net.leaves[pos + out * in + o]; // bias
            for (std::size_t i = 0; i < in; ++i) {
                acc = tape.add(acc, tape.mul(net.leaves[pos + o * in + i], act[i]));
            }
            const bool last = (l + 2 == p.widths.size());
            next.push_back(last ? tape.softplus(acc) : tape.tanh(acc));
        }
        act = next;
        pos += out * in + out;
    }
    return {&tape, act[0]};
}

double mlp_eval(const MlpParams& p, double a_scaled, double t_scaled) {
    std::vector<double> act = {a_scaled, t_scaled};
    std::vector<double> next;
    for (std::size_t l = 0; l + 1 < p.widths.size(); ++l) {
        const std::size_t in = p.widths[l];
        const std::size_t out = p.widths[l + 1];
        next.assign(out, 0.0);
        for (std::size_t o = 0; o < out; ++o) {
            double acc = p.biases[l][o];
            for (std::size_t i = 0; i < in; ++i) {
                acc += p.weights[l][o * in + i] * act[i];
            }
            const bool last = (l + 2 == p.widths.size());
            next[o] = last ? std::max(acc, 0.0) + std::log1p(std::exp(-std::abs(acc)))
                           : std::tanh(acc);
        }
        act = next;
    }
    return act[0];
}

LstmBinding bind_lstm(ad::Tape& tape, const LstmParams& params) {
    params.validate();
    LstmBinding b;
    b.params = &params;
    std::vector<double> flat;
    flat.reserve(params.parameter_count());
    params.append_flat(flat);
    b.leaves.reserve(flat.size());
    for (double v : flat) {
        b.leaves.push_back(tape.leaf(v));
    }
    return b;
}

namespace {

// flat layout offsets: [w_input, b_input, w_forget, b_forget, w_cell, b_cell,
// w_output, b_output, head_mu_w, head_mu_b, head_b_w, head_b_b]
struct LstmOffsets {
    std::size_t gate;
    std::size_t w_input, b_input, w_forget, b_forget, w_cell, b_cell, w_output, b_output;
    std::size_t head_mu_w, head_mu_b, head_b_w, head_b_b;

    explicit LstmOffsets(const LstmParams& p) {
        gate = p.hidden_size * (p.input_size + p.hidden_size);
        w_input = 0;
        b_input = w_input + gate;
        w_forget = b_input + p.hidden_size;
        b_forget = w_forget + gate;
        w_cell = b_forget + p.hidden_size;
        b_cell = w_cell + gate;
        w_output = b_cell + p.hidden_size;
        b_output = w_output + gate;
        head_mu_w = b_output + p.hidden_size;
        head_mu_b = head_mu_w + p.hidden_size;
        head_b_w = head_mu_b + 1;
        head_b_b = head_b_w + p.hidden_size;
    }
};

} // namespace

LstmStep lstm_cell(ad::Tape& tape, const LstmBinding& net, std::span<const ad::Ad> x,
                   std::span<const ad::Ad> h_prev, std::span<const ad::Ad> c_prev) {
    const LstmParams& p = *net.params;
    if (x.size() != p.input_size || h_prev.size() != p.hidden_size ||
        c_prev.size() != p.hidden_size) {
        throw config_error("LSTM cell dimension mismatch");
    }
    const LstmOffsets off(p);
    const std::size_t cols = p.input_size + p.hidden_size;

    auto gate_preact = [&](std::size_t w_off, std::size_t b_off, std::size_t row) {
        ad::NodeId acc = net.leaves[b_off + row];
        for (std::size_t i = 0; i < p.input_size; ++i) {
            acc = tape.add(acc, tape.mul(net.leaves[w_off + row * cols + i], x[i].id));
        }
        for (std::size_t j = 0; j < p.hidden_size; ++j) {
            acc = tape.add(acc,
                           tape.mul(net.leaves[w_off + row * cols + p.input_size + j], h_prev[j].id));
        }
        return acc;
    };

    LstmStep step;
    step.h.reserve(p.hidden_size);
    step.c.reserve(p.hidden_size);
    for (std::size_t r = 0; r < p.hidden_size; ++r) {
        const ad::NodeId i_gate = tape.sigmoid(gate_preact(off.w_input, off.b_input, r));
        const ad::NodeId f_gate = tape.sigmoid(gate_preact(off.w_forget, off.b_forget, r));
        const ad::NodeId g_cand = tape.tanh(gate_preact(off.w_cell, off.b_cell, r));
        const ad::NodeId o_gate = tape.sigmoid(gate_preact(off.w_output, off.b_output, r));
        const ad::NodeId c_new =
            tape.add(tape.mul(f_gate, c_prev[r].id), tape.mul(i_gate, g_cand));
        const ad::NodeId h_new = tape.mul(o_gate, tape.tanh(c_new));
        step.c.push_back({&tape, c_new});
        step.h.push_back({&tape, h_new});
    }
    return step;
}

void lstm_cell_eval(const LstmParams& p, std::span<const double> x, std::vector<double>& h,
                    std::vector<double>& c) {
    if (x.size() != p.input_size || h.size() != p.hidden_size || c.size() != p.hidden_size) {
        throw config_error("LSTM cell dimension mismatch");
    }
    const std::size_t cols = p.input_size + p.hidden_size;
    auto sig = [](double v) {
        return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    };
    auto preact = [&](const std::vector<double>& w, const std::vector<double>& b, std::size_t r) {
        double acc = b[r];
        for (std::size_t i = 0; i < p.input_size; ++i) {
            acc += w[r * cols + i] * x[i];
        }
        for (std::size_t j = 0; j < p.hidden_size; ++j) {
            acc += w[r * cols + p.input_size + j] * h[j];
        }
        return acc;
    };
    std::vector<double> h_new(p.hidden_size);
    std::vector<double> c_new(p.hidden_size);
    for (std::size_t r = 0; r < p.hidden_size; ++r) {
        const double i_gate = sig(preact(p.w_input, p.b_input, r));
        const double f_gate = sig(preact(p.w_forget, p.b_forget, r));
        const double g_cand = std::tanh(preact(p.w_cell, p.b_cell, r));
        const double o_gate = sig(preact(p.w_output, p.b_output, r));
        c_new[r] = f_gate * c[r] + i_gate * g_cand;
        h_new[r] = o_gate * std::tanh(c_new[r]);
    }
    h = std::move(h_new);
    c = std::move(c_new);
}

RefinementHeads refinement_heads(ad::Tape& tape, const LstmBinding& net,
                                 std::span<const ad::Ad> h) {
    const LstmParams& p = *net.params;
    if (h.size() != p.hidden_size) {
        throw config_error("refinement heads dimension mismatch");
    }
    const LstmOffsets off(p);
    ad::NodeId mu_acc = net.leaves[off.head_mu_b];
    ad::NodeId b_acc = net.leaves[off.head_b_b];
    for (std::size_t j = 0; j < p.hidden_size; ++j) {
        mu_acc = tape.add(mu_acc, tape.mul(net.leaves[off.head_mu_w + j], h[j].id));
        b_acc = tape.add(b_acc, tape.mul(net.leaves[off.head_b_w + j], h[j].id));
    }
    const ad::NodeId inv_mu = tape.constant(1.0 / p.eps_mu);
    const ad::NodeId inv_b = tape.constant(1.0 / p.eps_b);
    const ad::NodeId mu_sq =
        tape.mul(tape.constant(p.eps_mu), tape.tanh(tape.mul(mu_acc, inv_mu)));
    const ad::NodeId b_sq = tape.mul(tape.constant(p.eps_b), tape.tanh(tape.mul(b_acc, inv_b)));
    return {{&tape, mu_sq}, {&tape, b_sq}};
}

std::pair<double, double> refinement_heads_eval(const LstmParams& p, std::span<const double> h) {
    if (h.size() != p.hidden_size) {
        throw config_error("refinement heads dimension mismatch");
    }
    double mu_acc = p.head_mu_b;
    double b_acc = p.head_b_b;
    for (std::size_t j = 0; j < p.hidden_size; ++j) {
        mu_acc += p.head_mu_w[j] * h[j];
        b_acc += p.head_b_w[j] * h[j];
    }
    return {p.eps_mu * std::tanh(mu_acc / p.eps_mu), p.eps_b * std::tanh(b_acc / p.eps_b)};
}

namespace {

NamedArray make_array(std::string name, std::vector<std::size_t> shape,
                      std::vector<double> values) {
    return NamedArray{std::move(name), std::move(shape), std::move(values)};
}

const NamedArray& find_array(std::span<const NamedArray> arrays, std::string_view name) {
    for (const auto& a : arrays) {
        if (a.name == name) {
            return a;
        }
    }
    throw data_error("checkpoint is missing array '" + std::string(name) + "'");
}

bool has_array(std::span<const NamedArray> arrays, std::string_view name) {
    for (const auto& a : arrays) {
        if (a.name == name) {
            return true;
        }
    }
    return false;
}

} // namespace

std::vector<NamedArray> to_named_arrays(const MlpParams& p) {
    std::vector<NamedArray> out;
    std::vector<double> widths(p.widths.begin(), p.widths.end());
    out.push_back(make_array("mlp.widths", {p.widths.size()}, widths));
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        out.push_back(make_array("mlp.w" + std::to_string(l), {p.widths[l + 1], p.widths[l]},
                                 p.weights[l]));
        out.push_back(make_array("mlp.b" + std::to_string(l), {p.widths[l + 1]}, p.biases[l]));
    }
    out.push_back(make_array("mlp.output_scale", {1}, {p.output_scale}));
    return out;
}

std::vector<NamedArray> to_named_arrays(const LstmParams& p) {
    std::vector<NamedArray> out;
    const std::vector<std::size_t> gate_shape = {p.hidden_size, p.input_size + p.hidden_size};
    out.push_back(make_array("lstm.w_input", gate_shape, p.w_input));
    out.push_back(make_array("lstm.b_input", {p.hidden_size}, p.b_input));
    out.push_back(make_array("lstm.w_forget", gate_shape, p.w_forget));
    out.push_back(make_array("lstm.b_forget", {p.hidden_size}, p.b_forget));
    out.push_back(make_array("lstm.w_cell", gate_shape, p.w_cell));
    out.push_back(make_array("lstm.b_cell", {p.hidden_size}, p.b_cell));
    out.push_back(make_array("lstm.w_output", gate_shape, p.w_output));
    out.push_back(make_array("lstm.b_output", {p.hidden_size}, p.b_output));
    out.push_back(make_array("lstm.head_mu_w", {p.hidden_size}, p.head_mu_w));
    out.push_back(make_array("lstm.head_mu_b", {1}, {p.head_mu_b}));
    out.push_back(make_array("lstm.head_b_w", {p.hidden_size}, p.head_b_w));
    out.push_back(make_array("lstm.head_b_b", {1}, {p.head_b_b}));
    out.push_back(make_array("lstm.eps", {2}, {p.eps_mu, p.eps_b}));
    return out;
}

MlpParams mlp_from_named_arrays(std::span<const NamedArray> arrays) {
    const auto& widths = find_array(arrays, "mlp.widths");
    std::vector<std::size_t> w(widths.values.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = static_cast<std::size_t>(widths.values[i]);
    }
    MlpParams p = MlpParams::zeros(w);
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        p.weights[l] = find_array(arrays, "mlp.w" + std::to_string(l)).values;
        p.biases[l] = find_array(arrays, "mlp.b" + std::to_string(l)).values;
    }
    p.output_scale = find_array(arrays, "mlp.output_scale").values.at(0);
    p.validate();
    return p;
}

LstmParams lstm_from_named_arrays(std::span<const NamedArray> arrays) {
    const auto& wi = find_array(arrays, "lstm.w_input");
    if (wi.shape.size() != 2) {
        throw data_error("lstm.w_input must be 2-D");
    }
    const std::size_t hidden = wi.shape[0];
    const std::size_t input = wi.shape[1] - hidden;
    LstmParams p = LstmParams::zeros(input, hidden);
    p.w_input = wi.values;
    p.b_input = find_array(arrays, "lstm.b_input").values;
    p.w_forget = find_array(arrays, "lstm.w_forget").values;
    p.b_forget = find_array(arrays, "lstm.b_forget").values;
    p.w_cell = find_array(arrays, "lstm.w_cell").values;
    p.b_cell = find_array(arrays, "lstm.b_cell").values;
    p.w_output = find_array(arrays, "lstm.w_output").values;
    p.b_output = find_array(arrays, "lstm.b_output").values;
    p.head_mu_w = find_array(arrays, "lstm.head_mu_w").values;
    p.head_mu_b = find_array(arrays, "lstm.head_mu_b").values.at(0);
    p.head_b_w = find_array(arrays, "lstm.head_b_w").values;
    p.head_b_b = find_array(arrays, "lstm.head_b_b").values.at(0);
    const auto& eps = find_array(arrays, "lstm.eps");
    p.eps_mu = eps.values.at(0);
    p.eps_b = eps.values.at(1);
    p.validate();
    return p;
}

void save_checkpoint(const std::filesystem::path& path, std::span<const NamedArray> arrays) {
    csv::Writer w(path);
    for (const auto& a : arrays) {
        std::vector<std::string> row;
        row.reserve(2 + a.values.size());
        row.push_back(a.name);
        std::string shape;
        for (std::size_t i = 0; i < a.shape.size(); ++i) {
            if (i > 0) {
                shape += 'x';
            }
            shape += std::to_string(a.shape[i]);
        }
        row.push_back(shape);
        for (double v : a.values) {
            row.push_back(csv::format_double(v));
        }
        w.row(row);
    }
    w.flush();
}

std::vector<NamedArray> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw data_error("cannot open checkpoint: " + path.string());
    }
    std::vector<NamedArray> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::stringstream ss(line);
        std::string field;
        NamedArray a;
        if (!std::getline(ss, a.name, ',') || !std::getline(ss, field, ',')) {
            throw data_error("malformed checkpoint line: " + line);
        }
        std::stringstream shape_ss(field);
        std::string dim;
        std::size_t expected = 1;
        while (std::getline(shape_ss, dim, 'x')) {
            a.shape.push_back(static_cast<std::size_t>(std::stoull(dim)));
            expected *= a.shape.back();
        }
        while (std::getline(ss, field, ',')) {
            a.values.push_back(csv::parse_double(field));
        }
        if (a.values.size() != expected) {
            throw data_error("checkpoint array '" + a.name + "' has wrong element count");
        }
        out.push_back(std::move(a));
    }
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const MlpParams& mlp,
                     const std::optional<LstmParams>& lstm) {
    auto arrays = to_named_arrays(mlp);
    if (lstm) {
        auto more = to_named_arrays(*lstm);
        arrays.insert(arrays.end(), more.begin(), more.end());
    }
    save_checkpoint(path, arrays);
}

std::pair<MlpParams, std::optional<LstmParams>> load_model_checkpoint(
    const std::filesystem::path& path) {
    const auto arrays = load_checkpoint(path);
    MlpParams mlp = mlp_from_named_arrays(arrays);
    std::optional<LstmParams> lstm;
    if (has_array(arrays, "lstm.w_input")) {
        lstm = lstm_from_named_arrays(arrays);
    }
    return {std::move(mlp), std::move(lstm)};
}

} // namespace popcast
