#include "nnd/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "nnd/kernels.hpp"
#include "nnd/rng.hpp"

namespace nnd {

namespace {

constexpr std::array<std::string_view, kNumCoef> kCoefNames = {
    "ax", "bx", "cx", "ay", "by", "cy", "g_over_L", "gamma",
    "alpha_s", "beta_s", "alpha_l", "beta_l", "alpha_a", "beta_a", "eps_residual",
};

void transpose(const double* src, double* dst, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
    }
}

void column_sums_acc(const double* x, double* out, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = x + r * cols;
        for (std::size_t c = 0; c < cols; ++c) out[c] += row[c];
    }
}

bool all_finite(const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(x[i])) return false;
    }
    return true;
}

} // namespace

std::string_view coef_name(std::size_t index) {
    if (index >= kNumCoef) throw ConfigError("coef_name: index out of range");
    return kCoefNames[index];
}

MlpLayout::MlpLayout(std::size_t h) : hidden(h) {
    if (h == 0) throw ConfigError("hidden width must be >= 1");
    w1 = kNumCoef;
    b1 = w1 + h * kStateDim;
    w2 = b1 + h;
    b2 = w2 + h * h;
    w3 = b2 + h;
    b3 = w3 + kResidualDim * h;
    total = b3 + kResidualDim;
}

NndParams::NndParams(std::size_t hidden) : m_layout(hidden), m_values(m_layout.total, 0.0) {
    m_values[kEpsResidual] = kDefaultEpsResidual;
}

NndParams NndParams::initialized(std::size_t hidden, std::uint64_t seed) {
    NndParams p(hidden);
    Rng rng(seed);
    const MlpLayout& L = p.m_layout;
    const double bound1 = 1.0 / std::sqrt(static_cast<double>(kStateDim));
    const double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (std::size_t i = L.w1; i < L.w2; ++i) p.m_values[i] = rng.uniform(-bound1, bound1);  // w1, b1
    for (std::size_t i = L.w2; i < L.w3; ++i) p.m_values[i] = rng.uniform(-bound2, bound2);  // w2, b2
    return p;
}

void NndParams::zero_output_layer() {
    std::fill(m_values.begin() + static_cast<std::ptrdiff_t>(m_layout.w3), m_values.end(), 0.0);
}

bool NndParams::output_layer_zero() const {
    for (std::size_t i = m_layout.w3; i < m_layout.total; ++i) {
        if (m_values[i] != 0.0) return false;
    }
    return true;
}

bool NndParams::finite() const { return all_finite(m_values.data(), m_values.size()); }

std::string NndParams::entry_name(std::size_t index) const {
    if (index < kNumCoef) return std::string(kCoefNames[index]);
    const MlpLayout& L = m_layout;
    const std::size_t h = L.hidden;
    std::ostringstream os;
    if (index < L.b1) {
        os << "w1[" << (index - L.w1) / kStateDim << ',' << (index - L.w1) % kStateDim << ']';
    } else if (index < L.w2) {
        os << "b1[" << index - L.b1 << ']';
    } else if (index < L.b2) {
        os << "w2[" << (index - L.w2) / h << ',' << (index - L.w2) % h << ']';
    } else if (index < L.w3) {
        os << "b2[" << index - L.b2 << ']';
    } else if (index < L.b3) {
        os << "w3[" << (index - L.w3) / h << ',' << (index - L.w3) % h << ']';
    } else if (index < L.total) {
        os << "b3[" << index - L.b3 << ']';
    } else {
        throw ConfigError("entry_name: index out of range");
    }
    return os.str();
}

void IntegratorConfig::validate() const {
    if (substeps_per_frame < 1) throw ConfigError("substeps_per_frame must be >= 1");
}

// ---------------------------------------------------------------------------

BatchRhs::BatchRhs(const NndParams& params, ResidualMode mode) : m_params(params), m_mode(mode) {
    if (mode == ResidualMode::LinearOnly) return;
    const std::size_t h = params.hidden();
    m_w1t.resize(kStateDim * h);
    m_w2t.resize(h * h);
    m_w3t.resize(h * kResidualDim);
    transpose(params.w1(), m_w1t.data(), h, kStateDim);
    transpose(params.w2(), m_w2t.data(), h, h);
    transpose(params.w3(), m_w3t.data(), kResidualDim, h);
}

void BatchRhs::eval(const double* z, double* dz, std::size_t batch, StageCache* cache) const {
    const auto& p = m_params;
    const double ax = p.coef(kAx), bx = p.coef(kBx), cx = p.coef(kCx);
    const double ay = p.coef(kAy), by = p.coef(kBy), cy = p.coef(kCy);
    const double gl = p.coef(kGOverL), gamma = p.coef(kGamma);
    const double as = p.coef(kAlphaS), bs = p.coef(kBetaS);
    const double al = p.coef(kAlphaL), bl = p.coef(kBetaL);
    const double aa = p.coef(kAlphaA), ba = p.coef(kBetaA);
    for (std::size_t b = 0; b < batch; ++b) {
        const double* zi = z + b * kStateDim;
        double* di = dz + b * kStateDim;
        di[kX] = zi[kVx];
        di[kY] = zi[kVy];
        di[kVx] = ax * zi[kX] + bx * zi[kVx] + cx;
        di[kVy] = ay * zi[kY] + by * zi[kVy] + cy;
        di[kTheta] = zi[kOmega];
        di[kOmega] = -gl * zi[kTheta] - gamma * zi[kOmega];
        di[kS] = as * zi[kS] + bs;
        di[kL] = al * zi[kL] + bl;
        di[kA] = aa * zi[kA] + ba;
    }
    if (cache) cache->input.assign(z, z + batch * kStateDim);
    if (m_mode == ResidualMode::LinearOnly) return;

    const std::size_t h = p.hidden();
    const auto& k = kernels::active();
    StageCache local;
    StageCache& c = cache ? *cache : local;
    c.h1.resize(batch * h);
    c.h2.resize(batch * h);
    c.tr.resize(batch * kResidualDim);
    k.gemm_nn(z, m_w1t.data(), c.h1.data(), batch, kStateDim, h, false);
    k.bias_tanh(c.h1.data(), p.b1(), batch, h);
    k.gemm_nn(c.h1.data(), m_w2t.data(), c.h2.data(), batch, h, h, false);
    k.bias_tanh(c.h2.data(), p.b2(), batch, h);
    k.gemm_nn(c.h2.data(), m_w3t.data(), c.tr.data(), batch, h, kResidualDim, false);
    k.bias_tanh(c.tr.data(), p.b3(), batch, kResidualDim);

    const double eps = p.coef(kEpsResidual);
    for (std::size_t b = 0; b < batch; ++b) {
        const double* t = c.tr.data() + b * kResidualDim;
        double* di = dz + b * kStateDim;
        for (std::size_t j = 0; j < kResidualDim; ++j) di[kResidualSlots[j]] += eps * t[j];
    }
}

void BatchRhs::vjp(const StageCache& c, const double* g, double* g_z, double* g_params, std::size_t batch) const {
    const auto& p = m_params;
    const double ax = p.coef(kAx), bx = p.coef(kBx);
    const double ay = p.coef(kAy), by = p.coef(kBy);
    const double gl = p.coef(kGOverL), gamma = p.coef(kGamma);
    const double as = p.coef(kAlphaS), al = p.coef(kAlphaL), aa = p.coef(kAlphaA);
    for (std::size_t b = 0; b < batch; ++b) {
        const double* zi = c.input.data() + b * kStateDim;
        const double* gi = g + b * kStateDim;
        double* gz = g_z + b * kStateDim;
        gz[kVx] += gi[kX];
        gz[kVy] += gi[kY];
        gz[kX] += ax * gi[kVx];
        gz[kVx] += bx * gi[kVx];
        gz[kY] += ay * gi[kVy];
        gz[kVy] += by * gi[kVy];
        gz[kOmega] += gi[kTheta];
        gz[kTheta] -= gl * gi[kOmega];
        gz[kOmega] -= gamma * gi[kOmega];
        gz[kS] += as * gi[kS];
        gz[kL] += al * gi[kL];
        gz[kA] += aa * gi[kA];

        g_params[kAx] += zi[kX] * gi[kVx];
        g_params[kBx] += zi[kVx] * gi[kVx];
        g_params[kCx] += gi[kVx];
        g_params[kAy] += zi[kY] * gi[kVy];
        g_params[kBy] += zi[kVy] * gi[kVy];
        g_params[kCy] += gi[kVy];
        g_params[kGOverL] -= zi[kTheta] * gi[kOmega];
        g_params[kGamma] -= zi[kOmega] * gi[kOmega];
        g_params[kAlphaS] += zi[kS] * gi[kS];
        g_params[kBetaS] += gi[kS];
        g_params[kAlphaL] += zi[kL] * gi[kL];
        g_params[kBetaL] += gi[kL];
        g_params[kAlphaA] += zi[kA] * gi[kA];
        g_params[kBetaA] += gi[kA];
    }
    if (m_mode == ResidualMode::LinearOnly) return;

    const std::size_t h = p.hidden();
    const MlpLayout& L = p.layout();
    const auto& k = kernels::active();
    const double eps = p.coef(kEpsResidual);

    std::vector<double> g_r(batch * kResidualDim);
    double g_eps = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const double* t = c.tr.data() + b * kResidualDim;
        const double* gi = g + b * kStateDim;
        double* gr = g_r.data() + b * kResidualDim;
        for (std::size_t j = 0; j < kResidualDim; ++j) {
            const double go = gi[kResidualSlots[j]];
            g_eps += go * t[j];
            gr[j] = go * eps * (1.0 - t[j] * t[j]);
        }
    }
    g_params[kEpsResidual] += g_eps;

    k.gemm_tn_acc(g_r.data(), c.h2.data(), g_params + L.w3, kResidualDim, batch, h);
    column_sums_acc(g_r.data(), g_params + L.b3, batch, kResidualDim);

    std::vector<double> g_pre2(batch * h);
    k.gemm_nn(g_r.data(), p.w3(), g_pre2.data(), batch, kResidualDim, h, false);
    for (std::size_t i = 0; i < batch * h; ++i) g_pre2[i] *= 1.0 - c.h2[i] * c.h2[i];
    k.gemm_tn_acc(g_pre2.data(), c.h1.data(), g_params + L.w2, h, batch, h);
    column_sums_acc(g_pre2.data(), g_params + L.b2, batch, h);

    std::vector<double> g_pre1(batch * h);
    k.gemm_nn(g_pre2.data(), p.w2(), g_pre1.data(), batch, h, h, false);
    for (std::size_t i = 0; i < batch * h; ++i) g_pre1[i] *= 1.0 - c.h1[i] * c.h1[i];
    k.gemm_tn_acc(g_pre1.data(), c.input.data(), g_params + L.w1, h, batch, kStateDim);
    column_sums_acc(g_pre1.data(), g_params + L.b1, batch, h);

    k.gemm_nn(g_pre1.data(), p.w1(), g_z, batch, h, kStateDim, true);
}

// ---------------------------------------------------------------------------

std::vector<double> integrate_batch(const BatchRhs& f, const double* z0, std::size_t batch,
                                    std::span<const double> timestamps, const IntegratorConfig& icfg,
                                    IntegrationTape* tape) {
    icfg.validate();
    const std::size_t frames = timestamps.size();
    if (frames == 0) throw DataError("integrate: empty time grid");
    for (std::size_t i = 1; i < frames; ++i) {
        if (!(timestamps[i] > timestamps[i - 1])) throw DataError("integrate: timestamps must be strictly increasing");
    }
    const std::size_t n = batch * kStateDim;
    const int subs = icfg.substeps_per_frame;
    std::vector<double> out(frames * n);
    std::copy(z0, z0 + n, out.begin());
    if (tape) {
        tape->batch = batch;
        tape->frames = frames;
        tape->substeps = subs;
        tape->steps.assign(frames > 0 ? frames - 1 : 0, 0.0);
        tape->stages.resize((frames - 1) * static_cast<std::size_t>(subs) * 4);
    }

    std::vector<double> z(z0, z0 + n), k1(n), k2(n), k3(n), k4(n), tmp(n);
    StageCache scratch[4];
    std::size_t stage = 0;
    for (std::size_t i = 0; i + 1 < frames; ++i) {
        const double h = (timestamps[i + 1] - timestamps[i]) / subs;
        if (tape) tape->steps[i] = h;
        for (int s = 0; s < subs; ++s) {
            StageCache* c = tape ? &tape->stages[stage] : &scratch[0];
            f.eval(z.data(), k1.data(), batch, c);
            for (std::size_t j = 0; j < n; ++j) tmp[j] = z[j] + 0.5 * h * k1[j];
            f.eval(tmp.data(), k2.data(), batch, tape ? &tape->stages[stage + 1] : &scratch[1]);
            for (std::size_t j = 0; j < n; ++j) tmp[j] = z[j] + 0.5 * h * k2[j];
            f.eval(tmp.data(), k3.data(), batch, tape ? &tape->stages[stage + 2] : &scratch[2]);
            for (std::size_t j = 0; j < n; ++j) tmp[j] = z[j] + h * k3[j];
            f.eval(tmp.data(), k4.data(), batch, tape ? &tape->stages[stage + 3] : &scratch[3]);
            for (std::size_t j = 0; j < n; ++j) z[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            stage += 4;

            if (!all_finite(z.data(), n)) {
                std::size_t item = 0;
                while (item < batch && all_finite(z.data() + item * kStateDim, kStateDim)) ++item;
                const std::size_t step = i * static_cast<std::size_t>(subs) + static_cast<std::size_t>(s);
                std::ostringstream os;
                os << "integrate: non-finite state at substep " << step << " (frame interval " << i << ")";
                if (batch > 1) os << " for batch item " << item;
                throw IntegrationError(os.str(), step, item);
            }
        }
        std::copy(z.begin(), z.end(), out.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
    }
    return out;
}

void backward_batch(const BatchRhs& f, const IntegrationTape& tape, const double* g_frames, double* g_params,
                    double* g_z0) {
    const std::size_t batch = tape.batch;
    const std::size_t n = batch * kStateDim;
    const std::size_t frames = tape.frames;
    const int subs = tape.substeps;

    std::vector<double> gz(g_frames + (frames - 1) * n, g_frames + frames * n);
    std::vector<double> gk1(n), gk2(n), gk3(n), gk4(n), v(n);
    for (std::size_t i = frames - 1; i-- > 0;) {
        const double h = tape.steps[i];
        for (int s = subs - 1; s >= 0; --s) {
            const std::size_t base = (i * static_cast<std::size_t>(subs) + static_cast<std::size_t>(s)) * 4;
            for (std::size_t j = 0; j < n; ++j) {
                gk1[j] = h / 6.0 * gz[j];
                gk2[j] = h / 3.0 * gz[j];
                gk3[j] = h / 3.0 * gz[j];
                gk4[j] = h / 6.0 * gz[j];
            }
            std::fill(v.begin(), v.end(), 0.0);
            f.vjp(tape.stages[base + 3], gk4.data(), v.data(), g_params, batch);
            for (std::size_t j = 0; j < n; ++j) {
                gz[j] += v[j];
                gk3[j] += h * v[j];
            }
            std::fill(v.begin(), v.end(), 0.0);
            f.vjp(tape.stages[base + 2], gk3.data(), v.data(), g_params, batch);
            for (std::size_t j = 0; j < n; ++j) {
                gz[j] += v[j];
                gk2[j] += 0.5 * h * v[j];
            }
            std::fill(v.begin(), v.end(), 0.0);
            f.vjp(tape.stages[base + 1], gk2.data(), v.data(), g_params, batch);
            for (std::size_t j = 0; j < n; ++j) {
                gz[j] += v[j];
                gk1[j] += 0.5 * h * v[j];
            }
            f.vjp(tape.stages[base], gk1.data(), gz.data(), g_params, batch);
        }
        const double* gf = g_frames + i * n;
        for (std::size_t j = 0; j < n; ++j) gz[j] += gf[j];
    }
    if (g_z0) std::copy(gz.begin(), gz.end(), g_z0);
}

// ---------------------------------------------------------------------------

PhysState rhs(const PhysState& z, const NndParams& params, ResidualMode mode) {
    require_finite(z, "rhs");
    BatchRhs f(params, mode);
    PhysState d;
    f.eval(z.v.data(), d.v.data(), 1, nullptr);
    return d;
}

std::vector<PhysState> integrate(const PhysState& z0, std::span<const double> timestamps, const NndParams& params,
                                 const IntegratorConfig& icfg, ResidualMode mode) {
    require_finite(z0, "integrate");
    BatchRhs f(params, mode);
    const auto flat = integrate_batch(f, z0.v.data(), 1, timestamps, icfg, nullptr);
    std::vector<PhysState> out(timestamps.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(i * kStateDim), kStateDim, out[i].v.begin());
    }
    return out;
}

std::vector<PhysState> NndModel::predict(const PhysState& z0, std::span<const double> times) const {
    std::vector<double> tn(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) tn[i] = times[i] / norm.time_scale;
    auto states = integrate(norm.normalize(z0), tn, params, icfg, mode);
    for (auto& s : states) s = norm.denormalize(s);
    return states;
}

// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

std::vector<double> slice(const NndParams& p, std::size_t from, std::size_t to) {
    return {p.values().begin() + static_cast<std::ptrdiff_t>(from), p.values().begin() + static_cast<std::ptrdiff_t>(to)};
}

void fill(NndParams& p, const json& j, const char* key, std::size_t from, std::size_t to) {
    const auto v = j.at(key).get<std::vector<double>>();
    if (v.size() != to - from) throw DataError(std::string("checkpoint: wrong length for mlp.") + key);
    std::copy(v.begin(), v.end(), p.values().begin() + static_cast<std::ptrdiff_t>(from));
}

} // namespace

std::string checkpoint_to_json(const NndModel& m) {
    const MlpLayout& L = m.params.layout();
    json j;
    j["format"] = "nnd-checkpoint";
    j["version"] = kCheckpointVersion;
    j["motion_type"] = std::string(to_string(m.motion_type));
    j["hidden"] = L.hidden;
    j["residual_mode"] = m.mode == ResidualMode::Full ? "full" : "linear_only";
    j["substeps_per_frame"] = m.icfg.substeps_per_frame;
    json coefs = json::object();
    for (std::size_t i = 0; i < kNumCoef; ++i) coefs[std::string(kCoefNames[i])] = m.params[i];
    j["coefficients"] = coefs;
    j["eps_residual"] = m.params.coef(kEpsResidual);
    j["mlp"] = {
        {"w1", slice(m.params, L.w1, L.b1)}, {"b1", slice(m.params, L.b1, L.w2)},
        {"w2", slice(m.params, L.w2, L.b2)}, {"b2", slice(m.params, L.b2, L.w3)},
        {"w3", slice(m.params, L.w3, L.b3)}, {"b3", slice(m.params, L.b3, L.total)},
    };
    j["normalization"] = {
        {"offset", m.norm.offset}, {"scale", m.norm.scale}, {"time_scale", m.norm.time_scale}};
    return j.dump(1);
}

NndModel checkpoint_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        if (j.at("format").get<std::string>() != "nnd-checkpoint") throw DataError("checkpoint: unknown format");
        const int version = j.at("version").get<int>();
        if (version != kCheckpointVersion) {
            throw DataError("checkpoint: unsupported version " + std::to_string(version));
        }
        NndModel m;
        m.motion_type = motion_type_from_string(j.at("motion_type").get<std::string>());
        m.params = NndParams(j.at("hidden").get<std::size_t>());
        const std::string mode = j.at("residual_mode").get<std::string>();
        if (mode == "full") {
            m.mode = ResidualMode::Full;
        } else if (mode == "linear_only") {
            m.mode = ResidualMode::LinearOnly;
        } else {
            throw DataError("checkpoint: unknown residual_mode " + mode);
        }
        m.icfg.substeps_per_frame = j.at("substeps_per_frame").get<int>();
        m.icfg.validate();
        const json& coefs = j.at("coefficients");
        for (std::size_t i = 0; i < kNumCoef; ++i) m.params[i] = coefs.at(std::string(kCoefNames[i])).get<double>();
        const MlpLayout& L = m.params.layout();
        const json& mlp = j.at("mlp");
        fill(m.params, mlp, "w1", L.w1, L.b1);
        fill(m.params, mlp, "b1", L.b1, L.w2);
        fill(m.params, mlp, "w2", L.w2, L.b2);
        fill(m.params, mlp, "b2", L.b2, L.w3);
        fill(m.params, mlp, "w3", L.w3, L.b3);
        fill(m.params, mlp, "b3", L.b3, L.total);
        const json& n = j.at("normalization");
        m.norm.offset = n.at("offset").get<std::array<double, kStateDim>>();
        m.norm.scale = n.at("scale").get<std::array<double, kStateDim>>();
        m.norm.time_scale = n.at("time_scale").get<double>();
        m.norm.validate();
        if (!m.params.finite()) throw DataError("checkpoint: non-finite parameter");
        return m;
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: ") + e.what());
    } catch (const ConfigError& e) {
        throw DataError(std::string("checkpoint: ") + e.what());
    }
}

void save_checkpoint(const NndModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out << checkpoint_to_json(model) << '\n';
}

NndModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read checkpoint " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return checkpoint_from_json(ss.str());
}

std::uint64_t params_hash(const NndParams& params) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (double v : params.values()) {
        unsigned char bytes[sizeof(double)];
        std::memcpy(bytes, &v, sizeof v);
        for (unsigned char b : bytes) {
            h ^= b;
            h *= 0x100000001b3ull;
        }
    }
    return h;
}

} // namespace nnd
