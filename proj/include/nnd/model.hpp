#pragma once

// Neural Newtonian Dynamics: linear physics-informed right-hand side plus a
// bounded residual MLP, integrated with fixed-step RK4. The batched engine
// below also provides the exact reverse pass through every RK4 stage.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nnd/core.hpp"
#include "nnd/errors.hpp"

namespace nnd {

// Flat parameter layout: the named coefficients first, then the MLP.
enum Coef : std::size_t {
    kAx = 0, kBx, kCx,
    kAy, kBy, kCy,
    kGOverL, kGamma,
    kAlphaS, kBetaS, kAlphaL, kBetaL, kAlphaA, kBetaA,
    kEpsResidual,
    kNumCoef
};

std::string_view coef_name(std::size_t index);

inline constexpr std::size_t kDefaultHidden = 64;
inline constexpr std::size_t kResidualDim = 6;
inline constexpr double kDefaultEpsResidual = 0.1;
// State slots receiving the residual, in MLP output order.
inline constexpr std::array<std::size_t, kResidualDim> kResidualSlots = {kVx, kVy, kOmega, kS, kL, kA};

/// Offsets of the MLP blocks in the flat vector. Weights are row-major
/// (out x in): w1 H x 9, w2 H x H, w3 6 x H.
struct MlpLayout {
    std::size_t hidden;
    std::size_t w1, b1, w2, b2, w3, b3, total;
    explicit MlpLayout(std::size_t hidden);
    bool operator==(const MlpLayout&) const = default;
};

class NndParams {
public:
    /// All coefficients and weights zero, eps_residual at its default.
    explicit NndParams(std::size_t hidden = kDefaultHidden);

    /// Hidden layers ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); output layer zero.
    static NndParams initialized(std::size_t hidden, std::uint64_t seed);

    std::size_t hidden() const { return m_layout.hidden; }
    const MlpLayout& layout() const { return m_layout; }
    std::size_t size() const { return m_values.size(); }

    double& operator[](std::size_t i) { return m_values[i]; }
    double operator[](std::size_t i) const { return m_values[i]; }
    double& coef(Coef c) { return m_values[c]; }
    double coef(Coef c) const { return m_values[c]; }

    std::span<double> values() { return m_values; }
    std::span<const double> values() const { return m_values; }

    const double* w1() const { return m_values.data() + m_layout.w1; }
    const double* b1() const { return m_values.data() + m_layout.b1; }
    const double* w2() const { return m_values.data() + m_layout.w2; }
    const double* b2() const { return m_values.data() + m_layout.b2; }
    const double* w3() const { return m_values.data() + m_layout.w3; }
    const double* b3() const { return m_values.data() + m_layout.b3; }

    /// Sets the output layer (w3, b3) to zero.
    void zero_output_layer();
    bool output_layer_zero() const;
    bool finite() const;
    /// Human-readable name of a flat index, e.g. "cy" or "w2[3,17]".
    std::string entry_name(std::size_t index) const;

    bool operator==(const NndParams&) const = default;

private:
    MlpLayout m_layout;
    std::vector<double> m_values;
};

struct IntegratorConfig {
    int substeps_per_frame = 8;
    void validate() const;
    bool operator==(const IntegratorConfig&) const = default;
};

/// Whether the residual MLP participates. LinearOnly never evaluates it.
enum class ResidualMode { Full, LinearOnly };

/// dZ/dt for one state.
PhysState rhs(const PhysState& z, const NndParams& params, ResidualMode mode = ResidualMode::Full);

/// Ẑ at every timestamp, seeded with z0 at timestamps[0].
std::vector<PhysState> integrate(const PhysState& z0, std::span<const double> timestamps, const NndParams& params,
                                 const IntegratorConfig& icfg, ResidualMode mode = ResidualMode::Full);

/// Raised when a state turns non-finite during integration.
class IntegrationError : public NumericalError {
public:
    IntegrationError(const std::string& what, std::size_t step, std::size_t item)
        : NumericalError(what), m_step(step), m_item(item) {}
    std::size_t step() const noexcept { return m_step; }
    std::size_t item() const noexcept { return m_item; }

private:
    std::size_t m_step;
    std::size_t m_item;
};

/// Activations kept from one right-hand-side evaluation.
struct StageCache {
    std::vector<double> input;  // B x 9
    std::vector<double> h1;     // B x H
    std::vector<double> h2;     // B x H
    std::vector<double> tr;     // B x 6, tanh of the MLP output
};

/// Right-hand side over a batch of B row-major states.
class BatchRhs {
public:
    BatchRhs(const NndParams& params, ResidualMode mode);

    /// dz = f(z). When cache is non-null it receives what vjp needs.
    void eval(const double* z, double* dz, std::size_t batch, StageCache* cache) const;

    /// Given g = dL/d(dz), adds dL/dz into g_z and dL/dparams into g_params.
    void vjp(const StageCache& cache, const double* g, double* g_z, double* g_params, std::size_t batch) const;

    const NndParams& params() const { return m_params; }
    ResidualMode mode() const { return m_mode; }

private:
    const NndParams& m_params;
    ResidualMode m_mode;
    std::vector<double> m_w1t;  // 9 x H
    std::vector<double> m_w2t;  // H x H
    std::vector<double> m_w3t;  // H x 6
};

/// Everything the reverse pass needs from a forward batch integration.
struct IntegrationTape {
    std::size_t batch = 0;
    std::size_t frames = 0;
    int substeps = 1;
    std::vector<double> steps;         // substep size per frame interval
    std::vector<StageCache> stages;    // 4 per substep, in execution order
};

/// Integrates B trajectories sharing one time grid. z0 is B x 9; the result is
/// frames x B x 9. Pass a tape to enable backward_batch.
std::vector<double> integrate_batch(const BatchRhs& f, const double* z0, std::size_t batch,
                                    std::span<const double> timestamps, const IntegratorConfig& icfg,
                                    IntegrationTape* tape);

/// Reverse pass. g_frames is dL/d(output), frames x B x 9. Accumulates into
/// g_params; writes dL/dz0 into g_z0 (B x 9) when non-null.
void backward_batch(const BatchRhs& f, const IntegrationTape& tape, const double* g_frames, double* g_params,
                    double* g_z0);

/// Trained model bundle: parameters in normalized space plus the map back to
/// metric units.
struct NndModel {
    MotionType motion_type = MotionType::UniformVelocity;
    NndParams params;
    NormalizationSpec norm;
    IntegratorConfig icfg;
    ResidualMode mode = ResidualMode::Full;

    /// Metric states at the given times (seconds), seeded with z0 at times[0].
    std::vector<PhysState> predict(const PhysState& z0, std::span<const double> times) const;
};

inline constexpr int kCheckpointVersion = 1;

std::string checkpoint_to_json(const NndModel& model);
/// Throws DataError on malformed or version-mismatched input.
NndModel checkpoint_from_json(const std::string& text);
void save_checkpoint(const NndModel& model, const std::filesystem::path& path);
NndModel load_checkpoint(const std::filesystem::path& path);

/// FNV-1a over the raw parameter bytes.
std::uint64_t params_hash(const NndParams& params);

} // namespace nnd
