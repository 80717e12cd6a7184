#include "nnd/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nnd/errors.hpp"

namespace nnd {

namespace {

constexpr std::array<std::string_view, kStateDim> kComponentNames = {
    "x", "y", "vx", "vy", "theta", "omega", "s", "l", "a"};

constexpr std::array<std::string_view, 12> kMotionNames = {
    "uniform_velocity", "uniform_acceleration", "deceleration",
    "parabolic",        "motion_3d",            "slope_sliding",
    "circular",         "rotation",             "parabolic_with_rotation",
    "damped_oscillation", "size_changing",      "deformation",
};

// Scale used when a component does not vary over the data.
double degenerate_scale(double magnitude) { return std::max(std::abs(magnitude), 1e-6); }

} // namespace

std::string_view component_name(std::size_t index) { return kComponentNames.at(index); }

bool PhysState::finite() const {
    return std::all_of(v.begin(), v.end(), [](double c) { return std::isfinite(c); });
}

void require_finite(const PhysState& state, std::string_view context) {
    for (std::size_t i = 0; i < kStateDim; ++i) {
        if (!std::isfinite(state[i])) {
            throw DataError(std::string(context) + ": non-finite state component '" +
                            std::string(component_name(i)) + "'");
        }
    }
}

std::string_view to_string(MotionType type) { return kMotionNames.at(static_cast<std::size_t>(type)); }

MotionType motion_type_from_string(std::string_view name) {
    for (std::size_t i = 0; i < kMotionNames.size(); ++i) {
        if (kMotionNames[i] == name) return static_cast<MotionType>(i);
    }
    throw ConfigError("unknown motion type '" + std::string(name) + "'");
}

double WorldConfig::param(const std::string& name, double fallback) const {
    auto it = motion_params.find(name);
    return it == motion_params.end() ? fallback : it->second;
}

void WorldConfig::validate() const {
    if (width_px <= 0) throw ConfigError("world.width_px must be positive");
    if (height_px <= 0) throw ConfigError("world.height_px must be positive");
    if (n_frames <= 0) throw ConfigError("world.n_frames must be positive");
    if (!(fps > 0.0) || !std::isfinite(fps)) throw ConfigError("world.fps must be positive");
    if (!(meters_per_pixel > 0.0) || !std::isfinite(meters_per_pixel)) {
        throw ConfigError("world.meters_per_pixel must be positive");
    }
    if (!std::isfinite(gravity)) throw ConfigError("world.gravity must be finite");
    for (const auto& [key, value] : motion_params) {
        if (!std::isfinite(value)) throw ConfigError("world.motion_params." + key + " must be finite");
    }
}

Vec2 px_to_m(Vec2 px, const WorldConfig& cfg) {
    return {px.x * cfg.meters_per_pixel, (cfg.height_px - 1 - px.y) * cfg.meters_per_pixel};
}

Vec2 m_to_px(Vec2 m, const WorldConfig& cfg) {
    return {m.x / cfg.meters_per_pixel, (cfg.height_px - 1) - m.y / cfg.meters_per_pixel};
}

std::size_t Mask::count() const {
    return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t b) { return b != 0; }));
}

void Trajectory::validate() const {
    if (timestamps.size() != states.size()) throw DataError("trajectory: timestamps and states differ in length");
    if (!masks.empty() && masks.size() != states.size()) throw DataError("trajectory: masks and states differ in length");
    if (timestamps.empty()) throw DataError("trajectory: empty");
    if (timestamps.front() != 0.0) throw DataError("trajectory: first timestamp must be 0");
    for (std::size_t i = 1; i < timestamps.size(); ++i) {
        if (!(timestamps[i] > timestamps[i - 1])) throw DataError("trajectory: timestamps must be strictly increasing");
    }
    for (const auto& s : states) require_finite(s, "trajectory");
}

PhysState NormalizationSpec::normalize(const PhysState& state) const {
    require_finite(state, "normalize");
    PhysState out;
    for (std::size_t i = 0; i < kStateDim; ++i) out[i] = (state[i] - offset[i]) / scale[i];
    return out;
}

PhysState NormalizationSpec::denormalize(const PhysState& normalized) const {
    require_finite(normalized, "denormalize");
    PhysState out;
    for (std::size_t i = 0; i < kStateDim; ++i) out[i] = normalized[i] * scale[i] + offset[i];
    return out;
}

void NormalizationSpec::validate() const {
    for (std::size_t i = 0; i < kStateDim; ++i) {
        if (!(scale[i] > 0.0) || !std::isfinite(scale[i]) || !std::isfinite(offset[i])) {
            throw ConfigError("normalization: invalid scale/offset for '" + std::string(component_name(i)) + "'");
        }
    }
    if (!(time_scale > 0.0) || !std::isfinite(time_scale)) throw ConfigError("normalization: time_scale must be positive");
}

NormalizationSpec fit_normalization(std::span<const Trajectory> trajectories) {
    if (trajectories.empty()) throw DataError("fit_normalization: no trajectories");

    constexpr double inf = std::numeric_limits<double>::infinity();
    std::array<double, kStateDim> lo, hi;
    lo.fill(inf);
    hi.fill(-inf);
    double max_abs_theta = 0.0;
    double duration = 0.0;
    for (const auto& traj : trajectories) {
        if (traj.states.empty()) continue;
        duration = std::max(duration, traj.timestamps.back() - traj.timestamps.front());
        for (const auto& s : traj.states) {
            require_finite(s, "fit_normalization");
            for (std::size_t i = 0; i < kStateDim; ++i) {
                lo[i] = std::min(lo[i], s[i]);
                hi[i] = std::max(hi[i], s[i]);
            }
            max_abs_theta = std::max(max_abs_theta, std::abs(s.theta()));
        }
    }
    if (!std::isfinite(lo[0])) throw DataError("fit_normalization: no states");

    NormalizationSpec spec;
    spec.time_scale = duration > 0.0 ? duration : 1.0;

    // Coupled pairs share a scale large enough that both members fit in [-1, 1].
    const double max_speed = std::max({std::abs(lo[kVx]), std::abs(hi[kVx]), std::abs(lo[kVy]), std::abs(hi[kVy])});
    const double pos_span = std::max({hi[kX] - lo[kX], hi[kY] - lo[kY], max_speed * spec.time_scale});
    const double pos_scale =
        pos_span > 1e-12 ? pos_span : degenerate_scale(std::max(std::abs(hi[kX]), std::abs(hi[kY])));
    spec.offset[kX] = lo[kX];
    spec.offset[kY] = lo[kY];
    spec.scale[kX] = spec.scale[kY] = pos_scale;
    spec.scale[kVx] = spec.scale[kVy] = pos_scale / spec.time_scale;

    const double max_spin = std::max(std::abs(lo[kOmega]), std::abs(hi[kOmega]));
    const double theta_span = std::max(max_abs_theta, max_spin * spec.time_scale);
    const double theta_scale = theta_span > 1e-9 ? theta_span : 1.0;
    spec.scale[kTheta] = theta_scale;
    spec.scale[kOmega] = theta_scale / spec.time_scale;

    for (std::size_t i : {kS, kL, kA}) {
        double span = hi[i] - lo[i];
        spec.offset[i] = lo[i];
        spec.scale[i] = span > 1e-12 * std::max(1.0, std::abs(hi[i])) ? span : degenerate_scale(hi[i]);
    }
    return spec;
}

} // namespace nnd
