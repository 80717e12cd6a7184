#pragma once

// Shared domain types: the 9-component physical state, trajectories, world
// settings and the normalization used by the learned dynamics.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nnd {

inline constexpr std::size_t kStateDim = 9;

// Component order of the latent state Z = [x, y, vx, vy, theta, omega, s, l, a].
enum Component : std::size_t { kX = 0, kY, kVx, kVy, kTheta, kOmega, kS, kL, kA };

std::string_view component_name(std::size_t index);

/// Physical state in metric units, physics frame y-up. theta is unwrapped.
struct PhysState {
    std::array<double, kStateDim> v{};

    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }

    double x() const { return v[kX]; }
    double y() const { return v[kY]; }
    double vx() const { return v[kVx]; }
    double vy() const { return v[kVy]; }
    double theta() const { return v[kTheta]; }
    double omega() const { return v[kOmega]; }
    double s() const { return v[kS]; }
    double l() const { return v[kL]; }
    double a() const { return v[kA]; }

    bool finite() const;
    bool operator==(const PhysState&) const = default;
};

/// Throws DataError naming the first non-finite component.
void require_finite(const PhysState& state, std::string_view context);

enum class MotionType {
    UniformVelocity,
    UniformAcceleration,
    Deceleration,
    Parabolic,
    Motion3D,
    SlopeSliding,
    Circular,
    Rotation,
    ParabolicWithRotation,
    DampedOscillation,
    SizeChanging,
    Deformation,
};

inline constexpr std::array<MotionType, 12> kAllMotionTypes = {
    MotionType::UniformVelocity, MotionType::UniformAcceleration, MotionType::Deceleration,
    MotionType::Parabolic,       MotionType::Motion3D,            MotionType::SlopeSliding,
    MotionType::Circular,        MotionType::Rotation,            MotionType::ParabolicWithRotation,
    MotionType::DampedOscillation, MotionType::SizeChanging,      MotionType::Deformation,
};

std::string_view to_string(MotionType type);
/// Accepts the snake_case names produced by to_string; throws ConfigError otherwise.
MotionType motion_type_from_string(std::string_view name);

struct WorldConfig {
    int width_px = 320;
    int height_px = 240;
    double fps = 24.0;
    double meters_per_pixel = 0.00625;
    double gravity = 9.8;
    int n_frames = 49;
    std::map<std::string, double> motion_params;

    double param(const std::string& name, double fallback) const;
    double duration() const { return (n_frames - 1) / fps; }
    double width_m() const { return width_px * meters_per_pixel; }
    double height_m() const { return height_px * meters_per_pixel; }

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Vec2&) const = default;
};

// Pixel centers sit on integer (col, row) coordinates; rows grow downward.
Vec2 px_to_m(Vec2 px, const WorldConfig& cfg);
Vec2 m_to_px(Vec2 m, const WorldConfig& cfg);

/// Binary raster, row-major, one byte per pixel holding 0 or 1.
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    Mask() = default;
    Mask(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0) {}

    std::uint8_t at(int col, int row) const { return data[static_cast<std::size_t>(row) * width + col]; }
    std::uint8_t& at(int col, int row) { return data[static_cast<std::size_t>(row) * width + col]; }
    std::size_t count() const;
    bool operator==(const Mask&) const = default;
};

struct Trajectory {
    std::vector<double> timestamps;
    std::vector<PhysState> states;
    std::vector<Mask> masks;  // empty when masks are not carried
    MotionType motion_type = MotionType::UniformVelocity;

    std::size_t size() const { return states.size(); }
    /// Length agreement, strictly increasing timestamps starting at zero, finite states.
    void validate() const;
};

/// Affine per-component map into the unit range, plus the time scale used by
/// the dynamics (normalized time = t / time_scale).
struct NormalizationSpec {
    std::array<double, kStateDim> offset{};
    std::array<double, kStateDim> scale{1, 1, 1, 1, 1, 1, 1, 1, 1};
    double time_scale = 1.0;

    PhysState normalize(const PhysState& state) const;
    PhysState denormalize(const PhysState& normalized) const;
    void validate() const;
    bool operator==(const NormalizationSpec&) const = default;

    static NormalizationSpec identity() { return {}; }
};

/// Fits a normalization over the given trajectories.
///
/// Positions share one scale so that geometry is preserved; velocities are
/// scaled by position_scale / time_scale with zero offset so dx/dt = vx still
/// holds after normalization. The position scale is the larger of the x/y
/// spans and time_scale * max|v|, so both members of the pair fit in [-1, 1].
/// (theta, omega) are coupled the same way, and theta keeps a zero offset so
/// the restoring term of the angular equation stays linear. s, l, a use min/max.
NormalizationSpec fit_normalization(std::span<const Trajectory> trajectories);

} // namespace nnd
