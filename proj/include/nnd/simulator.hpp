#pragma once

// Physics-clean trajectory simulator: closed-form kinematics for the twelve
// motion types plus hard-edged rasterization of the moving object.

#include <cstdint>
#include <vector>

#include "nnd/core.hpp"
#include "nnd/rng.hpp"
#include "nnd/shape.hpp"

namespace nnd {

struct MotionSpec {
    MotionType motion_type = MotionType::UniformVelocity;
    PhysState initial;
    WorldConfig world;
    ShapeProto shape;
};

/// Motion parameters read from WorldConfig::motion_params (name, default):
///   uniform_acceleration  accel (0.4 m/s^2, along +x)
///   deceleration          decel (0.45 m/s^2, opposing vx; velocity clamps at 0)
///   motion_3d             growth_rate (0.3 1/s, sizes scale by 1 + rate t)
///   slope_sliding         slope_angle (0.35 rad, descending toward +x), friction (0)
///   circular              pivot_x, pivot_y (frame centre)
///   damped_oscillation    pivot_x, pivot_y, rod_length (0.8 m), damping (0.3 1/s)
///   size_changing         growth (0.08 m/s radius rate), growth_beta ((sqrt2-1)/duration)
///   deformation           stretch_rate (0.1 m/s), area_rule (0 = area preserved, 1 = width held)
PhysState analytic_state(const MotionSpec& spec, double t);

/// Pixel is set iff its centre lies inside the shape posed by `state`.
/// Throws DataError for degenerate axes or a shape entirely outside the frame.
Mask rasterize(ShapeKind kind, const PhysState& state, const WorldConfig& world);
Mask rasterize(const MotionSpec& spec, const PhysState& state);

/// Frame containment over all frames, plus no stall or reversal for the
/// monotonic motion types. Throws DataError describing the violation.
void check_motion_spec(const MotionSpec& spec);

Trajectory simulate(const MotionSpec& spec, bool with_masks = true);

/// Sampling intervals for initial conditions. Which fields are used depends
/// on the motion type (circular uses radius/phase, slope sliding reads vx as
/// the along-slope speed, damped oscillation reads theta as the release angle
/// and draws each pendulum's rod_length from radius).
struct SamplingRanges {
    WorldConfig world;
    ShapeKind shape_kind = ShapeKind::Ellipse;
    Range length{0.2, 0.2};
    Range aspect{0.5, 0.5};  // width / length
    Range x, y, vx, vy, theta, omega;
    Range radius, phase;
    bool operator==(const SamplingRanges&) const = default;
};

SamplingRanges default_ranges(MotionType type);

/// n specs drawn with rejection (at most 1000 attempts each) from an
/// independent stream per index; throws DataError when ranges cannot satisfy
/// containment.
std::vector<MotionSpec> sample_dataset(MotionType type, std::size_t n, std::uint64_t seed,
                                       const SamplingRanges& ranges);

} // namespace nnd
