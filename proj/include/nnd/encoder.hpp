#pragma once

// Mask-to-state extraction: image moments give pose and size per frame,
// differencing over the sequence gives the velocities.

#include <span>
#include <vector>

#include "nnd/core.hpp"

namespace nnd {

struct GeometryObs {
    Vec2 centroid;          // meters, physics frame
    double theta_raw = 0.0; // major-axis orientation in (-pi/2, pi/2]
    double s = 0.0;         // equivalent-ellipse minor axis (m)
    double l = 0.0;         // equivalent-ellipse major axis (m)
    double a = 0.0;         // pixel count * mpp^2
};

/// Below this l/s the moment orientation is treated as noise.
inline constexpr double kRoundnessThreshold = 1.05;

/// Throws DataError("object lost") on an empty mask.
GeometryObs encode_frame(const Mask& mask, const WorldConfig& cfg);

/// Picks theta_raw + k*pi closest to the previous unwrapped angle.
double unwrap_orientation(double theta_raw, double previous);

/// Central differences in the interior, forward/backward differences at the
/// ends. Requires at least three uniformly spaced samples.
std::vector<double> differentiate(std::span<const double> values, double dt);

/// Needs >= 3 frames with uniform spacing (relative tolerance 1e-6).
std::vector<PhysState> encode_sequence(std::span<const Mask> masks, std::span<const double> timestamps,
                                       const WorldConfig& cfg);

} // namespace nnd
