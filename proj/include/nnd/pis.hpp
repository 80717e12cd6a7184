#pragma once

// Physical Invariance Score: how constant an expected-invariant quantity
// stays over a clip, measured from object masks.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nnd/core.hpp"

namespace nnd {

enum class InvariantKind { Vx, V, Ax, NegAx, Ay, Vy, Omega, OmegaAboutPivot, DeltaL, DeltaR };

std::string_view to_string(InvariantKind kind);
InvariantKind invariant_from_string(std::string_view name);

/// Invariants scored for each motion type.
std::vector<InvariantKind> invariants_for(MotionType type);

inline constexpr double kPisEps = 1e-5;

struct PisConfig {
    double meters_per_pixel = 0.00625;
    int smoothing_window = 5;
    double eps = kPisEps;
    double fps = 24.0;
    std::optional<Vec2> pivot;  // metric; fitted from the centroids when absent

    void validate() const;
};

/// Centered moving average; edge samples use the largest symmetric window
/// that fits.
std::vector<double> moving_average(std::span<const double> x, int window);

/// C_t for one clip. Derivatives are taken only where every sample in the
/// stencil was smoothed with the full window.
std::vector<double> extract_series(std::span<const Mask> masks, const PisConfig& cfg, InvariantKind kind);

/// (1 + sigma / (|mu| + eps))^-1 with the population standard deviation.
double pis(std::span<const double> series, double eps = kPisEps);

/// Algebraic (Kasa) least-squares circle fit; returns the centre.
Vec2 fit_circle_center(std::span<const Vec2> points);

struct VideoScore {
    std::size_t index = 0;
    bool ok = true;
    std::string error;
    std::vector<double> scores;  // aligned with PisReport::invariants
};

struct PisReport {
    MotionType motion_type = MotionType::UniformVelocity;
    std::vector<InvariantKind> invariants;
    std::vector<VideoScore> videos;
    std::vector<double> medians;  // over successful videos; NaN when none succeeded
};

/// Lower-middle element for even counts.
double lower_median(std::vector<double> values);

PisReport score_videos(std::span<const std::vector<Mask>> videos, MotionType type, const PisConfig& cfg);

std::string pis_report_json(const PisReport& report);
/// Columns: motion,invariant,video,score; median rows use video "median".
std::string pis_report_csv(const PisReport& report);

} // namespace nnd
