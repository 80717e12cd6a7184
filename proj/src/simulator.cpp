#include "nnd/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "nnd/errors.hpp"
#include "nnd/parallel.hpp"

namespace nnd {

namespace {

using std::numbers::pi;

// Slack for callers that oversample past the last frame.
constexpr double kTimeSlack = 1e-9;

PhysState with_sizes_scaled(PhysState z, double linear, double areal) {
    z[kS] *= linear;
    z[kL] *= linear;
    z[kA] *= areal;
    return z;
}

Vec2 pivot_of(const WorldConfig& w) {
    return {w.param("pivot_x", 0.5 * (w.width_px - 1) * w.meters_per_pixel),
            w.param("pivot_y", 0.5 * (w.height_px - 1) * w.meters_per_pixel)};
}

// theta'' = -(g/L) theta - gamma theta', underdamped closed form.
struct PendulumAngle {
    double theta, omega;
};

PendulumAngle damped_pendulum(double theta0, double omega0, double stiffness, double gamma, double t) {
    const double half = 0.5 * gamma;
    const double wd2 = stiffness - half * half;
    if (!(wd2 > 0.0)) throw ConfigError("damped_oscillation: damping too large for an underdamped swing");
    const double wd = std::sqrt(wd2);
    const double a = theta0;
    const double b = (omega0 + half * theta0) / wd;
    const double e = std::exp(-half * t);
    const double c = std::cos(wd * t), s = std::sin(wd * t);
    return {e * (a * c + b * s), e * (-half * (a * c + b * s) + wd * (-a * s + b * c))};
}

} // namespace

PhysState analytic_state(const MotionSpec& spec, double t) {
    const WorldConfig& w = spec.world;
    if (!(t >= -kTimeSlack) || t > w.n_frames / w.fps + kTimeSlack) {
        std::ostringstream os;
        os << "analytic_state: t=" << t << " outside [0, " << w.n_frames / w.fps << "]";
        throw DataError(os.str());
    }
    const PhysState& z0 = spec.initial;
    PhysState z = z0;
    const double g = w.gravity;

    auto drift = [&](PhysState& s) {
        s[kX] = z0.x() + z0.vx() * t;
        s[kY] = z0.y() + z0.vy() * t;
    };
    auto ballistic = [&](PhysState& s) {
        s[kX] = z0.x() + z0.vx() * t;
        s[kY] = z0.y() + z0.vy() * t - 0.5 * g * t * t;
        s[kVy] = z0.vy() - g * t;
    };
    auto spin = [&](PhysState& s) { s[kTheta] = z0.theta() + z0.omega() * t; };

    switch (spec.motion_type) {
    case MotionType::UniformVelocity:
        drift(z);
        z[kOmega] = 0.0;
        break;
    case MotionType::UniformAcceleration: {
        const double acc = w.param("accel", 0.4);
        drift(z);
        z[kX] += 0.5 * acc * t * t;
        z[kVx] = z0.vx() + acc * t;
        z[kOmega] = 0.0;
        break;
    }
    case MotionType::Deceleration: {
        const double dec = w.param("decel", 0.45);
        const double dir = z0.vx() >= 0.0 ? 1.0 : -1.0;
        const double t_stop = dec > 0.0 ? std::abs(z0.vx()) / dec : std::numeric_limits<double>::infinity();
        const double te = std::min(t, t_stop);
        z[kX] = z0.x() + z0.vx() * te - 0.5 * dir * dec * te * te;
        z[kVx] = t < t_stop ? z0.vx() - dir * dec * t : 0.0;
        z[kY] = z0.y() + z0.vy() * t;
        z[kOmega] = 0.0;
        break;
    }
    case MotionType::Parabolic:
        ballistic(z);
        z[kOmega] = 0.0;
        break;
    case MotionType::Motion3D: {
        const double f = 1.0 + w.param("growth_rate", 0.3) * t;
        drift(z);
        z[kOmega] = 0.0;
        z = with_sizes_scaled(z, f, f * f);
        break;
    }
    case MotionType::SlopeSliding: {
        const double alpha = w.param("slope_angle", 0.35);
        const double mu = w.param("friction", 0.0);
        const double dx = std::cos(alpha), dy = -std::sin(alpha);
        const double acc = g * (std::sin(alpha) - mu * std::cos(alpha));
        const double v0 = z0.vx() * dx + z0.vy() * dy;
        const double dist = v0 * t + 0.5 * acc * t * t;
        const double v = v0 + acc * t;
        z[kX] = z0.x() + dx * dist;
        z[kY] = z0.y() + dy * dist;
        z[kVx] = dx * v;
        z[kVy] = dy * v;
        z[kOmega] = 0.0;
        break;
    }
    case MotionType::Circular: {
        const Vec2 c = pivot_of(w);
        const double r = std::hypot(z0.x() - c.x, z0.y() - c.y);
        const double phi = std::atan2(z0.y() - c.y, z0.x() - c.x) + z0.omega() * t;
        z[kX] = c.x + r * std::cos(phi);
        z[kY] = c.y + r * std::sin(phi);
        z[kVx] = -r * z0.omega() * std::sin(phi);
        z[kVy] = r * z0.omega() * std::cos(phi);
        spin(z);
        break;
    }
    case MotionType::Rotation:
        z[kVx] = z[kVy] = 0.0;
        spin(z);
        break;
    case MotionType::ParabolicWithRotation:
        ballistic(z);
        spin(z);
        break;
    case MotionType::DampedOscillation: {
        const Vec2 c = pivot_of(w);
        const double rod = w.param("rod_length", 0.8);
        if (!(rod > 0.0)) throw ConfigError("damped_oscillation: rod_length must be positive");
        const auto p = damped_pendulum(z0.theta(), z0.omega(), g / rod, w.param("damping", 0.3), t);
        z[kTheta] = p.theta;
        z[kOmega] = p.omega;
        z[kX] = c.x + rod * std::sin(p.theta);
        z[kY] = c.y - rod * std::cos(p.theta);
        z[kVx] = rod * std::cos(p.theta) * p.omega;
        z[kVy] = rod * std::sin(p.theta) * p.omega;
        break;
    }
    case MotionType::SizeChanging: {
        const double k = w.param("growth", 0.08);
        const double beta = w.param("growth_beta", (std::sqrt(2.0) - 1.0) / w.duration());
        const double r0 = 0.5 * z0.l();
        const double f = (r0 + k * t / (1.0 + beta * t)) / r0;
        z[kVx] = z[kVy] = z[kOmega] = 0.0;
        z = with_sizes_scaled(z, f, f * f);
        break;
    }
    case MotionType::Deformation: {
        const double k = w.param("stretch_rate", 0.1);
        const int rule = static_cast<int>(w.param("area_rule", 0.0));
        const double l = z0.l() + k * t;
        const double s = rule == 0 ? z0.s() * z0.l() / l : z0.s();
        z[kVx] = z[kVy] = z[kOmega] = 0.0;
        z[kL] = std::max(l, s);
        z[kS] = std::min(l, s);
        z[kA] = z0.a() * (l * s) / (z0.l() * z0.s());
        break;
    }
    }
    return z;
}

Mask rasterize(ShapeKind kind, const PhysState& state, const WorldConfig& world) {
    require_finite(state, "rasterize");
    const ShapeProto shape = shape_from_axes(kind, state.l(), state.s());
    const double mpp = world.meters_per_pixel;
    const Vec2 c = m_to_px({state.x(), state.y()}, world);
    const double reach = bounding_radius(shape) / mpp + 1.0;

    const int col0 = std::max(0, static_cast<int>(std::floor(c.x - reach)));
    const int col1 = std::min(world.width_px - 1, static_cast<int>(std::ceil(c.x + reach)));
    const int row0 = std::max(0, static_cast<int>(std::floor(c.y - reach)));
    const int row1 = std::min(world.height_px - 1, static_cast<int>(std::ceil(c.y + reach)));

    Mask mask(world.width_px, world.height_px);
    const double ct = std::cos(state.theta()), st = std::sin(state.theta());
    bool any = false;
    for (int row = row0; row <= row1; ++row) {
        const double dy = (c.y - row) * mpp;  // physics y grows upward
        for (int col = col0; col <= col1; ++col) {
            const double dx = (col - c.x) * mpp;
            const double u = dx * ct + dy * st;
            const double v = -dx * st + dy * ct;
            if (shape_contains(shape, u, v)) {
                mask.at(col, row) = 1;
                any = true;
            }
        }
    }
    if (!any) throw DataError("rasterize: shape lies outside the frame");
    return mask;
}

Mask rasterize(const MotionSpec& spec, const PhysState& state) { return rasterize(spec.shape.kind, state, spec.world); }

void check_motion_spec(const MotionSpec& spec) {
    spec.world.validate();
    spec.shape.validate();
    require_finite(spec.initial, "motion spec");
    const WorldConfig& w = spec.world;
    const double mpp = w.meters_per_pixel;
    const double xmax = (w.width_px - 1) * mpp, ymax = (w.height_px - 1) * mpp;
    const bool monotonic = spec.motion_type == MotionType::UniformVelocity ||
                           spec.motion_type == MotionType::UniformAcceleration ||
                           spec.motion_type == MotionType::Deceleration ||
                           spec.motion_type == MotionType::SlopeSliding;

    double first_vx = 0.0;
    for (int k = 0; k < w.n_frames; ++k) {
        const PhysState z = analytic_state(spec, k / w.fps);
        const double r = bounding_radius(shape_from_axes(spec.shape.kind, z.l(), z.s()));
        if (z.x() - r < 0.0 || z.x() + r > xmax || z.y() - r < 0.0 || z.y() + r > ymax) {
            std::ostringstream os;
            os << "containment: object leaves the frame at frame " << k;
            throw DataError(os.str());
        }
        if (monotonic) {
            if (k == 0) first_vx = z.vx();
            if (first_vx == 0.0 || z.vx() * first_vx <= 0.0) {
                std::ostringstream os;
                os << "monotonicity: horizontal motion stalls or reverses at frame " << k;
                throw DataError(os.str());
            }
        }
    }
}

Trajectory simulate(const MotionSpec& spec, bool with_masks) {
    const WorldConfig& w = spec.world;
    w.validate();
    Trajectory traj;
    traj.motion_type = spec.motion_type;
    traj.timestamps.reserve(w.n_frames);
    traj.states.reserve(w.n_frames);
    for (int k = 0; k < w.n_frames; ++k) {
        const double t = k / w.fps;
        traj.timestamps.push_back(t);
        traj.states.push_back(analytic_state(spec, t));
    }
    if (with_masks) {
        traj.masks.resize(traj.states.size());
        parallel_for(traj.states.size(), [&](std::size_t k) { traj.masks[k] = rasterize(spec, traj.states[k]); });
    }
    return traj;
}

SamplingRanges default_ranges(MotionType type) {
    SamplingRanges r;
    WorldConfig& w = r.world;
    // Objects stay at least ~28 px across their short axis; smaller masks
    // push raster error past the encoder and advection tolerances.
    switch (type) {
    case MotionType::UniformVelocity:
        r.shape_kind = ShapeKind::Ellipse;
        r.length = {0.4, 0.55};
        r.aspect = {0.55, 0.75};
        r.x = {0.3, 0.5};
        r.y = {0.35, 1.1};
        r.vx = {0.25, 0.45};
        r.theta = {-0.4, 0.4};
        break;
    case MotionType::UniformAcceleration:
        w.motion_params["accel"] = 0.3;
        r.shape_kind = ShapeKind::Ellipse;
        r.length = {0.38, 0.48};
        r.aspect = {0.55, 0.75};
        r.x = {0.3, 0.45};
        r.y = {0.35, 1.1};
        r.vx = {0.1, 0.25};
        r.theta = {-0.3, 0.3};
        break;
    case MotionType::Deceleration:
        w.meters_per_pixel = 0.0075;
        w.motion_params["decel"] = 0.45;
        r.shape_kind = ShapeKind::Ellipse;
        r.length = {0.45, 0.6};
        r.aspect = {0.55, 0.75};
        r.x = {0.3, 0.65};
        r.y = {0.4, 1.4};
        r.vx = {0.95, 1.15};
        r.theta = {-0.3, 0.3};
        break;
    case MotionType::Parabolic:
        w.meters_per_pixel = 0.045;
        r.shape_kind = ShapeKind::Circle;
        r.length = {1.6, 2.0};
        r.aspect = {1.0, 1.0};
        r.x = {1.0, 2.5};
        r.y = {1.4, 2.6};
        r.vx = {1.5, 3.0};
        r.vy = {9.3, 10.3};
        break;
    case MotionType::Motion3D:
        w.motion_params["growth_rate"] = 0.3;
        r.shape_kind = ShapeKind::Ellipse;
        r.length = {0.3, 0.36};
        r.aspect = {0.6, 0.75};
        r.x = {0.4, 0.7};
        r.y = {0.35, 0.6};
        r.vx = {0.2, 0.35};
        r.vy = {0.1, 0.2};
        break;
    case MotionType::SlopeSliding:
        w.meters_per_pixel = 0.03;
        w.motion_params["slope_angle"] = 0.35;
        r.shape_kind = ShapeKind::Ellipse;
        r.length = {1.2, 1.5};
        r.aspect = {0.7, 0.85};
        r.x = {0.9, 1.5};
        r.y = {4.0, 5.6};
        r.vx = {0.3, 1.0};
        break;
    case MotionType::Circular:
        w.motion_params["pivot_x"] = 1.0;
        w.motion_params["pivot_y"] = 0.75;
        r.shape_kind = ShapeKind::RoundedBar;
        r.length = {0.4, 0.5};
        r.aspect = {0.45, 0.6};
        r.radius = {0.3, 0.45};
        r.phase = {0.0, 2.0 * pi};
        r.omega = {1.5, 3.0};
        break;
    case MotionType::Rotation:
        r.shape_kind = ShapeKind::Ellipse;
        r.length = {0.5, 0.65};
        r.aspect = {0.35, 0.5};
        r.x = {0.6, 1.4};
        r.y = {0.5, 1.0};
        r.theta = {-1.5, 1.5};
        r.omega = {2.0, 4.0};
        break;
    case MotionType::ParabolicWithRotation:
        w.meters_per_pixel = 0.045;
        r.shape_kind = ShapeKind::Ellipse;
        r.length = {2.6, 3.0};
        r.aspect = {0.5, 0.6};
        r.x = {1.6, 3.5};
        r.y = {1.6, 2.6};
        r.vx = {1.5, 3.0};
        r.vy = {9.4, 10.3};
        r.theta = {-1.5, 1.5};
        r.omega = {3.0, 6.0};
        break;
    case MotionType::DampedOscillation:
        w.motion_params["pivot_x"] = 1.0;
        w.motion_params["pivot_y"] = 1.45;
        w.motion_params["rod_length"] = 0.8;
        w.motion_params["damping"] = 0.3;
        r.radius = {0.5, 1.1};
        r.shape_kind = ShapeKind::Ellipse;
        r.length = {0.36, 0.44};
        r.aspect = {0.55, 0.7};
        r.theta = {0.15, 0.4};
        r.omega = {-0.3, 0.3};
        break;
    case MotionType::SizeChanging:
        w.motion_params["growth"] = 0.08;
        r.shape_kind = ShapeKind::Circle;
        r.length = {0.3, 0.4};
        r.aspect = {1.0, 1.0};
        r.x = {0.6, 1.4};
        r.y = {0.45, 1.05};
        break;
    case MotionType::Deformation:
        w.motion_params["stretch_rate"] = 0.1;
        r.shape_kind = ShapeKind::Ellipse;
        r.length = {0.35, 0.45};
        r.aspect = {0.7, 0.85};
        r.x = {0.6, 1.4};
        r.y = {0.5, 1.0};
        r.theta = {-0.5, 0.5};
        break;
    }
    return r;
}

namespace {

MotionSpec draw_spec(MotionType type, const SamplingRanges& r, Rng& rng) {
    MotionSpec spec;
    spec.motion_type = type;
    spec.world = r.world;

    const double length = rng.uniform(r.length);
    const double width = r.shape_kind == ShapeKind::Circle ? length : length * rng.uniform(r.aspect);
    spec.shape = {r.shape_kind, length, width};

    PhysState z;
    set_geometry(z, spec.shape);
    z[kX] = rng.uniform(r.x);
    z[kY] = rng.uniform(r.y);
    z[kVx] = rng.uniform(r.vx);
    z[kVy] = rng.uniform(r.vy);
    z[kTheta] = rng.uniform(r.theta);
    z[kOmega] = rng.uniform(r.omega);

    if (type == MotionType::Circular) {
        const Vec2 c = pivot_of(r.world);
        const double radius = rng.uniform(r.radius);
        const double phase = rng.uniform(r.phase);
        z[kX] = c.x + radius * std::cos(phase);
        z[kY] = c.y + radius * std::sin(phase);
        z[kTheta] += phase;  // bar stays radially aligned
    } else if (type == MotionType::SlopeSliding) {
        const double alpha = r.world.param("slope_angle", 0.35);
        const double speed = z.vx();
        z[kVx] = speed * std::cos(alpha);
        z[kVy] = -speed * std::sin(alpha);
        z[kTheta] += -alpha;
    } else if (type == MotionType::DampedOscillation) {
        spec.world.motion_params["rod_length"] = rng.uniform(r.radius);
    }
    spec.initial = z;
    spec.initial = analytic_state(spec, 0.0);
    return spec;
}

} // namespace

std::vector<MotionSpec> sample_dataset(MotionType type, std::size_t n, std::uint64_t seed,
                                       const SamplingRanges& ranges) {
    ranges.world.validate();
    std::vector<MotionSpec> specs(n);
    parallel_for(n, [&](std::size_t i) {
        Rng rng(stream_seed(seed, i));
        std::string last_error;
        for (int attempt = 0; attempt < 1000; ++attempt) {
            MotionSpec spec = draw_spec(type, ranges, rng);
            try {
                check_motion_spec(spec);
                specs[i] = std::move(spec);
                return;
            } catch (const DataError& e) {
                last_error = e.what();
            }
        }
        throw DataError("sample_dataset: no spec satisfying containment after 1000 attempts (" + last_error + ")");
    });
    return specs;
}

} // namespace nnd
