#include "nnd/pis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>
#include <json.hpp>

#include "nnd/encoder.hpp"
#include "nnd/errors.hpp"
#include "nnd/parallel.hpp"

namespace nnd {

namespace {

constexpr std::array<std::string_view, 10> kInvariantNames = {
    "vx", "v", "ax", "neg_ax", "ay", "vy", "omega", "omega_about_pivot", "delta_l", "delta_r",
};

std::vector<double> first_diff(std::span<const double> s, double fps, std::size_t lo, std::size_t hi) {
    // Forward differences for t in [lo, hi].
    std::vector<double> out;
    for (std::size_t t = lo; t <= hi; ++t) out.push_back((s[t + 1] - s[t]) * fps);
    return out;
}

std::vector<double> second_diff(std::span<const double> s, double fps, std::size_t lo, std::size_t hi) {
    std::vector<double> out;
    for (std::size_t t = lo; t <= hi; ++t) out.push_back((s[t + 1] - 2.0 * s[t] + s[t - 1]) * fps * fps);
    return out;
}

} // namespace

std::string_view to_string(InvariantKind kind) { return kInvariantNames[static_cast<std::size_t>(kind)]; }

InvariantKind invariant_from_string(std::string_view name) {
    for (std::size_t i = 0; i < kInvariantNames.size(); ++i) {
        if (kInvariantNames[i] == name) return static_cast<InvariantKind>(i);
    }
    throw ConfigError("unknown invariant '" + std::string(name) + "'");
}

std::vector<InvariantKind> invariants_for(MotionType type) {
    using K = InvariantKind;
    switch (type) {
    case MotionType::UniformVelocity: return {K::V};
    case MotionType::UniformAcceleration: return {K::Ax};
    case MotionType::Deceleration: return {K::NegAx};
    case MotionType::Parabolic: return {K::Vx, K::Ay};
    case MotionType::Motion3D: return {K::DeltaL, K::Vy};
    case MotionType::SlopeSliding: return {K::Ax, K::Ay};
    case MotionType::Circular: return {K::OmegaAboutPivot};
    case MotionType::Rotation: return {K::Omega};
    case MotionType::ParabolicWithRotation: return {K::Vx, K::Ay, K::Omega};
    case MotionType::DampedOscillation: return {K::Ay};
    case MotionType::SizeChanging: return {K::DeltaR};
    case MotionType::Deformation: return {K::DeltaL};
    }
    throw ConfigError("invariants_for: unknown motion type");
}

void PisConfig::validate() const {
    if (!(meters_per_pixel > 0.0)) throw ConfigError("meters_per_pixel must be > 0");
    if (smoothing_window < 1 || smoothing_window % 2 == 0) throw ConfigError("smoothing_window must be odd and >= 1");
    if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
    if (!(fps > 0.0)) throw ConfigError("fps must be > 0");
}

std::vector<double> moving_average(std::span<const double> x, int window) {
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
    const std::ptrdiff_t half = window / 2;
    std::vector<double> out(x.size());
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const std::ptrdiff_t h = std::min({half, i, n - 1 - i});
        double acc = 0.0;
        for (std::ptrdiff_t j = i - h; j <= i + h; ++j) acc += x[static_cast<std::size_t>(j)];
        out[static_cast<std::size_t>(i)] = acc / static_cast<double>(2 * h + 1);
    }
    return out;
}

Vec2 fit_circle_center(std::span<const Vec2> pts) {
    if (pts.size() < 3) throw DataError("fit_circle_center: need at least 3 points");
    // x^2 + y^2 + D x + E y + F = 0
    Eigen::MatrixXd a(static_cast<Eigen::Index>(pts.size()), 3);
    Eigen::VectorXd b(static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        a(r, 0) = pts[i].x;
        a(r, 1) = pts[i].y;
        a(r, 2) = 1.0;
        b(r) = -(pts[i].x * pts[i].x + pts[i].y * pts[i].y);
    }
    const auto qr = a.colPivHouseholderQr();
    if (qr.rank() < 3) throw DataError("fit_circle_center: degenerate (collinear) points");
    const Eigen::Vector3d sol = qr.solve(b);
    const Vec2 c{-0.5 * sol(0), -0.5 * sol(1)};
    if (!std::isfinite(c.x) || !std::isfinite(c.y)) throw DataError("fit_circle_center: degenerate (collinear) points");
    return c;
}

std::vector<double> extract_series(std::span<const Mask> masks, const PisConfig& cfg, InvariantKind kind) {
    cfg.validate();
    const std::size_t n = masks.size();
    const std::size_t w = static_cast<std::size_t>(cfg.smoothing_window);
    if (n < w + 2) {
        std::ostringstream os;
        os << "extract_series: " << n << " frames is too short for window " << w;
        throw DataError(os.str());
    }
    WorldConfig world;
    world.width_px = masks[0].width;
    world.height_px = masks[0].height;
    world.meters_per_pixel = cfg.meters_per_pixel;
    world.fps = cfg.fps;
    world.n_frames = static_cast<int>(n);

    std::vector<GeometryObs> obs(n);
    parallel_for(n, [&](std::size_t k) {
        try {
            obs[k] = encode_frame(masks[k], world);
        } catch (const DataError& e) {
            throw DataError(std::string(e.what()) + " at frame " + std::to_string(k));
        }
    });

    std::vector<double> primary(n), secondary(n);
    auto fill = [&](std::vector<double>& dst, auto&& f) {
        for (std::size_t k = 0; k < n; ++k) dst[k] = f(k);
    };
    using K = InvariantKind;
    switch (kind) {
    case K::Vx: case K::Ax: case K::NegAx: fill(primary, [&](std::size_t k) { return obs[k].centroid.x; }); break;
    case K::Vy: case K::Ay: fill(primary, [&](std::size_t k) { return obs[k].centroid.y; }); break;
    case K::V:
        fill(primary, [&](std::size_t k) { return obs[k].centroid.x; });
        fill(secondary, [&](std::size_t k) { return obs[k].centroid.y; });
        break;
    case K::Omega:
        for (std::size_t k = 0; k < n; ++k) {
            const bool round = obs[k].l < kRoundnessThreshold * obs[k].s;
            if (k == 0) {
                primary[k] = round ? 0.0 : obs[k].theta_raw;
            } else {
                primary[k] = round ? primary[k - 1] : unwrap_orientation(obs[k].theta_raw, primary[k - 1]);
            }
        }
        break;
    case K::OmegaAboutPivot: {
        Vec2 pivot;
        if (cfg.pivot) {
            pivot = *cfg.pivot;
        } else {
            std::vector<Vec2> pts(n);
            for (std::size_t k = 0; k < n; ++k) pts[k] = obs[k].centroid;
            pivot = fit_circle_center(pts);
        }
        const double two_pi = 2.0 * std::numbers::pi;
        for (std::size_t k = 0; k < n; ++k) {
            const double phi = std::atan2(obs[k].centroid.y - pivot.y, obs[k].centroid.x - pivot.x);
            primary[k] = k == 0 ? phi : phi + two_pi * std::round((primary[k - 1] - phi) / two_pi);
        }
        break;
    }
    case K::DeltaL: fill(primary, [&](std::size_t k) { return obs[k].l; }); break;
    case K::DeltaR: fill(primary, [&](std::size_t k) { return std::sqrt(obs[k].a / std::numbers::pi); }); break;
    }

    const auto sp = moving_average(primary, cfg.smoothing_window);
    const std::size_t h = w / 2;
    const std::size_t last = n - 1 - h;  // last fully smoothed sample
    switch (kind) {
    case K::Ax: return second_diff(sp, cfg.fps, h + 1, last - 1);
    case K::Ay: return second_diff(sp, cfg.fps, h + 1, last - 1);
    case K::NegAx: {
        auto a = second_diff(sp, cfg.fps, h + 1, last - 1);
        for (double& v : a) v = -v;
        return a;
    }
    case K::V: {
        const auto ss = moving_average(secondary, cfg.smoothing_window);
        auto vx = first_diff(sp, cfg.fps, h, last - 1);
        const auto vy = first_diff(ss, cfg.fps, h, last - 1);
        for (std::size_t i = 0; i < vx.size(); ++i) vx[i] = std::hypot(vx[i], vy[i]);
        return vx;
    }
    default: return first_diff(sp, cfg.fps, h, last - 1);
    }
}

double pis(std::span<const double> series, double eps) {
    if (series.size() < 2) throw DataError("pis: need at least 2 samples");
    double mean = 0.0;
    for (double v : series) mean += v;
    mean /= static_cast<double>(series.size());
    double var = 0.0;
    for (double v : series) var += (v - mean) * (v - mean);
    const double sigma = std::sqrt(var / static_cast<double>(series.size()));
    return 1.0 / (1.0 + sigma / (std::abs(mean) + eps));
}

double lower_median(std::vector<double> values) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    return values[(values.size() - 1) / 2];
}

PisReport score_videos(std::span<const std::vector<Mask>> videos, MotionType type, const PisConfig& cfg) {
    cfg.validate();
    if (videos.empty()) throw DataError("score_videos: no videos");
    PisReport report;
    report.motion_type = type;
    report.invariants = invariants_for(type);
    report.videos.resize(videos.size());
    parallel_for(videos.size(), [&](std::size_t i) {
        VideoScore& vs = report.videos[i];
        vs.index = i;
        try {
            for (InvariantKind k : report.invariants) vs.scores.push_back(pis(extract_series(videos[i], cfg, k), cfg.eps));
        } catch (const Error& e) {
            vs.ok = false;
            vs.error = e.what();
            vs.scores.clear();
        }
    });
    for (std::size_t j = 0; j < report.invariants.size(); ++j) {
        std::vector<double> col;
        for (const auto& v : report.videos) {
            if (v.ok) col.push_back(v.scores[j]);
        }
        report.medians.push_back(lower_median(std::move(col)));
    }
    return report;
}

std::string pis_report_json(const PisReport& r) {
    using nlohmann::json;
    json j;
    j["format"] = "nnd-pis-report";
    j["version"] = 1;
    j["motion_type"] = std::string(to_string(r.motion_type));
    json inv = json::array();
    for (auto k : r.invariants) inv.push_back(std::string(to_string(k)));
    j["invariants"] = inv;
    json vids = json::array();
    for (const auto& v : r.videos) {
        json jv;
        jv["index"] = v.index;
        jv["ok"] = v.ok;
        if (v.ok) {
            json scores = json::object();
            for (std::size_t i = 0; i < r.invariants.size(); ++i) scores[std::string(to_string(r.invariants[i]))] = v.scores[i];
            jv["scores"] = scores;
        } else {
            jv["error"] = v.error;
        }
        vids.push_back(jv);
    }
    j["videos"] = vids;
    json med = json::object();
    for (std::size_t i = 0; i < r.invariants.size(); ++i) {
        const std::string key(to_string(r.invariants[i]));
        if (std::isnan(r.medians[i])) {
            med[key] = nullptr;
        } else {
            med[key] = r.medians[i];
        }
    }
    j["medians"] = med;
    return j.dump(1) + "\n";
}

std::string pis_report_csv(const PisReport& r) {
    std::ostringstream os;
    os.precision(9);
    os << "motion,invariant,video,score\n";
    const std::string motion(to_string(r.motion_type));
    for (std::size_t i = 0; i < r.invariants.size(); ++i) {
        const std::string inv(to_string(r.invariants[i]));
        for (const auto& v : r.videos) {
            os << motion << ',' << inv << ',' << v.index << ',';
            if (v.ok) {
                os << v.scores[i];
            } else {
                os << "failed";
            }
            os << '\n';
        }
        os << motion << ',' << inv << ",median,";
        if (std::isnan(r.medians[i])) {
            os << "none";
        } else {
            os << r.medians[i];
        }
        os << '\n';
    }
    return os.str();
}

} // namespace nnd
