#include "nnd/encoder.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "nnd/errors.hpp"
#include "nnd/kernels.hpp"
#include "nnd/parallel.hpp"

namespace nnd {

GeometryObs encode_frame(const Mask& mask, const WorldConfig& cfg) {
    if (mask.width != cfg.width_px || mask.height != cfg.height_px) {
        throw DataError("encode_frame: mask size does not match the world");
    }
    const auto m = kernels::active().mask_moments(mask.data.data(), static_cast<std::size_t>(mask.width),
                                                  static_cast<std::size_t>(mask.height));
    if (m.m00 == 0) throw DataError("encode_frame: object lost (empty mask)");

    const double n = static_cast<double>(m.m00);
    const double cc = m.m10 / n;
    const double cr = m.m01 / n;
    // Central second moments in pixel units; exact integer sums keep these stable.
    const double mu20 = (static_cast<double>(m.m20) - cc * m.m10) / n;
    const double mu02 = (static_cast<double>(m.m02) - cr * m.m01) / n;
    const double mu11 = (static_cast<double>(m.m11) - cc * m.m01) / n;

    // Physics y is flipped relative to rows, so the xy covariance changes sign.
    const double cxx = mu20, cyy = mu02, cxy = -mu11;
    const double half_tr = 0.5 * (cxx + cyy);
    const double disc = std::sqrt(0.25 * (cxx - cyy) * (cxx - cyy) + cxy * cxy);
    const double lam_max = std::max(half_tr + disc, 0.0);
    const double lam_min = std::max(half_tr - disc, 0.0);

    double theta = 0.5 * std::atan2(2.0 * cxy, cxx - cyy);
    if (theta <= -std::numbers::pi / 2) theta += std::numbers::pi;

    const double mpp = cfg.meters_per_pixel;
    GeometryObs obs;
    obs.centroid = px_to_m({cc, cr}, cfg);
    obs.theta_raw = theta;
    obs.l = 4.0 * std::sqrt(lam_max) * mpp;
    obs.s = 4.0 * std::sqrt(lam_min) * mpp;
    obs.a = n * mpp * mpp;
    return obs;
}

double unwrap_orientation(double theta_raw, double previous) {
    const double pi = std::numbers::pi;
    const double k = std::round((previous - theta_raw) / pi);
    return theta_raw + k * pi;
}

std::vector<double> differentiate(std::span<const double> v, double dt) {
    const std::size_t n = v.size();
    if (n < 3) throw DataError("differentiate: need at least 3 samples");
    std::vector<double> d(n);
    d[0] = (v[1] - v[0]) / dt;
    for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (v[i + 1] - v[i - 1]) / (2.0 * dt);
    d[n - 1] = (v[n - 1] - v[n - 2]) / dt;
    return d;
}

std::vector<PhysState> encode_sequence(std::span<const Mask> masks, std::span<const double> timestamps,
                                       const WorldConfig& cfg) {
    const std::size_t n = masks.size();
    if (n != timestamps.size()) throw DataError("encode_sequence: masks and timestamps differ in length");
    if (n < 3) throw DataError("encode_sequence: need at least 3 frames");
    const double dt = (timestamps[n - 1] - timestamps[0]) / static_cast<double>(n - 1);
    if (!(dt > 0.0)) throw DataError("encode_sequence: timestamps must increase");
    for (std::size_t i = 1; i < n; ++i) {
        if (std::abs((timestamps[i] - timestamps[i - 1]) - dt) > 1e-6 * dt) {
            std::ostringstream os;
            os << "encode_sequence: non-uniform timestamps at frame " << i;
            throw DataError(os.str());
        }
    }

    std::vector<GeometryObs> obs(n);
    parallel_for(n, [&](std::size_t i) {
        try {
            obs[i] = encode_frame(masks[i], cfg);
        } catch (const DataError& e) {
            std::ostringstream os;
            os << e.what() << " at frame " << i;
            throw DataError(os.str());
        }
    });

    std::vector<double> xs(n), ys(n), thetas(n);
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = obs[i].centroid.x;
        ys[i] = obs[i].centroid.y;
        const bool round = obs[i].l < kRoundnessThreshold * obs[i].s;
        if (i == 0) {
            thetas[i] = round ? 0.0 : obs[i].theta_raw;
        } else {
            thetas[i] = round ? thetas[i - 1] : unwrap_orientation(obs[i].theta_raw, thetas[i - 1]);
        }
    }
    const auto vx = differentiate(xs, dt);
    const auto vy = differentiate(ys, dt);
    const auto omega = differentiate(thetas, dt);

    std::vector<PhysState> states(n);
    for (std::size_t i = 0; i < n; ++i) {
        PhysState& z = states[i];
        z[kX] = xs[i];
        z[kY] = ys[i];
        z[kVx] = vx[i];
        z[kVy] = vy[i];
        z[kTheta] = thetas[i];
        z[kOmega] = omega[i];
        z[kS] = obs[i].s;
        z[kL] = obs[i].l;
        z[kA] = obs[i].a;
    }
    return states;
}

} // namespace nnd
