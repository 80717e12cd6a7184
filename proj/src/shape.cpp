#include "nnd/shape.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "nnd/errors.hpp"

namespace nnd {

namespace {

constexpr std::array<std::string_view, 4> kShapeNames = {"circle", "rectangle", "ellipse", "rounded_bar"};

// Second moments of a stadium with half straight length a and cap radius b.
struct StadiumMoments {
    double area, ixx, iyy;
};

StadiumMoments stadium_moments(double a, double b) {
    const double pi = std::numbers::pi;
    const double area = 4.0 * a * b + pi * b * b;
    const double ixx = 4.0 / 3.0 * a * a * a * b + pi * a * a * b * b + 8.0 / 3.0 * a * b * b * b + pi * b * b * b * b / 4.0;
    const double iyy = 4.0 / 3.0 * a * b * b * b + pi * b * b * b * b / 4.0;
    return {area, ixx, iyy};
}

} // namespace

std::string_view to_string(ShapeKind kind) { return kShapeNames.at(static_cast<std::size_t>(kind)); }

ShapeKind shape_kind_from_string(std::string_view name) {
    for (std::size_t i = 0; i < kShapeNames.size(); ++i) {
        if (kShapeNames[i] == name) return static_cast<ShapeKind>(i);
    }
    throw ConfigError("unknown shape kind '" + std::string(name) + "'");
}

void ShapeProto::validate() const {
    if (!(length > 0.0) || !(width > 0.0) || !std::isfinite(length) || !std::isfinite(width)) {
        throw DataError("shape: dimensions must be positive");
    }
    if (width > length * (1.0 + 1e-12)) throw DataError("shape: width exceeds length");
    if (kind == ShapeKind::Circle && std::abs(length - width) > 1e-12 * length) {
        throw DataError("shape: circle needs length == width");
    }
}

double shape_area(const ShapeProto& shape) {
    const double pi = std::numbers::pi;
    switch (shape.kind) {
    case ShapeKind::Circle:
    case ShapeKind::Ellipse: return pi / 4.0 * shape.length * shape.width;
    case ShapeKind::Rectangle: return shape.length * shape.width;
    case ShapeKind::RoundedBar: {
        const double b = shape.width / 2.0;
        const double a = shape.length / 2.0 - b;
        return 4.0 * a * b + pi * b * b;
    }
    }
    return 0.0;
}

EquivalentAxes equivalent_axes(const ShapeProto& shape) {
    switch (shape.kind) {
    case ShapeKind::Circle:
    case ShapeKind::Ellipse: return {shape.length, shape.width};
    case ShapeKind::Rectangle: {
        const double k = 2.0 / std::sqrt(3.0);
        return {k * shape.length, k * shape.width};
    }
    case ShapeKind::RoundedBar: {
        const double b = shape.width / 2.0;
        const auto m = stadium_moments(shape.length / 2.0 - b, b);
        return {4.0 * std::sqrt(m.ixx / m.area), 4.0 * std::sqrt(m.iyy / m.area)};
    }
    }
    return {};
}

ShapeProto shape_from_axes(ShapeKind kind, double l, double s) {
    if (!(l > 0.0) || !(s > 0.0) || !std::isfinite(l) || !std::isfinite(s)) {
        throw DataError("shape: degenerate axes (s and l must be positive)");
    }
    switch (kind) {
    case ShapeKind::Circle: {
        const double d = 0.5 * (l + s);
        return {kind, d, d};
    }
    case ShapeKind::Ellipse: return {kind, l, s};
    case ShapeKind::Rectangle: {
        const double k = std::sqrt(3.0) / 2.0;
        return {kind, k * l, k * s};
    }
    case ShapeKind::RoundedBar: {
        // Aspect a/b from the moment ratio (monotone in a/b), then scale.
        const double target = (l / s) * (l / s);
        auto ratio = [](double k) {
            const auto m = stadium_moments(k, 1.0);
            return m.ixx / m.iyy;
        };
        double lo = 0.0, hi = 1.0;
        while (ratio(hi) < target) hi *= 2.0;
        for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
            const double mid = 0.5 * (lo + hi);
            (ratio(mid) < target ? lo : hi) = mid;
        }
        const double k = 0.5 * (lo + hi);
        const auto m = stadium_moments(k, 1.0);
        const double b = s / (4.0 * std::sqrt(m.iyy / m.area));
        return {kind, 2.0 * b * (k + 1.0), 2.0 * b};
    }
    }
    return {};
}

bool shape_contains(const ShapeProto& shape, double u, double v) {
    const double hl = shape.length / 2.0;
    const double hw = shape.width / 2.0;
    switch (shape.kind) {
    case ShapeKind::Circle: return u * u + v * v <= hl * hl;
    case ShapeKind::Ellipse: return (u / hl) * (u / hl) + (v / hw) * (v / hw) <= 1.0;
    case ShapeKind::Rectangle: return std::abs(u) <= hl && std::abs(v) <= hw;
    case ShapeKind::RoundedBar: {
        const double a = hl - hw;
        const double du = std::abs(u) - a;
        if (du <= 0.0) return std::abs(v) <= hw;
        return du * du + v * v <= hw * hw;
    }
    }
    return false;
}

double bounding_radius(const ShapeProto& shape) {
    if (shape.kind == ShapeKind::Rectangle) return 0.5 * std::hypot(shape.length, shape.width);
    return 0.5 * shape.length;
}

void set_geometry(PhysState& state, const ShapeProto& shape) {
    const auto axes = equivalent_axes(shape);
    state[kL] = axes.l;
    state[kS] = axes.s;
    state[kA] = shape_area(shape);
}

} // namespace nnd
