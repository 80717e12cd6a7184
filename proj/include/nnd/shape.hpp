#pragma once

#include <string_view>

#include "nnd/core.hpp"

namespace nnd {

enum class ShapeKind { Circle, Rectangle, Ellipse, RoundedBar };

std::string_view to_string(ShapeKind kind);
ShapeKind shape_kind_from_string(std::string_view name);

/// Physical outline in meters. length is measured along the object's major
/// axis; a Circle has length == width == diameter. A RoundedBar is a
/// rectangle with semicircular caps (a stadium) of overall length `length`.
struct ShapeProto {
    ShapeKind kind = ShapeKind::Ellipse;
    double length = 0.0;
    double width = 0.0;

    void validate() const;
    bool operator==(const ShapeProto&) const = default;
};

double shape_area(const ShapeProto& shape);

// The state's l and s are the full axes of the ellipse with the same second
// moments as the shape (what moment analysis of a mask recovers). For circles
// and ellipses these are the true dimensions; a Rectangle's l is 2/sqrt(3)
// times its length.
struct EquivalentAxes {
    double l = 0.0;
    double s = 0.0;
};

EquivalentAxes equivalent_axes(const ShapeProto& shape);
/// Inverse of equivalent_axes for a given kind.
ShapeProto shape_from_axes(ShapeKind kind, double l, double s);

/// Point-in-shape test in the object frame (u along the major axis).
bool shape_contains(const ShapeProto& shape, double u, double v);
/// Radius of the smallest origin-centred circle enclosing the shape.
double bounding_radius(const ShapeProto& shape);

/// State fields (s, l, a) for a shape.
void set_geometry(PhysState& state, const ShapeProto& shape);

} // namespace nnd
