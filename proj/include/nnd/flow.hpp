#pragma once

// Dense optical flow from a state sequence: every pixel of the object at
// frame k is carried by the pose/size change between frames k and k+1.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nnd/core.hpp"
#include "nnd/shape.hpp"

namespace nnd {

/// Per-pixel displacement in raster pixels (+u right, +v down), row-major.
struct FlowField {
    int width = 0;
    int height = 0;
    std::vector<double> u;
    std::vector<double> v;

    FlowField() = default;
    FlowField(int w, int h)
        : width(w), height(h), u(static_cast<std::size_t>(w) * h, 0.0), v(static_cast<std::size_t>(w) * h, 0.0) {}

    std::size_t index(int col, int row) const { return static_cast<std::size_t>(row) * width + col; }
    bool finite() const;
    bool operator==(const FlowField&) const = default;
};

/// Source pixel p maps to A(p): translate by the centroid displacement, rotate
/// by the change in theta about the source centroid, and scale by
/// (l1/l0, s1/s0) along the object's own axes.
Vec2 flow_map(Vec2 p_px, const PhysState& from, const PhysState& to, const WorldConfig& cfg);

/// One field per consecutive state pair; zero outside the frame-k mask.
std::vector<FlowField> states_to_flow(std::span<const PhysState> states, ShapeKind shape, const WorldConfig& cfg);

/// f x f block average divided by f (edge blocks replicate the border), then
/// sums of consecutive groups of `stride` fields; a short final group is kept.
std::vector<FlowField> downsample_flow(std::span<const FlowField> flows, int spatial_factor, int temporal_stride);

/// Middlebury layout; values are stored as float32.
void write_flo(const FlowField& flow, const std::filesystem::path& path);
FlowField read_flo(const std::filesystem::path& path);
inline constexpr float kFloMagic = 202021.25f;

/// Forward-splats the mask along the flow with bilinear weights; target
/// pixels collecting weight >= 0.5 are set.
Mask advect_mask(const Mask& mask, const FlowField& flow);

double iou(const Mask& a, const Mask& b);

struct FlowManifest {
    std::vector<std::string> files;
    std::vector<int> source_frames;  // first source frame index of each output field
    int spatial_factor = 1;
    int temporal_stride = 1;
    std::string checkpoint_hash;     // empty when the states did not come from a model
};

void write_flow_manifest(const FlowManifest& manifest, const std::filesystem::path& path);

} // namespace nnd
