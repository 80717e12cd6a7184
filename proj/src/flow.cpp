#include "nnd/flow.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "nnd/errors.hpp"
#include "nnd/parallel.hpp"
#include "nnd/simulator.hpp"

namespace nnd {

static_assert(std::endian::native == std::endian::little, ".flo I/O assumes a little-endian host");

bool FlowField::finite() const {
    return std::all_of(u.begin(), u.end(), [](double x) { return std::isfinite(x); }) &&
           std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

namespace {

bool rigid_translation(const PhysState& a, const PhysState& b) {
    return a.theta() == b.theta() && a.l() == b.l() && a.s() == b.s();
}

} // namespace

Vec2 flow_map(Vec2 p, const PhysState& from, const PhysState& to, const WorldConfig& cfg) {
    const Vec2 c0 = m_to_px({from.x(), from.y()}, cfg);
    const Vec2 c1 = m_to_px({to.x(), to.y()}, cfg);
    if (rigid_translation(from, to)) return {p.x + (c1.x - c0.x), p.y + (c1.y - c0.y)};

    const double rl = to.l() / from.l();
    const double rs = to.s() / from.s();
    // Offsets from the centroid in pixel units with y pointing up.
    const double dx = p.x - c0.x;
    const double dy = c0.y - p.y;
    const double ct0 = std::cos(from.theta()), st0 = std::sin(from.theta());
    const double u = (dx * ct0 + dy * st0) * rl;
    const double w = (-dx * st0 + dy * ct0) * rs;
    const double ct1 = std::cos(to.theta()), st1 = std::sin(to.theta());
    const double dx1 = u * ct1 - w * st1;
    const double dy1 = u * st1 + w * ct1;
    return {c1.x + dx1, c1.y - dy1};
}

std::vector<FlowField> states_to_flow(std::span<const PhysState> states, ShapeKind shape, const WorldConfig& cfg) {
    cfg.validate();
    if (states.size() < 2) throw DataError("states_to_flow: need at least 2 states");
    for (std::size_t k = 0; k < states.size(); ++k) {
        require_finite(states[k], "states_to_flow");
        if (!(states[k].s() > 0.0) || !(states[k].l() > 0.0)) {
            throw DataError("states_to_flow: nonpositive size at frame " + std::to_string(k));
        }
    }
    std::vector<FlowField> out(states.size() - 1);
    parallel_for(out.size(), [&](std::size_t k) {
        Mask mask;
        try {
            mask = rasterize(shape, states[k], cfg);
        } catch (const DataError&) {
            throw DataError("states_to_flow: object out of frame at frame " + std::to_string(k));
        }
        FlowField f(cfg.width_px, cfg.height_px);
        for (int row = 0; row < cfg.height_px; ++row) {
            for (int col = 0; col < cfg.width_px; ++col) {
                if (!mask.at(col, row)) continue;
                const Vec2 q = flow_map({static_cast<double>(col), static_cast<double>(row)}, states[k], states[k + 1], cfg);
                const std::size_t i = f.index(col, row);
                f.u[i] = q.x - col;
                f.v[i] = q.y - row;
            }
        }
        out[k] = std::move(f);
    });
    return out;
}

std::vector<FlowField> downsample_flow(std::span<const FlowField> flows, int factor, int stride) {
    if (factor < 1 || stride < 1) throw ConfigError("downsample_flow: factors must be >= 1");
    std::vector<FlowField> spatial(flows.size());
    for (std::size_t k = 0; k < flows.size(); ++k) {
        const FlowField& f = flows[k];
        if (factor == 1) {
            spatial[k] = f;
            continue;
        }
        const int w = (f.width + factor - 1) / factor;
        const int h = (f.height + factor - 1) / factor;
        FlowField d(w, h);
        const double inv = 1.0 / (static_cast<double>(factor) * factor * factor);
        for (int br = 0; br < h; ++br) {
            for (int bc = 0; bc < w; ++bc) {
                double su = 0.0, sv = 0.0;
                for (int r = br * factor; r < (br + 1) * factor; ++r) {
                    const int rr = std::min(r, f.height - 1);
                    for (int c = bc * factor; c < (bc + 1) * factor; ++c) {
                        const std::size_t i = f.index(std::min(c, f.width - 1), rr);
                        su += f.u[i];
                        sv += f.v[i];
                    }
                }
                d.u[d.index(bc, br)] = su * inv;
                d.v[d.index(bc, br)] = sv * inv;
            }
        }
        spatial[k] = std::move(d);
    }
    if (stride == 1) return spatial;

    std::vector<FlowField> out;
    for (std::size_t k = 0; k < spatial.size(); k += static_cast<std::size_t>(stride)) {
        FlowField acc = spatial[k];
        const std::size_t end = std::min(spatial.size(), k + static_cast<std::size_t>(stride));
        for (std::size_t j = k + 1; j < end; ++j) {
            for (std::size_t i = 0; i < acc.u.size(); ++i) {
                acc.u[i] += spatial[j].u[i];
                acc.v[i] += spatial[j].v[i];
            }
        }
        out.push_back(std::move(acc));
    }
    return out;
}

void write_flo(const FlowField& flow, const std::filesystem::path& path) {
    if (flow.width < 1 || flow.height < 1) throw DataError("write_flo: empty flow");
    if (!flow.finite()) throw DataError("write_flo: non-finite flow");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    const std::int32_t dims[2] = {flow.width, flow.height};
    out.write(reinterpret_cast<const char*>(&kFloMagic), sizeof kFloMagic);
    out.write(reinterpret_cast<const char*>(dims), sizeof dims);
    std::vector<float> buf(flow.u.size() * 2);
    for (std::size_t i = 0; i < flow.u.size(); ++i) {
        buf[2 * i] = static_cast<float>(flow.u[i]);
        buf[2 * i + 1] = static_cast<float>(flow.v[i]);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw DataError("write failed for " + path.string());
}

FlowField read_flo(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    float magic = 0.0f;
    std::int32_t dims[2] = {0, 0};
    in.read(reinterpret_cast<char*>(&magic), sizeof magic);
    in.read(reinterpret_cast<char*>(dims), sizeof dims);
    if (!in || magic != kFloMagic) throw DataError(path.string() + ": not a .flo file");
    if (dims[0] < 1 || dims[1] < 1 || dims[0] > (1 << 16) || dims[1] > (1 << 16)) {
        throw DataError(path.string() + ": implausible .flo dimensions");
    }
    FlowField f(dims[0], dims[1]);
    std::vector<float> buf(f.u.size() * 2);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw DataError(path.string() + ": truncated .flo file");
    for (std::size_t i = 0; i < f.u.size(); ++i) {
        f.u[i] = buf[2 * i];
        f.v[i] = buf[2 * i + 1];
    }
    return f;
}

Mask advect_mask(const Mask& mask, const FlowField& flow) {
    if (mask.width != flow.width || mask.height != flow.height) throw DataError("advect_mask: size mismatch");
    std::vector<double> acc(mask.data.size(), 0.0);
    auto splat = [&](int col, int row, double w) {
        if (col >= 0 && row >= 0 && col < mask.width && row < mask.height) {
            acc[static_cast<std::size_t>(row) * mask.width + col] += w;
        }
    };
    for (int row = 0; row < mask.height; ++row) {
        for (int col = 0; col < mask.width; ++col) {
            if (!mask.at(col, row)) continue;
            const std::size_t i = flow.index(col, row);
            const double qx = col + flow.u[i], qy = row + flow.v[i];
            const int c0 = static_cast<int>(std::floor(qx)), r0 = static_cast<int>(std::floor(qy));
            const double fx = qx - c0, fy = qy - r0;
            splat(c0, r0, (1 - fx) * (1 - fy));
            splat(c0 + 1, r0, fx * (1 - fy));
            splat(c0, r0 + 1, (1 - fx) * fy);
            splat(c0 + 1, r0 + 1, fx * fy);
        }
    }
    Mask out(mask.width, mask.height);
    for (std::size_t i = 0; i < acc.size(); ++i) out.data[i] = acc[i] >= 0.5 ? 1 : 0;
    return out;
}

double iou(const Mask& a, const Mask& b) {
    if (a.width != b.width || a.height != b.height) throw DataError("iou: size mismatch");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const bool x = a.data[i] != 0, y = b.data[i] != 0;
        inter += x && y;
        uni += x || y;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

void write_flow_manifest(const FlowManifest& m, const std::filesystem::path& path) {
    nlohmann::json j;
    j["format"] = "nnd-flow";
    j["version"] = 1;
    j["files"] = m.files;
    j["source_frames"] = m.source_frames;
    j["spatial_factor"] = m.spatial_factor;
    j["temporal_stride"] = m.temporal_stride;
    j["checkpoint_hash"] = m.checkpoint_hash;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(1) << '\n';
}

} // namespace nnd
