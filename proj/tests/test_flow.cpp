#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "nnd/errors.hpp"
#include "nnd/flow.hpp"
#include "nnd/shape.hpp"
#include "nnd/simulator.hpp"
#include "test_util.hpp"

using namespace nnd;

namespace {

// mpp = 1/128 keeps pixel/metric conversions exact in binary.
WorldConfig exact_world() {
    WorldConfig w;
    w.meters_per_pixel = 1.0 / 128.0;
    return w;
}

PhysState body(const WorldConfig& w, Vec2 centre_px, double theta, ShapeProto shape) {
    PhysState z;
    const Vec2 c = px_to_m(centre_px, w);
    z[kX] = c.x;
    z[kY] = c.y;
    z[kTheta] = theta;
    set_geometry(z, shape);
    return z;
}

const ShapeProto kBar{ShapeKind::Rectangle, 0.4, 0.15};

} // namespace

TEST_CASE("pure translation gives a constant flow on the mask and zero elsewhere") {
    const WorldConfig w = exact_world();
    const PhysState a = body(w, {100.0, 90.0}, 0.3, kBar);
    PhysState b = a;
    b[kX] += 3.0 * w.meters_per_pixel;
    const auto flows = states_to_flow(std::vector<PhysState>{a, b}, kBar.kind, w);
    REQUIRE(flows.size() == 1);
    const Mask m = rasterize(kBar.kind, a, w);
    for (int row = 0; row < w.height_px; ++row) {
        for (int col = 0; col < w.width_px; ++col) {
            const std::size_t i = flows[0].index(col, row);
            if (m.at(col, row)) {
                CHECK(flows[0].u[i] == 3.0);
                CHECK(flows[0].v[i] == 0.0);
            } else {
                CHECK(flows[0].u[i] == 0.0);
                CHECK(flows[0].v[i] == 0.0);
            }
        }
    }
}

TEST_CASE("rotation and scaling about the centroid") {
    const WorldConfig w;
    const Vec2 c{150.3, 110.8};
    const PhysState a = body(w, c, 0.2, kBar);
    SUBCASE("rotation") {
        const double d = 0.35;
        PhysState b = a;
        b[kTheta] += d;
        for (double px = 120; px < 180; px += 3.7) {
            for (double py = 90; py < 130; py += 4.1) {
                const Vec2 q = flow_map({px, py}, a, b, w);
                const double dx = px - c.x, dyu = c.y - py;
                const double rx = dx * std::cos(d) - dyu * std::sin(d), ryu = dx * std::sin(d) + dyu * std::cos(d);
                CHECK(std::abs((q.x - px) - (rx - dx)) < 1e-9);
                CHECK(std::abs((q.y - py) - (-ryu + dyu)) < 1e-9);
            }
        }
    }
    SUBCASE("uniform scale by 1.1") {
        PhysState b = a;
        b[kL] *= 1.1;
        b[kS] *= 1.1;
        for (double px = 120; px < 180; px += 3.7) {
            for (double py = 90; py < 130; py += 4.1) {
                const Vec2 q = flow_map({px, py}, a, b, w);
                CHECK(std::abs((q.x - px) - 0.1 * (px - c.x)) < 1e-9);
                CHECK(std::abs((q.y - py) - 0.1 * (py - c.y)) < 1e-9);
            }
        }
    }
}

TEST_CASE("zero motion gives all-zero flows") {
    const WorldConfig w;
    const PhysState a = body(w, {160, 120}, 0.7, kBar);
    for (const auto& f : states_to_flow(std::vector<PhysState>(5, a), kBar.kind, w)) {
        for (double x : f.u) CHECK(x == 0.0);
        for (double x : f.v) CHECK(x == 0.0);
    }
}

TEST_CASE("flow values are invariant to translating the whole scene") {
    const WorldConfig w = exact_world();
    const PhysState a = body(w, {100, 100}, 0.4, kBar);
    PhysState b = a;
    b[kX] += 2.0 * w.meters_per_pixel;
    b[kY] -= 1.0 * w.meters_per_pixel;
    const double shift = 17.0 * w.meters_per_pixel;
    PhysState a2 = a, b2 = b;
    a2[kX] += shift;
    b2[kX] += shift;
    const auto f1 = states_to_flow(std::vector<PhysState>{a, b}, kBar.kind, w)[0];
    const auto f2 = states_to_flow(std::vector<PhysState>{a2, b2}, kBar.kind, w)[0];
    const Mask m = rasterize(kBar.kind, a, w);
    for (int row = 0; row < w.height_px; ++row) {
        for (int col = 0; col + 17 < w.width_px; ++col) {
            if (!m.at(col, row)) continue;
            CHECK(f1.u[f1.index(col, row)] == f2.u[f2.index(col + 17, row)]);
            CHECK(f1.v[f1.index(col, row)] == f2.v[f2.index(col + 17, row)]);
        }
    }
}

TEST_CASE("downsampling") {
    FlowField c(64, 32);
    std::fill(c.u.begin(), c.u.end(), 8.0);
    const std::vector<FlowField> one{c};
    CHECK(downsample_flow(one, 1, 1)[0] == c);
    const auto d = downsample_flow(one, 8, 1);
    REQUIRE(d.size() == 1);
    CHECK(d[0].width == 8);
    CHECK(d[0].height == 4);
    for (double x : d[0].u) CHECK(x == 1.0);
    for (double x : d[0].v) CHECK(x == 0.0);

    const WorldConfig w = exact_world();
    std::vector<PhysState> states;
    for (int k = 0; k < 7; ++k) {
        PhysState z = body(w, {60.0 + 2.0 * k, 100.0 + k}, 0.0, {ShapeKind::Circle, 0.2, 0.2});
        states.push_back(z);
    }
    const auto flows = states_to_flow(states, ShapeKind::Circle, w);
    const auto grouped = downsample_flow(flows, 1, 2);
    REQUIRE(grouped.size() == 3);
    const Mask m0 = rasterize(ShapeKind::Circle, states[0], w);
    const Mask m1 = rasterize(ShapeKind::Circle, states[1], w);
    // Pixels on the mask in both frames of the pair see the 2-frame displacement.
    for (int row = 0; row < w.height_px; ++row) {
        for (int col = 0; col < w.width_px; ++col) {
            if (!m0.at(col, row) || !m1.at(col, row)) continue;
            CHECK(grouped[0].u[grouped[0].index(col, row)] == 4.0);
            CHECK(grouped[0].v[grouped[0].index(col, row)] == 2.0);
        }
    }
    CHECK_THROWS_AS(downsample_flow(one, 0, 1), ConfigError);
}

TEST_CASE(".flo format") {
    test::TempDir dir("flo");
    FlowField z(2, 2);
    write_flo(z, dir / "z.flo");
    CHECK(std::filesystem::file_size(dir / "z.flo") == 44);
    std::ifstream in(dir / "z.flo", std::ios::binary);
    char magic[4];
    in.read(magic, 4);
    CHECK(std::memcmp(magic, "PIEH", 4) == 0);

    FlowField f(37, 11);
    for (std::size_t i = 0; i < f.u.size(); ++i) {
        f.u[i] = static_cast<float>(std::sin(0.37 * i) * 5.0);
        f.v[i] = static_cast<float>(std::cos(1.3 * i) * -3.0);
    }
    write_flo(f, dir / "f.flo");
    CHECK(read_flo(dir / "f.flo") == f);

    std::ofstream(dir / "bad.flo", std::ios::binary) << "nope";
    CHECK_THROWS_AS(read_flo(dir / "bad.flo"), DataError);
}

TEST_CASE("advected masks match the next frame for every motion type") {
    for (MotionType type : kAllMotionTypes) {
        CAPTURE(to_string(type));
        const auto specs = sample_dataset(type, 2, 13, default_ranges(type));
        for (const auto& s : specs) {
            const Trajectory t = simulate(s);
            const auto flows = states_to_flow(t.states, s.shape.kind, s.world);
            REQUIRE(flows.size() == t.states.size() - 1);
            double worst = 1.0;
            for (std::size_t k = 0; k < flows.size(); ++k) {
                worst = std::min(worst, iou(advect_mask(t.masks[k], flows[k]), t.masks[k + 1]));
            }
            CHECK(worst >= 0.95);
        }
    }
}
