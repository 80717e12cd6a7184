#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <json.hpp>

#include "nnd/errors.hpp"
#include "nnd/pis.hpp"
#include "nnd/shape.hpp"
#include "nnd/simulator.hpp"

using namespace nnd;

namespace {

std::vector<std::vector<Mask>> simulated_videos(MotionType type, std::size_t n, std::uint64_t seed) {
    const auto specs = sample_dataset(type, n, seed, default_ranges(type));
    std::vector<std::vector<Mask>> out;
    for (const auto& s : specs) out.push_back(simulate(s, true).masks);
    return out;
}

// Shift a mask by whole pixels, filling with background.
Mask shifted(const Mask& m, int dx, int dy) {
    Mask out(m.width, m.height);
    for (int r = 0; r < m.height; ++r) {
        for (int c = 0; c < m.width; ++c) {
            const int sc = c - dx, sr = r - dy;
            if (sc >= 0 && sc < m.width && sr >= 0 && sr < m.height) out.at(c, r) = m.at(sc, sr);
        }
    }
    return out;
}

PisConfig config_for(MotionType type) {
    PisConfig cfg;
    cfg.meters_per_pixel = default_ranges(type).world.meters_per_pixel;
    cfg.fps = default_ranges(type).world.fps;
    return cfg;
}

} // namespace

TEST_CASE("invariant table") {
    using K = InvariantKind;
    CHECK(invariants_for(MotionType::UniformVelocity) == std::vector<K>{K::V});
    CHECK(invariants_for(MotionType::Parabolic) == std::vector<K>{K::Vx, K::Ay});
    CHECK(invariants_for(MotionType::ParabolicWithRotation) == std::vector<K>{K::Vx, K::Ay, K::Omega});
    CHECK(invariants_for(MotionType::Circular) == std::vector<K>{K::OmegaAboutPivot});
    CHECK(invariants_for(MotionType::Deceleration) == std::vector<K>{K::NegAx});
    CHECK(invariants_for(MotionType::SizeChanging) == std::vector<K>{K::DeltaR});
    for (int i = 0; i < 10; ++i) {
        const auto k = static_cast<K>(i);
        CHECK(invariant_from_string(to_string(k)) == k);
    }
    CHECK_THROWS_AS(invariant_from_string("jerk"), ConfigError);
}

TEST_CASE("pis worked examples") {
    const std::vector<double> flat{3, 3, 3, 3};
    CHECK(pis(flat) == 1.0);
    const std::vector<double> two{1, 3};
    CHECK(pis(two) == doctest::Approx(1.0 / (1.0 + 1.0 / (2.0 + 1e-5))).epsilon(1e-12));
    CHECK(pis(two) == doctest::Approx(0.666668).epsilon(1e-6));
    const std::vector<double> zeros{0, 0, 0};
    CHECK(pis(zeros) == 1.0);
    const std::vector<double> one{1.0};
    CHECK_THROWS_AS(pis(one), DataError);
}

TEST_CASE("pis range, scale invariance and monotonicity") {
    std::mt19937_64 gen(7);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> s(20);
        for (double& v : s) v = 1.5 + 3.0 * nd(gen);
        const double p = pis(s);
        CHECK(p > 0.0);
        CHECK(p <= 1.0);
        double mu = 0.0;
        for (double v : s) mu += v;
        mu /= static_cast<double>(s.size());
        if (std::abs(mu) >= 1.0) {
            auto scaled = s;
            for (double& v : scaled) v *= 7.5;
            CHECK(pis(scaled) == doctest::Approx(p).epsilon(1e-5));
        }
    }
    // Growing noise on a fixed mean lowers the score.
    std::vector<double> base(50);
    for (double& v : base) v = nd(gen);
    double prev = 1.0;
    for (double amp : {0.0, 0.1, 0.5, 1.0, 3.0}) {
        std::vector<double> s(base.size());
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = 2.0 + amp * base[i];
        const double p = pis(s);
        CHECK(p <= prev);
        prev = p;
    }
}

TEST_CASE("moving average edges") {
    const std::vector<double> x{0, 0, 0, 0, 10};
    const auto m = moving_average(x, 5);
    CHECK(m[0] == 0.0);
    CHECK(m[2] == doctest::Approx(2.0));
    CHECK(m[3] == doctest::Approx(10.0 / 3.0));
    CHECK(m[4] == 10.0);
    std::vector<double> lin(11);
    for (std::size_t i = 0; i < lin.size(); ++i) lin[i] = 3.0 * static_cast<double>(i) - 1.0;
    const auto ml = moving_average(lin, 5);
    for (std::size_t i = 0; i < lin.size(); ++i) CHECK(ml[i] == doctest::Approx(lin[i]).epsilon(1e-12));
    CHECK(moving_average(x, 1) == x);
}

TEST_CASE("config validation") {
    PisConfig c;
    c.smoothing_window = 4;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = PisConfig{};
    c.meters_per_pixel = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = PisConfig{};
    c.eps = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("extracted series match known kinematics") {
    const ShapeProto disc{ShapeKind::Circle, 0.1, 0.1};
    MotionSpec s;
    s.shape = disc;
    set_geometry(s.initial, disc);
    s.initial[kX] = 0.3;
    s.initial[kY] = 0.7;

    SUBCASE("uniform velocity") {
        s.motion_type = MotionType::UniformVelocity;
        s.initial[kVx] = 2.0;
        s.world.n_frames = 20;
        const auto t = simulate(s, true);
        const auto v = extract_series(t.masks, PisConfig{}, InvariantKind::V);
        for (double x : v) CHECK(x == doctest::Approx(2.0).epsilon(0.025));
    }
    SUBCASE("static object") {
        s.motion_type = MotionType::UniformVelocity;
        const auto t = simulate(s, true);
        const auto v = extract_series(t.masks, PisConfig{}, InvariantKind::Vx);
        for (double x : v) CHECK(x == 0.0);
        CHECK(pis(v) == 1.0);
    }
    SUBCASE("parabolic gravity") {
        s.motion_type = MotionType::Parabolic;
        s.world.meters_per_pixel = 0.045;
        s.shape = {ShapeKind::Circle, 1.6, 1.6};
        set_geometry(s.initial, s.shape);
        s.initial[kX] = 1.0;
        s.initial[kY] = 2.0;
        s.initial[kVx] = 2.0;
        s.initial[kVy] = 10.0;
        const auto t = simulate(s, true);
        PisConfig cfg;
        cfg.meters_per_pixel = 0.045;
        const auto ay = extract_series(t.masks, cfg, InvariantKind::Ay);
        double mean = 0.0;
        for (double a : ay) mean += a;
        mean /= static_cast<double>(ay.size());
        CHECK(std::abs(mean + 9.8) < 0.3);
    }
    SUBCASE("too few frames") {
        s.motion_type = MotionType::UniformVelocity;
        s.world.n_frames = 6;
        const auto t = simulate(s, true);
        CHECK_THROWS_AS(extract_series(t.masks, PisConfig{}, InvariantKind::V), DataError);
    }
}

TEST_CASE("lower median") {
    CHECK(lower_median({1, 2, 3, 4}) == 2.0);
    CHECK(lower_median({5, 1, 3}) == 3.0);
    CHECK(lower_median({4.5}) == 4.5);
    CHECK(std::isnan(lower_median({})));
}

TEST_CASE("circle fit recovers the centre") {
    std::vector<Vec2> pts;
    for (int k = 0; k < 12; ++k) {
        const double a = 0.4 * k;
        pts.push_back({1.3 + 0.7 * std::cos(a), -0.2 + 0.7 * std::sin(a)});
    }
    const Vec2 c = fit_circle_center(pts);
    CHECK(c.x == doctest::Approx(1.3).epsilon(1e-9));
    CHECK(c.y == doctest::Approx(-0.2).epsilon(1e-9));
    const std::vector<Vec2> line{{0, 0}, {1, 1}, {2, 2}};
    CHECK_THROWS_AS(fit_circle_center(line), DataError);
    CHECK_THROWS_AS(fit_circle_center(std::span<const Vec2>(pts.data(), 2)), DataError);
}

TEST_CASE("single video median equals its score") {
    const auto videos = simulated_videos(MotionType::Parabolic, 1, 3);
    const auto r = score_videos(videos, MotionType::Parabolic, config_for(MotionType::Parabolic));
    REQUIRE(r.videos.size() == 1);
    REQUIRE(r.videos[0].ok);
    for (std::size_t j = 0; j < r.invariants.size(); ++j) CHECK(r.medians[j] == r.videos[0].scores[j]);
}

TEST_CASE("failed videos are reported and excluded") {
    auto videos = simulated_videos(MotionType::UniformVelocity, 2, 5);
    videos.push_back(std::vector<Mask>(videos[0].size(), Mask(videos[0][0].width, videos[0][0].height)));
    const auto r = score_videos(videos, MotionType::UniformVelocity, config_for(MotionType::UniformVelocity));
    CHECK_FALSE(r.videos[2].ok);
    CHECK(r.videos[2].error.find("object lost") != std::string::npos);
    CHECK(r.medians[0] == lower_median({r.videos[0].scores[0], r.videos[1].scores[0]}));

    std::vector<std::vector<Mask>> bad(1, videos[2]);
    const auto rb = score_videos(bad, MotionType::UniformVelocity, PisConfig{});
    CHECK(std::isnan(rb.medians[0]));
    const auto j = nlohmann::json::parse(pis_report_json(rb));
    CHECK(j["medians"]["v"].is_null());
    CHECK(pis_report_csv(rb).find("uniform_velocity,v,median,none") != std::string::npos);
}

TEST_CASE("clean simulations score near one") {
    {
        const auto r = score_videos(simulated_videos(MotionType::UniformVelocity, 12, 11), MotionType::UniformVelocity,
                                    config_for(MotionType::UniformVelocity));
        CHECK(r.medians[0] >= 0.97);
    }
    {
        const auto r =
            score_videos(simulated_videos(MotionType::Parabolic, 12, 12), MotionType::Parabolic, config_for(MotionType::Parabolic));
        CHECK(r.medians[0] >= 0.97);
        CHECK(r.medians[1] >= 0.90);
    }
}

TEST_CASE("jitter never raises the median score") {
    for (int i = 0; i < 12; ++i) {
        const auto type = static_cast<MotionType>(i);
        CAPTURE(to_string(type));
        const auto clean = simulated_videos(type, 3, 100 + static_cast<std::uint64_t>(i));
        std::mt19937_64 gen(static_cast<std::uint64_t>(i));
        std::uniform_int_distribution<int> d(-1, 1);
        auto noisy = clean;
        for (auto& v : noisy) {
            for (auto& m : v) m = shifted(m, d(gen), d(gen));
        }
        const auto cfg = config_for(type);
        const auto rc = score_videos(clean, type, cfg);
        const auto rn = score_videos(noisy, type, cfg);
        for (std::size_t j = 0; j < rc.invariants.size(); ++j) {
            CAPTURE(to_string(rc.invariants[j]));
            CHECK(rn.medians[j] <= rc.medians[j] + 1e-12);
        }
    }
}

TEST_CASE("report formats") {
    const auto r = score_videos(simulated_videos(MotionType::Parabolic, 2, 9), MotionType::Parabolic,
                                config_for(MotionType::Parabolic));
    const auto j = nlohmann::json::parse(pis_report_json(r));
    CHECK(j["format"] == "nnd-pis-report");
    CHECK(j["motion_type"] == "parabolic");
    CHECK(j["invariants"] == nlohmann::json::array({"vx", "ay"}));
    CHECK(j["videos"].size() == 2);
    CHECK(j["medians"]["vx"].get<double>() == doctest::Approx(r.medians[0]));
    const std::string csv = pis_report_csv(r);
    CHECK(csv.rfind("motion,invariant,video,score\n", 0) == 0);
    std::size_t lines = 0;
    for (char c : csv) lines += c == '\n';
    CHECK(lines == 1 + 2 * 3);
}
