#include <doctest.h>

#include <fstream>
#include <random>

#include <json.hpp>

#include "nnd/errors.hpp"
#include "nnd/io.hpp"
#include "test_util.hpp"

using namespace nnd;
namespace fs = std::filesystem;

namespace {

std::string error_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST_CASE("states csv roundtrip keeps nine significant digits") {
    test::TempDir dir("csv");
    std::mt19937_64 gen(1);
    std::vector<double> times;
    std::vector<PhysState> states;
    for (int k = 0; k < 10; ++k) {
        times.push_back(k / 24.0);
        states.push_back(test::random_state(gen, -50.0, 50.0));
    }
    write_states_csv(dir / "s.csv", times, states);
    const auto t = read_states_csv(dir / "s.csv");
    REQUIRE(t.states.size() == states.size());
    for (std::size_t k = 0; k < states.size(); ++k) {
        CHECK(t.times[k] == doctest::Approx(times[k]).epsilon(1e-8));
        for (std::size_t d = 0; d < kStateDim; ++d) CHECK(t.states[k][d] == doctest::Approx(states[k][d]).epsilon(1e-8));
    }
    CHECK(states_csv(times, states).rfind("t,x,y,vx,vy,theta,omega,s,l,a\n", 0) == 0);
    // A second write of the parsed values reproduces the file byte for byte.
    CHECK(states_csv(t.times, t.states) == read_text_file(dir / "s.csv"));
}

TEST_CASE("malformed csv is a data error") {
    test::TempDir dir("badcsv");
    write_text_file(dir / "a.csv", "t,x,y\n0,1,2\n");
    CHECK_THROWS_AS(read_states_csv(dir / "a.csv"), DataError);
    write_text_file(dir / "b.csv", "t,x,y,vx,vy,theta,omega,s,l,a\n0,1,2,3,4,5,6,7,8,oops\n");
    CHECK_THROWS_AS(read_states_csv(dir / "b.csv"), DataError);
    write_text_file(dir / "c.csv", "t,x,y,vx,vy,theta,omega,s,l,a\n");
    CHECK_THROWS_AS(read_states_csv(dir / "c.csv"), DataError);
    CHECK_THROWS_AS(read_states_csv(dir / "missing.csv"), DataError);
}

TEST_CASE("pgm roundtrip and foreign maxval") {
    test::TempDir dir("pgm");
    Mask m(7, 5);
    m.at(1, 1) = 1;
    m.at(6, 4) = 1;
    m.at(3, 0) = 1;
    write_pgm(m, dir / "m.pgm");
    CHECK(read_pgm(dir / "m.pgm") == m);
    CHECK(fs::file_size(dir / "m.pgm") == std::string("P5\n7 5\n255\n").size() + 35);

    {
        std::ofstream out(dir / "other.pgm", std::ios::binary);
        out << "P5\n# comment\n3 1\n1\n";
        const char px[3] = {0, 1, 0};
        out.write(px, 3);
    }
    const Mask o = read_pgm(dir / "other.pgm");
    CHECK(o.width == 3);
    CHECK(o.at(1, 0) == 1);
    CHECK(o.count() == 1);

    write_text_file(dir / "p2.pgm", "P2\n1 1\n255\n0\n");
    CHECK_THROWS_AS(read_pgm(dir / "p2.pgm"), DataError);
    {
        std::ofstream out(dir / "short.pgm", std::ios::binary);
        out << "P5\n4 4\n255\n";
        out.put('\0');
    }
    CHECK_THROWS_AS(read_pgm(dir / "short.pgm"), DataError);
}

TEST_CASE("dataset roundtrip") {
    test::TempDir dir("ds");
    const auto specs = sample_dataset(MotionType::Parabolic, 3, 4, default_ranges(MotionType::Parabolic));
    std::vector<Trajectory> trajs;
    for (const auto& s : specs) trajs.push_back(simulate(s, true));
    DatasetManifest m;
    m.motion_type = MotionType::Parabolic;
    m.world = specs[0].world;
    m.shape_kind = specs[0].shape.kind;
    m.normalization = fit_normalization(trajs);
    m.seed = 4;
    m.n = 3;
    write_dataset(dir.path(), m, trajs);

    const Dataset analytic = read_dataset(dir.path(), StateSource::Analytic);
    CHECK(manifest_json(analytic.manifest) == manifest_json(m));
    REQUIRE(analytic.trajectories.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t k = 0; k < trajs[i].size(); ++k) {
            for (std::size_t d = 0; d < kStateDim; ++d) {
                CHECK(analytic.trajectories[i].states[k][d] ==
                      doctest::Approx(trajs[i].states[k][d]).epsilon(1e-8).scale(1e-12));
            }
        }
    }
    const Dataset encoded = read_dataset(dir.path(), StateSource::Encoder);
    CHECK(encoded.trajectories[1].states.size() == trajs[1].size());
    // Encoder states track the analytic ones to within a few pixels.
    CHECK(std::abs(encoded.trajectories[1].states[10][kX] - trajs[1].states[10][kX]) < 3 * m.world.meters_per_pixel);

    SUBCASE("version mismatch") {
        auto j = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
        j["version"] = 2;
        write_text_file(dir / "manifest.json", j.dump());
        const auto msg = error_of([&] { read_dataset(dir.path(), StateSource::Analytic); });
        CHECK(msg.find("unsupported version 2") != std::string::npos);
    }
    SUBCASE("missing manifest") {
        fs::remove(dir / "manifest.json");
        CHECK_THROWS_AS(read_dataset(dir.path(), StateSource::Analytic), DataError);
    }
    SUBCASE("encoder states need masks") {
        auto j = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
        j["masks"] = false;
        write_text_file(dir / "manifest.json", j.dump());
        CHECK_THROWS_AS(read_dataset(dir.path(), StateSource::Encoder), DataError);
    }
}

TEST_CASE("simulate config") {
    const auto c = parse_simulate_config(R"({"motion_type": "circular", "n": 5, "seed": 9,
        "world": {"fps": 30}, "ranges": {"radius": [0.3, 0.4], "shape": "circle"}})");
    CHECK(c.motion_type == MotionType::Circular);
    CHECK(c.n == 5);
    CHECK(c.seed == 9);
    CHECK(c.ranges.world.fps == 30.0);
    CHECK(c.ranges.radius.lo == 0.3);
    CHECK(c.ranges.shape_kind == ShapeKind::Circle);

    CHECK(error_of([] { parse_simulate_config(R"({"motion_type": "circular", "n": 5})"); }) == "missing field 'seed'");
    CHECK(error_of([] { parse_simulate_config(R"({"motion_type": "circular", "n": "5", "seed": 1})"); }) ==
          "field 'n' has the wrong type");
    CHECK(error_of([] { parse_simulate_config(R"({"motion_type": "orbit", "n": 5, "seed": 1})"); }) ==
          "field 'motion_type' has unknown value 'orbit'");
    CHECK(error_of([] {
              parse_simulate_config(R"({"motion_type": "circular", "n": 5, "seed": 1, "ranges": {"speed": [1, 2]}})");
          }) == "unknown field 'ranges.speed'");
    CHECK(error_of([] {
              parse_simulate_config(R"({"motion_type": "circular", "n": 5, "seed": 1, "ranges": {"x": [2, 1]}})");
          }) == "field 'ranges.x' must satisfy lo <= hi");
    CHECK(error_of([] { parse_simulate_config(R"({"motion_type": "circular", "n": 5, "seed": 1, "world": {"fps": -1}})"); })
              .find("fps") != std::string::npos);
    const auto pinned = parse_simulate_config(
        R"({"motion_type": "damped_oscillation", "n": 2, "seed": 1, "world": {"motion_params": {"rod_length": 0.9}}})");
    CHECK(pinned.ranges.radius.lo == 0.9);
    CHECK(pinned.ranges.radius.hi == 0.9);
    CHECK_THROWS_AS(parse_simulate_config("{not json"), ConfigError);
    CHECK_THROWS_AS(parse_simulate_config("[1, 2]"), ConfigError);
}

TEST_CASE("train config presets and overrides") {
    const auto desk = parse_train_config("{}");
    CHECK(desk.train.epochs == TrainConfig::desk().epochs);
    CHECK(desk.source == StateSource::Encoder);
    const auto full = parse_train_config(R"({"preset": "full"})");
    CHECK(full.train.epochs == TrainConfig{}.epochs);
    CHECK(full.integrator.substeps_per_frame == IntegratorConfig{}.substeps_per_frame);

    const auto o = parse_train_config(R"({"lr0": 0.5, "epochs": 7, "hidden": 16, "state_source": "analytic"})");
    CHECK(o.train.lr0 == 0.5);
    CHECK(o.train.epochs == 7);
    CHECK(o.train.hidden == 16);
    CHECK(o.source == StateSource::Analytic);
    // The serialized settings parse back to the same values.
    const auto back = parse_train_config(train_config_json(o));
    CHECK(train_config_json(back) == train_config_json(o));

    CHECK(error_of([] { parse_train_config(R"({"momentum": 0.9})"); }) == "unknown field 'momentum'");
    CHECK(error_of([] { parse_train_config(R"({"preset": "fast"})"); }).find("preset") != std::string::npos);
    CHECK(error_of([] { parse_train_config(R"({"epochs": 1.5})"); }) == "field 'epochs' has the wrong type");
    CHECK_THROWS_AS(parse_train_config(R"({"lr0": -1})"), ConfigError);
}

TEST_CASE("state, eval and prompt parsing") {
    const ShapeProto shape{ShapeKind::Ellipse, 0.2, 0.1};
    const auto z = parse_state_json(R"({"x": 1, "y": 2, "vx": 0, "vy": 0, "theta": 0.5, "omega": 0})", shape);
    CHECK(z[kX] == 1.0);
    CHECK(z[kTheta] == 0.5);
    CHECK(z[kL] == doctest::Approx(equivalent_axes(shape).l));
    CHECK(error_of([] { parse_state_json(R"({"x": 1})"); }) == "missing field 'y'");

    const auto e = parse_eval_config(R"({"motion_type": "parabolic", "fps": 30, "pivot": [1, 2]})");
    CHECK(e.motion_type == MotionType::Parabolic);
    CHECK(e.pis.fps == 30.0);
    REQUIRE(e.pis.pivot.has_value());
    CHECK(e.pis.pivot->y == 2.0);
    CHECK_THROWS_AS(parse_eval_config(R"({"motion_type": "parabolic", "smoothing_window": 4})"), ConfigError);

    const auto p = parse_pipeline_prompt(R"({"checkpoint": "ck/checkpoint.json",
        "shape": {"kind": "ellipse", "length": 0.2, "width": 0.1},
        "z0": {"x": 0.5, "y": 0.5, "vx": 1, "vy": 2, "theta": 0, "omega": 0},
        "n_frames": 12, "flow": {"temporal_stride": 3}})",
                                         "/base");
    CHECK(p.checkpoint == fs::path("/base/ck/checkpoint.json"));
    CHECK(p.n_frames == 12);
    CHECK(p.world.n_frames == 12);
    CHECK(p.fps == WorldConfig{}.fps);
    CHECK(p.temporal_stride == 3);
    CHECK(p.self_eval);
    CHECK(p.z0[kA] == doctest::Approx(shape_area(shape)));
    CHECK(error_of([] { parse_pipeline_prompt(R"({"checkpoint": "c.json", "z0": {}})", "."); }) ==
          "missing field 'shape'");
    CHECK(error_of([] {
              parse_pipeline_prompt(R"({"checkpoint": "c.json", "shape": {"kind": "circle", "length": 0.1},
                  "z0": {"x": 0, "y": 0, "vx": 0, "vy": 0, "theta": 0, "omega": 0}, "flow": {"stride": 2}})",
                                    ".");
          }) == "unknown field 'flow.stride'");
}
