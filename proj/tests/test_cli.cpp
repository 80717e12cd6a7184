#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <json.hpp>

#include "nnd/io.hpp"
#include "test_util.hpp"

using namespace nnd;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string err;
};

std::string cli() {
    const char* p = std::getenv("NND_CLI");
    REQUIRE_MESSAGE(p != nullptr, "NND_CLI must point at the nnd_cli binary");
    return p;
}

// Runs the CLI with stdout discarded and stderr captured.
Run run(const test::TempDir& dir, const std::string& args) {
    const fs::path err = dir / "stderr.txt";
    const std::string cmd = "'" + cli() + "' " + args + " > /dev/null 2> '" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = fs::exists(err) ? read_text_file(err) : "";
    return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

std::string bytes_of(const fs::path& p) { return read_text_file(p); }

// First recorded state of a simulated clip as a JSON object.
std::string first_state_json(const fs::path& states_csv) {
    const auto table = read_states_csv(states_csv);
    nlohmann::json j;
    for (std::size_t d = 0; d < kStateDim; ++d) j[std::string(component_name(d))] = table.states.front()[d];
    return j.dump();
}

// Small dataset plus a short training run shared by several cases.
struct Fixture {
    test::TempDir dir{"cli"};
    fs::path data = dir / "data";
    fs::path model = dir / "model";

    Fixture() {
        write_text_file(dir / "sim.json", R"({"motion_type": "uniform_velocity", "n": 4, "seed": 3})");
        write_text_file(dir / "train.json", R"({"epochs": 20, "hidden": 8, "test_fraction": 0.25})");
        REQUIRE(run(dir, "simulate " + q(dir / "sim.json") + " -o " + q(data)).code == 0);
        REQUIRE(run(dir, "train " + q(data) + " " + q(dir / "train.json") + " -o " + q(model)).code == 0);
    }
};

} // namespace

TEST_CASE("usage and config errors exit with 2") {
    test::TempDir dir("cli_usage");
    CHECK(run(dir, "").code == 2);
    CHECK(run(dir, "frobnicate").code == 2);
    CHECK(run(dir, "simulate " + q(dir / "missing.json") + " -o " + q(dir / "out")).code == 2);
    write_text_file(dir / "bad.json", R"({"motion_type": "parabolic", "n": 4})");
    const Run r = run(dir, "simulate " + q(dir / "bad.json") + " -o " + q(dir / "out"));
    CHECK(r.code == 2);
    CHECK(r.err.find("missing field 'seed'") != std::string::npos);
    CHECK(run(dir, "--help").code == 0);
}

TEST_CASE("data errors exit with 3") {
    test::TempDir dir("cli_data");
    write_text_file(dir / "train.json", "{}");
    const Run r = run(dir, "train " + q(dir / "nowhere") + " " + q(dir / "train.json") + " -o " + q(dir / "m"));
    CHECK(r.code == 3);
    CHECK(r.err.find("nowhere") != std::string::npos);

    fs::create_directories(dir / "empty");
    write_text_file(dir / "eval.json", R"({"motion_type": "parabolic"})");
    CHECK(run(dir, "eval " + q(dir / "empty") + " " + q(dir / "eval.json") + " -o " + q(dir / "r.json")).code == 3);
}

TEST_CASE("simulate is reproducible") {
    test::TempDir dir("cli_sim");
    write_text_file(dir / "sim.json", R"({"motion_type": "rotation", "n": 3, "seed": 17})");
    REQUIRE(run(dir, "simulate " + q(dir / "sim.json") + " -o " + q(dir / "a")).code == 0);
    REQUIRE(run(dir, "simulate " + q(dir / "sim.json") + " -o " + q(dir / "b")).code == 0);
    CHECK(bytes_of(dir / "a/manifest.json") == bytes_of(dir / "b/manifest.json"));
    CHECK(bytes_of(dir / "a/traj_0002/states.csv") == bytes_of(dir / "b/traj_0002/states.csv"));
    CHECK(bytes_of(dir / "a/traj_0001/mask_0030.pgm") == bytes_of(dir / "b/traj_0001/mask_0030.pgm"));
    REQUIRE(run(dir, "simulate " + q(dir / "sim.json") + " -o " + q(dir / "c") + " --seed 18").code == 0);
    CHECK(bytes_of(dir / "a/traj_0000/states.csv") != bytes_of(dir / "c/traj_0000/states.csv"));
}

TEST_CASE("extract writes one row per mask") {
    test::TempDir dir("cli_extract");
    write_text_file(dir / "sim.json", R"({"motion_type": "uniform_velocity", "n": 1, "seed": 2})");
    REQUIRE(run(dir, "simulate " + q(dir / "sim.json") + " -o " + q(dir / "d")).code == 0);
    REQUIRE(run(dir, "extract " + q(dir / "d/traj_0000") + " -o " + q(dir / "s.csv")).code == 0);
    const auto enc = read_states_csv(dir / "s.csv");
    const auto ref = read_states_csv(dir / "d/traj_0000/states.csv");
    REQUIRE(enc.states.size() == ref.states.size());
    CHECK(std::abs(enc.states[5][kX] - ref.states[5][kX]) < 0.02);
}

TEST_CASE("train, predict, flow and eval") {
    Fixture f;
    const auto report = nlohmann::json::parse(bytes_of(f.model / "train_report.json"));
    CHECK(report["format"] == "nnd-train-report");
    CHECK(report["loss_curve"].size() == 20);
    CHECK(report["test_indices"].size() == 1);

    SUBCASE("no-mlp keeps the residual off") {
        REQUIRE(run(f.dir, "train " + q(f.data) + " " + q(f.dir / "train.json") + " --no-mlp -o " + q(f.dir / "lin"))
                    .code == 0);
        const auto lin = nlohmann::json::parse(bytes_of(f.dir / "lin/train_report.json"));
        CHECK(lin["config"]["linear_only"] == true);
        CHECK(lin["eps_residual"].get<double>() == 0.0);
    }
    SUBCASE("predict with one frame returns the initial state") {
        write_text_file(f.dir / "z0.json",
                        R"({"x": 0.5, "y": 0.75, "vx": 1.25, "vy": 2, "theta": 0, "omega": 0, "s": 0.1, "l": 0.2, "a": 0.015625})");
        REQUIRE(run(f.dir, "predict " + q(f.model / "checkpoint.json") + " " + q(f.dir / "z0.json") +
                               " --frames 1 -o " + q(f.dir / "p.csv"))
                    .code == 0);
        CHECK(bytes_of(f.dir / "p.csv") == "t,x,y,vx,vy,theta,omega,s,l,a\n0,0.5,0.75,1.25,2,0,0,0.1,0.2,0.015625\n");
    }
    SUBCASE("predict warns when the start lies outside the training range") {
        write_text_file(f.dir / "far.json",
                        R"({"x": 500, "y": 0.75, "vx": 1, "vy": 2, "theta": 0, "omega": 0, "s": 0.1, "l": 0.2, "a": 0.015})");
        const Run r = run(f.dir, "predict " + q(f.model / "checkpoint.json") + " " + q(f.dir / "far.json") +
                                     " --frames 3 -o " + q(f.dir / "far.csv"));
        CHECK(r.code == 0);
        CHECK(r.err.find("warning: initial x") != std::string::npos);
    }
    SUBCASE("flow counts follow the stride") {
        write_text_file(f.dir / "z0.json", first_state_json(f.data / "traj_0000/states.csv"));
        write_text_file(f.dir / "shape.json", R"({"kind": "ellipse", "length": 0.4, "width": 0.25})");
        REQUIRE(run(f.dir, "predict " + q(f.model / "checkpoint.json") + " " + q(f.dir / "z0.json") +
                               " --frames 49 -o " + q(f.dir / "p.csv"))
                    .code == 0);
        for (int stride : {1, 4, 5}) {
            CAPTURE(stride);
            const fs::path out = f.dir / ("flow" + std::to_string(stride));
            REQUIRE(run(f.dir, "flow " + q(f.dir / "p.csv") + " " + q(f.dir / "shape.json") + " -o " + q(out) +
                                   " --temporal-stride " + std::to_string(stride))
                        .code == 0);
            const auto m = nlohmann::json::parse(bytes_of(out / "flow_manifest.json"));
            const std::size_t expected = (48 + stride - 1) / stride;
            CHECK(m["files"].size() == expected);
            CHECK(fs::exists(out / "flow_0000.flo"));
        }
    }
    SUBCASE("eval writes json and csv") {
        write_text_file(f.dir / "eval.json", R"({"motion_type": "uniform_velocity"})");
        const Run r = run(f.dir, "eval " + q(f.data) + " " + q(f.dir / "eval.json") + " -o " + q(f.dir / "pis.json") +
                                     " --csv");
        CHECK(r.code == 0);
        const auto j = nlohmann::json::parse(bytes_of(f.dir / "pis.json"));
        CHECK(j["videos"].size() == 4);
        CHECK(fs::exists(f.dir / "pis.csv"));
    }
}

TEST_CASE("pipeline is deterministic") {
    Fixture f;
    write_text_file(f.dir / "prompt.json", R"({"checkpoint": "model/checkpoint.json",
        "shape": {"kind": "ellipse", "length": 0.4, "width": 0.25},
        "z0": )" + first_state_json(f.data / "traj_0001/states.csv") +
                                               R"(, "n_frames": 24, "flow": {"temporal_stride": 2}})");
    REQUIRE(run(f.dir, "pipeline " + q(f.dir / "prompt.json") + " -o " + q(f.dir / "o1")).code == 0);
    REQUIRE(run(f.dir, "pipeline " + q(f.dir / "prompt.json") + " -o " + q(f.dir / "o2")).code == 0);
    for (const char* name : {"states.csv", "pis_report.json", "flow/flow_manifest.json", "flow/flow_0005.flo"}) {
        CAPTURE(name);
        CHECK(bytes_of(f.dir / "o1" / name) == bytes_of(f.dir / "o2" / name));
    }
    const auto m = nlohmann::json::parse(bytes_of(f.dir / "o1/flow/flow_manifest.json"));
    CHECK(m["files"].size() == 12);

    write_text_file(f.dir / "broken.json", R"({"checkpoint": "nowhere.json",
        "shape": {"kind": "circle", "length": 0.1},
        "z0": {"x": 0.4, "y": 0.4, "vx": 0, "vy": 0, "theta": 0, "omega": 0}})");
    const Run r = run(f.dir, "pipeline " + q(f.dir / "broken.json") + " -o " + q(f.dir / "o3"));
    CHECK(r.code == 3);
    CHECK(r.err.find("pipeline stage 'predict'") != std::string::npos);
}
