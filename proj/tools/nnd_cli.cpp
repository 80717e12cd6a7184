#include <cstdio>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "nnd/commands.hpp"
#include "nnd/errors.hpp"

namespace fs = std::filesystem;

namespace {

template <class T>
std::optional<T> opt_if(const CLI::Option* opt, const T& value) {
    return opt->count() ? std::optional<T>(value) : std::nullopt;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural Newtonian dynamics toolkit: simulate, extract, train, predict, flow, eval, pipeline"};
    app.require_subcommand(1);

    std::string config, out, input, shape, world;
    std::uint64_t seed = 0;
    bool no_mlp = false, csv = false;
    int n_frames = 49, spatial = 1, stride = 1;
    double fps = 24.0;

    auto* sim = app.add_subcommand("simulate", "Generate a simulated dataset from a JSON config");
    sim->add_option("config", config, "Simulation config (JSON)")->required()->check(CLI::ExistingFile);
    sim->add_option("-o,--out", out, "Output dataset directory")->required();
    auto* sim_seed = sim->add_option("--seed", seed, "Override the config seed");

    auto* ext = app.add_subcommand("extract", "Encode one clip of masks into states.csv");
    ext->add_option("masks", input, "Directory of mask_*.pgm")->required();
    ext->add_option("-o,--out", out, "Output states.csv")->required();
    auto* ext_world = ext->add_option("--world", world, "World config (JSON)")->check(CLI::ExistingFile);

    auto* trn = app.add_subcommand("train", "Fit the dynamics model to a dataset");
    trn->add_option("dataset", input, "Dataset directory")->required();
    trn->add_option("config", config, "Training config (JSON)")->required()->check(CLI::ExistingFile);
    trn->add_option("-o,--out", out, "Output directory for checkpoint.json and train_report.json")->required();
    trn->add_flag("--no-mlp", no_mlp, "Train the linear terms only (residual network zeroed and frozen)");
    auto* trn_seed = trn->add_option("--seed", seed, "Override the config seed");

    auto* pred = app.add_subcommand("predict", "Roll a checkpoint forward from an initial state");
    pred->add_option("checkpoint", config, "checkpoint.json")->required();
    pred->add_option("z0", input, "Initial state (JSON object with x, y, vx, vy, theta, omega, s, l, a)")
        ->required()
        ->check(CLI::ExistingFile);
    pred->add_option("--frames", n_frames, "Number of frames including the initial one")->capture_default_str();
    pred->add_option("--fps", fps, "Frame rate")->capture_default_str();
    pred->add_option("-o,--out", out, "Output states.csv")->required();

    auto* flw = app.add_subcommand("flow", "Convert states.csv into .flo optical-flow files");
    flw->add_option("states", input, "states.csv")->required()->check(CLI::ExistingFile);
    flw->add_option("shape", shape, "Shape config (JSON)")->required()->check(CLI::ExistingFile);
    flw->add_option("-o,--out", out, "Output directory")->required();
    auto* flw_world = flw->add_option("--world", world, "World config (JSON)")->check(CLI::ExistingFile);
    flw->add_option("--spatial-factor", spatial, "Spatial downsampling factor")->capture_default_str();
    flw->add_option("--temporal-stride", stride, "Temporal grouping stride")->capture_default_str();

    auto* evl = app.add_subcommand("eval", "Score mask clips with the physical invariance score");
    evl->add_option("masks", input, "Directory of clips (subdirectories of mask_*.pgm)")->required();
    evl->add_option("config", config, "Evaluation config (JSON)")->required()->check(CLI::ExistingFile);
    evl->add_option("-o,--out", out, "Output pis_report.json")->required();
    evl->add_flag("--csv", csv, "Also write a CSV next to the JSON report");

    auto* pipe = app.add_subcommand("pipeline", "Predict, export flow and self-evaluate from one prompt file");
    pipe->add_option("prompt", config, "Physical prompt (JSON)")->required()->check(CLI::ExistingFile);
    pipe->add_option("-o,--out", out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(nnd::ErrorKind::Config);
    }

    try {
        if (*sim) {
            nnd::cmd_simulate(config, out, opt_if(sim_seed, seed), std::cout);
        } else if (*ext) {
            nnd::cmd_extract(input, opt_if(ext_world, fs::path(world)), out);
        } else if (*trn) {
            nnd::cmd_train(input, config, out, no_mlp, opt_if(trn_seed, seed), std::cout);
        } else if (*pred) {
            nnd::cmd_predict(config, input, n_frames, fps, out, std::cerr);
        } else if (*flw) {
            const auto m = nnd::cmd_flow(input, shape, opt_if(flw_world, fs::path(world)), out, spatial, stride);
            std::cout << "wrote " << m.files.size() << " flow files to " << out << "\n";
        } else if (*evl) {
            const auto r = nnd::cmd_eval(input, config, out, csv);
            for (std::size_t i = 0; i < r.invariants.size(); ++i) {
                std::cout << "median PIS " << nnd::to_string(r.invariants[i]) << " = " << r.medians[i] << "\n";
            }
        } else if (*pipe) {
            nnd::cmd_pipeline(config, out, std::cerr);
        }
    } catch (const nnd::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(nnd::ErrorKind::Data);
    }
    return 0;
}
