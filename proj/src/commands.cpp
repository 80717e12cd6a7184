#include "nnd/commands.hpp"

#include <cmath>
#include <cstdio>

#include "nnd/encoder.hpp"
#include "nnd/errors.hpp"
#include "nnd/io.hpp"
#include "nnd/parallel.hpp"
#include "nnd/simulator.hpp"

namespace nnd {

namespace fs = std::filesystem;

namespace {

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::vector<double> frame_times(int n_frames, double fps) {
    if (n_frames < 1) throw ConfigError("n_frames must be >= 1");
    if (!(fps > 0.0)) throw ConfigError("fps must be > 0");
    std::vector<double> t(static_cast<std::size_t>(n_frames));
    for (int k = 0; k < n_frames; ++k) t[static_cast<std::size_t>(k)] = k / fps;
    return t;
}

void warn_outside_range(const PhysState& z0, const NormalizationSpec& norm, std::ostream& log) {
    const PhysState zn = norm.normalize(z0);
    for (std::size_t d = 0; d < kStateDim; ++d) {
        if (std::abs(zn[d]) > 1.0) {
            log << "warning: initial " << component_name(d) << " = " << z0[d]
                << " lies outside the training normalization range (normalized " << zn[d] << ")\n";
        }
    }
}

// Model rollout whose first row is exactly the given initial state.
std::vector<PhysState> predict_states(const NndModel& model, const PhysState& z0, std::span<const double> times) {
    auto states = model.predict(z0, times);
    states.front() = z0;
    return states;
}

FlowManifest export_flow(std::span<const PhysState> states, ShapeKind kind, const WorldConfig& world,
                         const fs::path& out_dir, int spatial_factor, int temporal_stride, std::string checkpoint_hash) {
    const auto full = states_to_flow(states, kind, world);
    const auto flows = downsample_flow(full, spatial_factor, temporal_stride);
    fs::create_directories(out_dir);
    FlowManifest m;
    m.spatial_factor = spatial_factor;
    m.temporal_stride = temporal_stride;
    m.checkpoint_hash = std::move(checkpoint_hash);
    for (std::size_t k = 0; k < flows.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "flow_%04zu.flo", k);
        write_flo(flows[k], out_dir / name);
        m.files.push_back(name);
        m.source_frames.push_back(static_cast<int>(k) * temporal_stride);
    }
    write_flow_manifest(m, out_dir / "flow_manifest.json");
    return m;
}

template <class Fn>
auto run_stage(const char* name, Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(e.kind(), std::string("pipeline stage '") + name + "': " + e.what());
    } catch (const std::exception& e) {
        throw DataError(std::string("pipeline stage '") + name + "': " + e.what());
    }
}

} // namespace

SimulateSummary cmd_simulate(const fs::path& config, const fs::path& out_dir, std::optional<std::uint64_t> seed_override,
                             std::ostream& log) {
    SimulateConfig c = parse_simulate_config(read_text_file(config));
    if (seed_override) c.seed = *seed_override;
    const auto specs = sample_dataset(c.motion_type, c.n, c.seed, c.ranges);
    std::vector<Trajectory> trajs(specs.size());
    parallel_for(specs.size(), [&](std::size_t i) { trajs[i] = simulate(specs[i], c.write_masks); });

    DatasetManifest m;
    m.motion_type = c.motion_type;
    m.world = c.ranges.world;
    m.shape_kind = c.ranges.shape_kind;
    m.normalization = fit_normalization(trajs);
    m.seed = c.seed;
    m.n = c.n;
    m.masks = c.write_masks;
    write_dataset(out_dir, m, trajs);

    SimulateSummary s{c.n, c.seed, fnv1a(manifest_json(m))};
    log << "wrote " << s.n << " " << to_string(c.motion_type) << " trajectories to " << out_dir.string() << " (seed "
        << s.seed << ", manifest " << hex64(s.manifest_hash) << ")\n";
    return s;
}

void cmd_extract(const fs::path& mask_dir, const std::optional<fs::path>& world_config, const fs::path& out_csv) {
    const WorldConfig world = world_config ? parse_world_json(read_text_file(*world_config)) : WorldConfig{};
    const auto masks = read_mask_dir(mask_dir);
    const auto times = frame_times(static_cast<int>(masks.size()), world.fps);
    const auto states = encode_sequence(masks, times, world);
    write_states_csv(out_csv, times, states);
}

TrainReport cmd_train(const fs::path& dataset_dir, const fs::path& config, const fs::path& out_dir, bool no_mlp,
                      std::optional<std::uint64_t> seed_override, std::ostream& log) {
    TrainSettings s = parse_train_config(read_text_file(config));
    if (no_mlp) s.train.linear_only = true;
    if (seed_override) s.train.seed = *seed_override;
    if (!fs::is_directory(dataset_dir)) throw DataError(dataset_dir.string() + ": dataset directory not found");
    const Dataset ds = read_dataset(dataset_dir, s.source);
    TrainReport r = train(ds.trajectories, s.train, s.integrator);
    fs::create_directories(out_dir);
    save_checkpoint(r.model, out_dir / "checkpoint.json");
    write_text_file(out_dir / "train_report.json", train_report_json(r, s));
    log << "test NAE " << r.test_nae << " (best loss " << r.best_loss << " at step " << r.best_epoch << ")\n";
    return r;
}

void cmd_predict(const fs::path& checkpoint, const fs::path& z0_json, int n_frames, double fps, const fs::path& out_csv,
                 std::ostream& log) {
    const NndModel model = load_checkpoint(checkpoint);
    const PhysState z0 = parse_state_json(read_text_file(z0_json));
    const auto times = frame_times(n_frames, fps);
    warn_outside_range(z0, model.norm, log);
    write_states_csv(out_csv, times, predict_states(model, z0, times));
}

FlowManifest cmd_flow(const fs::path& states_csv, const fs::path& shape_json, const std::optional<fs::path>& world_json,
                      const fs::path& out_dir, int spatial_factor, int temporal_stride) {
    const StatesTable table = read_states_csv(states_csv);
    const ShapeProto shape = parse_shape_json(read_text_file(shape_json));
    const WorldConfig world = world_json ? parse_world_json(read_text_file(*world_json)) : WorldConfig{};
    return export_flow(table.states, shape.kind, world, out_dir, spatial_factor, temporal_stride, "");
}

PisReport cmd_eval(const fs::path& masks_root, const fs::path& eval_config, const fs::path& out_json, bool csv) {
    const EvalConfig cfg = parse_eval_config(read_text_file(eval_config));
    if (!fs::is_directory(masks_root)) throw DataError(masks_root.string() + ": not a directory");
    std::vector<fs::path> clips;
    bool has_masks = false;
    for (const auto& e : fs::directory_iterator(masks_root)) {
        if (e.is_directory()) {
            clips.push_back(e.path());
        } else if (e.path().extension() == ".pgm") {
            has_masks = true;
        }
    }
    if (has_masks) clips = {masks_root};
    std::sort(clips.begin(), clips.end());
    if (clips.empty()) throw DataError(masks_root.string() + ": no clips found");
    std::vector<std::vector<Mask>> videos(clips.size());
    for (std::size_t i = 0; i < clips.size(); ++i) videos[i] = read_mask_dir(clips[i]);
    PisReport report = score_videos(videos, cfg.motion_type, cfg.pis);
    write_text_file(out_json, pis_report_json(report));
    if (csv) {
        fs::path p = out_json;
        p.replace_extension(".csv");
        write_text_file(p, pis_report_csv(report));
    }
    return report;
}

void cmd_pipeline(const fs::path& prompt_path, const fs::path& out_dir, std::ostream& log) {
    const PipelinePrompt p = run_stage("prompt", [&] {
        return parse_pipeline_prompt(read_text_file(prompt_path), prompt_path.parent_path());
    });
    fs::create_directories(out_dir);
    const NndModel model = run_stage("predict", [&] { return load_checkpoint(p.checkpoint); });
    const std::string hash = hex64(params_hash(model.params));

    const auto states = run_stage("predict", [&] {
        const auto times = frame_times(p.n_frames, p.fps);
        warn_outside_range(p.z0, model.norm, log);
        auto out = predict_states(model, p.z0, times);
        write_states_csv(out_dir / "states.csv", times, out);
        return out;
    });

    if (states.size() >= 2) {
        run_stage("flow", [&] {
            return export_flow(states, p.shape.kind, p.world, out_dir / "flow", p.spatial_factor, p.temporal_stride, hash);
        });
    }

    if (!p.self_eval) return;
    run_stage("self_eval", [&] {
        std::vector<std::vector<Mask>> video(1);
        video[0].resize(states.size());
        parallel_for(states.size(), [&](std::size_t k) { video[0][k] = rasterize(p.shape.kind, states[k], p.world); });
        PisConfig cfg;
        cfg.meters_per_pixel = p.world.meters_per_pixel;
        cfg.fps = p.fps;
        cfg.pivot = p.pivot;
        const PisReport report = score_videos(video, model.motion_type, cfg);
        write_text_file(out_dir / "pis_report.json", pis_report_json(report));
        for (std::size_t i = 0; i < report.invariants.size(); ++i) {
            log << "self-eval PIS " << to_string(report.invariants[i]) << " = " << report.medians[i] << "\n";
        }
        return 0;
    });
}

} // namespace nnd
