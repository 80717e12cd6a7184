#pragma once

// File formats and declarative configs: states.csv, binary PGM masks, dataset
// directories with manifest.json, and the JSON configs read by the CLI.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nnd/core.hpp"
#include "nnd/model.hpp"
#include "nnd/pis.hpp"
#include "nnd/shape.hpp"
#include "nnd/simulator.hpp"
#include "nnd/trainer.hpp"

namespace nnd {

inline constexpr int kDatasetVersion = 1;

// ---- states.csv -----------------------------------------------------------

/// Header t,x,y,vx,vy,theta,omega,s,l,a; 9 significant digits.
std::string states_csv(std::span<const double> times, std::span<const PhysState> states);
void write_states_csv(const std::filesystem::path& path, std::span<const double> times,
                      std::span<const PhysState> states);

struct StatesTable {
    std::vector<double> times;
    std::vector<PhysState> states;
};

StatesTable read_states_csv(const std::filesystem::path& path);

// ---- masks ----------------------------------------------------------------

/// Binary P5 with maxval 255; set pixels are written as 255.
void write_pgm(const Mask& mask, const std::filesystem::path& path);
/// Accepts P5 with any maxval; nonzero pixels are set.
Mask read_pgm(const std::filesystem::path& path);
/// mask_*.pgm files of a directory in name order.
std::vector<Mask> read_mask_dir(const std::filesystem::path& dir);

// ---- datasets -------------------------------------------------------------

enum class StateSource { Encoder, Analytic };

struct DatasetManifest {
    int version = kDatasetVersion;
    MotionType motion_type = MotionType::UniformVelocity;
    WorldConfig world;
    ShapeKind shape_kind = ShapeKind::Ellipse;
    NormalizationSpec normalization;
    std::uint64_t seed = 0;
    std::size_t n = 0;
    bool masks = true;
};

std::string manifest_json(const DatasetManifest& manifest);

/// Creates dir (must not hold a manifest already unless overwrite) with
/// manifest.json and traj_%04d/{states.csv, mask_%04d.pgm}.
void write_dataset(const std::filesystem::path& dir, const DatasetManifest& manifest,
                   std::span<const Trajectory> trajectories);

struct Dataset {
    DatasetManifest manifest;
    std::vector<Trajectory> trajectories;
};

/// With StateSource::Encoder the states are re-extracted from the masks.
Dataset read_dataset(const std::filesystem::path& dir, StateSource source);

// ---- configs --------------------------------------------------------------

struct SimulateConfig {
    MotionType motion_type = MotionType::UniformVelocity;
    std::size_t n = 100;
    std::uint64_t seed = 0;
    SamplingRanges ranges;
    bool write_masks = true;
};

/// Unknown keys and ill-typed values raise ConfigError naming the field.
SimulateConfig parse_simulate_config(const std::string& json_text);

struct TrainSettings {
    TrainConfig train;
    IntegratorConfig integrator;
    StateSource source = StateSource::Encoder;
};

/// Object with any subset of the WorldConfig fields; the rest keep defaults.
WorldConfig parse_world_json(const std::string& json_text);
/// {"kind", "length", "width"}; width may be omitted for circles.
ShapeProto parse_shape_json(const std::string& json_text);

/// "preset": "desk" (default) or "full" selects the base values; other keys
/// override individual fields.
TrainSettings parse_train_config(const std::string& json_text);
std::string train_config_json(const TrainSettings& settings);
/// Loss curve, split, best epoch, test NAE and the settings that produced them.
std::string train_report_json(const TrainReport& report, const TrainSettings& settings);

/// Object with the nine state fields by name; s, l, a may be omitted when
/// `shape` is given (they are then derived from it).
PhysState parse_state_json(const std::string& json_text, const std::optional<ShapeProto>& shape = std::nullopt);

struct EvalConfig {
    MotionType motion_type = MotionType::UniformVelocity;
    PisConfig pis;
};

EvalConfig parse_eval_config(const std::string& json_text);

struct PipelinePrompt {
    std::filesystem::path checkpoint;
    WorldConfig world;
    ShapeProto shape;
    PhysState z0;
    int n_frames = 49;
    double fps = 24.0;
    int spatial_factor = 1;
    int temporal_stride = 1;
    bool self_eval = true;
    std::optional<Vec2> pivot;
};

/// Relative checkpoint paths resolve against base_dir.
PipelinePrompt parse_pipeline_prompt(const std::string& json_text, const std::filesystem::path& base_dir);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

} // namespace nnd
