#pragma once

// The CLI subcommands as library calls. Every command is deterministic given
// its input files; diagnostics go to `log`, never into output files.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>

#include "nnd/flow.hpp"
#include "nnd/pis.hpp"
#include "nnd/trainer.hpp"

namespace nnd {

struct SimulateSummary {
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::uint64_t manifest_hash = 0;  // FNV-1a of manifest.json
};

SimulateSummary cmd_simulate(const std::filesystem::path& config, const std::filesystem::path& out_dir,
                             std::optional<std::uint64_t> seed_override, std::ostream& log);

/// Masks of one clip (mask_*.pgm) to states.csv at timestamps k / fps.
void cmd_extract(const std::filesystem::path& mask_dir, const std::optional<std::filesystem::path>& world_config,
                 const std::filesystem::path& out_csv);

/// Writes checkpoint.json and train_report.json into out_dir.
TrainReport cmd_train(const std::filesystem::path& dataset_dir, const std::filesystem::path& config,
                      const std::filesystem::path& out_dir, bool no_mlp, std::optional<std::uint64_t> seed_override,
                      std::ostream& log);

/// Components of the normalized Z0 outside [-1, 1] produce a warning on `log`.
void cmd_predict(const std::filesystem::path& checkpoint, const std::filesystem::path& z0_json, int n_frames,
                 double fps, const std::filesystem::path& out_csv, std::ostream& log);

/// flow_%04d.flo plus flow_manifest.json in out_dir.
FlowManifest cmd_flow(const std::filesystem::path& states_csv, const std::filesystem::path& shape_json,
                      const std::optional<std::filesystem::path>& world_json, const std::filesystem::path& out_dir,
                      int spatial_factor, int temporal_stride);

/// masks_root holds one subdirectory of mask_*.pgm per clip (or is itself one
/// clip). Writes pis_report.json, and pis_report.csv when csv is set.
PisReport cmd_eval(const std::filesystem::path& masks_root, const std::filesystem::path& eval_config,
                   const std::filesystem::path& out_json, bool csv);

/// predict -> flow -> optional self-evaluation of the rasterized prediction.
/// Outputs: states.csv, flow/, pis_report.json. A failing stage is reported
/// by name and keeps its error kind.
void cmd_pipeline(const std::filesystem::path& prompt, const std::filesystem::path& out_dir, std::ostream& log);

} // namespace nnd
