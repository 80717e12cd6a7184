#pragma once

// Fits NndParams to trajectories by backpropagating the latent-state MSE
// through the unrolled RK4 integrator.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "nnd/core.hpp"
#include "nnd/model.hpp"

namespace nnd {

struct TrainConfig {
    double lr0 = 1e-4;
    double lr_min = 1e-6;
    int epochs = 20000;              // one optimizer step per epoch
    std::size_t batch_size = 64;
    double weight_decay = 1e-2;      // decoupled; never applied to eps_residual
    std::uint64_t seed = 0;
    double grad_clip_norm = 10.0;    // <= 0 disables clipping
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t hidden = kDefaultHidden;
    bool linear_only = false;        // MLP and eps_residual frozen at zero
    bool warm_start = true;          // least-squares init of the linear coefficients
    double test_fraction = 0.2;
    std::optional<NormalizationSpec> normalization;  // fitted on the train split when absent

    void validate() const;

    /// Settings sized for a single desktop CPU: 2000 steps with a larger
    /// initial learning rate.
    static TrainConfig desk();
};

/// Integrator settings paired with TrainConfig::desk().
IntegratorConfig desk_integrator();

/// A trajectory mapped into normalized space (times divided by time_scale).
struct NormalizedTrajectory {
    std::vector<double> t;
    std::vector<PhysState> z;
};

NormalizedTrajectory normalize_trajectory(const Trajectory& traj, const NormalizationSpec& norm);
std::vector<NormalizedTrajectory> normalize_all(std::span<const Trajectory> trajs, const NormalizationSpec& norm);

/// Mean over trajectories of (1/T) sum_{t=1..T} ||Z_t - Ẑ_t||^2.
double loss(const NndParams& params, std::span<const NormalizedTrajectory> batch, const IntegratorConfig& icfg,
            ResidualMode mode = ResidualMode::Full);

struct LossGradient {
    double loss = 0.0;
    std::vector<double> grad;  // same layout as NndParams::values()
};

/// Exact reverse-mode gradient. Bit-identical for any worker count.
LossGradient loss_and_gradient(const NndParams& params, std::span<const NormalizedTrajectory> batch,
                               const IntegratorConfig& icfg, ResidualMode mode = ResidualMode::Full);

/// Model rollouts from each trajectory's first state over its own grid.
std::vector<std::vector<PhysState>> rollout(const NndParams& params, std::span<const NormalizedTrajectory> batch,
                                            const IntegratorConfig& icfg, ResidualMode mode = ResidualMode::Full);

/// Mean |Ẑ - Z| over trajectories, time steps t = 1..T and the 9 components.
double normalized_absolute_error(std::span<const std::vector<PhysState>> predicted,
                                 std::span<const NormalizedTrajectory> truth);

double eval_nae(const NndParams& params, std::span<const NormalizedTrajectory> test_batch,
                const IntegratorConfig& icfg, ResidualMode mode = ResidualMode::Full);

/// Ridge least squares for the linear coefficients from finite-difference
/// derivatives of the normalized states. Leaves the MLP and eps untouched.
void warm_start_linear(NndParams& params, std::span<const NormalizedTrajectory> trajs);

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Seeded 80/20 style split by trajectory index; both parts sorted.
Split split_indices(std::size_t n, double test_fraction, std::uint64_t seed);

struct TrainReport {
    std::vector<double> loss_curve;   // batch loss before each step
    NndModel model;                   // best-loss parameters
    NndParams initial_params;         // after warm start, before the first step
    double test_nae = 0.0;
    double best_loss = 0.0;
    int best_epoch = 0;
    Split split;
};

/// Raised when the loss turns non-finite; carries the last finite parameters.
class TrainingDiverged : public NumericalError {
public:
    TrainingDiverged(const std::string& what, int epoch, NndParams last_finite)
        : NumericalError(what), m_epoch(epoch), m_params(std::move(last_finite)) {}
    int epoch() const noexcept { return m_epoch; }
    const NndParams& last_finite_params() const noexcept { return m_params; }

private:
    int m_epoch;
    NndParams m_params;
};

/// Trains on a single-motion-type dataset. With test_fraction > 0 the held-out
/// part is never used for fitting or normalization.
TrainReport train(std::span<const Trajectory> dataset, const TrainConfig& cfg, const IntegratorConfig& icfg);

/// Cosine-annealed learning rate at a 0-based epoch.
double cosine_lr(const TrainConfig& cfg, int epoch);

} // namespace nnd
