#include "nnd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>

#include "nnd/encoder.hpp"
#include "nnd/parallel.hpp"
#include "nnd/rng.hpp"

namespace nnd {

namespace {

// Fixed work unit for gradient evaluation; the reduction runs over chunks in
// index order, so results do not depend on the worker count.
constexpr std::size_t kChunk = 32;

struct Chunk {
    std::vector<std::size_t> items;  // indices into the batch, ascending
};

std::vector<Chunk> make_chunks(std::span<const NormalizedTrajectory> batch) {
    std::vector<Chunk> chunks;
    std::vector<bool> taken(batch.size(), false);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (taken[i]) continue;
        if (batch[i].z.size() < 2 || batch[i].t.size() != batch[i].z.size()) {
            std::ostringstream os;
            os << "trajectory " << i << " needs at least 2 frames with matching timestamps";
            throw DataError(os.str());
        }
        Chunk c;
        for (std::size_t j = i; j < batch.size(); ++j) {
            if (!taken[j] && batch[j].t == batch[i].t) {
                taken[j] = true;
                c.items.push_back(j);
                if (c.items.size() == kChunk) {
                    chunks.push_back(std::move(c));
                    c = Chunk{};
                }
            }
        }
        if (!c.items.empty()) chunks.push_back(std::move(c));
    }
    return chunks;
}

std::vector<double> gather_z0(std::span<const NormalizedTrajectory> batch, const Chunk& c) {
    std::vector<double> z0(c.items.size() * kStateDim);
    for (std::size_t b = 0; b < c.items.size(); ++b) {
        std::copy(batch[c.items[b]].z[0].v.begin(), batch[c.items[b]].z[0].v.end(), z0.begin() + b * kStateDim);
    }
    return z0;
}

[[noreturn]] void rethrow_for_item(const IntegrationError& e, const Chunk& c) {
    std::ostringstream os;
    os << "trajectory " << c.items[e.item()] << ": " << e.what();
    throw IntegrationError(os.str(), e.step(), c.items[e.item()]);
}

// Pairwise sum in index order.
double pairwise_sum(std::span<const double> v) {
    if (v.empty()) return 0.0;
    if (v.size() == 1) return v[0];
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

void pairwise_reduce(std::vector<std::vector<double>>& parts) {
    for (std::size_t stride = 1; stride < parts.size(); stride *= 2) {
        for (std::size_t i = 0; i + stride < parts.size(); i += 2 * stride) {
            auto& dst = parts[i];
            const auto& src = parts[i + stride];
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
    }
}

struct ChunkResult {
    double loss = 0.0;
    std::vector<double> grad;
};

ChunkResult eval_chunk(const BatchRhs& f, std::span<const NormalizedTrajectory> batch, const Chunk& c,
                       const IntegratorConfig& icfg, bool want_grad, double inv_n, std::size_t n_params) {
    const std::size_t bsz = c.items.size();
    const auto& t = batch[c.items[0]].t;
    const std::size_t frames = t.size();
    const double inv_t = 1.0 / static_cast<double>(frames - 1);
    const auto z0 = gather_z0(batch, c);

    IntegrationTape tape;
    std::vector<double> pred;
    try {
        pred = integrate_batch(f, z0.data(), bsz, t, icfg, want_grad ? &tape : nullptr);
    } catch (const IntegrationError& e) {
        rethrow_for_item(e, c);
    }

    ChunkResult r;
    std::vector<double> g_frames(want_grad ? frames * bsz * kStateDim : 0, 0.0);
    std::vector<double> per_item(bsz, 0.0);
    for (std::size_t b = 0; b < bsz; ++b) {
        const auto& truth = batch[c.items[b]].z;
        double acc = 0.0;
        for (std::size_t k = 1; k < frames; ++k) {
            const double* p = pred.data() + (k * bsz + b) * kStateDim;
            for (std::size_t d = 0; d < kStateDim; ++d) {
                const double diff = p[d] - truth[k][d];
                acc += diff * diff;
                if (want_grad) g_frames[(k * bsz + b) * kStateDim + d] = 2.0 * diff * inv_t * inv_n;
            }
        }
        per_item[b] = acc * inv_t * inv_n;
    }
    r.loss = pairwise_sum(per_item);
    if (want_grad) {
        r.grad.assign(n_params, 0.0);
        backward_batch(f, tape, g_frames.data(), r.grad.data(), nullptr);
    }
    return r;
}

LossGradient evaluate(const NndParams& params, std::span<const NormalizedTrajectory> batch,
                      const IntegratorConfig& icfg, ResidualMode mode, bool want_grad) {
    if (batch.empty()) throw DataError("empty batch");
    const auto chunks = make_chunks(batch);
    const BatchRhs f(params, mode);
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    std::vector<ChunkResult> results(chunks.size());
    parallel_for(chunks.size(), [&](std::size_t i) {
        results[i] = eval_chunk(f, batch, chunks[i], icfg, want_grad, inv_n, params.size());
    });

    LossGradient out;
    std::vector<double> losses(results.size());
    for (std::size_t i = 0; i < results.size(); ++i) losses[i] = results[i].loss;
    out.loss = pairwise_sum(losses);
    if (want_grad) {
        std::vector<std::vector<double>> parts(results.size());
        for (std::size_t i = 0; i < results.size(); ++i) parts[i] = std::move(results[i].grad);
        pairwise_reduce(parts);
        out.grad = std::move(parts[0]);
    }
    return out;
}

bool trainable(std::size_t index, bool linear_only) {
    return !linear_only || index < kEpsResidual;
}

} // namespace

void TrainConfig::validate() const {
    if (!(lr0 >= 0.0) || !std::isfinite(lr0)) throw ConfigError("lr0 must be finite and >= 0");
    if (!(lr_min >= 0.0)) throw ConfigError("lr_min must be >= 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be > 0");
    if (hidden < 1) throw ConfigError("hidden must be >= 1");
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in [0, 1)");
    if (normalization) normalization->validate();
}

TrainConfig TrainConfig::desk() {
    TrainConfig c;
    c.epochs = 2000;
    c.lr0 = 2e-2;
    c.lr_min = 1e-5;
    return c;
}

IntegratorConfig desk_integrator() { return IntegratorConfig{.substeps_per_frame = 2}; }

NormalizedTrajectory normalize_trajectory(const Trajectory& traj, const NormalizationSpec& norm) {
    NormalizedTrajectory out;
    out.t.resize(traj.timestamps.size());
    out.z.resize(traj.states.size());
    for (std::size_t i = 0; i < out.t.size(); ++i) out.t[i] = traj.timestamps[i] / norm.time_scale;
    for (std::size_t i = 0; i < out.z.size(); ++i) out.z[i] = norm.normalize(traj.states[i]);
    return out;
}

std::vector<NormalizedTrajectory> normalize_all(std::span<const Trajectory> trajs, const NormalizationSpec& norm) {
    std::vector<NormalizedTrajectory> out;
    out.reserve(trajs.size());
    for (const auto& t : trajs) out.push_back(normalize_trajectory(t, norm));
    return out;
}

double loss(const NndParams& params, std::span<const NormalizedTrajectory> batch, const IntegratorConfig& icfg,
            ResidualMode mode) {
    return evaluate(params, batch, icfg, mode, false).loss;
}

LossGradient loss_and_gradient(const NndParams& params, std::span<const NormalizedTrajectory> batch,
                               const IntegratorConfig& icfg, ResidualMode mode) {
    return evaluate(params, batch, icfg, mode, true);
}

std::vector<std::vector<PhysState>> rollout(const NndParams& params, std::span<const NormalizedTrajectory> batch,
                                            const IntegratorConfig& icfg, ResidualMode mode) {
    std::vector<std::vector<PhysState>> out(batch.size());
    const auto chunks = make_chunks(batch);
    const BatchRhs f(params, mode);
    parallel_for(chunks.size(), [&](std::size_t i) {
        const Chunk& c = chunks[i];
        const std::size_t bsz = c.items.size();
        const auto& t = batch[c.items[0]].t;
        const auto z0 = gather_z0(batch, c);
        std::vector<double> pred;
        try {
            pred = integrate_batch(f, z0.data(), bsz, t, icfg, nullptr);
        } catch (const IntegrationError& e) {
            rethrow_for_item(e, c);
        }
        for (std::size_t b = 0; b < bsz; ++b) {
            auto& states = out[c.items[b]];
            states.resize(t.size());
            for (std::size_t k = 0; k < t.size(); ++k) {
                const double* p = pred.data() + (k * bsz + b) * kStateDim;
                std::copy(p, p + kStateDim, states[k].v.begin());
            }
        }
    });
    return out;
}

double normalized_absolute_error(std::span<const std::vector<PhysState>> predicted,
                                 std::span<const NormalizedTrajectory> truth) {
    if (truth.empty()) throw DataError("normalized_absolute_error: empty test batch");
    if (predicted.size() != truth.size()) throw DataError("normalized_absolute_error: size mismatch");
    std::vector<double> per_traj(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const auto& z = truth[i].z;
        if (predicted[i].size() != z.size() || z.size() < 2) {
            throw DataError("normalized_absolute_error: frame count mismatch");
        }
        std::vector<double> per_frame(z.size() - 1);
        for (std::size_t k = 1; k < z.size(); ++k) {
            double acc = 0.0;
            for (std::size_t d = 0; d < kStateDim; ++d) acc += std::abs(predicted[i][k][d] - z[k][d]);
            per_frame[k - 1] = acc / kStateDim;
        }
        per_traj[i] = pairwise_sum(per_frame) / static_cast<double>(per_frame.size());
    }
    return pairwise_sum(per_traj) / static_cast<double>(per_traj.size());
}

double eval_nae(const NndParams& params, std::span<const NormalizedTrajectory> test_batch,
                const IntegratorConfig& icfg, ResidualMode mode) {
    if (test_batch.empty()) throw DataError("eval_nae: empty test batch");
    const auto pred = rollout(params, test_batch, icfg, mode);
    return normalized_absolute_error(pred, test_batch);
}

void warm_start_linear(NndParams& params, std::span<const NormalizedTrajectory> trajs) {
    struct Fit {
        std::size_t target;               // state component whose derivative is regressed
        std::vector<std::size_t> features;  // state components; kStateDim means the constant 1
        std::vector<Coef> coefs;
        std::vector<double> signs;
    };
    constexpr std::size_t kOne = kStateDim;
    const Fit fits[] = {
        {kVx, {kX, kVx, kOne}, {kAx, kBx, kCx}, {1, 1, 1}},
        {kVy, {kY, kVy, kOne}, {kAy, kBy, kCy}, {1, 1, 1}},
        {kOmega, {kTheta, kOmega}, {kGOverL, kGamma}, {-1, -1}},
        {kS, {kS, kOne}, {kAlphaS, kBetaS}, {1, 1}},
        {kL, {kL, kOne}, {kAlphaL, kBetaL}, {1, 1}},
        {kA, {kA, kOne}, {kAlphaA, kBetaA}, {1, 1}},
    };

    std::size_t rows = 0;
    for (const auto& tr : trajs) {
        if (tr.z.size() >= 3) rows += tr.z.size();
    }
    if (rows == 0) return;

    for (const Fit& fit : fits) {
        const std::size_t cols = fit.features.size();
        Eigen::MatrixXd a(rows + cols, cols);
        Eigen::VectorXd y(rows + cols);
        std::size_t r = 0;
        for (const auto& tr : trajs) {
            const std::size_t n = tr.z.size();
            if (n < 3) continue;
            std::vector<double> series(n);
            for (std::size_t k = 0; k < n; ++k) series[k] = tr.z[k][fit.target];
            const double dt = (tr.t.back() - tr.t.front()) / static_cast<double>(n - 1);
            const auto deriv = differentiate(series, dt);
            for (std::size_t k = 0; k < n; ++k, ++r) {
                for (std::size_t c = 0; c < cols; ++c) {
                    a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                        fit.features[c] == kOne ? 1.0 : tr.z[k][fit.features[c]];
                }
                y(static_cast<Eigen::Index>(r)) = deriv[k];
            }
        }
        // Small ridge keeps collinear features (e.g. a constant size) well posed.
        const double lambda = 1e-6 * static_cast<double>(rows);
        for (std::size_t c = 0; c < cols; ++c, ++r) {
            a.row(static_cast<Eigen::Index>(r)).setZero();
            a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = std::sqrt(lambda);
            y(static_cast<Eigen::Index>(r)) = 0.0;
        }
        const Eigen::VectorXd sol = a.colPivHouseholderQr().solve(y);
        for (std::size_t c = 0; c < cols; ++c) {
            const double v = fit.signs[c] * sol(static_cast<Eigen::Index>(c));
            if (std::isfinite(v)) params.coef(fit.coefs[c]) = v;
        }
    }
}

Split split_indices(std::size_t n, double test_fraction, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    Rng rng(stream_seed(seed, 0x5157));
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    std::size_t n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
    if (test_fraction > 0.0 && n >= 2) n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
    if (n < 2) n_test = 0;
    Split s;
    s.test.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
    s.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
    std::sort(s.test.begin(), s.test.end());
    std::sort(s.train.begin(), s.train.end());
    return s;
}

double cosine_lr(const TrainConfig& cfg, int epoch) {
    const double lo = std::min(cfg.lr_min, cfg.lr0);
    const double frac = cfg.epochs > 1 ? static_cast<double>(epoch) / (cfg.epochs - 1) : 0.0;
    return lo + 0.5 * (cfg.lr0 - lo) * (1.0 + std::cos(std::numbers::pi * frac));
}

TrainReport train(std::span<const Trajectory> dataset, const TrainConfig& cfg, const IntegratorConfig& icfg) {
    cfg.validate();
    icfg.validate();
    if (dataset.empty()) throw DataError("train: empty dataset");
    for (const auto& t : dataset) {
        t.validate();
        if (t.motion_type != dataset[0].motion_type) throw DataError("train: dataset mixes motion types");
    }

    TrainReport report;
    report.split = split_indices(dataset.size(), cfg.test_fraction, cfg.seed);
    std::vector<Trajectory> train_set;
    for (std::size_t i : report.split.train) train_set.push_back(dataset[i]);

    NndModel& model = report.model;
    model.motion_type = dataset[0].motion_type;
    model.icfg = icfg;
    model.mode = cfg.linear_only ? ResidualMode::LinearOnly : ResidualMode::Full;
    model.norm = cfg.normalization ? *cfg.normalization : fit_normalization(train_set);
    const auto train_n = normalize_all(train_set, model.norm);

    NndParams params = NndParams::initialized(cfg.hidden, stream_seed(cfg.seed, 0x1417));
    if (cfg.linear_only) {
        params.coef(kEpsResidual) = 0.0;
        params.zero_output_layer();
    }
    if (cfg.warm_start) warm_start_linear(params, train_n);
    report.initial_params = params;

    const std::size_t np = params.size();
    std::vector<double> m(np, 0.0), v(np, 0.0);
    NndParams best = params;
    double best_loss = std::numeric_limits<double>::infinity();
    int best_epoch = 0;

    Rng shuffle(stream_seed(cfg.seed, 0xba7c));
    std::vector<std::size_t> order(train_n.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t cursor = order.size();
    const std::size_t bsz = std::min(cfg.batch_size, train_n.size());
    std::vector<NormalizedTrajectory> batch;
    batch.reserve(bsz);

    report.loss_curve.reserve(static_cast<std::size_t>(cfg.epochs));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        batch.clear();
        if (bsz == train_n.size()) {
            batch.assign(train_n.begin(), train_n.end());
        } else {
            for (std::size_t k = 0; k < bsz; ++k) {
                if (cursor == order.size()) {
                    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
                    cursor = 0;
                }
                batch.push_back(train_n[order[cursor++]]);
            }
        }

        LossGradient lg;
        try {
            lg = loss_and_gradient(params, batch, icfg, model.mode);
        } catch (const NumericalError& e) {
            std::ostringstream os;
            os << "training diverged at epoch " << epoch << ": " << e.what();
            throw TrainingDiverged(os.str(), epoch, params);
        }
        if (!std::isfinite(lg.loss)) {
            std::ostringstream os;
            os << "training diverged at epoch " << epoch << ": loss is not finite";
            throw TrainingDiverged(os.str(), epoch, params);
        }
        report.loss_curve.push_back(lg.loss);
        if (lg.loss < best_loss) {
            best_loss = lg.loss;
            best = params;
            best_epoch = epoch;
        }

        for (std::size_t i = 0; i < np; ++i) {
            if (!trainable(i, cfg.linear_only)) lg.grad[i] = 0.0;
        }
        if (cfg.grad_clip_norm > 0.0) {
            std::vector<double> sq(np);
            for (std::size_t i = 0; i < np; ++i) sq[i] = lg.grad[i] * lg.grad[i];
            const double norm = std::sqrt(pairwise_sum(sq));
            if (norm > cfg.grad_clip_norm) {
                const double s = cfg.grad_clip_norm / norm;
                for (double& g : lg.grad) g *= s;
            }
        }

        const double lr = cosine_lr(cfg, epoch);
        const double t = static_cast<double>(epoch + 1);
        const double bc1 = 1.0 - std::pow(cfg.beta1, t);
        const double bc2 = 1.0 - std::pow(cfg.beta2, t);
        for (std::size_t i = 0; i < np; ++i) {
            if (!trainable(i, cfg.linear_only)) continue;
            if (i != kEpsResidual) params[i] -= lr * cfg.weight_decay * params[i];
            const double g = lg.grad[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.adam_eps);
        }
        if (!params.finite()) {
            std::ostringstream os;
            os << "training diverged at epoch " << epoch << ": parameters are not finite";
            throw TrainingDiverged(os.str(), epoch, best);
        }
    }

    model.params = best;
    report.best_loss = best_loss;
    report.best_epoch = best_epoch;
    if (!report.split.test.empty()) {
        std::vector<Trajectory> test_set;
        for (std::size_t i : report.split.test) test_set.push_back(dataset[i]);
        report.test_nae = eval_nae(model.params, normalize_all(test_set, model.norm), icfg, model.mode);
    }
    return report;
}

} // namespace nnd
