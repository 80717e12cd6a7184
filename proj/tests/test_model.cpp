#include <doctest.h>

#include <cmath>
#include <random>

#include "nnd/errors.hpp"
#include "nnd/model.hpp"
#include "test_util.hpp"

using namespace nnd;

namespace {

NndParams random_params(std::size_t hidden, std::uint64_t seed, double scale = 0.5) {
    NndParams p = NndParams::initialized(hidden, seed);
    std::mt19937_64 gen(seed * 7 + 1);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (std::size_t i = 0; i < kEpsResidual; ++i) p[i] = u(gen);
    p.coef(kEpsResidual) = 0.3 + std::abs(u(gen));
    for (std::size_t i = p.layout().w3; i < p.layout().total; ++i) p[i] = u(gen);
    return p;
}

// Straight-line transcription of the right-hand side, independent of BatchRhs.
PhysState reference_rhs(const PhysState& z, const NndParams& p) {
    PhysState d;
    d[kX] = z[kVx];
    d[kY] = z[kVy];
    d[kVx] = p.coef(kAx) * z[kX] + p.coef(kBx) * z[kVx] + p.coef(kCx);
    d[kVy] = p.coef(kAy) * z[kY] + p.coef(kBy) * z[kVy] + p.coef(kCy);
    d[kTheta] = z[kOmega];
    d[kOmega] = -p.coef(kGOverL) * z[kTheta] - p.coef(kGamma) * z[kOmega];
    d[kS] = p.coef(kAlphaS) * z[kS] + p.coef(kBetaS);
    d[kL] = p.coef(kAlphaL) * z[kL] + p.coef(kBetaL);
    d[kA] = p.coef(kAlphaA) * z[kA] + p.coef(kBetaA);
    const std::size_t H = p.hidden();
    std::vector<double> h1(H), h2(H);
    for (std::size_t i = 0; i < H; ++i) {
        double s = p.b1()[i];
        for (std::size_t j = 0; j < kStateDim; ++j) s += p.w1()[i * kStateDim + j] * z[j];
        h1[i] = std::tanh(s);
    }
    for (std::size_t i = 0; i < H; ++i) {
        double s = p.b2()[i];
        for (std::size_t j = 0; j < H; ++j) s += p.w2()[i * H + j] * h1[j];
        h2[i] = std::tanh(s);
    }
    for (std::size_t o = 0; o < kResidualDim; ++o) {
        double s = p.b3()[o];
        for (std::size_t j = 0; j < H; ++j) s += p.w3()[o * H + j] * h2[j];
        d[kResidualSlots[o]] += p.coef(kEpsResidual) * std::tanh(s);
    }
    return d;
}

std::vector<double> grid(int n, double fps) {
    std::vector<double> t(n);
    for (int k = 0; k < n; ++k) t[k] = k / fps;
    return t;
}

double max_err_harmonic(int substeps) {
    NndParams p(8);
    p.coef(kGOverL) = 4.0;
    p.coef(kEpsResidual) = 0.0;
    PhysState z0;
    z0[kTheta] = 0.1;
    const auto t = grid(49, 24.0);
    const auto out = integrate(z0, t, p, IntegratorConfig{substeps});
    double e = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) e = std::max(e, std::abs(out[k].theta() - 0.1 * std::cos(2 * t[k])));
    return e;
}

} // namespace

TEST_CASE("parameter layout and initialization") {
    NndParams p = NndParams::initialized(64, 3);
    CHECK(p.size() == kNumCoef + 64 * 9 + 64 + 64 * 64 + 64 + 6 * 64 + 6);
    CHECK(p.output_layer_zero());
    CHECK(p.coef(kEpsResidual) == kDefaultEpsResidual);
    CHECK(p.finite());
    CHECK(p.entry_name(kCy) == "cy");
    CHECK(p.entry_name(p.layout().w2 + 64 * 3 + 17) == "w2[3,17]");
    CHECK(NndParams::initialized(64, 3) == p);
    CHECK_FALSE(NndParams::initialized(64, 4) == p);
}

TEST_CASE("rhs examples") {
    NndParams p = NndParams::initialized(16, 1);
    std::mt19937_64 gen(5);
    const PhysState z = test::random_state(gen);
    PhysState lin = rhs(z, p, ResidualMode::LinearOnly);
    CHECK(rhs(z, p) == lin);

    NndParams q(16);
    q.coef(kCx) = -9.8;
    PhysState still;
    CHECK(rhs(still, q)[kVx] == -9.8);
}

TEST_CASE("rhs matches the reference transcription") {
    std::mt19937_64 gen(6);
    for (int trial = 0; trial < 50; ++trial) {
        const NndParams p = random_params(1 + trial % 20, trial);
        const PhysState z = test::random_state(gen, -2.0, 2.0);
        const PhysState a = rhs(z, p), b = reference_rhs(z, p);
        for (std::size_t d = 0; d < kStateDim; ++d) CHECK(std::abs(a[d] - b[d]) <= 1e-12 * std::max(1.0, std::abs(b[d])));
    }
}

TEST_CASE("integrator closed forms") {
    const auto t = grid(25, 24.0);
    SUBCASE("free drift is exact") {
        NndParams p(8);
        p.coef(kEpsResidual) = 0.0;
        PhysState z0;
        z0[kX] = 0.25;
        z0[kVx] = 2.0;
        const auto out = integrate(z0, t, p, {});
        for (std::size_t k = 0; k < t.size(); ++k) CHECK(out[k].x() == doctest::Approx(0.25 + 2.0 * t[k]).epsilon(1e-14));
    }
    SUBCASE("free fall") {
        NndParams p(8);
        p.coef(kCy) = -9.8;
        const auto out = integrate(PhysState{}, grid(25, 24.0), p, {});
        CHECK(std::abs(out.back().y() + 4.9) < 1e-10);
    }
    SUBCASE("harmonic oscillator and fourth-order convergence") {
        CHECK(max_err_harmonic(8) < 1e-6);
        const double ratio = max_err_harmonic(4) / max_err_harmonic(8);
        CHECK(ratio >= 12.0);
        CHECK(ratio <= 20.0);
    }
}

TEST_CASE("zeroed residual is bit-identical to the linear-only integrator") {
    NndParams p = random_params(32, 9);
    p.zero_output_layer();
    std::mt19937_64 gen(7);
    const PhysState z0 = test::random_state(gen, -0.5, 0.5);
    const auto t = grid(49, 24.0);
    CHECK(integrate(z0, t, p, {}) == integrate(z0, t, p, {}, ResidualMode::LinearOnly));
}

TEST_CASE("integration is time-grid consistent") {
    const NndParams p = random_params(16, 2, 0.3);
    std::mt19937_64 gen(8);
    const PhysState z0 = test::random_state(gen, -0.5, 0.5);
    const std::vector<double> direct_t = {0.0, 0.5};
    const std::vector<double> first = {0.0, 0.25}, second = {0.25, 0.5};
    IntegratorConfig one{1};
    const PhysState direct = integrate(z0, direct_t, p, IntegratorConfig{2}).back();
    const PhysState mid = integrate(z0, first, p, one).back();
    const PhysState restarted = integrate(mid, second, p, one).back();
    for (std::size_t d = 0; d < kStateDim; ++d) CHECK(std::abs(direct[d] - restarted[d]) <= 1e-12);
}

TEST_CASE("blow-up reports the step") {
    NndParams p(4);
    p.coef(kAx) = 1e6;
    PhysState z0;
    z0[kX] = 1.0;
    try {
        (void)integrate(z0, grid(49, 24.0), p, {});
        FAIL("expected IntegrationError");
    } catch (const IntegrationError& e) {
        CHECK(e.step() > 0);
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
}

TEST_CASE("backward_batch matches finite differences of a linear functional") {
    const std::size_t B = 3, H = 6;
    const auto t = grid(6, 24.0);
    std::mt19937_64 gen(12);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 4; ++trial) {
        NndParams p = random_params(H, 100 + trial, 0.6);
        std::vector<double> z0(B * kStateDim), w(t.size() * B * kStateDim);
        for (auto& v : z0) v = u(gen);
        for (auto& v : w) v = u(gen);
        auto functional = [&](const NndParams& q, const std::vector<double>& z) {
            BatchRhs f(q, ResidualMode::Full);
            const auto out = integrate_batch(f, z.data(), B, t, IntegratorConfig{2}, nullptr);
            long double s = 0;
            for (std::size_t i = 0; i < out.size(); ++i) s += static_cast<long double>(out[i]) * w[i];
            return static_cast<double>(s);
        };
        BatchRhs f(p, ResidualMode::Full);
        IntegrationTape tape;
        (void)integrate_batch(f, z0.data(), B, t, IntegratorConfig{2}, &tape);
        std::vector<double> gp(p.size(), 0.0), gz(B * kStateDim, 0.0);
        backward_batch(f, tape, w.data(), gp.data(), gz.data());

        const double h = 1e-6;
        for (std::size_t i = 0; i < p.size(); i += 3) {
            NndParams a = p, b = p;
            a[i] += h;
            b[i] -= h;
            const double fd = (functional(a, z0) - functional(b, z0)) / (2 * h);
            CAPTURE(p.entry_name(i));
            CHECK(std::abs(fd - gp[i]) <= 1e-6 * std::max(1.0, std::abs(fd)));
        }
        for (std::size_t i = 0; i < z0.size(); ++i) {
            auto a = z0, b = z0;
            a[i] += h;
            b[i] -= h;
            const double fd = (functional(p, a) - functional(p, b)) / (2 * h);
            CHECK(std::abs(fd - gz[i]) <= 1e-6 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("checkpoint roundtrip is lossless") {
    NndModel m;
    m.motion_type = MotionType::Circular;
    m.params = random_params(12, 77);
    m.params[m.params.layout().w2 + 5] = 0.1 + 1e-17;
    m.params[3] = 1.0 / 3.0;
    m.norm.offset[kX] = 0.123456789012345678;
    m.norm.scale[kVx] = 2.0 / 3.0;
    m.norm.time_scale = 2.0;
    m.icfg.substeps_per_frame = 3;
    m.mode = ResidualMode::LinearOnly;
    const NndModel back = checkpoint_from_json(checkpoint_to_json(m));
    CHECK(back.params == m.params);
    CHECK(back.norm == m.norm);
    CHECK(back.icfg == m.icfg);
    CHECK(back.mode == m.mode);
    CHECK(back.motion_type == m.motion_type);
    CHECK(params_hash(back.params) == params_hash(m.params));

    std::string text = checkpoint_to_json(m);
    const auto pos = text.find("\"version\": 1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 12, "\"version\": 2");
    CHECK_THROWS_AS(checkpoint_from_json(text), DataError);
    CHECK_THROWS_AS(checkpoint_from_json("{\"format\": \"nnd-checkpoint\""), DataError);
    CHECK_THROWS_AS(checkpoint_from_json("[]"), DataError);
}
