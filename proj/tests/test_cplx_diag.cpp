#include <doctest.h>

#include <algorithm>
#include <random>

#include "rmt/cplx_diag.hpp"
#include "rmt/rng.hpp"

using namespace rmt;

namespace {

ComplexDiagonal diag(std::initializer_list<Cx> xs, HalfPlane tag = HalfPlane::none) {
    CVec v(static_cast<long>(xs.size()));
    long i = 0;
    for (Cx x : xs) v[i++] = x;
    return ComplexDiagonal(std::move(v), tag);
}

ComplexDiagonal random_upper(CounterRng& rng, long n) {
    CVec v(n);
    for (long i = 0; i < n; ++i)
        v[i] = Cx(rng.next_uniform(-3.0, 3.0), rng.next_uniform(0.05, 3.0));
    return ComplexDiagonal(std::move(v), HalfPlane::upper);
}

}  // namespace

TEST_CASE("chi on reference points") {
    CHECK(chi(diag({Cx(0, 0)})).entries[0] == Cx(1, 0));
    CHECK(chi(diag({Cx(2, 0)})).entries[0] == Cx(-1, 0));
    const Cx out = chi(diag({Cx(0, 1)})).entries[0];
    CHECK(std::abs(out - Cx(0.5, 0.5)) < 1e-15);
    CHECK_THROWS_AS(chi(diag({Cx(1, 0)})), DomainError);
}

TEST_CASE("chi preserves the upper half-plane and the Im/Re window") {
    CounterRng rng = CounterRng::from_seed(41);
    for (int rep = 0; rep < 200; ++rep) {
        const Cx z(rng.next_uniform(-5.0, -1e-6), rng.next_uniform(1e-6, 5.0));
        const Cx w = chi(diag({z})).entries[0];
        CHECK(w.imag() > 0.0);
        // upper half-plane with negative real part: both parts land in (0,1)
        CHECK(w.real() > 0.0);
        CHECK(w.real() < 1.0);
        CHECK(w.imag() < 1.0);
    }
}

TEST_CASE("stable_distance reference values") {
    const auto d1 = diag({Cx(0, 1)}, HalfPlane::upper);
    CHECK(stable_distance(d1, d1) == 0.0);
    const auto d2 = diag({Cx(0, 2)}, HalfPlane::upper);
    CHECK(stable_distance(d1, d2) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    const auto a = diag({Cx(1, 1), Cx(0, 1)}, HalfPlane::upper);
    const auto b = diag({Cx(0, 1), Cx(0, 1)}, HalfPlane::upper);
    CHECK(stable_distance(a, b) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(stable_distance(diag({Cx(0, -1)}), d1), DomainError);
    CHECK_THROWS_AS(stable_distance(d1, diag({Cx(0, 1), Cx(0, 1)})), DomainError);
}

TEST_CASE("chi is d_s-nonexpansive on random upper-half-plane diagonals") {
    CounterRng rng = CounterRng::from_seed(17);
    for (int rep = 0; rep < 100; ++rep) {
        const long n = 1 + static_cast<long>(rng.next_uniform(0, 16));
        auto d = random_upper(rng, n);
        auto e = random_upper(rng, n);
        CHECK(stable_distance(chi(d), chi(e)) <= stable_distance(d, e) + 1e-12);
    }
}

TEST_CASE("d_s is invariant under simultaneous permutation") {
    CounterRng rng = CounterRng::from_seed(23);
    auto d = random_upper(rng, 8);
    auto e = random_upper(rng, 8);
    std::vector<long> perm(8);
    for (long i = 0; i < 8; ++i) perm[i] = i;
    std::mt19937 gen(5);
    std::shuffle(perm.begin(), perm.end(), gen);
    CVec dp(8), ep(8);
    for (long i = 0; i < 8; ++i) {
        dp[i] = d.entries[perm[i]];
        ep[i] = e.entries[perm[i]];
    }
    const double before = stable_distance(d, e);
    const double after = stable_distance(ComplexDiagonal(dp, HalfPlane::upper),
                                         ComplexDiagonal(ep, HalfPlane::upper));
    CHECK(before == doctest::Approx(after).epsilon(1e-15));
}

TEST_CASE("solve_contractive: constant map converges in one step") {
    const auto dc = diag({Cx(0.5, 1.0), Cx(-0.25, 2.0)}, HalfPlane::upper);
    auto [fixed, diag_out] = solve_contractive([&](const ComplexDiagonal&) { return dc; },
                                               diag({Cx(0, 1), Cx(0, 1)}, HalfPlane::upper));
    CHECK((fixed.entries - dc.entries).cwiseAbs().maxCoeff() == 0.0);
    CHECK(diag_out.iterations == 1);
    CHECK(diag_out.final_residual == 0.0);
}

TEST_CASE("solve_contractive: scalar affine map hits 2i geometrically") {
    auto f = [](const ComplexDiagonal& d) {
        ComplexDiagonal out = d;
        out.entries[0] = Cx(0, 1) + d.entries[0] / 2.0;
        return out;
    };
    SolveOptions opts;
    opts.tol = 1e-10;
    auto [fixed, dg] = solve_contractive(f, diag({Cx(0, 1)}, HalfPlane::upper), opts);
    CHECK(std::abs(fixed.entries[0] - Cx(0, 2)) < 2e-10);
    // geometric rate: about log2(1/tol) iterations
    CHECK(dg.iterations >= 25);
    CHECK(dg.iterations <= 45);
    // residual decreased by about the Lipschitz factor per undamped step
    CHECK(dg.final_residual <= 1e-10);
}

TEST_CASE("solve_contractive: residual contraction factor is tracked by ds history") {
    auto f = [](const ComplexDiagonal& d) {
        ComplexDiagonal out = d;
        for (long i = 0; i < d.size(); ++i) out.entries[i] = Cx(0, 1) + 0.6 * d.entries[i];
        return out;
    };
    auto [fixed, dg] = solve_contractive(f, diag({Cx(1, 1), Cx(0, 3)}, HalfPlane::upper));
    (void)fixed;
    REQUIRE(dg.ds_history.size() >= 5);
    for (size_t k = 3; k < dg.ds_history.size(); ++k)
        CHECK(dg.ds_history[k] <= (0.6 + 0.05) * dg.ds_history[k - 1] + 1e-12);
}

TEST_CASE("solve_contractive: domain escape raises") {
    auto f = [](const ComplexDiagonal& d) {
        ComplexDiagonal out = d;
        out.entries[0] = d.entries[0] - Cx(0, 1);  // pushes Im down
        return out;
    };
    CHECK_THROWS_AS(solve_contractive(f, diag({Cx(0, 0.5)}, HalfPlane::upper)),
                    DomainEscapeError);
}

TEST_CASE("solve_contractive: non-convergence carries the last residual") {
    auto f = [](const ComplexDiagonal& d) {
        ComplexDiagonal out = d;
        out.entries[0] = d.entries[0] + Cx(1.0, 0.0);  // drifts, never settles
        return out;
    };
    SolveOptions opts;
    opts.max_iter = 50;
    try {
        solve_contractive(f, diag({Cx(0, 1)}, HalfPlane::upper), opts);
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
        CHECK(e.last_residual > 0.0);
        CHECK(e.iterations == 50);
    }
}

TEST_CASE("solve_contractive: oscillation triggers one damped retry") {
    // f flips the real part around 0 and contracts only under damping
    auto f = [](const ComplexDiagonal& d) {
        ComplexDiagonal out = d;
        out.entries[0] = Cx(-d.entries[0].real(), d.entries[0].imag());
        return out;
    };
    SolveOptions opts;
    opts.tol = 1e-12;
    opts.max_iter = 500;
    auto [fixed, dg] = solve_contractive(f, diag({Cx(1, 1)}, HalfPlane::upper), opts);
    (void)dg;
    CHECK(std::abs(fixed.entries[0].real()) < 1e-11);
}
