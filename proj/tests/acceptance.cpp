// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failed criteria. Tolerances and parameters are pinned here, not configurable.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "rmt/concentration.hpp"
#include "rmt/model.hpp"
#include "rmt/regression.hpp"
#include "rmt/resolvent.hpp"
#include "rmt/rng.hpp"

using namespace rmt;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& msg) {
        if (!ok) {
            pass = false;
            if (!detail.empty()) detail += "; ";
            detail += msg;
        }
    }
    void note(const std::string& msg) {
        if (!detail.empty()) detail += "; ";
        detail += msg;
    }
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

// ---------------------------------------------------------------- criterion 1
Outcome criterion_marchenko_pastur() {
    Outcome out;
    const auto model = fixtures::isotropic(25, 100, 0.25, 0.25);
    const oracle::MarchenkoPastur mp{0.25, 0.25};

    const std::vector<Cx> points = {
        {-1.0, 0.0}, {-0.5, 0.0},  {-0.25, 0.0}, {-0.1, 0.0}, {0.8, 0.0},
        {1.0, 0.0},  {1.5, 0.0},   {2.0, 0.0},   {0.1, 0.15}, {0.1, -0.15},
        {0.3, 0.2},  {0.3, -0.2},  {0.5, 0.5},   {0.5, -0.5}, {0.0, 1.0},
        {0.3, -1.0}, {-0.5, 0.25}, {1.0, 0.3},   {0.2, 0.4},  {0.45, -0.3}};
    double worst_m = 0.0;
    for (const Cx z : points) {
        if (mp.support_distance(z) < 0.1) {
            out.require(false, "grid point too close to the support");
            continue;
        }
        const auto de = deterministic_equivalent(ResolventQuery{z, model});
        worst_m = std::max(worst_m, std::abs(-de.stieltjes - mp.stieltjes(z)));
    }
    out.require(worst_m <= 1e-8, "Stieltjes error " + fmt(worst_m) + " > 1e-8");
    out.note("max Stieltjes error " + fmt(worst_m) + " over 20 points");

    const double eta = 1e-3;
    std::vector<double> grid(400);
    for (int k = 0; k < 400; ++k) grid[k] = 0.02 + (0.62 - 0.02) * k / 399.0;
    const auto dens = spectral_density(model, grid, eta);
    double worst_d = 0.0;
    for (const auto& [x, d] : dens)
        worst_d = std::max(worst_d,
                           std::abs(d - mp.stieltjes(Cx(x, eta)).imag() / M_PI));
    out.require(worst_d <= 1e-2, "density sup-error " + fmt(worst_d) + " > 1e-2");
    out.note("density sup-error " + fmt(worst_d) + " at eta = 1e-3");
    return out;
}

// ---------------------------------------------------------------- criterion 2
Outcome criterion_lambda_geometry() {
    Outcome out;
    double worst_residual = 0.0, worst_conj = 0.0;
    bool half_plane_ok = true;
    for (std::uint64_t ms = 0; ms < 5; ++ms) {
        const auto model = fixtures::random_two_group(24, 48, 9000 + ms);
        for (int ri = 0; ri < 6; ++ri) {
            const double re = -2.0 + ri * (1.9 / 5.0);
            for (const double im : {-1.0, -0.1, 0.0, 0.1, 1.0}) {
                const Cx z(re, im);
                const auto [lam, diag] = compute_Lambda(z, model);
                const auto fx = I_z(z, chi(lam), model);
                worst_residual = std::max(
                    worst_residual, (lam.entries - fx.entries).cwiseAbs().maxCoeff());
                if (im < 0.0 && !lam.in_upper_half_plane()) half_plane_ok = false;
                if (im > 0.0) {
                    const auto [lam_conj, d2] = compute_Lambda(std::conj(z), model);
                    worst_conj = std::max(
                        worst_conj,
                        (lam.entries - lam_conj.entries.conjugate()).cwiseAbs().maxCoeff());
                }
            }
        }
    }
    out.require(worst_residual <= 1e-10,
                "Lambda residual " + fmt(worst_residual) + " > 1e-10");
    out.require(half_plane_ok, "upper-half-plane preservation violated");
    out.require(worst_conj <= 1e-10, "conjugation mismatch " + fmt(worst_conj));
    out.note("residual " + fmt(worst_residual) + ", conjugation " + fmt(worst_conj) +
             " over 150 solves");
    return out;
}

// ---------------------------------------------------------------- criterion 3
Outcome criterion_frobenius_rate() {
    Outcome out;
    std::vector<DataModel> family;
    for (long n : {100L, 200L, 400L})
        family.push_back(fixtures::two_group(n / 2, n, 0.2, 0.4, 0.05));
    const auto table = frobenius_rate_experiment(family, Cx(-1.0, 0.0), 200, 4242, 4);
    const double e100 = table.rows[0].error, e200 = table.rows[1].error,
                 e400 = table.rows[2].error;
    out.require(e200 < e100 && e400 < e200,
                "error not strictly decreasing: " + fmt(e100) + ", " + fmt(e200) + ", " +
                    fmt(e400));
    out.require(e400 / e100 <= 0.8,
                "error(400)/error(100) = " + fmt(e400 / e100) + " > 0.8 (theory 0.57)");
    out.note("errors " + fmt(e100) + " / " + fmt(e200) + " / " + fmt(e400) +
             ", discards " + fmt(table.rows[0].discard_rate) + "/" +
             fmt(table.rows[1].discard_rate) + "/" + fmt(table.rows[2].discard_rate));
    return out;
}

// ---------------------------------------------------------------- criterion 4
Outcome criterion_schur() {
    Outcome out;
    const auto model = fixtures::isotropic(40, 80, 0.25, 0.25);
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 50; ++s) {
        const auto X = sample(model, 777 + s);
        const auto r = schur_check(X, Cx(-1.0, 0.0), static_cast<long>(s % 80));
        worst = std::max({worst, r.matrix_residual, r.vector_residual});
    }
    out.require(worst <= 1e-8, "Schur residual " + fmt(worst) + " > 1e-8");
    out.note("max residual " + fmt(worst) + " over 50 draws");
    return out;
}

// ---------------------------------------------------------------- criterion 5
Outcome criterion_zeta_quadrature() {
    Outcome out;
    const auto f = logistic_model(Vec::Zero(2), Mat::Identity(2, 2), 2, 1.0).second;
    CounterRng rng = CounterRng::from_seed(321);
    double worst_res = 0.0, worst_fd = 0.0;
    for (int k = 0; k < 100; ++k) {
        const double v = rng.next_uniform(-3.0, 3.0);
        const double delta = rng.next_uniform(0.0, 0.9 / f.sup_deriv);
        const auto [z, zd] = zeta(v, delta, f);
        worst_res = std::max(worst_res, std::abs(z - v - delta * f.eval(z)));
        const double h = 1e-6;
        const double fd =
            (zeta(v + h, delta, f).first - zeta(v - h, delta, f).first) / (2.0 * h);
        worst_fd = std::max(worst_fd, std::abs(zd - fd) / std::abs(zd));
    }
    out.require(worst_res <= 1e-12, "zeta residual " + fmt(worst_res) + " > 1e-12");
    out.require(worst_fd <= 1e-6, "zeta derivative FD error " + fmt(worst_fd) + " > 1e-6");

    // polynomial exactness to degree 2k-1; at the default 64 nodes the 1e-12
    // tolerance is read relative to the moment's own magnitude (absolute
    // 1e-12 at values of order 1e100 is below machine resolution)
    double worst_poly = 0.0;
    for (int k : {2, 3, 5, 8, 12}) {
        const double mu = rng.next_uniform(-1.0, 1.0), var = rng.next_uniform(0.3, 2.0);
        for (int deg = 0; deg <= 2 * k - 1; ++deg) {
            const double got =
                gauss_expect([deg](double t) { return std::pow(t, deg); }, mu, var, k);
            const double want = oracle::gaussian_moment(mu, var, deg);
            worst_poly = std::max(
                worst_poly, std::abs(got - want) / std::max(1.0, std::abs(want)));
        }
    }
    for (int deg : {1, 5, 21, 64, 126, 127}) {
        const double got =
            gauss_expect([deg](double t) { return std::pow(t, deg); }, 0.0, 1.0, 64);
        const double want = oracle::gaussian_moment(0.0, 1.0, deg);
        const double scale = std::max(1.0, oracle::gaussian_moment(0.0, 1.0, deg - deg % 2));
        worst_poly = std::max(worst_poly, std::abs(got - want) / scale);
    }
    out.require(worst_poly <= 1e-12, "quadrature error " + fmt(worst_poly) + " > 1e-12");

    double worst_sym = 0.0;
    for (double var : {0.25, 1.0, 4.0, 25.0})
        worst_sym = std::max(
            worst_sym, std::abs(gauss_expect([&](double t) { return f.eval(t); }, 0.0, var,
                                             64) -
                                0.5));
    out.require(worst_sym <= 1e-12, "logistic symmetry error " + fmt(worst_sym));
    out.note("zeta residual " + fmt(worst_res) + ", FD " + fmt(worst_fd) + ", poly " +
             fmt(worst_poly) + ", symmetry " + fmt(worst_sym));
    return out;
}

// ---------------------------------------------------------------- criterion 6
Outcome criterion_stein() {
    Outcome out;
    const long p = 10;
    CounterRng rng = CounterRng::from_seed(606);
    Vec mu(p), w(p), u(p);
    for (long i = 0; i < p; ++i) {
        mu[i] = rng.next_uniform(-0.5, 0.5);
        w[i] = rng.next_uniform(-1.0, 1.0);
        u[i] = rng.next_uniform(-1.0, 1.0);
    }
    Mat g(p, p);
    for (long i = 0; i < p; ++i)
        for (long j = 0; j < p; ++j) g(i, j) = rng.next_normal();
    const Mat c =
        0.1 * (g * g.transpose() / static_cast<double>(p)) + 0.05 * Mat::Identity(p, p);
    const auto f = logistic_model(Vec::Zero(2), Mat::Identity(2, 2), 2, 1.0).second;
    const auto chk = stein_check(mu, c, w, u, f, 1000000, 6060, 4);
    const double dev1 = std::abs(chk.lhs_mc - chk.rhs_quadrature);
    const double dev2 = std::abs(chk.lhs2_mc - chk.rhs2_quadrature);
    out.require(dev1 <= 4.0 * chk.mc_stderr,
                "linear identity off by " + fmt(dev1 / chk.mc_stderr) + " stderr");
    out.require(dev2 <= 4.0 * chk.mc2_stderr,
                "quadratic identity off by " + fmt(dev2 / chk.mc2_stderr) + " stderr");
    out.note("deviations " + fmt(dev1 / chk.mc_stderr) + " and " +
             fmt(dev2 / chk.mc2_stderr) + " stderr at 1e6 trials");
    return out;
}

// ---------------------------------------------------------------- criterion 7
Outcome criterion_regression_pipeline() {
    Outcome out;
    Vec m = Vec::Zero(100);
    m[0] = 2.0;
    const auto [model, f] = logistic_model(m, Mat::Identity(100, 100), 200, 5.0);
    const auto pred = predict_stats(model, f);
    const auto emp = empirical_regression_stats(model, f, 500, 20257, 4);
    const double discard_rate =
        static_cast<double>(emp.discard_count) / static_cast<double>(emp.trials);
    const double mean_rel = (pred.m_y - emp.mean).norm() / emp.mean.norm();
    const double tr_rel = std::abs(pred.c_y.trace() - emp.cov.trace()) / emp.cov.trace();
    out.require(mean_rel <= 0.05, "mean relative error " + fmt(mean_rel) + " > 0.05");
    out.require(tr_rel <= 0.10, "covariance trace relative error " + fmt(tr_rel) + " > 0.10");
    out.require(discard_rate <= 0.05, "discard rate " + fmt(discard_rate) + " > 0.05");
    out.note("mean " + fmt(mean_rel) + ", trace " + fmt(tr_rel) + ", discards " +
             fmt(discard_rate) + " at 500 trials");
    return out;
}

// ---------------------------------------------------------------- criterion 8
Outcome criterion_w_scaling() {
    Outcome out;
    auto mean_w = [](long p, long n, std::uint64_t seed) {
        Vec m = Vec::Zero(p);
        m[0] = 2.0;
        const auto [model, f] = logistic_model(m, Mat::Identity(p, p), n, 5.0);
        CounterRng rng = CounterRng::from_seed(seed);
        NeumaierSum acc;
        long cnt = 0;
        for (int t = 0; t < 50; ++t) {
            const auto X = sample(model, rng.next_u64());
            for (long i = 0; i < n; ++i) {
                acc.add(w_residual(X, i, f));
                ++cnt;
            }
        }
        return acc.value() / static_cast<double>(cnt);
    };
    const double small = mean_w(50, 100, 808);
    const double large = mean_w(100, 200, 809);
    const double ratio = large / small;
    out.require(ratio <= 0.7, "W scaling ratio " + fmt(ratio) + " > 0.7");
    out.note("mean ||W||: " + fmt(small) + " -> " + fmt(large) + ", ratio " + fmt(ratio) +
             " (O(1/n) predicts 0.5)");
    return out;
}

// ---------------------------------------------------------------- criterion 9
Outcome criterion_tail_exponents() {
    Outcome out;
    const long N = 100000;
    ObservableSamples gauss, lap;
    gauss.values.reserve(N);
    lap.values.reserve(N);
    CounterRng rng = CounterRng::from_seed(909);
    for (long i = 0; i < N; ++i) gauss.values.push_back(rng.next_normal());
    for (long i = 0; i < N; ++i) {
        const double uu = rng.next_unit() - 0.5;
        const double sign = uu < 0.0 ? -1.0 : 1.0;
        lap.values.push_back(-sign * std::log(1.0 - 2.0 * std::abs(uu)));
    }
    const auto fg = fit_tail_exponent(gauss);
    const auto fl = fit_tail_exponent(lap);
    out.require(fg.q_hat >= 1.7 && fg.q_hat <= 2.3,
                "Gaussian q_hat " + fmt(fg.q_hat) + " outside [1.7, 2.3]");
    out.require(fl.q_hat >= 0.8 && fl.q_hat <= 1.3,
                "Laplace q_hat " + fmt(fl.q_hat) + " outside [0.8, 1.3]");
    out.note("q_hat Gaussian " + fmt(fg.q_hat) + " (r2 " + fmt(fg.r2) + "), Laplace " +
             fmt(fl.q_hat) + " (r2 " + fmt(fl.r2) + ")");
    return out;
}

// --------------------------------------------------------------- criterion 10
Outcome criterion_convex_scaling() {
    Outcome out;
    const auto rows = convex_concentration_experiment({100, 400}, 500, 1010, Cx(-1.0, 0.0),
                                                      0.5, 0.1, 1.0, 4);
    const double ratio = rows[1].stddev / rows[0].stddev;
    out.require(ratio <= 0.5, "std ratio " + fmt(ratio) + " > 0.5");
    out.require(!rows[0].flagged && !rows[1].flagged, "event failure rate above 10%");
    out.note("std " + fmt(rows[0].stddev) + " -> " + fmt(rows[1].stddev) + ", ratio " +
             fmt(ratio) + " (1/p predicts 0.25)");
    return out;
}

}  // namespace

int main() {
    struct Entry {
        int id;
        const char* name;
        std::function<Outcome()> fn;
    };
    const std::vector<Entry> entries = {
        {1, "Marchenko-Pastur agreement", criterion_marchenko_pastur},
        {2, "Lambda residual and geometry", criterion_lambda_geometry},
        {3, "Frobenius rate", criterion_frobenius_rate},
        {4, "Schur identities", criterion_schur},
        {5, "zeta and quadrature", criterion_zeta_quadrature},
        {6, "Stein identities", criterion_stein},
        {7, "regression prediction end-to-end", criterion_regression_pipeline},
        {8, "W-residual scaling", criterion_w_scaling},
        {9, "tail exponents", criterion_tail_exponents},
        {10, "convex-concentration scaling", criterion_convex_scaling},
    };
    int failures = 0;
    for (const auto& e : entries) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = e.fn();
        } catch (const std::exception& ex) {
            out.pass = false;
            out.detail = std::string("exception: ") + ex.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("criterion %2d [%s] %s (%0.1fs) %s\n", e.id, out.pass ? "PASS" : "FAIL",
                    e.name, secs, out.detail.c_str());
        std::fflush(stdout);
        if (!out.pass) ++failures;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(entries.size()) - failures,
                entries.size());
    return failures;
}
