#include "rmt/regression.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "rmt/parallel.hpp"
#include "rmt/resolvent.hpp"
#include "rmt/rng.hpp"

namespace rmt {

namespace {

// E[g(mu + sqrt(var) xi)] tolerating var == 0 (exact point evaluation).
double gaussian_mean(const std::function<double(double)>& g, double mu, double var, int nodes) {
    if (var <= 0.0) return g(mu);
    return gauss_expect(g, mu, var, nodes);
}

double top_abs_eigenvalue(const Mat& sym) {
    Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
    return std::max(std::abs(es.eigenvalues().minCoeff()), std::abs(es.eigenvalues().maxCoeff()));
}

double empirical_norm_bound(const Mat& x) {
    Mat s = (x * x.transpose()) / static_cast<double>(x.cols());
    Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

RegressionSolution picard_solve(const Mat& x, const Nonlinearity& f, double tol) {
    const double n = static_cast<double>(x.cols());
    const double bound = f.sup_deriv * empirical_norm_bound(x);
    if (bound > 1.0 - 1e-3)
        throw ContractionError("contraction bound " + std::to_string(bound) + " exceeds 1 - 1e-3",
                               bound);
    const int max_iter =
        bound > 0.0 ? static_cast<int>(std::log(tol) / std::log(std::min(bound, 1.0 - 1e-3))) + 50
                    : 50;
    Vec y = Vec::Zero(x.rows());
    RegressionSolution sol;
    sol.contraction_bound = bound;
    for (int k = 0; k <= max_iter; ++k) {
        const Vec fy = (x.transpose() * y).unaryExpr(f.eval);
        const Vec next = (x * fy) / n;
        const double residual = (y - next).norm();
        if (residual <= tol) {
            sol.y = std::move(y);
            sol.residual = residual;
            sol.iterations = k;
            return sol;
        }
        y = next;
    }
    throw ConvergenceError("regression Picard iteration did not converge", -1.0, max_iter);
}

}  // namespace

Nonlinearity Nonlinearity::make(std::function<double(double)> eval,
                                std::function<double(double)> deriv,
                                std::function<double(double)> deriv2, double sup_deriv,
                                double sup_deriv2) {
    Nonlinearity f{std::move(eval), std::move(deriv), std::move(deriv2), sup_deriv, sup_deriv2};
    const int grid = 10000;
    const double h = 1e-5;
    const double eps = std::numeric_limits<double>::epsilon();
    for (int k = 0; k < grid; ++k) {
        const double t = -50.0 + 100.0 * k / (grid - 1.0);
        const double d1 = f.deriv(t), d2 = f.deriv2(t);
        if (std::abs(d1) > sup_deriv + 1e-12)
            throw DomainError("declared sup|f'| violated at t = " + std::to_string(t));
        if (std::abs(d2) > sup_deriv2 + 1e-12)
            throw DomainError("declared sup|f''| violated at t = " + std::to_string(t));
        const double hi = f.eval(t + h), lo = f.eval(t - h);
        const double fd = (hi - lo) / (2.0 * h);
        // cancellation floor: the difference hi - lo carries ~eps * |f| of noise
        const double floor = 8.0 * eps * std::max({std::abs(hi), std::abs(lo), 1e-30}) / h;
        if (std::abs(fd - d1) > 1e-6 * std::abs(d1) + floor)
            throw DomainError("finite differences of f disagree with f' at t = " +
                              std::to_string(t));
    }
    return f;
}

RegressionSolution solve_Y(const SampleMatrix& X, const Nonlinearity& f, double tol) {
    return picard_solve(X.data, f, tol);
}

RegressionSolution solve_Y_loo(const SampleMatrix& X, long i, const Nonlinearity& f, double tol) {
    if (i < 0 || i >= X.data.cols()) throw DomainError("column index out of range");
    Mat x = X.data;
    x.col(i).setZero();
    return picard_solve(x, f, tol);
}

Mat Q_minus_i(const SampleMatrix& X, const Vec& y_loo, long i, const Nonlinearity& f) {
    if (i < 0 || i >= X.data.cols()) throw DomainError("column index out of range");
    Vec gamma = (X.data.transpose() * y_loo).unaryExpr(f.deriv);
    gamma[i] = 0.0;
    return resolvent_weighted_real(X.data, gamma, 1.0);
}

double w_residual(const SampleMatrix& X, long i, const Nonlinearity& f, double tol) {
    const double n = static_cast<double>(X.data.cols());
    const RegressionSolution full = solve_Y(X, f, tol);
    const RegressionSolution loo = solve_Y_loo(X, i, f, tol);
    const Mat qmi = Q_minus_i(X, loo.y, i, f);
    const Vec xi = X.data.col(i);
    const Vec w = full.y - loo.y - (f.eval(xi.dot(full.y)) / n) * (qmi * xi);
    return w.norm();
}

std::pair<double, double> zeta(double v, double delta, const Nonlinearity& f) {
    if (delta < 0.0) throw DomainError("delta must be nonnegative");
    if (delta * f.sup_deriv > 1.0 - 1e-6)
        throw ContractionError("delta * sup|f'| too close to 1", delta * f.sup_deriv);
    double z = v;
    double g = z - v - delta * f.eval(z);
    for (int k = 0; k < 200 && std::abs(g) > 1e-13; ++k) {
        const double slope = 1.0 - delta * f.deriv(z);
        const double newton = z - g / slope;
        const double g_newton = newton - v - delta * f.eval(newton);
        if (std::abs(g_newton) < std::abs(g)) {
            z = newton;
            g = g_newton;
        } else {
            z = v + delta * f.eval(z);  // Picard fallback
            g = z - v - delta * f.eval(z);
        }
    }
    if (std::abs(g) > 1e-12)
        throw ConvergenceError("zeta iteration stalled", std::abs(g), 200);
    return {z, 1.0 / (1.0 - delta * f.deriv(z))};
}

namespace {

// Orthonormal Hermite values p_0..p_k (weight e^{-x^2}) at x.
void hermite_column(int k, double x, std::vector<double>& p) {
    p.resize(k + 1);
    p[0] = std::pow(M_PI, -0.25);
    if (k >= 1) p[1] = std::sqrt(2.0) * x * p[0];
    for (int j = 1; j < k; ++j)
        p[j + 1] = x * std::sqrt(2.0 / (j + 1)) * p[j] - std::sqrt(j / (j + 1.0)) * p[j - 1];
}

}  // namespace

const GaussHermiteRule& gauss_hermite_rule(int k) {
    static std::mutex mtx;
    static std::map<int, GaussHermiteRule> cache;
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(k);
    if (it != cache.end()) return it->second;
    // Golub-Welsch nodes from the Jacobi matrix, Newton-polished on the
    // orthonormal recurrence; weights by the Christoffel function. The raw
    // eigenvector weights lose all relative accuracy in the far tails.
    Mat j = Mat::Zero(k, k);
    for (int i = 1; i < k; ++i) {
        const double b = std::sqrt(i / 2.0);
        j(i, i - 1) = b;
        j(i - 1, i) = b;
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(j, Eigen::EigenvaluesOnly);
    GaussHermiteRule rule;
    rule.nodes = es.eigenvalues();
    rule.weights = Vec(k);
    std::vector<double> p;
    for (int i = 0; i < k; ++i) {
        double x = rule.nodes[i];
        for (int step = 0; step < 4; ++step) {
            hermite_column(k, x, p);
            const double deriv = std::sqrt(2.0 * k) * p[k - 1];
            if (deriv == 0.0) break;
            x -= p[k] / deriv;
        }
        rule.nodes[i] = x;
        hermite_column(k - 1, x, p);
        double christoffel = 0.0;
        for (int m = 0; m < k; ++m) christoffel += p[m] * p[m];
        rule.weights[i] = 1.0 / christoffel;
    }
    return cache.emplace(k, std::move(rule)).first->second;
}

double gauss_expect(const std::function<double(double)>& g, double mu, double var, int nodes) {
    if (!(var > 0.0)) throw DomainError("gauss_expect requires var > 0");
    if (nodes < 2) throw DomainError("gauss_expect requires nodes >= 2");
    const GaussHermiteRule& rule = gauss_hermite_rule(nodes);
    const double s = std::sqrt(2.0 * var);
    NeumaierSum acc;
    for (int i = 0; i < nodes; ++i) acc.add(rule.weights[i] * g(mu + s * rule.nodes[i]));
    return acc.value() / std::sqrt(M_PI);
}

SteinCheck stein_check(const Vec& mu, const Mat& c, const Vec& w, const Vec& u,
                       const Nonlinearity& f, long trials, std::uint64_t seed, int threads) {
    if (trials < 2) throw DomainError("stein_check needs trials >= 2");
    const long p = mu.size();
    const ColumnLaw law(mu, c);  // validates PSD, provides the square root

    const double s_mean = w.dot(mu);
    const double s_var = w.dot(c * w);
    const int nodes = 64;
    const double ef = gaussian_mean(f.eval, s_mean, s_var, nodes);
    const double efp = gaussian_mean(f.deriv, s_mean, s_var, nodes);
    const double efpp = gaussian_mean(f.deriv2, s_mean, s_var, nodes);

    SteinCheck out;
    out.rhs_quadrature = ef * u.dot(mu) + efp * u.dot(c * w);
    // A = u u^T: E[f] tr(A(mu mu^T + C)) + E[f'] mu^T(A+A^T)Cw + E[f''] w^T C A C w
    const double umu = u.dot(mu), ucw = u.dot(c * w), ucu = u.dot(c * u);
    out.rhs2_quadrature = ef * (umu * umu + ucu) + efp * 2.0 * umu * ucw + efpp * ucw * ucw;

    std::vector<double> s1(trials), s2(trials);
    const CounterRng root = CounterRng::from_seed(seed);
    parallel_for(trials, threads, [&](long t) {
        CounterRng r = root.derive(static_cast<std::uint64_t>(t));
        Vec g(p);
        for (long k = 0; k < p; ++k) g[k] = r.next_normal();
        const Vec x = mu + law.sqrt_cov() * g;
        const double fx = f.eval(w.dot(x));
        const double ux = u.dot(x);
        s1[t] = fx * ux;
        s2[t] = fx * ux * ux;
    });
    auto reduce = [&](const std::vector<double>& v, double& mean, double& stderr_out) {
        NeumaierSum acc;
        for (long t = 0; t < trials; ++t) acc.add(v[t]);
        mean = acc.value() / static_cast<double>(trials);
        NeumaierSum var;
        for (long t = 0; t < trials; ++t) var.add((v[t] - mean) * (v[t] - mean));
        stderr_out = std::sqrt(var.value() / static_cast<double>(trials - 1) /
                               static_cast<double>(trials));
    };
    reduce(s1, out.lhs_mc, out.mc_stderr);
    reduce(s2, out.lhs2_mc, out.mc2_stderr);
    return out;
}

Mat theta_operator(const Mat& b, const Mat& c, double tol) {
    const double cnorm = top_abs_eigenvalue(c);
    if (cnorm >= 1.0)
        throw ContractionError("Theta operator requires ||C|| < 1", cnorm);
    Mat t = b;
    for (int k = 0; k < 100000; ++k) {
        const Mat next = b + c * t * c;
        const double res = (next - (b + c * next * c)).norm();
        t = next;
        if (res <= tol) return t;
    }
    throw ConvergenceError("Theta operator iteration did not converge", -1.0, 100000);
}

PredictedStats predict_stats(const DataModel& model, const Nonlinearity& f,
                             const PredictOptions& opts) {
    const long p = model.p(), n = model.n();
    const auto& groups = model.groups();
    const size_t ng = groups.size();

    std::vector<double> delta_g(ng);
    for (size_t g = 0; g < ng; ++g) {
        delta_g[g] = groups[g].law.trace_second_moment() / static_cast<double>(n);
        if (delta_g[g] * f.sup_deriv >= 1.0 - 1e-6)
            throw ContractionError("Delta_i * sup|f'| too close to 1 (group " +
                                       std::to_string(g) + ")",
                                   delta_g[g] * f.sup_deriv);
    }

    std::vector<double> mu_g(ng, 0.0), var_g(ng, 0.0);
    Vec m_y = Vec::Zero(p);
    Mat c_y = Mat::Zero(p, p);
    Mat c_tilde;
    std::vector<double> change_history;

    int outer = 0;
    double change = std::numeric_limits<double>::infinity();
    for (; outer < opts.max_outer; ++outer) {
        Vec m_tilde = Vec::Zero(p);
        c_tilde = Mat::Zero(p, p);
        Mat sigma_tilde = Mat::Zero(p, p);
        Mat check = Mat::Zero(p, p);  // (1/n) sum d_i Sigma_i
        std::vector<double> e_g(ng), d_g(ng), s_g(ng);
        for (size_t g = 0; g < ng; ++g) {
            const double dgv = delta_g[g];
            auto xi = [&](double z) { return f.eval(zeta(z, dgv, f).first); };
            auto xi_prime = [&](double z) {
                const auto [zz, zd] = zeta(z, dgv, f);
                return f.deriv(zz) * zd;
            };
            auto xi_sq = [&](double z) {
                const double v = f.eval(zeta(z, dgv, f).first);
                return v * v;
            };
            e_g[g] = gaussian_mean(xi, mu_g[g], var_g[g], opts.quadrature_nodes);
            d_g[g] = gaussian_mean(xi_prime, mu_g[g], var_g[g], opts.quadrature_nodes);
            s_g[g] = gaussian_mean(xi_sq, mu_g[g], var_g[g], opts.quadrature_nodes);
            const double frac = static_cast<double>(groups[g].count) / static_cast<double>(n);
            m_tilde += frac * e_g[g] * groups[g].law.mean();
            c_tilde += frac * d_g[g] * groups[g].law.cov();
            sigma_tilde += frac * s_g[g] * groups[g].law.second_moment();
            check += frac * d_g[g] * groups[g].law.second_moment();
        }
        const double check_norm = top_abs_eigenvalue(check);
        if (check_norm >= 1.0)
            throw ContractionError("spectral check ||(1/n) sum d_i Sigma_i|| = " +
                                       std::to_string(check_norm) + " >= 1 at outer step " +
                                       std::to_string(outer),
                                   check_norm);

        const Vec m_y_new =
            Eigen::PartialPivLU<Mat>(Mat::Identity(p, p) - c_tilde).solve(m_tilde);
        const Mat c_y_new = theta_operator(sigma_tilde, c_tilde, 1e-12) / static_cast<double>(n);

        change = (m_y_new - m_y).cwiseAbs().maxCoeff();
        for (size_t g = 0; g < ng; ++g) {
            const double mu_new = groups[g].law.mean().dot(m_y_new);
            const double var_new = (groups[g].law.second_moment().array() * c_y_new.array()).sum() +
                                   m_y_new.dot(groups[g].law.cov() * m_y_new);
            change = std::max({change, std::abs(mu_new - mu_g[g]), std::abs(var_new - var_g[g])});
            mu_g[g] = mu_new;
            var_g[g] = var_new;
        }
        m_y = m_y_new;
        c_y = c_y_new;
        change_history.push_back(change);
        if (change <= opts.tol) break;
    }
    if (change > opts.tol)
        throw ConvergenceError("predict_stats outer loop did not converge", change,
                               opts.max_outer);

    // internal consistency: centered covariance PSD within tolerance
    Eigen::SelfAdjointEigenSolver<Mat> es(c_y, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, es.eigenvalues().maxCoeff()))
        throw Error("predicted covariance not PSD within tolerance");

    PredictedStats out;
    out.m_y = m_y;
    out.c_y = c_y;
    out.mu.reserve(n);
    out.nu.reserve(n);
    out.delta.reserve(n);
    for (size_t g = 0; g < ng; ++g)
        for (long k = 0; k < groups[g].count; ++k) {
            out.mu.push_back(mu_g[g]);
            out.nu.push_back(var_g[g]);
            out.delta.push_back(delta_g[g]);
        }
    out.diagnostics.iterations = outer + 1;
    out.diagnostics.final_residual = change;
    out.diagnostics.ds_history = std::move(change_history);  // outer sup-norm changes
    return out;
}

std::pair<DataModel, Nonlinearity> logistic_model(const Vec& m, const Mat& c, long n,
                                                  double lambda) {
    if (lambda <= 0.0) throw DomainError("lambda must be positive");
    const long p = m.size();
    auto sigmoid = [](double t) {
        if (t >= 0.0) {
            const double e = std::exp(-t);
            return e / (1.0 + e);
        }
        return 1.0 / (1.0 + std::exp(t));
    };
    const double inv_lambda = 1.0 / lambda;
    Nonlinearity f = Nonlinearity::make(
        [sigmoid, inv_lambda](double t) { return inv_lambda * sigmoid(t); },
        [sigmoid, inv_lambda](double t) {
            const double s = sigmoid(t);
            return -inv_lambda * s * (1.0 - s);
        },
        [sigmoid, inv_lambda](double t) {
            const double s = sigmoid(t);
            return -inv_lambda * s * (1.0 - s) * (1.0 - 2.0 * s);
        },
        0.25 * inv_lambda, 0.1 * inv_lambda);
    DataModel model = DataModel::create_unchecked(
        p, n, 0.25, Generator::gaussian, {LawGroup{n, ColumnLaw(m, c)}});
    return {std::move(model), std::move(f)};
}

EmpiricalRegressionStats empirical_regression_stats(const DataModel& model, const Nonlinearity& f,
                                                    long trials, std::uint64_t seed, int threads,
                                                    double tol) {
    if (trials < 2) throw DomainError("empirical_regression_stats needs trials >= 2");
    const long p = model.p();
    std::vector<Vec> slot(trials);
    std::vector<char> ok(trials, 0);
    const CounterRng root = CounterRng::from_seed(seed);
    parallel_for(trials, threads, [&](long t) {
        CounterRng r = root.derive(static_cast<std::uint64_t>(t));
        SampleMatrix X = sample(model, r.next_u64());
        try {
            slot[t] = solve_Y(X, f, tol).y;
            ok[t] = 1;
        } catch (const ContractionError&) {
            // discarded; counted below
        }
    });
    long kept = 0;
    std::vector<NeumaierSum> mean_acc(p);
    for (long t = 0; t < trials; ++t) {
        if (!ok[t]) continue;
        ++kept;
        for (long k = 0; k < p; ++k) mean_acc[k].add(slot[t][k]);
    }
    if (kept < 2) throw EstimationError("fewer than 2 trials satisfied the contraction bound");
    EmpiricalRegressionStats out;
    out.trials = trials;
    out.discard_count = trials - kept;
    out.flagged = static_cast<double>(out.discard_count) / static_cast<double>(trials) > 0.20;
    out.mean = Vec(p);
    for (long k = 0; k < p; ++k) out.mean[k] = mean_acc[k].value() / static_cast<double>(kept);
    out.cov = Mat::Zero(p, p);
    for (long t = 0; t < trials; ++t) {
        if (!ok[t]) continue;
        const Vec d = slot[t] - out.mean;
        out.cov += d * d.transpose();
    }
    out.cov /= static_cast<double>(kept - 1);
    return out;
}

}  // namespace rmt
