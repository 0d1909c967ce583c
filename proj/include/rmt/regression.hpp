#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "rmt/cplx_diag.hpp"
#include "rmt/common.hpp"
#include "rmt/model.hpp"

namespace rmt {

// Contraction precondition violated (solver refusal carrying the bound).
struct ContractionError : Error {
    ContractionError(const std::string& msg, double bound) : Error(msg), bound(bound) {}
    double bound;
};

// f with declared sup-norm bounds on f' and f''. make() audits the bounds
// and the derivative consistency on a fixed grid.
struct Nonlinearity {
    std::function<double(double)> eval;
    std::function<double(double)> deriv;
    std::function<double(double)> deriv2;
    double sup_deriv = 0.0;
    double sup_deriv2 = 0.0;

    static Nonlinearity make(std::function<double(double)> eval,
                             std::function<double(double)> deriv,
                             std::function<double(double)> deriv2, double sup_deriv,
                             double sup_deriv2);
};

struct RegressionSolution {
    Vec y;
    double residual = 0.0;  // ||Y - (1/n) X f(X^T Y)||
    int iterations = 0;
    double contraction_bound = 0.0;  // sup|f'| ||XX^T||/n
};

// Picard iteration of Y <- (1/n) X f(X^T Y) from 0.
RegressionSolution solve_Y(const SampleMatrix& X, const Nonlinearity& f, double tol = 1e-10);

// Same estimator with column i removed.
RegressionSolution solve_Y_loo(const SampleMatrix& X, long i, const Nonlinearity& f,
                               double tol = 1e-10);

// (I_p - (1/n) sum_{j != i} f'(x_j^T y_loo) x_j x_j^T)^{-1}
Mat Q_minus_i(const SampleMatrix& X, const Vec& y_loo, long i, const Nonlinearity& f);

// ||Y - Y_{-i} - (1/n) f(x_i^T Y) Q_{-i} x_i||
double w_residual(const SampleMatrix& X, long i, const Nonlinearity& f, double tol = 1e-10);

// Solves z = v + delta f(z); returns (z, 1/(1 - delta f'(z))).
std::pair<double, double> zeta(double v, double delta, const Nonlinearity& f);

// Gauss-Hermite quadrature of E[g(mu + sqrt(var) xi)], xi standard normal.
double gauss_expect(const std::function<double(double)>& g, double mu, double var,
                    int nodes = 64);

struct GaussHermiteRule {
    Vec nodes;    // physicists' nodes
    Vec weights;  // sum to sqrt(pi)
};
const GaussHermiteRule& gauss_hermite_rule(int k);

struct SteinCheck {
    // E[f(w^T x) u^T x] (MC) vs Stein + quadrature
    double lhs_mc = 0.0;
    double rhs_quadrature = 0.0;
    double mc_stderr = 0.0;
    // E[f(w^T x) x^T A x] with A = u u^T
    double lhs2_mc = 0.0;
    double rhs2_quadrature = 0.0;
    double mc2_stderr = 0.0;
};

SteinCheck stein_check(const Vec& mu, const Mat& c, const Vec& w, const Vec& u,
                       const Nonlinearity& f, long trials, std::uint64_t seed, int threads = 1);

struct PredictedStats {
    std::vector<double> mu;     // mu_i = m_i^T m_Y
    std::vector<double> nu;     // predicted variance of x_i^T Y
    Vec m_y;
    Mat c_y;                    // centered covariance
    std::vector<double> delta;  // tr(Sigma_i)/n
    SolveDiagnostics diagnostics;
};

struct PredictOptions {
    double tol = 1e-8;
    int max_outer = 200;
    int quadrature_nodes = 64;
};

PredictedStats predict_stats(const DataModel& model, const Nonlinearity& f,
                             const PredictOptions& opts = {});

// DataModel with all columns N(m, C) plus f(t) = (1/lambda) / (1 + e^t).
std::pair<DataModel, Nonlinearity> logistic_model(const Vec& m, const Mat& c, long n,
                                                  double lambda);

struct EmpiricalRegressionStats {
    Vec mean;
    Mat cov;  // centered, unbiased normalization
    long trials = 0;
    long discard_count = 0;
    bool flagged = false;  // discard rate > 20%
};

EmpiricalRegressionStats empirical_regression_stats(const DataModel& model, const Nonlinearity& f,
                                                    long trials, std::uint64_t seed,
                                                    int threads = 1, double tol = 1e-10);

// Theta(B) = B + C Theta(B) C by Picard iteration; ||C|| < 1 required.
Mat theta_operator(const Mat& b, const Mat& c, double tol = 1e-12);

}  // namespace rmt
