#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rmt/common.hpp"
#include "rmt/model.hpp"

namespace rmt {

struct ObservableSamples {
    std::vector<double> values;  // one scalar observable per trial
    std::string meta;
    std::uint64_t seed = 0;
};

struct TailFit {
    double q_hat = 0.0;      // exponent: slope of log(-log P) vs log t
    double sigma_hat = 0.0;  // fitted scale
    double r2 = 0.0;
    std::vector<double> t_grid;            // usable grid points
    std::vector<double> tail_probability;  // empirical survival at t_grid
};

struct RateRow {
    long n = 0;
    long p = 0;
    long trials = 0;
    long kept = 0;
    double discard_rate = 0.0;
    double error = 0.0;           // ||mean_{A_Q}(Q^z) - tildeQ^z(chi(Lambda^z))||_F
    double predicted_rate = 0.0;  // sqrt(log n / n)
};

struct RateTable {
    std::vector<RateRow> rows;
    double slope = 0.0;  // log-log regression of error on predicted_rate
};

// 1.4826 x median absolute deviation.
double observable_diameter(const ObservableSamples& samples);

// Weibull-type fit of the empirical tail around the sample median over the
// window P_hat in [10/N, 0.2].
TailFit fit_tail_exponent(const ObservableSamples& samples);

RateTable frobenius_rate_experiment(const std::vector<DataModel>& model_family, Cx z, long trials,
                                    std::uint64_t seed, int threads = 1);

struct HansonWrightRow {
    double frobenius = 0.0;  // ||A||_F
    double stddev = 0.0;     // empirical std of Z^T A W
};

std::vector<HansonWrightRow> hanson_wright_experiment(long p, const std::vector<Mat>& matrices,
                                                      long trials, std::uint64_t seed,
                                                      int threads = 1);

struct ConvexScalingRow {
    long p = 0;
    long trials = 0;
    double event_failure_rate = 0.0;
    bool flagged = false;  // event failure rate > 10%
    double stddev = 0.0;   // std of (1/p) tr(A Q^z)
};

// Talagrand ensemble (bounded independent entries, scaled by `scale`);
// observable (1/p) tr(A Q^z) with A = a_scale * I.
std::vector<ConvexScalingRow> convex_concentration_experiment(const std::vector<long>& sizes,
                                                              long trials, std::uint64_t seed,
                                                              Cx z = Cx(-1.0, 0.0),
                                                              double scale = 0.5,
                                                              double epsilon = 0.1,
                                                              double a_scale = 1.0,
                                                              int threads = 1);

}  // namespace rmt
