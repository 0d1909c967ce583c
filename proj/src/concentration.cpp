#include "rmt/concentration.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "rmt/parallel.hpp"
#include "rmt/resolvent.hpp"
#include "rmt/rng.hpp"

namespace rmt {

double observable_diameter(const ObservableSamples& samples) {
    if (samples.values.size() < 100)
        throw EstimationError("observable_diameter needs at least 100 samples");
    std::vector<double> v = samples.values;
    const double med = median_inplace(v);
    for (double& x : v) x = std::abs(x - med);
    const double mad = median_inplace(v);
    if (mad <= 0.0) throw EstimationError("degenerate sample: constant observable");
    return 1.4826 * mad;
}

TailFit fit_tail_exponent(const ObservableSamples& samples) {
    const size_t N = samples.values.size();
    if (N < 10000) throw EstimationError("fit_tail_exponent needs at least 10^4 samples");
    std::vector<double> v = samples.values;
    const double med = median_inplace(v);
    std::vector<double> dev(N);
    for (size_t i = 0; i < N; ++i) dev[i] = std::abs(v[i] - med);
    std::sort(dev.begin(), dev.end());

    const double p_hi = 0.2;
    const double p_lo = 10.0 / static_cast<double>(N);
    auto quantile = [&](double q) { return dev[static_cast<size_t>(q * (N - 1))]; };
    const double t_lo = quantile(1.0 - p_hi);
    const double t_hi = quantile(1.0 - p_lo);
    if (!(t_lo > 0.0) || !(t_hi > t_lo))
        throw EstimationError("degenerate tail: deviation range too small to fit");

    auto survival = [&](double t) {
        const auto it = std::lower_bound(dev.begin(), dev.end(), t);
        return static_cast<double>(dev.end() - it) / static_cast<double>(N);
    };

    TailFit fit;
    const int grid_size = 25;
    std::vector<double> xs, ys;
    for (int k = 0; k < grid_size; ++k) {
        const double t = std::exp(std::log(t_lo) +
                                  (std::log(t_hi) - std::log(t_lo)) * k / (grid_size - 1.0));
        const double prob = survival(t);
        if (prob < p_lo || prob > p_hi) continue;
        fit.t_grid.push_back(t);
        fit.tail_probability.push_back(prob);
        xs.push_back(std::log(t));
        ys.push_back(std::log(-std::log(prob)));
    }
    if (xs.size() < 5)
        throw EstimationError("fewer than 5 usable grid points in the tail window");

    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (size_t k = 0; k < xs.size(); ++k) {
        sx += xs[k];
        sy += ys[k];
        sxx += xs[k] * xs[k];
        sxy += xs[k] * ys[k];
        syy += ys[k] * ys[k];
    }
    const double denom = n * sxx - sx * sx;
    if (denom <= 0.0) throw EstimationError("degenerate regression grid");
    fit.q_hat = (n * sxy - sx * sy) / denom;
    const double intercept = (sy - fit.q_hat * sx) / n;
    if (!(fit.q_hat > 0.0)) throw EstimationError("nonpositive fitted exponent");
    fit.sigma_hat = std::exp(-intercept / fit.q_hat);
    const double ss_res = syy - 2 * fit.q_hat * sxy - 2 * intercept * sy +
                          fit.q_hat * fit.q_hat * sxx + 2 * fit.q_hat * intercept * sx +
                          n * intercept * intercept;
    const double ss_tot = syy - sy * sy / n;
    fit.r2 = ss_tot > 0.0 ? std::max(0.0, 1.0 - ss_res / ss_tot) : 0.0;
    return fit;
}

RateTable frobenius_rate_experiment(const std::vector<DataModel>& model_family, Cx z, long trials,
                                    std::uint64_t seed, int threads) {
    if (trials < 1) throw DomainError("rate experiment needs trials >= 1");
    RateTable table;
    long prev_n = 0;
    const CounterRng root = CounterRng::from_seed(seed);
    for (size_t m = 0; m < model_family.size(); ++m) {
        const DataModel& model = model_family[m];
        if (model.n() <= prev_n) throw DomainError("sizes must be strictly increasing in n");
        prev_n = model.n();
        const long p = model.p(), n = model.n();

        const DeterministicEquivalent de =
            deterministic_equivalent(ResolventQuery{z, model});

        const bool real_z = z.imag() == 0.0;
        std::vector<CMat> slot(real_z ? 0 : trials);
        std::vector<Mat> slot_r(real_z ? trials : 0);
        std::vector<char> ok(trials, 0);
        const CounterRng row_rng = root.derive(m);
        parallel_for(trials, threads, [&](long t) {
            CounterRng r = row_rng.derive(static_cast<std::uint64_t>(t));
            SampleMatrix X = sample(model, r.next_u64());
            Mat s = (X.data * X.data.transpose()) / static_cast<double>(n);
            Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
            if (es.eigenvalues().maxCoeff() > 1.0 - model.epsilon()) return;
            if (real_z) {
                Mat sys = -s;
                sys.diagonal().array() += z.real();
                slot_r[t] = Eigen::PartialPivLU<Mat>(sys).inverse();
            } else {
                CMat sys = (-s).cast<Cx>();
                sys.diagonal().array() += z;
                slot[t] = Eigen::PartialPivLU<CMat>(sys).inverse();
            }
            ok[t] = 1;
        });

        long kept = 0;
        CMat acc = CMat::Zero(p, p);
        for (long t = 0; t < trials; ++t) {
            if (!ok[t]) continue;
            if (real_z)
                acc += slot_r[t].cast<Cx>();
            else
                acc += slot[t];
            ++kept;
        }
        if (kept == 0)
            throw EstimationError("rate experiment: all trials discarded at n = " +
                                  std::to_string(n));
        const CMat mean = acc / static_cast<double>(kept);
        RateRow row;
        row.n = n;
        row.p = p;
        row.trials = trials;
        row.kept = kept;
        row.discard_rate = 1.0 - static_cast<double>(kept) / static_cast<double>(trials);
        row.error = (mean - de.tilde_q).norm();
        row.predicted_rate = std::sqrt(std::log(static_cast<double>(n)) / n);
        table.rows.push_back(row);
    }
    // slope of log(error) against log(predicted_rate)
    if (table.rows.size() >= 2) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (const auto& r : table.rows) {
            const double x = std::log(r.predicted_rate), y = std::log(r.error);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        const double k = static_cast<double>(table.rows.size());
        table.slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    }
    return table;
}

std::vector<HansonWrightRow> hanson_wright_experiment(long p, const std::vector<Mat>& matrices,
                                                      long trials, std::uint64_t seed,
                                                      int threads) {
    if (trials < 2) throw DomainError("hanson_wright_experiment needs trials >= 2");
    std::vector<HansonWrightRow> rows;
    const CounterRng root = CounterRng::from_seed(seed);
    for (size_t m = 0; m < matrices.size(); ++m) {
        const Mat& a = matrices[m];
        if (a.rows() != p || a.cols() != p) throw DomainError("matrix shape != p x p");
        std::vector<double> slot(trials, 0.0);
        const CounterRng mat_rng = root.derive(m);
        parallel_for(trials, threads, [&](long t) {
            CounterRng r = mat_rng.derive(static_cast<std::uint64_t>(t));
            Vec zv(p), wv(p);
            for (long k = 0; k < p; ++k) zv[k] = r.next_normal();
            for (long k = 0; k < p; ++k) wv[k] = r.next_normal();
            slot[t] = zv.dot(a * wv);
        });
        NeumaierSum s1, s2;
        for (long t = 0; t < trials; ++t) s1.add(slot[t]);
        const double mean = s1.value() / static_cast<double>(trials);
        for (long t = 0; t < trials; ++t) s2.add((slot[t] - mean) * (slot[t] - mean));
        HansonWrightRow row;
        row.frobenius = a.norm();
        row.stddev = std::sqrt(s2.value() / static_cast<double>(trials - 1));
        rows.push_back(row);
    }
    return rows;
}

std::vector<ConvexScalingRow> convex_concentration_experiment(const std::vector<long>& sizes,
                                                              long trials, std::uint64_t seed,
                                                              Cx z, double scale, double epsilon,
                                                              double a_scale, int threads) {
    if (trials < 2) throw DomainError("convex_concentration_experiment needs trials >= 2");
    std::vector<ConvexScalingRow> rows;
    const CounterRng root = CounterRng::from_seed(seed);
    for (size_t m = 0; m < sizes.size(); ++m) {
        const long p = sizes[m];
        const long n = 2 * p;
        std::vector<double> slot(trials, 0.0);
        std::vector<char> ok(trials, 0);
        const CounterRng size_rng = root.derive(m);
        parallel_for(trials, threads, [&](long t) {
            CounterRng r = size_rng.derive(static_cast<std::uint64_t>(t));
            SampleMatrix X = sample_bounded(p, n, r.next_u64());
            X.data *= scale;
            Mat s = (X.data * X.data.transpose()) / static_cast<double>(n);
            Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
            if (es.eigenvalues().maxCoeff() > 1.0 - epsilon) return;
            double trace_q;
            if (z.imag() == 0.0) {
                Mat sys = -s;
                sys.diagonal().array() += z.real();
                trace_q = Eigen::PartialPivLU<Mat>(sys).inverse().trace();
            } else {
                CMat sys = (-s).cast<Cx>();
                sys.diagonal().array() += z;
                trace_q = Eigen::PartialPivLU<CMat>(sys).inverse().trace().real();
            }
            slot[t] = a_scale * trace_q / static_cast<double>(p);
            ok[t] = 1;
        });
        long kept = 0;
        NeumaierSum s1;
        for (long t = 0; t < trials; ++t)
            if (ok[t]) {
                s1.add(slot[t]);
                ++kept;
            }
        if (kept < 2)
            throw EstimationError("convex concentration experiment: all trials discarded");
        const double mean = s1.value() / static_cast<double>(kept);
        NeumaierSum s2;
        for (long t = 0; t < trials; ++t)
            if (ok[t]) s2.add((slot[t] - mean) * (slot[t] - mean));
        ConvexScalingRow row;
        row.p = p;
        row.trials = trials;
        row.event_failure_rate = 1.0 - static_cast<double>(kept) / static_cast<double>(trials);
        row.flagged = row.event_failure_rate > 0.10;
        row.stddev = std::sqrt(s2.value() / static_cast<double>(kept - 1));
        rows.push_back(row);
    }
    return rows;
}

}  // namespace rmt
