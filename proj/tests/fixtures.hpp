// Shared model builders for the test suites.
#pragma once

#include <cstdint>

#include "rmt/model.hpp"
#include "rmt/rng.hpp"

namespace fixtures {

using namespace rmt;

inline DataModel isotropic(long p, long n, double sigma2, double eps,
                           Generator gen = Generator::gaussian) {
    return DataModel::shared(p, n, eps, gen,
                             ColumnLaw(Vec::Zero(p), sigma2 * Mat::Identity(p, p)));
}

inline DataModel isotropic_unchecked(long p, long n, double sigma2, double eps) {
    return DataModel::create_unchecked(
        p, n, eps, Generator::gaussian,
        {LawGroup{n, ColumnLaw(Vec::Zero(p), sigma2 * Mat::Identity(p, p))}});
}

// Equal-proportion two-group model with Sigma in {s1 I, s2 I}.
inline DataModel two_group(long p, long n, double s1, double s2, double eps) {
    std::vector<LawGroup> groups;
    groups.push_back(LawGroup{n / 2, ColumnLaw(Vec::Zero(p), s1 * Mat::Identity(p, p))});
    groups.push_back(LawGroup{n - n / 2, ColumnLaw(Vec::Zero(p), s2 * Mat::Identity(p, p))});
    return DataModel::create(p, n, eps, Generator::gaussian, std::move(groups));
}

// Random rotated anisotropic two-group model with small nonzero means;
// scaled so that ||(1/n) sum Sigma_i|| stays around 0.5.
inline DataModel random_two_group(long p, long n, std::uint64_t seed) {
    CounterRng rng = CounterRng::from_seed(seed);
    auto random_law = [&](double scale) {
        Mat g(p, p);
        for (long i = 0; i < p; ++i)
            for (long j = 0; j < p; ++j) g(i, j) = rng.next_normal();
        const Mat q = Eigen::HouseholderQR<Mat>(g).householderQ();
        Vec evals(p);
        for (long i = 0; i < p; ++i) evals[i] = scale * rng.next_uniform(0.2, 1.0);
        Mat cov = q * evals.asDiagonal() * q.transpose();
        cov = 0.5 * (cov + cov.transpose().eval());
        Vec mean(p);
        for (long i = 0; i < p; ++i) mean[i] = 0.05 * rng.next_normal();
        return ColumnLaw(mean, cov);
    };
    std::vector<LawGroup> groups;
    groups.push_back(LawGroup{n / 2, random_law(0.25)});
    groups.push_back(LawGroup{n - n / 2, random_law(0.4)});
    return DataModel::create(p, n, 0.2, Generator::gaussian, std::move(groups));
}

}  // namespace fixtures
