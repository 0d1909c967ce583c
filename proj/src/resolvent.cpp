#include "rmt/resolvent.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "rmt/parallel.hpp"
#include "rmt/rng.hpp"

namespace rmt {

namespace {

constexpr double kQueryMargin = 1e-6;
constexpr double kMaxCondition = 1e14;

void check_query(Cx z, const DataModel& model) {
    const double d = segment_distance(z, 1.0 - model.epsilon());
    if (d < kQueryMargin)
        throw DomainError("z too close to the segment [0, 1-epsilon] (distance " +
                          std::to_string(d) + ")");
}

// Per-group sums of D over the group's column range.
std::vector<Cx> group_weights(const ComplexDiagonal& d, const DataModel& model) {
    std::vector<Cx> w(model.groups().size(), Cx(0, 0));
    long col = 0;
    for (size_t g = 0; g < model.groups().size(); ++g)
        for (long k = 0; k < model.groups()[g].count; ++k) w[g] += d.entries[col++];
    return w;
}

struct FactorizedTildeQ {
    CMat q;                        // the inverse (when requested)
    std::vector<Cx> group_traces;  // (1/n) tr(Sigma_g q) per group
};

bool all_groups_isotropic(const DataModel& model) {
    for (const auto& g : model.groups())
        if (!g.law.isotropic_scale()) return false;
    return true;
}

FactorizedTildeQ tilde_q_with_traces(Cx z, const ComplexDiagonal& d, const DataModel& model,
                                     bool want_matrix, bool want_traces) {
    const long p = model.p(), n = model.n();
    if (d.size() != n) throw DomainError("diagonal length != n");
    const auto w = group_weights(d, model);
    FactorizedTildeQ out;

    if (all_groups_isotropic(model)) {
        // Sigma_D is a multiple of the identity; everything is scalar
        Cx sigma_eff(0, 0);
        for (size_t g = 0; g < model.groups().size(); ++g)
            sigma_eff += (w[g] / static_cast<double>(n)) *
                         *model.groups()[g].law.isotropic_scale();
        const Cx denom = z - sigma_eff;
        if (std::abs(denom) < 1e-300)
            throw ConditioningError("z I - Sigma_D numerically singular", 1e300);
        const Cx tq = 1.0 / denom;
        if (want_matrix) out.q = tq * CMat::Identity(p, p);
        if (want_traces) {
            out.group_traces.reserve(model.groups().size());
            for (const auto& g : model.groups())
                out.group_traces.push_back(*g.law.isotropic_scale() * tq *
                                           static_cast<double>(p) / static_cast<double>(n));
        }
        return out;
    }

    CMat m = CMat::Zero(p, p);
    for (size_t g = 0; g < model.groups().size(); ++g)
        m -= (w[g] / static_cast<double>(n)) * model.groups()[g].law.second_moment();
    m.diagonal().array() += z;

    Eigen::PartialPivLU<CMat> lu(m);
    const double rc = lu.rcond();
    const double cond = rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
    if (!(cond < kMaxCondition))
        throw ConditioningError("z I - Sigma_D numerically singular (condition estimate " +
                                    std::to_string(cond) + ")",
                                cond);
    out.q = lu.inverse();
    if (want_traces) {
        out.group_traces.reserve(model.groups().size());
        for (const auto& g : model.groups()) {
            const Cx tr =
                (g.law.second_moment().cast<Cx>().array() * out.q.transpose().array()).sum();
            out.group_traces.push_back(tr / static_cast<double>(n));
        }
    }
    return out;
}

ComplexDiagonal broadcast_groups(const std::vector<Cx>& values, const DataModel& model,
                                 HalfPlane tag) {
    CVec e(model.n());
    long col = 0;
    for (size_t g = 0; g < model.groups().size(); ++g)
        for (long k = 0; k < model.groups()[g].count; ++k) e[col++] = values[g];
    return ComplexDiagonal(std::move(e), tag);
}

ComplexDiagonal lambda_initial(Cx z, const DataModel& model, HalfPlane tag) {
    std::vector<Cx> v;
    v.reserve(model.groups().size());
    for (const auto& g : model.groups())
        v.push_back(g.law.trace_second_moment() / (z * static_cast<double>(model.n())));
    return broadcast_groups(v, model, tag);
}

HalfPlane lambda_domain(Cx z) {
    if (z.imag() < 0.0) return HalfPlane::upper;
    if (z.imag() > 0.0) return HalfPlane::lower;
    return HalfPlane::none;
}

std::pair<ComplexDiagonal, SolveDiagnostics> solve_lambda_at(Cx z, const DataModel& model,
                                                             ComplexDiagonal init,
                                                             const SolveOptions& opts) {
    auto map = [&](const ComplexDiagonal& lam) { return I_z(z, chi(lam), model); };
    return solve_contractive(map, std::move(init), opts);
}

void check_chi_pole(const ComplexDiagonal& lam) {
    for (long i = 0; i < lam.size(); ++i)
        if (std::abs(lam.entries[i] - Cx(1, 0)) <= 1e-12)
            throw DomainError("Lambda entry " + std::to_string(i) + " within 1e-12 of the chi pole",
                              i);
}

}  // namespace

CMat tilde_Q(Cx z, const ComplexDiagonal& d, const DataModel& model) {
    return tilde_q_with_traces(z, d, model, true, false).q;
}

ComplexDiagonal I_z(Cx z, const ComplexDiagonal& d, const DataModel& model) {
    const auto f = tilde_q_with_traces(z, d, model, false, true);
    return broadcast_groups(f.group_traces, model, HalfPlane::none);
}

std::pair<ComplexDiagonal, SolveDiagnostics> compute_Lambda(Cx z, const DataModel& model,
                                                            const SolveOptions& opts) {
    check_query(z, model);
    const HalfPlane domain = lambda_domain(z);
    try {
        auto [lam, diag] = solve_lambda_at(z, model, lambda_initial(z, model, domain), opts);
        check_chi_pole(lam);
        return {std::move(lam), std::move(diag)};
    } catch (const ConvergenceError&) {
        if (z.imag() != 0.0) throw;
    } catch (const DomainEscapeError&) {
        if (z.imag() != 0.0) throw;
    }
    // real z: restart in the lower half-plane and continue back in 5 steps
    const Cx z0 = z - Cx(0.0, 0.5);
    ComplexDiagonal lam = lambda_initial(z0, model, HalfPlane::upper);
    SolveDiagnostics diag;
    for (int k = 0; k <= 5; ++k) {
        const Cx zk = z - Cx(0.0, 0.5 * (1.0 - k / 5.0));
        lam.tag = (k == 5) ? HalfPlane::none : HalfPlane::upper;
        std::tie(lam, diag) = solve_lambda_at(zk, model, std::move(lam), opts);
    }
    check_chi_pole(lam);
    return {std::move(lam), std::move(diag)};
}

DeterministicEquivalent deterministic_equivalent(const ResolventQuery& query,
                                                 const SolveOptions& opts) {
    auto [lam, diag] = compute_Lambda(query.z, query.model, opts);
    DeterministicEquivalent out;
    out.tilde_q = tilde_Q(query.z, chi(lam), query.model);
    out.lambda = std::move(lam);
    out.stieltjes = out.tilde_q.trace() / static_cast<double>(query.model.p());
    out.diagnostics = std::move(diag);
    return out;
}

std::vector<std::pair<double, double>> spectral_density(const DataModel& model,
                                                        const std::vector<double>& grid,
                                                        double eta) {
    if (!(eta > 0.0)) throw DomainError("eta must be positive");
    std::vector<std::pair<double, double>> out;
    out.reserve(grid.size());
    ComplexDiagonal warm;  // previous solution; the fixed point is unique
    SolveOptions opts;
    opts.max_iter = 50000;  // the Picard rate degrades like 1 - O(sqrt(eta)) near edges
    for (double x : grid) {
        const Cx z(x, eta);
        check_query(z, model);
        ComplexDiagonal lam;
        SolveDiagnostics diag;
        if (warm.size() == model.n()) {
            warm.tag = lambda_domain(z);
            std::tie(lam, diag) = solve_lambda_at(z, model, warm, opts);
        } else {
            std::tie(lam, diag) = compute_Lambda(z, model, opts);
        }
        check_chi_pole(lam);
        const CMat q = tilde_Q(z, chi(lam), model);
        const Cx m = -q.trace() / static_cast<double>(model.p());
        const double density = m.imag() / M_PI;
        if (density < -1e-12)
            throw Error("negative spectral density " + std::to_string(density) + " at x = " +
                        std::to_string(x));
        out.emplace_back(x, density);
        warm = std::move(lam);
    }
    return out;
}

EmpiricalResolvent empirical_resolvent(const SampleMatrix& X, Cx z, double epsilon) {
    const double d = segment_distance(z, 1.0 - epsilon);
    if (d < kQueryMargin)
        throw DomainError("z too close to the segment [0, 1-epsilon]");
    const double n = static_cast<double>(X.data.cols());
    Mat s = (X.data * X.data.transpose()) / n;
    Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
    const double top = es.eigenvalues().maxCoeff();

    CMat m = (-s).cast<Cx>();
    m.diagonal().array() += z;
    Eigen::PartialPivLU<CMat> lu(m);
    const double rc = lu.rcond();
    const double cond = rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
    if (!(cond < kMaxCondition))
        throw ConditioningError("resolvent system numerically singular", cond);
    return EmpiricalResolvent{lu.inverse(), top <= 1.0 - epsilon, top};
}

SchurResiduals schur_check(const SampleMatrix& X, Cx z, long i) {
    const long n = X.data.cols();
    if (i < 0 || i >= n) throw DomainError("column index out of range");
    const double eps = X.model ? X.model->epsilon() : kQueryMargin;
    const Vec xi = X.data.col(i);

    const CMat q = empirical_resolvent(X, z, eps).q;
    SampleMatrix Xmi = X;
    Xmi.data.col(i).setZero();
    const CMat qmi = empirical_resolvent(Xmi, z, eps).q;

    const CVec qmi_xi = qmi * xi.cast<Cx>();
    const Cx quad = xi.cast<Cx>().cwiseProduct(qmi_xi).sum() / static_cast<double>(n);
    const Cx denom = Cx(1, 0) - quad;
    if (std::abs(denom) < 1e-10)
        throw ConditioningError("Schur denominator within 1e-10 of zero", std::abs(denom));

    const CMat rank_one = (qmi_xi * qmi_xi.transpose()) / (static_cast<double>(n) * denom);
    const double matrix_residual = (q - qmi - rank_one).norm();
    const double vector_residual = (q * xi.cast<Cx>() - qmi_xi / denom).norm();
    return SchurResiduals{matrix_residual, vector_residual};
}

DeltaEstimate empirical_Delta(const DataModel& model, Cx z, long trials, std::uint64_t seed,
                              int threads) {
    if (trials < 1) throw DomainError("trials must be >= 1");
    check_query(z, model);
    const long n = model.n();
    const CounterRng root = CounterRng::from_seed(seed);

    std::vector<CVec> slot(trials);
    std::vector<char> ok(trials, 0);
    parallel_for(trials, threads, [&](long t) {
        const std::uint64_t trial_seed = root.derive(static_cast<std::uint64_t>(t)).next_u64();
        SampleMatrix X = sample(model, trial_seed);
        Mat s = (X.data * X.data.transpose()) / static_cast<double>(n);
        Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().maxCoeff() > 1.0 - model.epsilon()) return;
        CMat m = (-s).cast<Cx>();
        m.diagonal().array() += z;
        // D = E/(I+E) with E = diag((1/n) X^T Q X): exact by the Schur identities
        const CMat v = Eigen::PartialPivLU<CMat>(m).solve(X.data.cast<Cx>());
        CVec d(n);
        for (long i = 0; i < n; ++i) {
            const Cx e = X.data.col(i).cast<Cx>().cwiseProduct(v.col(i)).sum() /
                         static_cast<double>(n);
            d[i] = e / (Cx(1, 0) + e);
        }
        slot[t] = std::move(d);
        ok[t] = 1;
    });

    std::vector<NeumaierSum> re(n), im(n);
    long kept = 0;
    for (long t = 0; t < trials; ++t) {
        if (!ok[t]) continue;
        ++kept;
        for (long i = 0; i < n; ++i) {
            re[i].add(slot[t][i].real());
            im[i].add(slot[t][i].imag());
        }
    }
    if (kept == 0) throw EstimationError("all trials fell outside the event A_Q");
    CVec avg(n);
    for (long i = 0; i < n; ++i)
        avg[i] = Cx(re[i].value(), im[i].value()) / static_cast<double>(kept);
    DeltaEstimate out;
    out.delta = ComplexDiagonal(std::move(avg));
    out.trials = trials;
    out.kept = kept;
    out.discard_rate = 1.0 - static_cast<double>(kept) / static_cast<double>(trials);
    return out;
}

Mat resolvent_weighted_real(const Mat& X, const Vec& gamma, double z) {
    const double n = static_cast<double>(X.cols());
    if (gamma.size() != X.cols()) throw DomainError("Gamma length != n");
    Mat m = -(X * gamma.asDiagonal() * X.transpose()) / n;
    m.diagonal().array() += z;
    Eigen::PartialPivLU<Mat> lu(m);
    const double rc = lu.rcond();
    const double cond = rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
    if (!(cond < kMaxCondition))
        throw ConditioningError("weighted resolvent system numerically singular", cond);
    return lu.inverse();
}

CMat resolvent_weighted(const Mat& X, const Vec& gamma, Cx z) {
    if (z.imag() == 0.0) return resolvent_weighted_real(X, gamma, z.real()).cast<Cx>();
    const double n = static_cast<double>(X.cols());
    if (gamma.size() != X.cols()) throw DomainError("Gamma length != n");
    CMat m = (-(X * gamma.asDiagonal() * X.transpose()) / n).cast<Cx>();
    m.diagonal().array() += z;
    Eigen::PartialPivLU<CMat> lu(m);
    const double rc = lu.rcond();
    const double cond = rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
    if (!(cond < kMaxCondition))
        throw ConditioningError("weighted resolvent system numerically singular", cond);
    return lu.inverse();
}

}  // namespace rmt
