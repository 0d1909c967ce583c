#include "rmt/cplx_diag.hpp"

#include <cmath>

namespace rmt {

ComplexDiagonal chi(const ComplexDiagonal& d) {
    CVec out(d.size());
    for (long i = 0; i < d.size(); ++i) {
        const Cx w = Cx(1.0, 0.0) - d.entries[i];
        if (std::abs(w) < 1e-300)
            throw DomainError("chi pole: entry " + std::to_string(i) + " equals 1", i);
        out[i] = 1.0 / w;
    }
    return ComplexDiagonal(std::move(out), d.tag);
}

namespace {

// d_s with matching-sign imaginary parts (both halves); used by the driver.
double stable_distance_signed(const CVec& a, const CVec& b) {
    double worst = 0.0;
    for (long i = 0; i < a.size(); ++i) {
        const double prod = a[i].imag() * b[i].imag();
        if (!(prod > 0.0)) return -1.0;  // undefined
        worst = std::max(worst, std::abs(a[i] - b[i]) / std::sqrt(prod));
    }
    return worst;
}

bool entries_in(const CVec& v, HalfPlane h) {
    if (h == HalfPlane::none) return true;
    for (long i = 0; i < v.size(); ++i) {
        const double im = v[i].imag();
        if (h == HalfPlane::upper ? !(im > 0.0) : !(im < 0.0)) return false;
    }
    return true;
}

std::pair<ComplexDiagonal, SolveDiagnostics> run_iteration(const DiagonalMap& f,
                                                           const ComplexDiagonal& d0,
                                                           const SolveOptions& opts,
                                                           bool allow_retry) {
    ComplexDiagonal d = d0;
    SolveDiagnostics diag;
    double prev_residual = std::numeric_limits<double>::infinity();
    int non_decreasing = 0;
    for (int k = 0; k < opts.max_iter; ++k) {
        ComplexDiagonal fd = f(d);
        const double residual = (d.entries - fd.entries).cwiseAbs().maxCoeff();
        if (residual <= opts.tol) {
            diag.iterations = k;
            diag.final_residual = residual;
            return {std::move(d), std::move(diag)};
        }
        if (residual >= prev_residual) {
            if (++non_decreasing >= 10 && allow_retry && opts.damping == 1.0) {
                SolveOptions damped = opts;
                damped.damping = 0.5;
                return run_iteration(f, d0, damped, false);
            }
        } else {
            non_decreasing = 0;
        }
        prev_residual = residual;

        CVec next = (1.0 - opts.damping) * d.entries + opts.damping * fd.entries;
        if (!entries_in(next, d0.tag))
            throw DomainEscapeError("iterate left the required half-plane at iteration " +
                                        std::to_string(k),
                                    k);
        const double ds = stable_distance_signed(d.entries, next);
        if (ds >= 0.0) diag.ds_history.push_back(ds);
        d.entries = std::move(next);
    }
    ComplexDiagonal fd = f(d);
    const double residual = (d.entries - fd.entries).cwiseAbs().maxCoeff();
    if (residual <= opts.tol) {
        diag.iterations = opts.max_iter;
        diag.final_residual = residual;
        return {std::move(d), std::move(diag)};
    }
    throw ConvergenceError("fixed point not reached in " + std::to_string(opts.max_iter) +
                               " iterations (residual " + std::to_string(residual) + ")",
                           residual, opts.max_iter);
}

}  // namespace

double stable_distance(const ComplexDiagonal& a, const ComplexDiagonal& b) {
    if (a.size() != b.size()) throw DomainError("stable_distance: length mismatch");
    for (long i = 0; i < a.size(); ++i)
        if (!(a.entries[i].imag() > 0.0) || !(b.entries[i].imag() > 0.0))
            throw DomainError("stable_distance: nonpositive imaginary part at entry " +
                                  std::to_string(i),
                              i);
    return stable_distance_signed(a.entries, b.entries);
}

std::pair<ComplexDiagonal, SolveDiagnostics> solve_contractive(const DiagonalMap& f,
                                                               const ComplexDiagonal& d0,
                                                               const SolveOptions& opts) {
    if (d0.size() < 1) throw DomainError("empty initial diagonal");
    if (!(opts.damping > 0.0 && opts.damping <= 1.0))
        throw DomainError("damping must lie in (0, 1]");
    if (!d0.in_half_plane(d0.tag))
        throw DomainEscapeError("initial diagonal violates its half-plane tag", -1);
    return run_iteration(f, d0, opts, true);
}

}  // namespace rmt
