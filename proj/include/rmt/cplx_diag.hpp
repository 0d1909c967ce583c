#pragma once

#include <functional>
#include <vector>

#include "rmt/common.hpp"

namespace rmt {

// Half-plane the entries are required to stay in. 'none' drops the check
// (real-axis queries are iterated with divergence detection only).
enum class HalfPlane { none, upper, lower };

struct ComplexDiagonal {
    CVec entries;
    HalfPlane tag = HalfPlane::none;

    ComplexDiagonal() = default;
    explicit ComplexDiagonal(CVec e, HalfPlane t = HalfPlane::none)
        : entries(std::move(e)), tag(t) {}
    static ComplexDiagonal constant(long n, Cx value, HalfPlane t = HalfPlane::none) {
        return ComplexDiagonal(CVec::Constant(n, value), t);
    }

    long size() const { return entries.size(); }

    bool in_half_plane(HalfPlane h) const {
        if (h == HalfPlane::none) return true;
        for (long i = 0; i < entries.size(); ++i) {
            const double im = entries[i].imag();
            if (h == HalfPlane::upper ? !(im > 0.0) : !(im < 0.0)) return false;
        }
        return true;
    }
    bool in_upper_half_plane() const { return in_half_plane(HalfPlane::upper); }
};

// chi(z) = 1/(1 - z) entrywise; pole at 1 rejected per entry.
ComplexDiagonal chi(const ComplexDiagonal& d);

// d_s(D, D') = sup_i |D_i - D'_i| / sqrt(Im D_i * Im D'_i); requires
// strictly positive imaginary parts on both arguments.
double stable_distance(const ComplexDiagonal& a, const ComplexDiagonal& b);

struct SolveDiagnostics {
    int iterations = 0;
    double final_residual = 0.0;
    std::vector<double> ds_history;  // d_s between successive iterates when defined
};

struct SolveOptions {
    double tol = 1e-10;   // on the sup-norm residual ||D - f(D)||_inf
    int max_iter = 1000;
    double damping = 1.0;  // D <- (1-damping) D + damping f(D)
};

using DiagonalMap = std::function<ComplexDiagonal(const ComplexDiagonal&)>;

// Damped Picard iteration. The domain requirement is taken from d0.tag;
// an iterate leaving it raises DomainEscapeError. If the residual fails to
// decrease for 10 consecutive steps at damping 1, restarts once at 0.5.
std::pair<ComplexDiagonal, SolveDiagnostics> solve_contractive(const DiagonalMap& f,
                                                               const ComplexDiagonal& d0,
                                                               const SolveOptions& opts = {});

}  // namespace rmt
