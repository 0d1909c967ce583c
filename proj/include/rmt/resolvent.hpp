#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "rmt/cplx_diag.hpp"
#include "rmt/common.hpp"
#include "rmt/model.hpp"

namespace rmt {

struct ResolventQuery {
    Cx z;
    DataModel model;
};

// Computable deterministic equivalent of Q^z = (z I - (1/n) X X^T)^{-1}:
// Lambda^z solving L = I^z(chi(L)) and tildeQ^z(chi(Lambda^z)).
struct DeterministicEquivalent {
    ComplexDiagonal lambda;
    CMat tilde_q;
    Cx stieltjes;  // (1/p) tr(tilde_q)
    SolveDiagnostics diagnostics;
};

// tildeQ^z(D) = (z I_p - Sigma_D)^{-1}, Sigma_D = (1/n) sum_i D_i Sigma_i.
CMat tilde_Q(Cx z, const ComplexDiagonal& d, const DataModel& model);

// I^z(D) = diag_i((1/n) tr(Sigma_i tildeQ^z(D))); one trace per law group.
ComplexDiagonal I_z(Cx z, const ComplexDiagonal& d, const DataModel& model);

std::pair<ComplexDiagonal, SolveDiagnostics> compute_Lambda(Cx z, const DataModel& model,
                                                            const SolveOptions& opts = {});

DeterministicEquivalent deterministic_equivalent(const ResolventQuery& query,
                                                 const SolveOptions& opts = {});

// (x, (1/pi) Im(-(1/p) tr(tildeQ^{x+i eta}))) over the grid.
std::vector<std::pair<double, double>> spectral_density(const DataModel& model,
                                                        const std::vector<double>& grid,
                                                        double eta);

struct EmpiricalResolvent {
    CMat q;
    bool in_event;  // ||(1/n) X X^T|| <= 1 - epsilon
    double top_eigenvalue;
};

EmpiricalResolvent empirical_resolvent(const SampleMatrix& X, Cx z, double epsilon);

struct SchurResiduals {
    double matrix_residual;  // Frobenius norm of the rank-one update identity
    double vector_residual;  // Euclidean norm of the Q x_i identity
};

SchurResiduals schur_check(const SampleMatrix& X, Cx z, long i);

struct DeltaEstimate {
    ComplexDiagonal delta;  // average of D^z over trials in the event A_Q
    long trials = 0;
    long kept = 0;
    double discard_rate = 0.0;
};

DeltaEstimate empirical_Delta(const DataModel& model, Cx z, long trials, std::uint64_t seed,
                              int threads = 1);

// (z I - (1/n) X Gamma X^T)^{-1}, exact dense solve.
CMat resolvent_weighted(const Mat& X, const Vec& gamma, Cx z);
Mat resolvent_weighted_real(const Mat& X, const Vec& gamma, double z);

}  // namespace rmt
