#pragma once

#include <cstdint>
#include <optional>

#include "cpcrib/tensor.hpp"

namespace cpcrib {

struct SolverConfig {
    int max_iters = 500;
    double rel_fit_tol = 1e-10;       // change in relative residual
    double mu0_scale = 1e-3;          // mu0 = mu0_scale * mean diag of H
    double mu_increase = 10.0;        // on rejected step
    double mu_decrease = 1.0 / 3.0;   // on accepted step
    int num_starts = 3;
    std::uint64_t seed = 0;
    std::optional<KruskalModel> init;  // overrides random multi-start
};

struct FitResult {
    KruskalModel model;            // normalized
    double residual_norm = 0.0;    // over observed entries
    double rel_residual = 0.0;
    int iterations = 0;
    bool converged = false;
    bool singular_step = false;
    double sigma2_est = 0.0;       // residual power per observed entry
};

// Damped Gauss-Newton (Levenberg-Marquardt) CP fit; the masked variant uses
// the indicator-tensor Hessian blocks.
FitResult fit_gn(const DenseTensor& tensor, Index rank, const SolverConfig& cfg,
                 const DenseTensor* mask = nullptr);

// Alternating least squares baseline; masked variant solves per-row
// weighted least squares.
FitResult fit_als(const DenseTensor& tensor, Index rank, const SolverConfig& cfg,
                  const DenseTensor* mask = nullptr);

// Resolve the permutation ambiguity: greedy column matching on the product
// of per-mode |cos| congruences. Returns the permuted, renormalized estimate.
KruskalModel align(const KruskalModel& estimate, const KruskalModel& truth);

struct AngularError {
    MatrixXd angles;  // N x R, radians in [0, pi/2]
    MatrixXd dsr;     // (1 - cos^2) / cos^2
};

AngularError angular_errors(const KruskalModel& aligned, const KruskalModel& truth);

// Random normalized model with i.i.d. standard normal factors.
KruskalModel random_model(const std::vector<Index>& dims, Index rank, std::uint64_t seed);

}  // namespace cpcrib
