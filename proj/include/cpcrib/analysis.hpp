#pragma once

#include <optional>

#include "cpcrib/crib.hpp"
#include "cpcrib/solver.hpp"

namespace cpcrib {

struct McConfig {
    KruskalModel model;       // ground truth
    double sigma2 = 1e-4;
    int trials = 200;
    SolverConfig solver;
    std::optional<double> missing_rate;  // fraction of entries hidden
    std::uint64_t seed = 0;
};

struct McResult {
    MatrixXd msae;      // N x R mean squared angle over successful trials
    MatrixXd msae_db;
    MatrixXd crib;      // matching bounds
    MatrixXd crib_db;
    int trials_used = 0;
    int failures = 0;   // non-converged or mis-aligned, excluded
    DenseTensor mask;   // the indicator used (all ones when no missing_rate)
};

McResult monte_carlo(const McConfig& cfg);

// sigma^2 giving the requested SNR = ||Y||_F^2 / (prod I_n * sigma^2) in dB.
double sigma2_for_snr_db(const KruskalModel& model, double snr_db);

struct ReshapeLoss {
    CribReport original;
    CribReport reshaped;
    double loss_db = 0.0;  // crib_db(original) - crib_db(reshaped), >= 0
};

// Accuracy cost of merging the given modes (0-based; mode 0 must survive),
// measured on the first column of the first factor matrix.
ReshapeLoss reshape_loss(const KruskalModel& model, const std::vector<Index>& merge);

// floor(prod I_n / (sum I_n - N + 1)).
Index max_stable_rank_bound(const std::vector<Index>& dims);

struct StabilityCheck {
    bool finite = false;
    CribReport report;
};

// Draws a random normalized model of the given rank and tests whether the
// bound for column (1,1) is finite.
StabilityCheck check_stability(const std::vector<Index>& dims, Index rank, std::uint64_t seed);

// Necessary uniqueness condition: every Gamma_nn numerically full rank.
bool uniqueness_necessary(const KruskalModel& model);

// Model whose mode-n gram has all off-diagonal entries equal to c[n]
// (exact when I_n >= R and the target gram is PSD).
KruskalModel model_with_correlations(const std::vector<Index>& dims, Index rank,
                                     const std::vector<double>& c, std::uint64_t seed);

// Random 0-1 indicator with the given fraction of zeros.
DenseTensor random_mask(const std::vector<Index>& dims, double missing_rate, std::uint64_t seed);

}  // namespace cpcrib
