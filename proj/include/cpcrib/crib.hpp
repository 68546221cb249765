#pragma once

#include <optional>
#include <string>

#include "cpcrib/hessian.hpp"
#include "cpcrib/tensor.hpp"

namespace cpcrib {

enum class CribMethod { oracle, general, fast, auto_select };

std::string to_string(CribMethod m);

// Per-column bound in linear units (radians^2) and dB, plus diagnostics.
struct CribReport {
    double crib = std::numeric_limits<double>::infinity();
    double crib_db = -std::numeric_limits<double>::infinity();
    double angle_deg = std::numeric_limits<double>::infinity();
    bool finite = false;
    bool epsilon_applied = false;
    CribMethod method = CribMethod::auto_select;
    std::string note;  // set when a solve was singular or a fallback fired
};

struct CribRequest {
    KruskalModel model;
    Index target_mode = 0;    // 0-based
    Index target_column = 0;  // 0-based
    double sigma2 = 1.0;
    CribMethod method = CribMethod::auto_select;
    double epsilon = 1e-5;
};

// db = -10 log10(crib); angle_deg = sqrt(crib) * 180 / pi.
std::pair<double, double> db_and_angle(double crib_linear);

// Permute the model so the requested target becomes mode 1, column 1, and
// renormalize. CRIB is invariant under this relabeling.
KruskalModel permute_target(const KruskalModel& model, Index mode, Index column);

// Scale-invariant clamp of off-diagonal gram correlations into
// [eps, 1 - eps] in magnitude (zeros move to +eps). Diagonal untouched.
GramCache regularize_grams(const GramCache& cache, double eps);

bool grams_need_regularization(const GramCache& cache, double eps);

// Dense-inverse reference path: assembled Hessian, reduction, full inverse.
CribReport crib_oracle(const CribRequest& req);

// Structured path working on an NR^2-sized solve; no dense reduced Hessian.
CribReport crib_general(const CribRequest& req);

// Block-inversion path: N-1 solves of R^2 x R^2 systems.
CribReport crib_fast(const CribRequest& req);

CribReport crib_auto(const CribRequest& req);

CribReport compute_crib(const CribRequest& req);  // dispatch on req.method

// Gram-only entry points (factor matrices never needed). norm_a1 defaults
// to sqrt(C_1(0,0)) when non-positive.
CribReport crib_from_grams(const GramCache& grams, Index I1, double norm_a1, double sigma2,
                           CribMethod method = CribMethod::general);

// Evaluate on regularized grams over a descending eps grid and extrapolate
// to eps = 0 (Richardson on the reliable portion of the curve). Defines the
// bound at degenerate correlations (entries at 0 or +-1).
CribReport crib_eps_limit(const GramCache& grams, Index I1, double norm_a1, double sigma2);

// Dense bound under a 0-1 observation mask (Hessian from the indicator
// tensor; no fast inversion available in this case).
CribReport crib_masked(const KruskalModel& model, const DenseTensor& mask, Index target_mode,
                       Index target_column, double sigma2);

// CRIB for every (mode, column) pair of the model.
std::vector<std::vector<CribReport>> crib_all_columns(const KruskalModel& model, double sigma2,
                                                      CribMethod method = CribMethod::auto_select);

}  // namespace cpcrib
