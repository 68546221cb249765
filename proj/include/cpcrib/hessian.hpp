#pragma once

#include "cpcrib/tensor.hpp"

namespace cpcrib {

// vec-transpose permutation P_R: vec(M) = P_R vec(M^T) for R x R matrices.
MatrixXd vec_transpose_perm(Index R);

// Reciprocal-condition estimate min|U_ii| / max|U_ii| from a full-pivot LU.
// (Eigen's rcond() can report ~1e-4 on matrices whose smallest singular
// value is at roundoff level; the pivot ratio is reliable for that gate.)
double lu_rcond_estimate(const Eigen::FullPivLU<MatrixXd>& lu);

// Structured blocks of the approximate Hessian H = G + Z K Z^T, plus the
// assembled dense matrix for oracle use.
struct HessianBlocks {
    std::vector<MatrixXd> gamma_diag;  // Gamma_nn per mode; G block n is Gamma_nn (x) I_{I_n}
    MatrixXd K;                        // NR^2 x NR^2, blocks K_nm = (1-delta) P_R dvec(Gamma_nm)
    MatrixXd H;                        // dense R*sum(I_n) square
};

// K assembled from grams alone (also used by the CRIB paths).
MatrixXd build_k_matrix(const GramCache& cache);

HessianBlocks build_hessian(const GramCache& cache, const KruskalModel& model);

enum class ReductionKind {
    projector,     // rows of the orthogonal-complement projector of a_1^(n)
    row_deletion,  // E_n = [0 | I]
};

// Full reduction map E = bdiag(I_{R I_1}, I_R (x) E_2, ..., I_R (x) E_N).
MatrixXd reduction_matrix(const KruskalModel& model, ReductionKind kind = ReductionKind::projector);

struct ReducedHessian {
    MatrixXd HE;
    double rcond = 0.0;
    bool singular = false;  // reciprocal condition below the 1e-14 cutoff
};

ReducedHessian reduce_hessian(const HessianBlocks& h, const KruskalModel& model,
                              ReductionKind kind = ReductionKind::projector);

ReducedHessian reduce_hessian(const MatrixXd& H, const KruskalModel& model,
                              ReductionKind kind = ReductionKind::projector);

// Approximate Hessian under a 0-1 observation mask; with an all-ones mask
// it coincides with build_hessian's assembled H.
struct MaskedHessian {
    MatrixXd H;
};

MaskedHessian masked_hessian(const KruskalModel& model, const DenseTensor& mask);

}  // namespace cpcrib
