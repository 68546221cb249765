#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <vector>

namespace cpcrib {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Index = Eigen::Index;

// Dense N-way array. Values are stored column-major: mode-1 index runs
// fastest, so vec(Y) = sum_r a_r^(N) (x) ... (x) a_r^(1) for a Kruskal
// tensor. Also used as the 0-1 observation indicator.
struct DenseTensor {
    std::vector<Index> dims;
    VectorXd values;

    DenseTensor() = default;
    DenseTensor(std::vector<Index> d, VectorXd v);
    explicit DenseTensor(std::vector<Index> d);  // zero-filled

    Index order() const { return static_cast<Index>(dims.size()); }
    Index size() const { return values.size(); }

    // Linear offset of a multi-index (mode-1 fastest).
    Index offset(const std::vector<Index>& idx) const;
    double operator()(const std::vector<Index>& idx) const { return values[offset(idx)]; }
    double& operator()(const std::vector<Index>& idx) { return values[offset(idx)]; }

    bool is_binary(double tol = 0.0) const;
};

// Rank-R Kruskal model: factor matrices A_1..A_N, factor n of shape I_n x R.
// In normalized form columns of A_2..A_N have unit norm and all magnitude
// lives in A_1.
struct KruskalModel {
    std::vector<MatrixXd> factors;

    KruskalModel() = default;
    explicit KruskalModel(std::vector<MatrixXd> f);

    Index order() const { return static_cast<Index>(factors.size()); }
    Index rank() const { return factors.empty() ? 0 : factors[0].cols(); }
    std::vector<Index> dims() const;
    Index dim(Index n) const { return factors[n].rows(); }

    void validate() const;
};

// Sufficient statistics for the CRIB formulas: C_n = A_n^T A_n and the
// Hadamard products Gamma_nm over all modes except n,m.
struct GramCache {
    std::vector<MatrixXd> C;  // one R x R gram per mode

    Index order() const { return static_cast<Index>(C.size()); }
    Index rank() const { return C.empty() ? 0 : C[0].rows(); }

    // Hadamard product of C_k over k not in {n, m} (0-based modes).
    MatrixXd gamma(Index n, Index m) const;
    // Gamma_nn: product over all k != n.
    MatrixXd gamma_diag(Index n) const { return gamma(n, n); }
};

KruskalModel normalize(const KruskalModel& model);

DenseTensor full_tensor(const KruskalModel& model);

// Columnwise Kronecker product.
MatrixXd khatri_rao(const MatrixXd& A, const MatrixXd& B);

// Z_n = A_N (.) ... (.) A_{n+1} (.) A_{n-1} (.) ... (.) A_1, the Khatri-Rao
// complement of mode n matching the column-major vec convention.
MatrixXd khatri_rao_except(const KruskalModel& model, Index skip_mode);

GramCache gram_cache(const KruskalModel& model);

// Mode-n unfolding Y_(n) of shape I_n x (prod of other dims), with the
// column ordering induced by the global vec convention, so that
// Y_(n) = A_n * khatri_rao_except(model, n)^T.
MatrixXd unfold(const DenseTensor& t, Index mode);

// Merge the given modes (0-based, ascending; must not contain mode 0) into a
// single mode whose factor columns are Kronecker products with the later
// mode on the left. The merged mode takes the position of the smallest
// merged mode.
KruskalModel reshape_merge(const KruskalModel& model, const std::vector<Index>& modes);

// Contract t along every mode not in `skip` with the corresponding vector
// from `vectors` (vectors[k] is used for mode k; entries for skipped modes
// are ignored). Result is a tensor over the skipped modes, in ascending
// mode order; empty skip yields a 0-way tensor holding one scalar.
DenseTensor tvprod_except(const DenseTensor& t, const std::vector<VectorXd>& vectors,
                          const std::set<Index>& skip);

double tvprod_all(const DenseTensor& t, const std::vector<VectorXd>& vectors);

// Relabel modes: out mode k is input mode perm[k].
DenseTensor permute_modes(const DenseTensor& t, const std::vector<Index>& perm);

}  // namespace cpcrib
