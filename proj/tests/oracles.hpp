// Slow, independently written reference implementations used to validate the
// optimized library code. Everything here favors obviousness over speed:
// explicit loops, dense matrices, brute-force searches.
#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "cpcrib/tensor.hpp"

namespace cpcrib::oracles {

// Offset of parameter A_n(i, r) in theta = [vec A_1; ...; vec A_N].
inline Index param_offset(const KruskalModel& m, Index n, Index i, Index r) {
    Index off = 0;
    for (Index k = 0; k < n; ++k) off += m.dim(k) * m.rank();
    return off + r * m.dim(n) + i;
}

inline Index param_count(const KruskalModel& m) {
    Index T = 0;
    for (Index n = 0; n < m.order(); ++n) T += m.dim(n) * m.rank();
    return T;
}

// vec(Y) by explicit multi-index loops (mode-1 index fastest).
inline VectorXd naive_vec_tensor(const KruskalModel& m) {
    std::vector<Index> dims = m.dims();
    Index total = 1;
    for (Index d : dims) total *= d;
    VectorXd v = VectorXd::Zero(total);
    std::vector<Index> idx(dims.size(), 0);
    for (Index lin = 0; lin < total; ++lin) {
        double s = 0.0;
        for (Index r = 0; r < m.rank(); ++r) {
            double p = 1.0;
            for (Index n = 0; n < m.order(); ++n) p *= m.factors[n](idx[n], r);
            s += p;
        }
        v[lin] = s;
        for (size_t n = 0; n < dims.size(); ++n) {
            if (++idx[n] < dims[n]) break;
            idx[n] = 0;
        }
    }
    return v;
}

// kron(a, b): index of a runs slow, index of b fast.
inline VectorXd kron_vec(const VectorXd& a, const VectorXd& b) {
    VectorXd out(a.size() * b.size());
    for (Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a[i] * b;
    return out;
}

// Analytic Jacobian of vec(Y) w.r.t. theta. The column for A_n(i, r) is the
// Kronecker chain over modes N..1 with e_i substituted at mode n.
inline MatrixXd analytic_jacobian(const KruskalModel& m) {
    Index total = naive_vec_tensor(m).size();
    MatrixXd J = MatrixXd::Zero(total, param_count(m));
    for (Index n = 0; n < m.order(); ++n) {
        for (Index r = 0; r < m.rank(); ++r) {
            for (Index i = 0; i < m.dim(n); ++i) {
                VectorXd col = VectorXd::Ones(1);
                for (Index k = 0; k < m.order(); ++k) {
                    VectorXd a;
                    if (k == n) {
                        a = VectorXd::Zero(m.dim(k));
                        a[i] = 1.0;
                    } else {
                        a = m.factors[k].col(r);
                    }
                    col = kron_vec(a, col);  // mode k slower than modes < k
                }
                J.col(param_offset(m, n, i, r)) = col;
            }
        }
    }
    return J;
}

// Central finite differences of vec(Y) w.r.t. theta.
inline MatrixXd fd_jacobian(const KruskalModel& m, double h = 1e-6) {
    Index total = naive_vec_tensor(m).size();
    MatrixXd J = MatrixXd::Zero(total, param_count(m));
    for (Index n = 0; n < m.order(); ++n) {
        for (Index r = 0; r < m.rank(); ++r) {
            for (Index i = 0; i < m.dim(n); ++i) {
                KruskalModel plus = m, minus = m;
                plus.factors[n](i, r) += h;
                minus.factors[n](i, r) -= h;
                J.col(param_offset(m, n, i, r)) =
                    (naive_vec_tensor(plus) - naive_vec_tensor(minus)) / (2.0 * h);
            }
        }
    }
    return J;
}

// J^T diag(vec W) J -- the masked Fisher-information oracle.
inline MatrixXd masked_jtj(const KruskalModel& m, const DenseTensor& mask) {
    MatrixXd J = analytic_jacobian(m);
    return J.transpose() * mask.values.asDiagonal() * J;
}

// Gram matrix by explicit dot products.
inline MatrixXd naive_gram(const MatrixXd& A) {
    MatrixXd C(A.cols(), A.cols());
    for (Index r = 0; r < A.cols(); ++r)
        for (Index s = 0; s < A.cols(); ++s) C(r, s) = A.col(r).dot(A.col(s));
    return C;
}

// Khatri-Rao by column loops.
inline MatrixXd naive_khatri_rao(const MatrixXd& A, const MatrixXd& B) {
    MatrixXd K(A.rows() * B.rows(), A.cols());
    for (Index c = 0; c < A.cols(); ++c) K.col(c) = kron_vec(A.col(c), B.col(c));
    return K;
}

// Best column permutation by exhaustive search on the same product-of-|cos|
// congruence score the library's greedy matcher uses.
inline std::vector<Index> brute_force_permutation(const KruskalModel& estimate,
                                                  const KruskalModel& truth) {
    Index R = truth.rank();
    std::vector<Index> perm(R), best(R);
    for (Index r = 0; r < R; ++r) perm[r] = r;
    double best_score = -1.0;
    do {
        double score = 0.0;
        for (Index r = 0; r < R; ++r) {
            double congr = 1.0;
            for (Index n = 0; n < truth.order(); ++n) {
                const auto& t = truth.factors[n].col(r);
                const auto& e = estimate.factors[n].col(perm[r]);
                congr *= std::abs(t.dot(e)) / (t.norm() * e.norm());
            }
            score += congr;
        }
        if (score > best_score) {
            best_score = score;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

}  // namespace cpcrib::oracles
