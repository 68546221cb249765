#include "cpcrib/hessian.hpp"

#include <cmath>

namespace cpcrib {

double lu_rcond_estimate(const Eigen::FullPivLU<MatrixXd>& lu) {
    VectorXd d = lu.matrixLU().diagonal().cwiseAbs();
    if (d.size() == 0) return 1.0;
    double mx = d.maxCoeff();
    if (!(mx > 0.0)) return 0.0;
    return d.minCoeff() / mx;
}

MatrixXd vec_transpose_perm(Index R) {
    MatrixXd P = MatrixXd::Zero(R * R, R * R);
    for (Index b = 0; b < R; ++b)
        for (Index a = 0; a < R; ++a)
            P(a + R * b, b + R * a) = 1.0;
    return P;
}

MatrixXd build_k_matrix(const GramCache& cache) {
    Index N = cache.order(), R = cache.rank();
    MatrixXd P = vec_transpose_perm(R);
    MatrixXd K = MatrixXd::Zero(N * R * R, N * R * R);
    for (Index n = 0; n < N; ++n) {
        for (Index m = 0; m < N; ++m) {
            if (n == m) continue;
            MatrixXd G = cache.gamma(n, m);
            // P_R * dvec(Gamma_nm): scale column idx(a,b) of P_R by Gamma(a,b)
            MatrixXd Knm = P;
            for (Index b = 0; b < R; ++b)
                for (Index a = 0; a < R; ++a)
                    Knm.col(a + R * b) *= G(a, b);
            K.block(n * R * R, m * R * R, R * R, R * R) = Knm;
        }
    }
    return K;
}

namespace {

MatrixXd kron_identity_left(Index R, const MatrixXd& A) {
    // I_R (x) A
    MatrixXd Z = MatrixXd::Zero(R * A.rows(), R * A.cols());
    for (Index r = 0; r < R; ++r) Z.block(r * A.rows(), r * A.cols(), A.rows(), A.cols()) = A;
    return Z;
}

}  // namespace

HessianBlocks build_hessian(const GramCache& cache, const KruskalModel& model) {
    Index N = model.order(), R = model.rank();
    HessianBlocks out;
    out.gamma_diag.reserve(N);
    for (Index n = 0; n < N; ++n) out.gamma_diag.push_back(cache.gamma_diag(n));
    out.K = build_k_matrix(cache);

    Index T = 0;
    for (Index n = 0; n < N; ++n) T += model.dim(n);
    MatrixXd Z = MatrixXd::Zero(R * T, N * R * R);
    MatrixXd G = MatrixXd::Zero(R * T, R * T);
    Index row = 0;
    for (Index n = 0; n < N; ++n) {
        Index In = model.dim(n);
        Z.block(row, n * R * R, R * In, R * R) = kron_identity_left(R, model.factors[n]);
        for (Index r = 0; r < R; ++r)
            for (Index s = 0; s < R; ++s)
                G.block(row + r * In, row + s * In, In, In) =
                    out.gamma_diag[n](r, s) * MatrixXd::Identity(In, In);
        row += R * In;
    }
    out.H = G + Z * out.K * Z.transpose();
    return out;
}

MatrixXd reduction_matrix(const KruskalModel& model, ReductionKind kind) {
    Index N = model.order(), R = model.rank();
    Index rows = R * model.dim(0), cols = R * model.dim(0);
    for (Index n = 1; n < N; ++n) {
        rows += R * (model.dim(n) - 1);
        cols += R * model.dim(n);
    }
    MatrixXd E = MatrixXd::Zero(rows, cols);
    E.topLeftCorner(R * model.dim(0), R * model.dim(0)).setIdentity();
    Index ro = R * model.dim(0), co = ro;
    for (Index n = 1; n < N; ++n) {
        Index In = model.dim(n);
        MatrixXd En(In - 1, In);
        if (kind == ReductionKind::row_deletion) {
            En.setZero();
            En.rightCols(In - 1).setIdentity();
        } else {
            VectorXd a = model.factors[n].col(0);
            a /= a.norm();
            MatrixXd proj = MatrixXd::Identity(In, In) - a * a.transpose();
            // Keep I_n - 1 rows of the projector; skip the row of the largest
            // |a_i| so the kept rows always have full rank.
            Index drop;
            a.cwiseAbs().maxCoeff(&drop);
            Index k = 0;
            for (Index i = 0; i < In; ++i)
                if (i != drop) En.row(k++) = proj.row(i);
        }
        for (Index r = 0; r < R; ++r)
            E.block(ro + r * (In - 1), co + r * In, In - 1, In) = En;
        ro += R * (In - 1);
        co += R * In;
    }
    return E;
}

ReducedHessian reduce_hessian(const HessianBlocks& h, const KruskalModel& model,
                              ReductionKind kind) {
    return reduce_hessian(h.H, model, kind);
}

ReducedHessian reduce_hessian(const MatrixXd& H, const KruskalModel& model, ReductionKind kind) {
    MatrixXd E = reduction_matrix(model, kind);
    ReducedHessian out;
    out.HE = E * H * E.transpose();
    Eigen::FullPivLU<MatrixXd> lu(out.HE);
    out.rcond = lu_rcond_estimate(lu);
    out.singular = !(out.rcond > 1e-14) || !std::isfinite(out.rcond);
    return out;
}

MaskedHessian masked_hessian(const KruskalModel& model, const DenseTensor& mask) {
    model.validate();
    if (mask.dims != model.dims()) throw std::invalid_argument("mask dims must match model dims");
    if (!mask.is_binary()) throw std::invalid_argument("mask entries must be 0 or 1");
    Index N = model.order(), R = model.rank();
    Index T = 0;
    std::vector<Index> off(N);
    for (Index n = 0; n < N; ++n) {
        off[n] = T;
        T += R * model.dim(n);
    }
    MaskedHessian out;
    out.H = MatrixXd::Zero(T, T);

    std::vector<VectorXd> b(N);
    for (Index r = 0; r < R; ++r) {
        for (Index s = 0; s < R; ++s) {
            for (Index k = 0; k < N; ++k)
                b[k] = model.factors[k].col(r).cwiseProduct(model.factors[k].col(s));
            for (Index n = 0; n < N; ++n) {
                Index In = model.dim(n);
                // Diagonal block: diag(W xbar_{-n} {b})
                DenseTensor d = tvprod_except(mask, b, {n});
                out.H.block(off[n] + r * In, off[n] + s * In, In, In) = d.values.asDiagonal();
                for (Index m = n + 1; m < N; ++m) {
                    Index Im = model.dim(m);
                    DenseTensor c = tvprod_except(mask, b, {n, m});
                    Eigen::Map<const MatrixXd> M(c.values.data(), In, Im);
                    // Entry (i,j) carries a^(n)_{is} a^(m)_{jr}; see the
                    // gradient outer-product structure.
                    MatrixXd blk = (model.factors[n].col(s) * model.factors[m].col(r).transpose())
                                       .cwiseProduct(M);
                    out.H.block(off[n] + r * In, off[m] + s * Im, In, Im) = blk;
                    out.H.block(off[m] + s * Im, off[n] + r * In, Im, In) = blk.transpose();
                }
            }
        }
    }
    return out;
}

}  // namespace cpcrib
