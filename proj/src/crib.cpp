#include "cpcrib/crib.hpp"

#include <cmath>
#include <numbers>

namespace cpcrib {

namespace {

constexpr double kRcondCutoff = 1e-14;

MatrixXd kron(const MatrixXd& A, const MatrixXd& B) {
    MatrixXd K(A.rows() * B.rows(), A.cols() * B.cols());
    for (Index i = 0; i < A.rows(); ++i)
        for (Index j = 0; j < A.cols(); ++j)
            K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    return K;
}

MatrixXd dvec(const MatrixXd& M) {
    Eigen::Map<const VectorXd> v(M.data(), M.size());
    return MatrixXd(v.asDiagonal());
}

// X_n = C_n - C_{:,1} C_{:,1}^T / C_{11}; first row and column are zero.
MatrixXd x_matrix(const MatrixXd& C) {
    return C - C.col(0) * C.col(0).transpose() / C(0, 0);
}

// Rescale grams to the normalized-model convention: unit diagonal for modes
// 2..N, magnitudes folded into C_1.
GramCache normalize_grams(const GramCache& cache) {
    GramCache out = cache;
    Index N = cache.order(), R = cache.rank();
    for (Index n = 1; n < N; ++n) {
        VectorXd d = out.C[n].diagonal().cwiseSqrt();
        for (Index r = 0; r < R; ++r)
            for (Index s = 0; s < R; ++s) {
                out.C[0](r, s) *= d[r] * d[s];
                out.C[n](r, s) /= d[r] * d[s];
            }
    }
    return out;
}

struct BraceResult {
    double value = 0.0;
    bool ok = false;
    bool fell_back = false;
    std::string note;
};

// The bracketed term of the CRIB expression: (I1-1) g11 - tr[B0 ((g^T g) (x) X1)],
// computed via the NR^2-sized solve.
BraceResult general_brace(const GramCache& g, Index I1) {
    BraceResult out;
    Index N = g.order(), R = g.rank();
    MatrixXd gamma11 = g.gamma(0, 0);
    Eigen::FullPivLU<MatrixXd> lu11(gamma11);
    if (!(lu_rcond_estimate(lu11) > kRcondCutoff)) {
        out.note = "SINGULAR_GAMMA";
        return out;
    }
    MatrixXd g11inv = lu11.inverse();
    double g11 = g11inv(0, 0);
    Eigen::RowVectorXd grow = g11inv.row(0);

    MatrixXd K = build_k_matrix(g);
    MatrixXd psi = MatrixXd::Zero(N * R * R, N * R * R);
    psi.topLeftCorner(R * R, R * R) = kron(g11inv, g.C[0]);
    for (Index n = 1; n < N; ++n) {
        MatrixXd gnn = g.gamma_diag(n);
        Eigen::FullPivLU<MatrixXd> lunn(gnn);
        if (!(lu_rcond_estimate(lunn) > kRcondCutoff)) {
            out.note = "SINGULAR_GAMMA";
            return out;
        }
        psi.block(n * R * R, n * R * R, R * R, R * R) = kron(lunn.inverse(), x_matrix(g.C[n]));
    }
    MatrixXd M = MatrixXd::Identity(N * R * R, N * R * R) + psi * K;
    Eigen::FullPivLU<MatrixXd> luM(M);
    if (!(lu_rcond_estimate(luM) > kRcondCutoff)) {
        out.note = "SINGULAR_IB";
        return out;
    }
    MatrixXd B0 = (K * luM.inverse()).topLeftCorner(R * R, R * R);
    MatrixXd trace_arg = kron(grow.transpose() * grow, x_matrix(g.C[0]));
    out.value = (I1 - 1) * g11 - (B0 * trace_arg).trace();
    out.ok = true;
    return out;
}

// Same bracket via the block-inversion route: N-1 inversions of R^2 x R^2
// matrices S_n plus one inversion of I + V. Requires every C_n entry
// nonzero for n >= 2.
BraceResult fast_brace(const GramCache& g, Index I1) {
    BraceResult out;
    Index N = g.order(), R = g.rank();
    for (Index n = 1; n < N; ++n)
        if ((g.C[n].cwiseAbs().array() < 1e-300).any()) {
            out.note = "HYPOTHESIS_VIOLATED";
            return out;
        }
    MatrixXd gamma11 = g.gamma(0, 0);
    Eigen::FullPivLU<MatrixXd> lu11(gamma11);
    if (!(lu_rcond_estimate(lu11) > kRcondCutoff)) {
        out.note = "SINGULAR_GAMMA";
        return out;
    }
    MatrixXd g11inv = lu11.inverse();
    double g11 = g11inv(0, 0);
    Eigen::RowVectorXd grow = g11inv.row(0);

    MatrixXd P = vec_transpose_perm(R);
    MatrixXd Wsum = MatrixXd::Zero(R * R, R * R);
    MatrixXd Ysum = MatrixXd::Zero(R * R, R * R);
    for (Index n = 1; n < N; ++n) {
        MatrixXd gnn = g.gamma_diag(n);
        Eigen::FullPivLU<MatrixXd> lunn(gnn);
        if (!(lu_rcond_estimate(lunn) > kRcondCutoff)) {
            out.note = "SINGULAR_GAMMA";
            return out;
        }
        MatrixXd An = kron(lunn.inverse(), x_matrix(g.C[n]));
        MatrixXd Sn = MatrixXd::Identity(R * R, R * R) -
                      An * dvec(gnn.cwiseQuotient(g.C[n])) * P;
        Eigen::FullPivLU<MatrixXd> luS(Sn);
        if (!(lu_rcond_estimate(luS) > kRcondCutoff)) {
            out.note = "SN_SINGULAR";
            return out;
        }
        MatrixXd gamma1n = g.gamma(0, n);
        MatrixXd core = dvec(gamma1n) * luS.solve(An);
        Wsum += core * dvec(g.C[0].cwiseQuotient(g.C[n]));
        Ysum += core * P * dvec(gamma1n);
    }
    MatrixXd Wmat = P * Wsum;
    MatrixXd Ymat = P * Ysum;
    MatrixXd V = Wmat - Ymat * kron(g11inv, g.C[0]);
    MatrixXd IV = MatrixXd::Identity(R * R, R * R) + V;
    Eigen::FullPivLU<MatrixXd> luV(IV);
    if (!(lu_rcond_estimate(luV) > kRcondCutoff)) {
        out.note = "SINGULAR_IB";
        return out;
    }
    MatrixXd B0 = (-MatrixXd::Identity(R * R, R * R) + V * luV.inverse()) * Ymat;
    MatrixXd trace_arg = kron(grow.transpose() * grow, x_matrix(g.C[0]));
    out.value = (I1 - 1) * g11 - (B0 * trace_arg).trace();
    out.ok = true;
    return out;
}

CribReport finish_report(double crib, CribMethod method, bool eps_applied, std::string note = {}) {
    CribReport rep;
    rep.method = method;
    rep.epsilon_applied = eps_applied;
    rep.note = std::move(note);
    rep.finite = std::isfinite(crib);
    rep.crib = rep.finite ? crib : std::numeric_limits<double>::infinity();
    auto [db, deg] = db_and_angle(rep.crib);
    rep.crib_db = db;
    rep.angle_deg = deg;
    return rep;
}

CribReport infinite_report(CribMethod method, std::string note, bool eps_applied = false) {
    return finish_report(std::numeric_limits<double>::infinity(), method, eps_applied,
                         std::move(note));
}

CribReport report_from_brace(const BraceResult& b, double I1_unused, double sigma2, double norm2,
                             CribMethod method, bool eps_applied) {
    (void)I1_unused;
    if (!b.ok) return infinite_report(method, b.note, eps_applied);
    return finish_report(sigma2 / norm2 * b.value, method, eps_applied, b.note);
}

}  // namespace

std::string to_string(CribMethod m) {
    switch (m) {
        case CribMethod::oracle: return "oracle";
        case CribMethod::general: return "general";
        case CribMethod::fast: return "fast";
        case CribMethod::auto_select: return "auto";
    }
    return "?";
}

std::pair<double, double> db_and_angle(double crib_linear) {
    if (crib_linear < 0) throw std::invalid_argument("crib must be nonnegative");
    double db = crib_linear == 0.0 ? std::numeric_limits<double>::infinity()
                                   : -10.0 * std::log10(crib_linear);
    double deg = std::sqrt(crib_linear) * 180.0 / std::numbers::pi;
    return {db, deg};
}

KruskalModel permute_target(const KruskalModel& model, Index mode, Index column) {
    model.validate();
    if (mode < 0 || mode >= model.order()) throw std::invalid_argument("target mode out of range");
    if (column < 0 || column >= model.rank())
        throw std::invalid_argument("target column out of range");
    std::vector<MatrixXd> f;
    f.push_back(model.factors[mode]);
    for (Index n = 0; n < model.order(); ++n)
        if (n != mode) f.push_back(model.factors[n]);
    for (auto& A : f) A.col(0).swap(A.col(column));
    return normalize(KruskalModel(std::move(f)));
}

bool grams_need_regularization(const GramCache& cache, double eps) {
    Index R = cache.rank();
    for (const auto& C : cache.C) {
        for (Index r = 0; r < R; ++r)
            for (Index s = r + 1; s < R; ++s) {
                double scale = std::sqrt(C(r, r) * C(s, s));
                double a = std::abs(C(r, s));
                if (a < eps * scale || a > (1.0 - eps) * scale) return true;
            }
    }
    return false;
}

GramCache regularize_grams(const GramCache& cache, double eps) {
    if (!(eps > 0)) throw std::invalid_argument("eps must be positive");
    GramCache out = cache;
    Index R = cache.rank();
    for (auto& C : out.C) {
        for (Index r = 0; r < R; ++r)
            for (Index s = r + 1; s < R; ++s) {
                double scale = std::sqrt(C(r, r) * C(s, s));
                double v = C(r, s);
                double sign = v >= 0.0 ? 1.0 : -1.0;  // zero moves to +eps
                double a = std::abs(v);
                if (a < eps * scale) v = sign * eps * scale;
                else if (a > (1.0 - eps) * scale) v = sign * (1.0 - eps) * scale;
                C(r, s) = C(s, r) = v;
            }
    }
    return out;
}

CribReport crib_oracle(const CribRequest& req) {
    if (!(req.sigma2 > 0)) throw std::invalid_argument("sigma2 must be positive");
    KruskalModel m = permute_target(req.model, req.target_mode, req.target_column);
    GramCache g = gram_cache(m);
    HessianBlocks h = build_hessian(g, m);
    ReducedHessian red = reduce_hessian(h, m);
    if (red.singular) return infinite_report(CribMethod::oracle, "NUMERICALLY_SINGULAR");
    Index I1 = m.dim(0);
    MatrixXd HEinv = Eigen::FullPivLU<MatrixXd>(red.HE).inverse();
    MatrixXd crlb = req.sigma2 * HEinv.topLeftCorner(I1, I1);
    VectorXd a1 = m.factors[0].col(0);
    double norm2 = a1.squaredNorm();
    MatrixXd proj = MatrixXd::Identity(I1, I1) - a1 * a1.transpose() / norm2;
    return finish_report((proj * crlb).trace() / norm2, CribMethod::oracle, false);
}

CribReport crib_general(const CribRequest& req) {
    if (!(req.sigma2 > 0)) throw std::invalid_argument("sigma2 must be positive");
    KruskalModel m = permute_target(req.model, req.target_mode, req.target_column);
    GramCache g = gram_cache(m);
    // Degenerate correlations (exact 0 or +-1) make the structured solve
    // singular even when the bound itself is finite; the eps-limit is the
    // defining value there.
    if (grams_need_regularization(g, req.epsilon))
        return crib_eps_limit(g, m.dim(0), -1.0, req.sigma2);
    BraceResult b = general_brace(g, m.dim(0));
    return report_from_brace(b, m.dim(0), req.sigma2, g.C[0](0, 0), CribMethod::general, false);
}

CribReport crib_fast(const CribRequest& req) {
    if (!(req.sigma2 > 0)) throw std::invalid_argument("sigma2 must be positive");
    KruskalModel m = permute_target(req.model, req.target_mode, req.target_column);
    GramCache g = gram_cache(m);
    bool eps_applied = grams_need_regularization(g, req.epsilon);
    if (eps_applied) g = regularize_grams(g, req.epsilon);
    BraceResult b = fast_brace(g, m.dim(0));
    return report_from_brace(b, m.dim(0), req.sigma2, g.C[0](0, 0), CribMethod::fast, eps_applied);
}

CribReport crib_auto(const CribRequest& req) {
    if (!(req.sigma2 > 0)) throw std::invalid_argument("sigma2 must be positive");
    KruskalModel m = permute_target(req.model, req.target_mode, req.target_column);
    GramCache g = gram_cache(m);
    Index R = m.rank();
    if (grams_need_regularization(g, req.epsilon))
        return crib_eps_limit(g, m.dim(0), -1.0, req.sigma2);
    bool eps_applied = false;
    double norm2 = g.C[0](0, 0);
    if (R * R <= 400) {
        BraceResult b = fast_brace(g, m.dim(0));
        if (b.ok) return report_from_brace(b, m.dim(0), req.sigma2, norm2, CribMethod::fast,
                                           eps_applied);
        BraceResult gb = general_brace(g, m.dim(0));
        gb.note = gb.note.empty() ? "fast path " + b.note + "; used general" : gb.note;
        return report_from_brace(gb, m.dim(0), req.sigma2, norm2, CribMethod::general, eps_applied);
    }
    BraceResult gb = general_brace(g, m.dim(0));
    return report_from_brace(gb, m.dim(0), req.sigma2, norm2, CribMethod::general, eps_applied);
}

CribReport compute_crib(const CribRequest& req) {
    switch (req.method) {
        case CribMethod::oracle: return crib_oracle(req);
        case CribMethod::general: return crib_general(req);
        case CribMethod::fast: return crib_fast(req);
        case CribMethod::auto_select: return crib_auto(req);
    }
    throw std::logic_error("unknown method");
}

CribReport crib_from_grams(const GramCache& grams, Index I1, double norm_a1, double sigma2,
                           CribMethod method) {
    if (!(sigma2 > 0)) throw std::invalid_argument("sigma2 must be positive");
    GramCache g = normalize_grams(grams);
    double norm2 = norm_a1 > 0 ? norm_a1 * norm_a1 : g.C[0](0, 0);
    BraceResult b = method == CribMethod::fast ? fast_brace(g, I1) : general_brace(g, I1);
    return report_from_brace(b, I1, sigma2, norm2,
                             method == CribMethod::fast ? CribMethod::fast : CribMethod::general,
                             false);
}

CribReport crib_eps_limit(const GramCache& grams, Index I1, double norm_a1, double sigma2) {
    // The regularized bound is linear in eps near zero, but the evaluations
    // degrade once the clamped grams approach the degenerate point (the
    // solves become ill-conditioned; eventually they are flagged singular).
    // Walk a descending grid, form the linear extrapolant of each adjacent
    // pair, and keep the pair whose extrapolant agrees best with its
    // predecessor -- that is where truncation error and roundoff balance.
    const double eps_grid[] = {1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5, 3e-6, 1e-6};
    GramCache g = normalize_grams(grams);
    std::vector<std::pair<double, double>> pts;  // (eps, crib)
    CribReport last;
    for (double eps : eps_grid) {
        CribReport r = crib_from_grams(regularize_grams(g, eps), I1, norm_a1, sigma2);
        last = r;
        if (r.finite) pts.emplace_back(eps, r.crib);
        else if (!pts.empty()) break;  // smaller eps only gets worse
    }
    if (pts.empty()) {
        last.epsilon_applied = true;
        return last;
    }
    if (pts.size() == 1)
        return finish_report(pts[0].second, CribMethod::general, true, "eps-limit (single point)");
    std::vector<double> extrap;
    if (pts.size() == 2) {
        auto [eb, fb] = pts[0];
        auto [es, fs] = pts[1];
        extrap.push_back(fs - (fb - fs) * es / (eb - es));
    } else {
        // Quadratic (Lagrange) extrapolation to eps = 0 through each
        // consecutive triple; this cancels the curvature that a linear fit
        // from large eps would leave behind.
        for (size_t i = 2; i < pts.size(); ++i) {
            double val = 0.0;
            for (size_t a = i - 2; a <= i; ++a) {
                double w = 1.0;
                for (size_t b = i - 2; b <= i; ++b)
                    if (b != a) w *= -pts[b].first / (pts[a].first - pts[b].first);
                val += w * pts[a].second;
            }
            extrap.push_back(val);
        }
    }
    // Score each extrapolant by its agreement with its neighbours: small
    // differences on both sides mean truncation error has died out and
    // roundoff has not yet taken over.  Endpoints only see one neighbour, so
    // they carry a penalty factor.
    size_t best = extrap.size() - 1;
    if (extrap.size() > 1) {
        double bestu = std::numeric_limits<double>::infinity();
        for (size_t k = 0; k < extrap.size(); ++k) {
            double u;
            if (k == 0) u = 2.0 * std::abs(extrap[1] - extrap[0]);
            else if (k + 1 == extrap.size()) u = 2.0 * std::abs(extrap[k] - extrap[k - 1]);
            else u = std::max(std::abs(extrap[k] - extrap[k - 1]),
                              std::abs(extrap[k + 1] - extrap[k]));
            if (u < bestu) { bestu = u; best = k; }
        }
    }
    double f0 = std::max(extrap[best], 0.0);
    return finish_report(f0, CribMethod::general, true, "eps-limit");
}

CribReport crib_masked(const KruskalModel& model, const DenseTensor& mask, Index target_mode,
                       Index target_column, double sigma2) {
    if (!(sigma2 > 0)) throw std::invalid_argument("sigma2 must be positive");
    KruskalModel m = permute_target(model, target_mode, target_column);
    std::vector<Index> perm;
    perm.push_back(target_mode);
    for (Index n = 0; n < model.order(); ++n)
        if (n != target_mode) perm.push_back(n);
    DenseTensor w = permute_modes(mask, perm);
    MaskedHessian mh = masked_hessian(m, w);
    ReducedHessian red = reduce_hessian(mh.H, m);
    if (red.singular) return infinite_report(CribMethod::oracle, "NUMERICALLY_SINGULAR");
    Index I1 = m.dim(0);
    MatrixXd HEinv = Eigen::FullPivLU<MatrixXd>(red.HE).inverse();
    MatrixXd crlb = sigma2 * HEinv.topLeftCorner(I1, I1);
    VectorXd a1 = m.factors[0].col(0);
    double norm2 = a1.squaredNorm();
    MatrixXd proj = MatrixXd::Identity(I1, I1) - a1 * a1.transpose() / norm2;
    return finish_report((proj * crlb).trace() / norm2, CribMethod::oracle, false);
}

std::vector<std::vector<CribReport>> crib_all_columns(const KruskalModel& model, double sigma2,
                                                      CribMethod method) {
    std::vector<std::vector<CribReport>> out(model.order());
    for (Index n = 0; n < model.order(); ++n) {
        out[n].resize(model.rank());
        for (Index r = 0; r < model.rank(); ++r) {
            CribRequest req{model, n, r, sigma2, method};
            out[n][r] = compute_crib(req);
        }
    }
    return out;
}

}  // namespace cpcrib
