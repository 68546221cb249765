#include "cpcrib/solver.hpp"

#include <cmath>
#include <random>

#include "cpcrib/hessian.hpp"

namespace cpcrib {

namespace {

VectorXd stack_params(const KruskalModel& m) {
    Index T = 0;
    for (const auto& A : m.factors) T += A.size();
    VectorXd theta(T);
    Index off = 0;
    for (const auto& A : m.factors) {
        theta.segment(off, A.size()) = Eigen::Map<const VectorXd>(A.data(), A.size());
        off += A.size();
    }
    return theta;
}

KruskalModel unstack_params(const VectorXd& theta, const KruskalModel& shape) {
    KruskalModel m = shape;
    Index off = 0;
    for (auto& A : m.factors) {
        A = Eigen::Map<const MatrixXd>(theta.data() + off, A.rows(), A.cols());
        off += A.size();
    }
    return m;
}

// J^T e stacked per mode (MTTKRP on the residual tensor).
VectorXd gradient(const KruskalModel& m, const DenseTensor& resid) {
    VectorXd g(stack_params(m).size());
    Index off = 0;
    for (Index n = 0; n < m.order(); ++n) {
        MatrixXd G = unfold(resid, n) * khatri_rao_except(m, n);
        g.segment(off, G.size()) = Eigen::Map<const VectorXd>(G.data(), G.size());
        off += G.size();
    }
    return g;
}

DenseTensor residual_tensor(const DenseTensor& data, const KruskalModel& m,
                            const DenseTensor* mask) {
    DenseTensor r = data;
    r.values -= full_tensor(m).values;
    if (mask) r.values = r.values.cwiseProduct(mask->values);
    return r;
}

double observed_count(const DenseTensor& data, const DenseTensor* mask) {
    return mask ? mask->values.sum() : static_cast<double>(data.size());
}

double observed_norm(const DenseTensor& data, const DenseTensor* mask) {
    if (!mask) return data.values.norm();
    return data.values.cwiseProduct(mask->values).norm();
}

struct RunResult {
    KruskalModel model;
    double resid = std::numeric_limits<double>::infinity();
    int iters = 0;
    bool converged = false;
    bool singular_step = false;
};

RunResult run_gn(const DenseTensor& data, const DenseTensor* mask, KruskalModel m,
                 const SolverConfig& cfg) {
    RunResult out;
    double ynorm = observed_norm(data, mask);
    if (ynorm == 0.0) ynorm = 1.0;
    DenseTensor resid = residual_tensor(data, m, mask);
    double res = resid.values.norm();
    double mu = -1.0, mu0 = 0.0;
    int it = 0;
    for (; it < cfg.max_iters; ++it) {
        MatrixXd H = mask ? masked_hessian(m, *mask).H
                          : build_hessian(gram_cache(m), m).H;
        if (mu < 0.0) {
            mu0 = cfg.mu0_scale * H.diagonal().mean();
            if (!(mu0 > 0.0)) mu0 = cfg.mu0_scale;
            mu = mu0;
        }
        VectorXd g = gradient(m, resid);
        VectorXd theta = stack_params(m);
        bool accepted = false;
        while (mu <= 1e6 * mu0) {
            MatrixXd Hd = H;
            Hd.diagonal().array() += mu;
            Eigen::LDLT<MatrixXd> ldlt(Hd);
            VectorXd step = ldlt.solve(g);
            if (!step.allFinite()) {
                mu *= cfg.mu_increase;
                continue;
            }
            KruskalModel cand = unstack_params(theta + step, m);
            DenseTensor cand_resid = residual_tensor(data, cand, mask);
            double cand_res = cand_resid.values.norm();
            if (cand_res <= res) {
                m = std::move(cand);
                resid = std::move(cand_resid);
                double delta = (res - cand_res) / ynorm;
                res = cand_res;
                mu = std::max(mu * cfg.mu_decrease, 1e-12 * mu0);
                accepted = true;
                if (delta < cfg.rel_fit_tol || res < 1e-14 * ynorm) out.converged = true;
                break;
            }
            mu *= cfg.mu_increase;
        }
        if (!accepted) {
            out.singular_step = mu > 1e6 * mu0;
            break;
        }
        if (out.converged) { ++it; break; }
    }
    out.model = std::move(m);
    out.resid = res;
    out.iters = it;
    return out;
}

RunResult run_als(const DenseTensor& data, const DenseTensor* mask, KruskalModel m,
                  const SolverConfig& cfg) {
    RunResult out;
    Index N = m.order(), R = m.rank();
    double ynorm = observed_norm(data, mask);
    if (ynorm == 0.0) ynorm = 1.0;
    double res = residual_tensor(data, m, mask).values.norm();
    int it = 0;
    for (; it < cfg.max_iters; ++it) {
        for (Index n = 0; n < N; ++n) {
            MatrixXd Z = khatri_rao_except(m, n);
            MatrixXd Yn = unfold(data, n);
            if (!mask) {
                MatrixXd G = Z.transpose() * Z;
                m.factors[n] = (Eigen::FullPivLU<MatrixXd>(G).solve(Z.transpose() * Yn.transpose()))
                                   .transpose();
            } else {
                MatrixXd Wn = unfold(*mask, n);
                for (Index i = 0; i < m.dim(n); ++i) {
                    VectorXd w = Wn.row(i).transpose();
                    MatrixXd Zw = Z.array().colwise() * w.array();
                    MatrixXd G = Zw.transpose() * Z;
                    VectorXd rhs = Zw.transpose() * Yn.row(i).transpose();
                    m.factors[n].row(i) = Eigen::FullPivLU<MatrixXd>(G).solve(rhs).transpose();
                }
            }
        }
        double new_res = residual_tensor(data, m, mask).values.norm();
        double delta = std::abs(res - new_res) / ynorm;
        res = new_res;
        if (delta < cfg.rel_fit_tol || res < 1e-14 * ynorm) {
            out.converged = true;
            ++it;
            break;
        }
    }
    (void)R;
    out.model = std::move(m);
    out.resid = res;
    out.iters = it;
    return out;
}

template <typename Runner>
FitResult multi_start(const DenseTensor& data, Index rank, const SolverConfig& cfg,
                      const DenseTensor* mask, Runner runner) {
    if (rank < 1) throw std::invalid_argument("rank must be >= 1");
    if (mask) {
        if (mask->dims != data.dims) throw std::invalid_argument("mask dims must match tensor");
        if (!mask->is_binary()) throw std::invalid_argument("mask entries must be 0 or 1");
    }
    int starts = cfg.init ? 1 : std::max(1, cfg.num_starts);
    RunResult best;
    for (int s = 0; s < starts; ++s) {
        KruskalModel m0 = cfg.init ? *cfg.init
                                   : random_model(data.dims, rank, cfg.seed + 1000003ull * s);
        RunResult r = runner(data, mask, std::move(m0), cfg);
        if (r.resid < best.resid) best = std::move(r);
    }
    FitResult out;
    out.model = normalize(best.model);
    out.residual_norm = best.resid;
    double ynorm = observed_norm(data, mask);
    out.rel_residual = ynorm > 0 ? best.resid / ynorm : best.resid;
    out.iterations = best.iters;
    out.converged = best.converged;
    out.singular_step = best.singular_step;
    out.sigma2_est = best.resid * best.resid / observed_count(data, mask);
    return out;
}

}  // namespace

FitResult fit_gn(const DenseTensor& tensor, Index rank, const SolverConfig& cfg,
                 const DenseTensor* mask) {
    return multi_start(tensor, rank, cfg, mask, run_gn);
}

FitResult fit_als(const DenseTensor& tensor, Index rank, const SolverConfig& cfg,
                  const DenseTensor* mask) {
    return multi_start(tensor, rank, cfg, mask, run_als);
}

KruskalModel random_model(const std::vector<Index>& dims, Index rank, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<MatrixXd> f;
    for (Index d : dims) {
        MatrixXd A(d, rank);
        for (Index j = 0; j < rank; ++j)
            for (Index i = 0; i < d; ++i) A(i, j) = gauss(rng);
        f.push_back(std::move(A));
    }
    return normalize(KruskalModel(std::move(f)));
}

KruskalModel align(const KruskalModel& estimate, const KruskalModel& truth) {
    estimate.validate();
    truth.validate();
    if (estimate.dims() != truth.dims() || estimate.rank() != truth.rank())
        throw std::invalid_argument("align: models must share dims and rank");
    Index N = truth.order(), R = truth.rank();
    MatrixXd score = MatrixXd::Ones(R, R);  // score(r, s): truth col r vs estimate col s
    for (Index n = 0; n < N; ++n)
        for (Index r = 0; r < R; ++r)
            for (Index s = 0; s < R; ++s) {
                const auto& t = truth.factors[n].col(r);
                const auto& e = estimate.factors[n].col(s);
                score(r, s) *= std::abs(t.dot(e)) / (t.norm() * e.norm());
            }
    std::vector<Index> perm(R, -1);
    std::vector<bool> used_r(R, false), used_s(R, false);
    for (Index k = 0; k < R; ++k) {
        double bestv = -1.0;
        Index br = 0, bs = 0;
        for (Index r = 0; r < R; ++r) {
            if (used_r[r]) continue;
            for (Index s = 0; s < R; ++s) {
                if (used_s[s]) continue;
                if (score(r, s) > bestv) { bestv = score(r, s); br = r; bs = s; }
            }
        }
        perm[br] = bs;
        used_r[br] = used_s[bs] = true;
    }
    KruskalModel out = estimate;
    for (Index n = 0; n < N; ++n)
        for (Index r = 0; r < R; ++r) out.factors[n].col(r) = estimate.factors[n].col(perm[r]);
    return normalize(out);
}

AngularError angular_errors(const KruskalModel& aligned, const KruskalModel& truth) {
    Index N = truth.order(), R = truth.rank();
    AngularError out;
    out.angles.resize(N, R);
    out.dsr.resize(N, R);
    for (Index n = 0; n < N; ++n)
        for (Index r = 0; r < R; ++r) {
            const auto& t = truth.factors[n].col(r);
            const auto& e = aligned.factors[n].col(r);
            double tn = t.norm(), en = e.norm();
            if (tn == 0.0 || en == 0.0) throw std::invalid_argument("zero-norm factor column");
            double c = std::clamp(std::abs(t.dot(e)) / (tn * en), 0.0, 1.0);
            out.angles(n, r) = std::acos(c);
            out.dsr(n, r) = c > 0 ? (1.0 - c * c) / (c * c)
                                  : std::numeric_limits<double>::infinity();
        }
    return out;
}

}  // namespace cpcrib
