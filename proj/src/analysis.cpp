#include "cpcrib/analysis.hpp"

#include "cpcrib/closed_forms.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

namespace cpcrib {

namespace {

int worker_count(int trials) {
    unsigned hw = std::thread::hardware_concurrency();
    int n = hw ? static_cast<int>(hw) : 1;
    if (const char* env = std::getenv("CPD_CRIB_THREADS")) {
        int cap = std::atoi(env);
        if (cap >= 1) n = cap;
    }
    return std::min(n, trials);
}

struct TrialOutcome {
    bool ok = false;
    MatrixXd sq_angles;
};

TrialOutcome run_trial(const McConfig& cfg, const DenseTensor& clean, const DenseTensor& mask,
                       bool masked, std::uint64_t trial_seed) {
    std::mt19937_64 rng(trial_seed);
    std::normal_distribution<double> gauss(0.0, std::sqrt(cfg.sigma2));
    DenseTensor noisy = clean;
    for (Index i = 0; i < noisy.size(); ++i) noisy.values[i] += gauss(rng);

    SolverConfig scfg = cfg.solver;
    scfg.seed = trial_seed ^ 0x9e3779b97f4a7c15ull;
    FitResult fit = fit_gn(noisy, cfg.model.rank(), scfg, masked ? &mask : nullptr);

    TrialOutcome out;
    // A healthy ML fit lands at (or slightly below) the noise floor; a local
    // minimum sits far above it. Both converged and non-converged fits are
    // screened this way.
    double nobs = masked ? mask.values.sum() : static_cast<double>(noisy.size());
    double ynorm = masked ? noisy.values.cwiseProduct(mask.values).norm() : noisy.values.norm();
    double floor_rel = ynorm > 0 ? std::sqrt(cfg.sigma2 * nobs) / ynorm : 0.0;
    if (fit.rel_residual > 3.0 * floor_rel + 1e-12) return out;
    KruskalModel aligned = align(fit.model, cfg.model);
    AngularError err = angular_errors(aligned, cfg.model);
    // Mis-aligned trial: some matched pair is nowhere near its target.
    for (Index n = 0; n < err.angles.rows(); ++n)
        for (Index r = 0; r < err.angles.cols(); ++r)
            if (std::cos(err.angles(n, r)) < 0.5) return out;
    out.ok = true;
    out.sq_angles = err.angles.array().square();
    return out;
}

}  // namespace

double sigma2_for_snr_db(const KruskalModel& model, double snr_db) {
    DenseTensor y = full_tensor(model);
    double power = y.values.squaredNorm() / static_cast<double>(y.size());
    return power / std::pow(10.0, snr_db / 10.0);
}

DenseTensor random_mask(const std::vector<Index>& dims, double missing_rate, std::uint64_t seed) {
    if (missing_rate < 0.0 || missing_rate >= 1.0)
        throw std::invalid_argument("missing rate must lie in [0, 1)");
    DenseTensor w(dims);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (Index i = 0; i < w.size(); ++i) w.values[i] = u(rng) < missing_rate ? 0.0 : 1.0;
    return w;
}

McResult monte_carlo(const McConfig& cfg) {
    cfg.model.validate();
    if (cfg.trials < 1) throw std::invalid_argument("trials must be >= 1");
    KruskalModel truth = normalize(cfg.model);
    DenseTensor clean = full_tensor(truth);
    Index N = truth.order(), R = truth.rank();

    bool masked = cfg.missing_rate.has_value() && *cfg.missing_rate > 0.0;
    DenseTensor mask = masked ? random_mask(truth.dims(), *cfg.missing_rate, cfg.seed ^ 0xabcdefull)
                              : DenseTensor(truth.dims(), VectorXd::Ones(clean.size()));

    McResult res;
    res.mask = mask;
    res.crib.resize(N, R);
    for (Index n = 0; n < N; ++n)
        for (Index r = 0; r < R; ++r) {
            CribReport rep;
            if (masked) rep = crib_masked(truth, mask, n, r, cfg.sigma2);
            else rep = crib_auto(CribRequest{truth, n, r, cfg.sigma2});
            res.crib(n, r) = rep.crib;
        }

    std::vector<TrialOutcome> outcomes(cfg.trials);
    McConfig local = cfg;
    local.model = truth;
    auto body = [&](int t) {
        // Per-trial seed from the master seed so results do not depend on
        // worker scheduling.
        outcomes[t] = run_trial(local, clean, mask, masked, cfg.seed + static_cast<std::uint64_t>(t));
    };
    int workers = worker_count(cfg.trials);
    if (workers <= 1) {
        for (int t = 0; t < cfg.trials; ++t) body(t);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                int t;
                while ((t = next.fetch_add(1)) < cfg.trials) body(t);
            });
        for (auto& th : pool) th.join();
    }

    MatrixXd acc = MatrixXd::Zero(N, R);
    for (const auto& o : outcomes) {
        if (!o.ok) { ++res.failures; continue; }
        acc += o.sq_angles;
        ++res.trials_used;
    }
    if (res.trials_used == 0) throw std::runtime_error("ALL_TRIALS_FAILED");
    res.msae = acc / static_cast<double>(res.trials_used);
    res.msae_db = (-10.0 * res.msae.array().log10()).matrix();
    res.crib_db = (-10.0 * res.crib.array().log10()).matrix();
    return res;
}

namespace {

// Rank-2 models go through the closed form, which resolves the degenerate
// correlation cases (0, +-1) exactly; other ranks use the engine, whose
// auto path falls back to the eps-limit on degenerate grams.
CribReport crib_first_column(const KruskalModel& model) {
    if (model.rank() == 2) {
        KruskalModel m = permute_target(model, 0, 0);
        GramCache g = gram_cache(m);
        Rank2Params p;
        p.I1 = m.dim(0);
        p.sigma2 = 1.0;
        p.norm_a1 = std::sqrt(g.C[0](0, 0));
        for (Index n = 0; n < m.order(); ++n) {
            const MatrixXd& C = g.C[n];
            double c = C(0, 1) / std::sqrt(C(0, 0) * C(1, 1));
            p.c.push_back(std::clamp(c, -1.0, 1.0));
        }
        double v = crib_rank2(p);
        CribReport rep;
        rep.finite = std::isfinite(v);
        rep.crib = v;
        auto [db, deg] = db_and_angle(rep.finite ? v : std::numeric_limits<double>::infinity());
        rep.crib_db = db;
        rep.angle_deg = deg;
        rep.method = CribMethod::general;
        rep.note = "rank-2 closed form";
        return rep;
    }
    return crib_auto(CribRequest{model, 0, 0, 1.0});
}

}  // namespace

ReshapeLoss reshape_loss(const KruskalModel& model, const std::vector<Index>& merge) {
    ReshapeLoss out;
    out.original = crib_first_column(model);
    out.reshaped = crib_first_column(reshape_merge(model, merge));
    out.loss_db = out.original.crib_db - out.reshaped.crib_db;
    return out;
}

Index max_stable_rank_bound(const std::vector<Index>& dims) {
    if (dims.size() < 3) throw std::invalid_argument("order must be >= 3");
    Index prod = 1, sum = 0;
    for (Index d : dims) {
        prod *= d;
        sum += d;
    }
    return prod / (sum - static_cast<Index>(dims.size()) + 1);
}

StabilityCheck check_stability(const std::vector<Index>& dims, Index rank, std::uint64_t seed) {
    KruskalModel m = random_model(dims, rank, seed);
    StabilityCheck out;
    out.report = crib_oracle(CribRequest{m, 0, 0, 1.0, CribMethod::oracle});
    out.finite = out.report.finite;
    return out;
}

bool uniqueness_necessary(const KruskalModel& model) {
    GramCache g = gram_cache(model);
    for (Index n = 0; n < model.order(); ++n) {
        Eigen::JacobiSVD<MatrixXd> svd(g.gamma_diag(n));
        const auto& sv = svd.singularValues();
        if (sv.size() == 0 || sv(sv.size() - 1) < 1e-10 * sv(0)) return false;
    }
    return true;
}

KruskalModel model_with_correlations(const std::vector<Index>& dims, Index rank,
                                     const std::vector<double>& c, std::uint64_t seed) {
    if (c.size() != dims.size()) throw std::invalid_argument("one correlation per mode required");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<MatrixXd> factors;
    for (size_t n = 0; n < dims.size(); ++n) {
        Index In = dims[n];
        if (In < rank) throw std::invalid_argument("need I_n >= R for prescribed correlations");
        MatrixXd C = MatrixXd::Constant(rank, rank, c[n]);
        C.diagonal().setOnes();
        // Semidefinite square root so |c| = 1 (repeated columns) works too.
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(C);
        if (eig.eigenvalues().minCoeff() < -1e-10)
            throw std::invalid_argument("correlation target is not positive semidefinite");
        MatrixXd L = eig.eigenvectors() *
                     eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
        // A_n = Q * L^T with Q orthonormal gives A_n^T A_n = C exactly.
        MatrixXd Gm(In, rank);
        for (Index i = 0; i < In; ++i)
            for (Index j = 0; j < rank; ++j) Gm(i, j) = gauss(rng);
        Eigen::HouseholderQR<MatrixXd> qr(Gm);
        MatrixXd Q = qr.householderQ() * MatrixXd::Identity(In, rank);
        factors.push_back(Q * L.transpose());
    }
    // Columns are unit-norm by construction; skip the sign convention so the
    // prescribed correlation signs survive.
    return KruskalModel(std::move(factors));
}

}  // namespace cpcrib
