#include <doctest.h>

#include <cmath>
#include <random>

#include "cpcrib/analysis.hpp"
#include "cpcrib/closed_forms.hpp"
#include "cpcrib/crib.hpp"
#include "cpcrib/solver.hpp"

using namespace cpcrib;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST_CASE("db_and_angle reference conversions") {
    auto [db0, deg0] = db_and_angle(1.0);
    CHECK(db0 == doctest::Approx(0.0));
    CHECK(deg0 == doctest::Approx(57.29577951).epsilon(1e-8));
    auto [db50, deg50] = db_and_angle(1e-5);  // 50 dB
    CHECK(db50 == doctest::Approx(50.0));
    CHECK(deg50 == doctest::Approx(0.1811856).epsilon(1e-5));
    auto [db20, deg20] = db_and_angle(1e-2);  // 20 dB
    CHECK(db20 == doctest::Approx(20.0));
    CHECK(deg20 == doctest::Approx(5.7295780).epsilon(1e-6));
    auto [dbz, degz] = db_and_angle(0.0);
    CHECK(std::isinf(dbz));
    CHECK(degz == 0.0);
}

TEST_CASE("three computation paths agree on random well-conditioned models") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> uN(3, 5), uR(1, 3), uI(2, 5);
    int done = 0;
    for (int t = 0; done < 25 && t < 60; ++t) {
        Index N = uN(rng), R = uR(rng);
        std::vector<Index> dims;
        for (Index n = 0; n < N; ++n) dims.push_back(std::max<Index>(uI(rng), R));
        KruskalModel m = random_model(dims, R, 900 + t);
        CribRequest rq{m, 0, 0, 1.0};
        CribReport o = crib_oracle(rq);
        if (!o.finite) continue;
        CribReport g = crib_general(rq), f = crib_fast(rq), a = crib_auto(rq);
        CHECK(rel(g.crib, o.crib) < 1e-7);
        CHECK(rel(f.crib, o.crib) < 1e-7);
        CHECK(rel(a.crib, o.crib) < 1e-7);
        ++done;
    }
    CHECK(done == 25);
}

TEST_CASE("gram sufficiency: crib_from_grams equals crib_general on the model") {
    for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
        KruskalModel m = random_model({4, 3, 3}, 2, seed);
        CribReport g = crib_general(CribRequest{m, 0, 0, 1.0});
        CribReport fg = crib_from_grams(gram_cache(m), m.dim(0), -1.0, 1.0);
        CHECK(rel(fg.crib, g.crib) < 1e-12);
    }
}

TEST_CASE("invariances: column rescale, sigma^2 linearity, norm scaling") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> ul(0.2, 5.0);
    for (std::uint64_t seed : {31u, 32u, 33u}) {
        KruskalModel m = random_model({4, 3, 3, 2}, 3, seed);
        double base = crib_auto(CribRequest{m, 0, 0, 1.0}).crib;

        // rescaling columns 2..R of A_1 does not move the bound for column 1
        KruskalModel ms = m;
        for (Index r = 1; r < m.rank(); ++r) ms.factors[0].col(r) *= ul(rng);
        CHECK(rel(crib_auto(CribRequest{ms, 0, 0, 1.0}).crib, base) < 1e-10);

        // linear in sigma^2
        double k = ul(rng);
        CHECK(rel(crib_auto(CribRequest{m, 0, 0, k}).crib, k * base) < 1e-12);

        // scaling the target column divides the bound by lambda^2
        double lam = ul(rng);
        KruskalModel mt = m;
        mt.factors[0].col(0) *= lam;
        CHECK(rel(crib_auto(CribRequest{mt, 0, 0, 1.0}).crib, base / (lam * lam)) < 1e-10);
    }
}

TEST_CASE("permutation covariance: target (n, r) equals (0, 0) on the permuted model") {
    KruskalModel m = random_model({3, 4, 2, 3}, 3, 77);
    for (Index n = 0; n < m.order(); ++n)
        for (Index r = 0; r < m.rank(); ++r) {
            CribReport direct = crib_auto(CribRequest{m, n, r, 1.0});
            KruskalModel p = permute_target(m, n, r);
            CribReport via = crib_auto(CribRequest{p, 0, 0, 1.0});
            CHECK(rel(direct.crib, via.crib) < 1e-10);
        }
}

TEST_CASE("regularize_grams clamps off-diagonal correlations into [eps, 1-eps]") {
    GramCache g;
    MatrixXd C1(2, 2), C2(2, 2), C3(2, 2);
    C1 << 4.0, 0.0, 0.0, 1.0;        // zero correlation, scaled diagonal
    C2 << 1.0, 1.0, 1.0, 1.0;        // repeated column
    C3 << 1.0, -0.5, -0.5, 1.0;      // untouched interior value
    g.C = {C1, C2, C3};
    double eps = 1e-3;
    CHECK(grams_need_regularization(g, eps));
    GramCache r = regularize_grams(g, eps);
    CHECK(r.C[0](0, 0) == 4.0);  // diagonal untouched
    CHECK(r.C[0](0, 1) == doctest::Approx(eps * 2.0));  // scale-aware clamp off zero
    CHECK(std::abs(r.C[1](0, 1)) == doctest::Approx(1.0 - eps));
    CHECK(r.C[2](0, 1) == doctest::Approx(-0.5));
    CHECK_FALSE(grams_need_regularization(r, eps * 0.99));
}

TEST_CASE("crib_from_grams on rank-1 grams gives (I1 - 1) sigma^2 / norm^2") {
    GramCache g;
    g.C = {MatrixXd::Constant(1, 1, 9.0), MatrixXd::Constant(1, 1, 1.0),
           MatrixXd::Constant(1, 1, 1.0)};
    CribReport r = crib_from_grams(g, 5, -1.0, 2.0);
    CHECK(r.crib == doctest::Approx(2.0 * 4.0 / 9.0).epsilon(1e-12));
}

TEST_CASE("eps-limit reproduces the closed forms at degenerate correlations") {
    // two-orthogonal-modes structure with one collinear mode
    GramCache g;
    MatrixXd I2 = MatrixXd::Identity(2, 2);
    MatrixXd Cg(2, 2);
    Cg << 1, 0.5, 0.5, 1;
    g.C = {I2, I2, Cg, MatrixXd::Ones(2, 2)};
    CribReport lim = crib_eps_limit(g, 4, 1.0, 1.0);
    OrthoCaseParams op{4, {0.5}, 1.0, 1.0};
    CHECK(rel(lim.crib, crib_ortho(op)) < 1e-6);
    CHECK(lim.epsilon_applied);

    BrieParams b{4, 0.5, 0.5, 0.5, 1.0, 1.0};
    CribReport blim = crib_eps_limit(brie_grams(b), b.I1, 1.0, 1.0);
    CHECK(rel(blim.crib, brie_crib(b)) < 1e-6);
    CHECK(brie_crib(b) == doctest::Approx(14.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("structurally unstable models report an infinite bound") {
    // rank above the stability bound for 2x2x2 (bound = 2)
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        KruskalModel m = random_model({2, 2, 2}, 3, seed);
        CribReport r = crib_oracle(CribRequest{m, 0, 0, 1.0, CribMethod::oracle});
        CHECK_FALSE(r.finite);
        CHECK(std::isinf(r.crib));
        CHECK(r.crib_db == -std::numeric_limits<double>::infinity());
    }
}

TEST_CASE("crib_masked with an all-ones mask matches the unmasked oracle") {
    KruskalModel m = random_model({3, 3, 3}, 2, 55);
    DenseTensor ones(m.dims(), VectorXd::Ones(27));
    CribReport masked = crib_masked(m, ones, 0, 0, 1.0);
    CribReport plain = crib_oracle(CribRequest{m, 0, 0, 1.0, CribMethod::oracle});
    CHECK(rel(masked.crib, plain.crib) < 1e-10);
}

TEST_CASE("crib_masked degrades the bound when entries go missing") {
    KruskalModel m = random_model({4, 4, 4}, 2, 56);
    DenseTensor mask = random_mask(m.dims(), 0.3, 99);
    CribReport masked = crib_masked(m, mask, 0, 0, 1.0);
    CribReport plain = crib_oracle(CribRequest{m, 0, 0, 1.0, CribMethod::oracle});
    CHECK(masked.crib > plain.crib);  // less data, weaker bound
}

TEST_CASE("crib_all_columns covers every mode and column") {
    KruskalModel m = random_model({3, 4, 2}, 2, 57);
    auto all = crib_all_columns(m, 1.0);
    REQUIRE(all.size() == 3);
    for (Index n = 0; n < 3; ++n) {
        REQUIRE(all[n].size() == 2);
        for (Index r = 0; r < 2; ++r) {
            CribReport direct = crib_auto(CribRequest{m, n, r, 1.0});
            CHECK(rel(all[n][r].crib, direct.crib) < 1e-10);
        }
    }
}

TEST_CASE("invalid requests are rejected") {
    KruskalModel m = random_model({3, 3, 3}, 2, 58);
    CHECK_THROWS_AS(crib_auto(CribRequest{m, 0, 0, -1.0}), std::invalid_argument);
    CHECK_THROWS_AS(crib_auto(CribRequest{m, 5, 0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(crib_auto(CribRequest{m, 0, 7, 1.0}), std::invalid_argument);
}
