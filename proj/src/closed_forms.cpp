#include "cpcrib/closed_forms.hpp"

#include <cmath>

#include "cpcrib/crib.hpp"

namespace cpcrib {

namespace {

void check_rank2(const Rank2Params& p) {
    if (p.c.size() < 3) throw std::invalid_argument("rank-2 scenario needs N >= 3 correlations");
    for (double cn : p.c)
        if (std::abs(cn) > 1.0) throw std::invalid_argument("|c_n| must be <= 1");
    if (!(p.sigma2 > 0) || !(p.norm_a1 > 0)) throw std::invalid_argument("positive sigma2/norm required");
}

double prefactor(double sigma2, double norm_a1) { return sigma2 / (norm_a1 * norm_a1); }

// h_n = prod of c_k over k = 2..N, k != n.
double h_of(const std::vector<double>& c, size_t n1based) {
    double h = 1.0;
    for (size_t k = 2; k <= c.size(); ++k)
        if (k != n1based) h *= c[k - 1];
    return h;
}

}  // namespace

double crib_rank1(Index I1, double sigma2, double norm_a1) {
    if (I1 < 1) throw std::invalid_argument("I1 must be >= 1");
    return prefactor(sigma2, norm_a1) * static_cast<double>(I1 - 1);
}

GramCache rank2_grams(const Rank2Params& p) {
    check_rank2(p);
    GramCache g;
    double nrm = p.norm_a1;
    MatrixXd C1(2, 2);
    C1 << nrm * nrm, p.c[0] * nrm, p.c[0] * nrm, 1.0;
    g.C.push_back(C1);
    for (size_t n = 2; n <= p.c.size(); ++n) {
        MatrixXd C(2, 2);
        C << 1.0, p.c[n - 1], p.c[n - 1], 1.0;
        g.C.push_back(C);
    }
    return g;
}

double crib_rank2(const Rank2Params& p) {
    check_rank2(p);
    size_t N = p.c.size();
    double c1 = p.c[0];
    double h1 = h_of(p.c, 1);
    if (std::abs(1.0 - h1 * h1) < 1e-300) return std::numeric_limits<double>::infinity();

    // Mode 1 orthogonal together with another orthogonal mode reduces to the
    // two-orthogonal-matrices form: gamma = product of the remaining
    // correlations. Exact, where the general formula would hit 0/0.
    if (std::abs(c1) <= 1e-14) {
        for (size_t n = 2; n <= N; ++n) {
            if (std::abs(p.c[n - 1]) > 1e-14) continue;
            double gamma = h_of(p.c, n);
            if (std::abs(gamma) < 1.0 - 1e-12)
                return prefactor(p.sigma2, p.norm_a1) *
                       ((p.I1 - 1) + gamma * gamma / (1.0 - gamma * gamma));
            return std::numeric_limits<double>::infinity();
        }
    }

    // |c_1| = 1 annihilates the numerator while the denominator can also
    // vanish; the limit is given by the dedicated case formulas.
    if (std::abs(std::abs(c1) - 1.0) <= 1e-12) {
        if (N == 4) return crib_rank2_n4_colinear(p);
        if (N == 3) return crib_rank2_n3(p);  // the N = 3 bound does not involve c_1
        return crib_eps_limit(rank2_grams(p), p.I1, p.norm_a1, p.sigma2).crib;
    }

    bool near_singular = false;
    for (size_t n = 2; n <= N; ++n) {
        double hn = h_of(p.c, n);
        double den = p.c[n - 1] * p.c[n - 1] - hn * hn * c1 * c1;
        if (std::abs(den) < 1e-12) near_singular = true;
    }
    if (near_singular)
        return crib_eps_limit(rank2_grams(p), p.I1, p.norm_a1, p.sigma2).crib;

    double y = 0.0, z = 0.0;
    for (size_t n = 2; n <= N; ++n) {
        double cn = p.c[n - 1];
        double hn = h_of(p.c, n);
        double den = cn * cn - hn * hn * c1 * c1;
        y += hn * hn * (1.0 - cn * cn) / den;
        z += (1.0 - cn * cn) / den;
    }
    y *= -c1;
    double num = (1.0 - c1 * c1) * h1 * h1 * (y * y + z - h1 * h1 * z * (z + 1.0));
    double d1 = 1.0 - c1 * y - h1 * h1 * (z + 1.0);
    double d2 = y + c1 * z;
    double den = d1 * d1 - h1 * h1 * d2 * d2;
    double bracket = (p.I1 - 1) + num / den;
    if (!std::isfinite(bracket) || std::abs(den) < 1e-12)
        return crib_eps_limit(rank2_grams(p), p.I1, p.norm_a1, p.sigma2).crib;
    return prefactor(p.sigma2, p.norm_a1) * bracket / (1.0 - h1 * h1);
}

double crib_rank2_n3(const Rank2Params& p) {
    check_rank2(p);
    if (p.c.size() != 3) throw std::invalid_argument("N = 3 specialization");
    double c2 = p.c[1], c3 = p.c[2], h1 = c2 * c3;
    double bracket = (p.I1 - 1) + c2 * c2 / (1.0 - c2 * c2) + c3 * c3 / (1.0 - c3 * c3);
    return prefactor(p.sigma2, p.norm_a1) * bracket / (1.0 - h1 * h1);
}

double crib_rank2_n4_c1zero(const Rank2Params& p) {
    check_rank2(p);
    if (p.c.size() != 4) throw std::invalid_argument("N = 4 specialization");
    double c2 = p.c[1] * p.c[1], c3 = p.c[2] * p.c[2], c4 = p.c[3] * p.c[3];
    double h1 = p.c[1] * p.c[2] * p.c[3];
    double num = c2 * c3 + c2 * c4 + c3 * c4 - 3.0 * c2 * c3 * c4;
    double den = 2.0 * c2 * c3 * c4 - c2 * c3 - c2 * c4 - c3 * c4 + 1.0;
    double bracket = (p.I1 - 1) + num / den;
    return prefactor(p.sigma2, p.norm_a1) * bracket / (1.0 - h1 * h1);
}

double crib_rank2_c1zero(const Rank2Params& p) {
    check_rank2(p);
    double h1 = h_of(p.c, 1);
    double z = 0.0;
    for (size_t n = 2; n <= p.c.size(); ++n) {
        double cn = p.c[n - 1];
        z += (1.0 - cn * cn) / (cn * cn);
    }
    double bracket = (p.I1 - 1) + h1 * h1 * z / (1.0 - h1 * h1 * (z + 1.0));
    return prefactor(p.sigma2, p.norm_a1) * bracket / (1.0 - h1 * h1);
}

double crib_rank2_n4_colinear(const Rank2Params& p) {
    check_rank2(p);
    if (p.c.size() != 4) throw std::invalid_argument("N = 4 case");
    if (std::abs(std::abs(p.c[0]) - 1.0) > 1e-12)
        throw std::invalid_argument("requires |c_1| = 1");
    double c2 = p.c[1], c3 = p.c[2], c4 = p.c[3];
    double h1 = c2 * c3 * c4;
    double pre = prefactor(p.sigma2, p.norm_a1) / (1.0 - h1 * h1);
    auto unit = [](double c) { return std::abs(std::abs(c) - 1.0) <= 1e-12; };
    if (!unit(c2) && !unit(c3) && !unit(c4)) return pre * (p.I1 - 1);
    double a, b;
    if (unit(c4)) { a = c2; b = c3; }
    else if (unit(c3)) { a = c2; b = c4; }
    else { a = c3; b = c4; }
    double a2 = a * a, b2 = b * b;
    double extra = (a2 + b2 - 2.0 * a2 * b2) / ((1.0 - a2) * (1.0 - b2));
    return pre * ((p.I1 - 1) + extra);
}

double crib_ortho(const OrthoCaseParams& p) {
    if (!(p.sigma2 > 0) || !(p.norm_a1 > 0)) throw std::invalid_argument("positive sigma2/norm required");
    double sum = 0.0;
    for (double g : p.gammas) {
        if (std::abs(std::abs(g) - 1.0) < 1e-15) return std::numeric_limits<double>::infinity();
        if (std::abs(g) > 1.0) throw std::invalid_argument("|gamma_r| must be <= 1");
        sum += g * g / (1.0 - g * g);
    }
    return prefactor(p.sigma2, p.norm_a1) * ((p.I1 - 1) + sum);
}

double brie_crib(const BrieParams& p) {
    double c2 = p.c2 * p.c2, c3 = p.c3 * p.c3, c4 = p.c4 * p.c4;
    if (std::abs(p.c2) >= 1.0 || std::abs(p.c3) >= 1.0 || std::abs(p.c4) >= 1.0)
        throw std::invalid_argument("correlations must lie in (-1, 1)");
    double den = 2.0 * c2 * c3 * c4 - c2 * c3 - c2 * c4 - c3 * c4 + 1.0;
    if (std::abs(den) < 1e-300) return std::numeric_limits<double>::infinity();
    double bracket = (p.I1 - 1) * (1.0 - c2 * c3)
                     - (c3 * c3 * (c2 + 1.0) - 3.0 * c3 + 1.0) / (1.0 - c3)
                     - (c2 * c2 * (c3 + 1.0) - 3.0 * c2 + 1.0) / (1.0 - c2)
                     + (2.0 - c2 - c3) / (1.0 - c4);
    return prefactor(p.sigma2, p.norm_a1) * bracket / den;
}

GramCache brie_grams(const BrieParams& p) {
    GramCache g;
    MatrixXd C1 = MatrixXd::Identity(3, 3);
    C1(0, 0) = p.norm_a1 * p.norm_a1;
    MatrixXd C2(3, 3), C3(3, 3), C4(3, 3);
    C2 << 1, 1, p.c2, 1, 1, p.c2, p.c2, p.c2, 1;
    C3 << 1, p.c3, 1, p.c3, 1, p.c3, 1, p.c3, 1;
    C4 << 1, p.c4, p.c4, p.c4, 1, 1, p.c4, 1, 1;
    g.C = {C1, C2, C3, C4};
    return g;
}

}  // namespace cpcrib
