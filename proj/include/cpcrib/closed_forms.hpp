#pragma once

#include <vector>

#include "cpcrib/tensor.hpp"

namespace cpcrib {

// Rank-2 scenario described by the per-mode column correlations c_1..c_N.
struct Rank2Params {
    Index I1 = 2;
    std::vector<double> c;  // c[0] = c_1, ..., c[N-1] = c_N
    double sigma2 = 1.0;
    double norm_a1 = 1.0;
};

// Two-orthogonal-factor-matrix scenario: gamma_r = prod_{n>=3} <a_1^(n), a_r^(n)>.
struct OrthoCaseParams {
    Index I1 = 2;
    std::vector<double> gammas;  // gamma_2..gamma_R
    double sigma2 = 1.0;
    double norm_a1 = 1.0;
};

struct BrieParams {
    Index I1 = 2;
    double c2 = 0.0, c3 = 0.0, c4 = 0.0;
    double sigma2 = 1.0;
    double norm_a1 = 1.0;
};

double crib_rank1(Index I1, double sigma2, double norm_a1);

// General-N rank-2 closed form; near-singular denominators are routed
// through the numeric eps-limit path.
double crib_rank2(const Rank2Params& p);

// Printed specializations, kept as independent references.
double crib_rank2_n3(const Rank2Params& p);
double crib_rank2_n4_c1zero(const Rank2Params& p);
double crib_rank2_c1zero(const Rank2Params& p);  // general N, c_1 = 0

// N = 4, |c_1| = 1 branch formulas.
double crib_rank2_n4_colinear(const Rank2Params& p);

double crib_ortho(const OrthoCaseParams& p);

double brie_crib(const BrieParams& p);

// Gram matrices of the Brie tensor scenario (rank 3, modes 2..4 with the
// repeated-column structure); C_1 is the identity scaled so column 1 has
// the requested norm. Used by the eps-limit cross-checks and the CLI.
GramCache brie_grams(const BrieParams& p);

// Rank-2 grams for prescribed correlations (C_1 carries norm_a1).
GramCache rank2_grams(const Rank2Params& p);

}  // namespace cpcrib
