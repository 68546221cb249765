#include "cpcrib/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cpcrib {

namespace {

Index dims_product(const std::vector<Index>& dims) {
    Index p = 1;
    for (Index d : dims) {
        if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive");
        p *= d;
    }
    return p;
}

}  // namespace

DenseTensor::DenseTensor(std::vector<Index> d, VectorXd v)
    : dims(std::move(d)), values(std::move(v)) {
    if (values.size() != dims_product(dims))
        throw std::invalid_argument("values length does not match product of dims");
}

DenseTensor::DenseTensor(std::vector<Index> d) : dims(std::move(d)) {
    values = VectorXd::Zero(dims_product(dims));
}

Index DenseTensor::offset(const std::vector<Index>& idx) const {
    if (idx.size() != dims.size()) throw std::invalid_argument("index arity mismatch");
    Index off = 0, stride = 1;
    for (size_t n = 0; n < dims.size(); ++n) {
        if (idx[n] < 0 || idx[n] >= dims[n]) throw std::out_of_range("tensor index out of range");
        off += idx[n] * stride;
        stride *= dims[n];
    }
    return off;
}

bool DenseTensor::is_binary(double tol) const {
    for (Index i = 0; i < values.size(); ++i) {
        double v = values[i];
        if (std::abs(v) > tol && std::abs(v - 1.0) > tol) return false;
    }
    return true;
}

KruskalModel::KruskalModel(std::vector<MatrixXd> f) : factors(std::move(f)) { validate(); }

std::vector<Index> KruskalModel::dims() const {
    std::vector<Index> d(factors.size());
    for (size_t n = 0; n < factors.size(); ++n) d[n] = factors[n].rows();
    return d;
}

void KruskalModel::validate() const {
    if (factors.size() < 3) throw std::invalid_argument("tensor order must be at least 3");
    Index R = factors[0].cols();
    if (R < 1) throw std::invalid_argument("rank must be at least 1");
    for (const auto& A : factors) {
        if (A.cols() != R) throw std::invalid_argument("factor matrices must share the column count");
        if (A.rows() < 1) throw std::invalid_argument("factor matrices must have positive row count");
    }
}

KruskalModel normalize(const KruskalModel& model) {
    model.validate();
    KruskalModel out = model;
    Index N = out.order(), R = out.rank();
    for (Index r = 0; r < R; ++r) {
        for (Index n = 1; n < N; ++n) {
            VectorXd col = out.factors[n].col(r);
            double norm = col.norm();
            if (norm == 0.0) throw std::invalid_argument("cannot normalize a zero factor column");
            double sign = 1.0;
            for (Index i = 0; i < col.size(); ++i) {
                if (col[i] != 0.0) { sign = col[i] > 0.0 ? 1.0 : -1.0; break; }
            }
            out.factors[n].col(r) /= sign * norm;
            out.factors[0].col(r) *= sign * norm;
        }
    }
    return out;
}

DenseTensor full_tensor(const KruskalModel& model) {
    model.validate();
    Index N = model.order(), R = model.rank();
    DenseTensor t(model.dims());
    // vec(Y) = sum_r a_r^(N) (x) ... (x) a_r^(1)
    for (Index r = 0; r < R; ++r) {
        VectorXd acc = model.factors[0].col(r);
        for (Index n = 1; n < N; ++n) {
            const VectorXd& a = model.factors[n].col(r);
            VectorXd next(acc.size() * a.size());
            for (Index i = 0; i < a.size(); ++i) next.segment(i * acc.size(), acc.size()) = a[i] * acc;
            acc = std::move(next);
        }
        t.values += acc;
    }
    return t;
}

MatrixXd khatri_rao(const MatrixXd& A, const MatrixXd& B) {
    if (A.cols() != B.cols()) throw std::invalid_argument("khatri_rao: column count mismatch");
    MatrixXd out(A.rows() * B.rows(), A.cols());
    for (Index r = 0; r < A.cols(); ++r)
        for (Index i = 0; i < A.rows(); ++i)
            out.col(r).segment(i * B.rows(), B.rows()) = A(i, r) * B.col(r);
    return out;
}

MatrixXd khatri_rao_except(const KruskalModel& model, Index skip_mode) {
    Index N = model.order();
    MatrixXd Z = MatrixXd::Ones(1, model.rank());
    for (Index n = 0; n < N; ++n) {
        if (n == skip_mode) continue;
        Z = khatri_rao(model.factors[n], Z);
    }
    return Z;
}

GramCache gram_cache(const KruskalModel& model) {
    model.validate();
    GramCache g;
    g.C.reserve(model.order());
    for (const auto& A : model.factors) g.C.push_back(A.transpose() * A);
    return g;
}

MatrixXd GramCache::gamma(Index n, Index m) const {
    Index R = rank();
    MatrixXd G = MatrixXd::Ones(R, R);
    for (Index k = 0; k < order(); ++k) {
        if (k == n || k == m) continue;
        G = G.cwiseProduct(C[k]);
    }
    return G;
}

MatrixXd unfold(const DenseTensor& t, Index mode) {
    Index N = t.order();
    if (mode < 0 || mode >= N) throw std::invalid_argument("unfold: mode out of range");
    Index In = t.dims[mode];
    Index rest = t.size() / In;
    MatrixXd M(In, rest);
    Index inner = 1;  // product of dims before `mode`
    for (Index k = 0; k < mode; ++k) inner *= t.dims[k];
    Index outer = rest / inner;
    for (Index o = 0; o < outer; ++o)
        for (Index i = 0; i < In; ++i)
            for (Index s = 0; s < inner; ++s)
                M(i, o * inner + s) = t.values[(o * In + i) * inner + s];
    return M;
}

KruskalModel reshape_merge(const KruskalModel& model, const std::vector<Index>& modes) {
    model.validate();
    if (modes.size() < 2) throw std::invalid_argument("reshape_merge: need at least two modes");
    std::set<Index> ms(modes.begin(), modes.end());
    if (ms.size() != modes.size()) throw std::invalid_argument("reshape_merge: duplicate modes");
    if (ms.count(0)) throw std::invalid_argument("reshape_merge: mode 1 must survive the merge");
    for (Index m : ms)
        if (m < 0 || m >= model.order()) throw std::invalid_argument("reshape_merge: mode out of range");

    Index R = model.rank();
    // Merged columns: Kronecker with the later mode on the left.
    Index merged_rows = 1;
    for (Index m : ms) merged_rows *= model.dim(m);
    MatrixXd merged(merged_rows, R);
    for (Index r = 0; r < R; ++r) {
        VectorXd acc = VectorXd::Ones(1);
        for (Index m : ms) {  // ascending; each new mode goes on the left
            const VectorXd& a = model.factors[m].col(r);
            VectorXd next(acc.size() * a.size());
            for (Index i = 0; i < a.size(); ++i) next.segment(i * acc.size(), acc.size()) = a[i] * acc;
            acc = std::move(next);
        }
        merged.col(r) = acc;
    }

    std::vector<MatrixXd> out;
    Index first_merged = *ms.begin();
    for (Index n = 0; n < model.order(); ++n) {
        if (n == first_merged) out.push_back(merged);
        else if (!ms.count(n)) out.push_back(model.factors[n]);
    }
    return KruskalModel(std::move(out));
}

DenseTensor tvprod_except(const DenseTensor& t, const std::vector<VectorXd>& vectors,
                          const std::set<Index>& skip) {
    Index N = t.order();
    if (static_cast<Index>(vectors.size()) != N)
        throw std::invalid_argument("tvprod_except: one vector slot per mode required");
    for (Index k = 0; k < N; ++k) {
        if (skip.count(k)) continue;
        if (vectors[k].size() != t.dims[k])
            throw std::invalid_argument("tvprod_except: vector length mismatch");
    }
    std::vector<Index> kept(skip.begin(), skip.end());
    std::vector<Index> out_dims;
    for (Index k : kept) out_dims.push_back(t.dims[k]);
    DenseTensor out(out_dims);  // 0-way result holds a single scalar

    std::vector<Index> idx(N, 0);
    for (Index lin = 0; lin < t.size(); ++lin) {
        double w = t.values[lin];
        if (w != 0.0) {
            for (Index k = 0; k < N; ++k)
                if (!skip.count(k)) w *= vectors[k][idx[k]];
            Index off = 0, stride = 1;
            for (size_t j = 0; j < kept.size(); ++j) {
                off += idx[kept[j]] * stride;
                stride *= t.dims[kept[j]];
            }
            out.values[off] += w;
        }
        for (Index k = 0; k < N; ++k) {  // advance multi-index, mode-1 fastest
            if (++idx[k] < t.dims[k]) break;
            idx[k] = 0;
        }
    }
    return out;
}

double tvprod_all(const DenseTensor& t, const std::vector<VectorXd>& vectors) {
    return tvprod_except(t, vectors, {}).values[0];
}

DenseTensor permute_modes(const DenseTensor& t, const std::vector<Index>& perm) {
    Index N = t.order();
    if (static_cast<Index>(perm.size()) != N)
        throw std::invalid_argument("permute_modes: permutation arity mismatch");
    std::vector<Index> out_dims(N);
    for (Index k = 0; k < N; ++k) out_dims[k] = t.dims[perm[k]];
    DenseTensor out(out_dims);
    std::vector<Index> idx(N, 0), oidx(N, 0);
    for (Index lin = 0; lin < t.size(); ++lin) {
        for (Index k = 0; k < N; ++k) oidx[k] = idx[perm[k]];
        out.values[out.offset(oidx)] = t.values[lin];
        for (Index k = 0; k < N; ++k) {
            if (++idx[k] < t.dims[k]) break;
            idx[k] = 0;
        }
    }
    return out;
}

}  // namespace cpcrib
