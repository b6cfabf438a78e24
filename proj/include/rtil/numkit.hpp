#pragma once

#include <Eigen/Dense>

#include <cstdint>

#include "rtil/errors.hpp"

namespace rtil {

// Row-major dense matrix of doubles. The universal numeric carrier: sensing
// matrices, generator weights, projectors, pseudoinverses all live here.
using DenseMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

// Deterministic sample source. The same (master_seed, stream_id) pair yields
// the same sequence on every platform: the engine is mt19937_64 and the
// variate transforms (Box-Muller, inverse-CDF exponential) are fixed here
// rather than delegated to std::*_distribution, whose output is
// implementation-defined.
//
// Streams are cheap value types. Do not share one stream across threads;
// derive an independent child per worker instead.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t master_seed, std::uint64_t stream_id = 0);

    // Independent stream keyed by (master_seed, mix(stream_id, label)).
    RandomStream child(std::uint64_t label) const;

    std::uint64_t master_seed() const { return master_seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    std::uint64_t next_u64();
    double uniform();      // [0, 1)
    double uniform_pos();  // (0, 1]
    double gaussian();     // N(0, 1), Box-Muller with pair caching
    double exponential();  // unit rate

private:
    std::uint64_t master_seed_;
    std::uint64_t stream_id_;
    std::uint64_t state_;      // splitmix64 state
    double cached_gaussian_ = 0.0;
    bool has_cached_gaussian_ = false;
};

struct SvdResult {
    DenseMatrix u;          // thin left factor, m x k with k = min(m, n)
    Vec singular_values;    // non-increasing, non-negative, length k
    DenseMatrix vt;         // thin right factor transposed, k x n
};

// Thin SVD with U diag(s) Vt reconstructing the input to ~1e-10 relative
// Frobenius error. Throws NumericalError if the backend fails to converge.
SvdResult svd(const DenseMatrix& m);

// Singular values at or below max(rows, cols) * eps * s_max count as zero.
double default_rank_tol(Eigen::Index rows, Eigen::Index cols, double s_max);

// Moore-Penrose pseudoinverse. The zero matrix maps to its zero transpose.
DenseMatrix pinv(const DenseMatrix& m);
DenseMatrix pinv(const DenseMatrix& m, double rank_tol);

Eigen::Index numerical_rank(const DenseMatrix& m);

// Orthogonal projector onto range(m): symmetric, idempotent, fixes m.
DenseMatrix range_projector(const DenseMatrix& m);

// Orthonormal basis Q of range(m)^perp, one column per missing rank
// direction. Full-range input yields a zero-column matrix.
DenseMatrix range_complement_basis(const DenseMatrix& m);

// Least-squares solution of min |y - A x| with smallest Euclidean norm.
Vec min_norm_lstsq(const DenseMatrix& a, const Vec& y);

// i.i.d. N(0,1) entries drawn from the stream in row-major order.
DenseMatrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, RandomStream& stream);
Vec gaussian_vector(Eigen::Index n, RandomStream& stream);

// Uniform sample from the (n-1)-simplex: n unit-rate exponentials, normalized.
Vec dirichlet_flat(Eigen::Index n, RandomStream& stream);

} // namespace rtil
