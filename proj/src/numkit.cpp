#include "rtil/numkit.hpp"

#include <cmath>
#include <numbers>

namespace rtil {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// splitmix64 finalizer; also used to mix seeds and stream labels.
std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

void require_finite(const DenseMatrix& m, const char* who) {
    if (!m.allFinite()) {
        throw ContractError(std::string(who) + ": matrix has non-finite entries");
    }
}

} // namespace

RandomStream::RandomStream(std::uint64_t master_seed, std::uint64_t stream_id)
    : master_seed_(master_seed), stream_id_(stream_id) {
    state_ = mix64(mix64(master_seed + kGolden) ^ mix64(stream_id + 2 * kGolden));
}

RandomStream RandomStream::child(std::uint64_t label) const {
    return RandomStream(master_seed_, mix64(stream_id_ ^ mix64(label + kGolden)));
}

std::uint64_t RandomStream::next_u64() {
    state_ += kGolden;
    return mix64(state_);
}

double RandomStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::uniform_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double RandomStream::gaussian() {
    if (has_cached_gaussian_) {
        has_cached_gaussian_ = false;
        return cached_gaussian_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    cached_gaussian_ = r * std::sin(theta);
    has_cached_gaussian_ = true;
    return r * std::cos(theta);
}

double RandomStream::exponential() {
    return -std::log(uniform_pos());
}

SvdResult svd(const DenseMatrix& m) {
    require_finite(m, "svd");
    Eigen::JacobiSVD<DenseMatrix> solver(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("svd: backend did not converge");
    }
    SvdResult out;
    out.u = solver.matrixU();
    out.singular_values = solver.singularValues();
    out.vt = solver.matrixV().transpose();
    return out;
}

double default_rank_tol(Eigen::Index rows, Eigen::Index cols, double s_max) {
    return static_cast<double>(std::max(rows, cols)) *
           std::numeric_limits<double>::epsilon() * s_max;
}

DenseMatrix pinv(const DenseMatrix& m) {
    const SvdResult f = svd(m);
    const double s_max = f.singular_values.size() > 0 ? f.singular_values(0) : 0.0;
    return pinv(m, default_rank_tol(m.rows(), m.cols(), s_max));
}

DenseMatrix pinv(const DenseMatrix& m, double rank_tol) {
    if (!(rank_tol >= 0.0)) {
        throw ContractError("pinv: rank_tol must be non-negative");
    }
    const SvdResult f = svd(m);
    Vec inv = Vec::Zero(f.singular_values.size());
    for (Eigen::Index i = 0; i < f.singular_values.size(); ++i) {
        if (f.singular_values(i) > rank_tol) {
            inv(i) = 1.0 / f.singular_values(i);
        }
    }
    return f.vt.transpose() * inv.asDiagonal() * f.u.transpose();
}

Eigen::Index numerical_rank(const DenseMatrix& m) {
    const SvdResult f = svd(m);
    const double s_max = f.singular_values.size() > 0 ? f.singular_values(0) : 0.0;
    const double tol = default_rank_tol(m.rows(), m.cols(), s_max);
    Eigen::Index r = 0;
    while (r < f.singular_values.size() && f.singular_values(r) > tol) ++r;
    return r;
}

DenseMatrix range_projector(const DenseMatrix& m) {
    const SvdResult f = svd(m);
    const double s_max = f.singular_values.size() > 0 ? f.singular_values(0) : 0.0;
    const double tol = default_rank_tol(m.rows(), m.cols(), s_max);
    Eigen::Index r = 0;
    while (r < f.singular_values.size() && f.singular_values(r) > tol) ++r;
    const DenseMatrix ur = f.u.leftCols(r);
    return ur * ur.transpose();
}

DenseMatrix range_complement_basis(const DenseMatrix& m) {
    require_finite(m, "range_complement_basis");
    // Full U: the trailing columns past the numerical rank span range(m)^perp.
    Eigen::JacobiSVD<DenseMatrix> solver(m, Eigen::ComputeFullU);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("range_complement_basis: backend did not converge");
    }
    const Vec s = solver.singularValues();
    const double s_max = s.size() > 0 ? s(0) : 0.0;
    const double tol = default_rank_tol(m.rows(), m.cols(), s_max);
    Eigen::Index r = 0;
    while (r < s.size() && s(r) > tol) ++r;
    return solver.matrixU().rightCols(m.rows() - r);
}

Vec min_norm_lstsq(const DenseMatrix& a, const Vec& y) {
    if (a.rows() != y.size()) {
        throw ContractError("min_norm_lstsq: A rows and y length differ");
    }
    return pinv(a) * y;
}

DenseMatrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, RandomStream& stream) {
    if (rows < 1 || cols < 1) {
        throw ContractError("gaussian_matrix: dimensions must be positive");
    }
    DenseMatrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            m(i, j) = stream.gaussian();
        }
    }
    return m;
}

Vec gaussian_vector(Eigen::Index n, RandomStream& stream) {
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = stream.gaussian();
    return v;
}

Vec dirichlet_flat(Eigen::Index n, RandomStream& stream) {
    if (n < 1) {
        throw ContractError("dirichlet_flat: n must be at least 1");
    }
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = stream.exponential();
    return v / v.sum();
}

} // namespace rtil
