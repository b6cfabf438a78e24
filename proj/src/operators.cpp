#include "rtil/operators.hpp"

#include <algorithm>
#include <cmath>

namespace rtil {

namespace {

Eigen::Index mask_output_dim(const std::vector<bool>& keep) {
    return static_cast<Eigen::Index>(std::count(keep.begin(), keep.end(), true));
}

} // namespace

MeasurementOperator MeasurementOperator::gaussian(DenseMatrix a) {
    if (!a.allFinite()) throw ContractError("gaussian operator: non-finite entries");
    MeasurementOperator op;
    op.v_ = Gaussian{std::move(a)};
    return op;
}

MeasurementOperator MeasurementOperator::partial_circulant(
    Vec kernel, Vec signs, std::vector<Eigen::Index> row_subset) {
    const Eigen::Index n = kernel.size();
    if (signs.size() != n) {
        throw ContractError("partial_circulant: kernel and signs lengths differ");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        if (signs(i) != 1.0 && signs(i) != -1.0) {
            throw ContractError("partial_circulant: signs must be +-1");
        }
    }
    std::vector<Eigen::Index> sorted = row_subset;
    std::sort(sorted.begin(), sorted.end());
    for (size_t i = 0; i < sorted.size(); ++i) {
        if (sorted[i] < 0 || sorted[i] >= n) {
            throw ContractError("partial_circulant: row index out of range");
        }
        if (i > 0 && sorted[i] == sorted[i - 1]) {
            throw ContractError("partial_circulant: duplicate row index");
        }
    }
    MeasurementOperator op;
    op.v_ = PartialCirculant{std::move(kernel), std::move(signs), std::move(row_subset)};
    return op;
}

MeasurementOperator MeasurementOperator::mask(std::vector<bool> keep) {
    MeasurementOperator op;
    op.v_ = Mask{std::move(keep)};
    return op;
}

MeasurementOperator MeasurementOperator::downsample(Eigen::Index factor, Eigen::Index input_len) {
    if (factor < 1 || input_len < 1 || input_len % factor != 0) {
        throw ContractError("downsample: factor must divide input length");
    }
    MeasurementOperator op;
    op.v_ = Downsample{factor, input_len};
    return op;
}

Eigen::Index MeasurementOperator::input_dim() const {
    return std::visit(
        [](const auto& op) -> Eigen::Index {
            using T = std::decay_t<decltype(op)>;
            if constexpr (std::is_same_v<T, Gaussian>) return op.a.cols();
            if constexpr (std::is_same_v<T, PartialCirculant>) return op.kernel.size();
            if constexpr (std::is_same_v<T, Mask>)
                return static_cast<Eigen::Index>(op.keep.size());
            if constexpr (std::is_same_v<T, Downsample>) return op.input_len;
        },
        v_);
}

Eigen::Index MeasurementOperator::output_dim() const {
    return std::visit(
        [](const auto& op) -> Eigen::Index {
            using T = std::decay_t<decltype(op)>;
            if constexpr (std::is_same_v<T, Gaussian>) return op.a.rows();
            if constexpr (std::is_same_v<T, PartialCirculant>)
                return static_cast<Eigen::Index>(op.row_subset.size());
            if constexpr (std::is_same_v<T, Mask>) return mask_output_dim(op.keep);
            if constexpr (std::is_same_v<T, Downsample>) return op.input_len / op.factor;
        },
        v_);
}

Vec MeasurementOperator::apply(const Vec& x) const {
    if (x.size() != input_dim()) {
        throw ContractError("apply: input length does not match operator");
    }
    return std::visit(
        [&x](const auto& op) -> Vec {
            using T = std::decay_t<decltype(op)>;
            if constexpr (std::is_same_v<T, Gaussian>) {
                return op.a * x;
            } else if constexpr (std::is_same_v<T, PartialCirculant>) {
                const Eigen::Index n = op.kernel.size();
                const Vec t = op.signs.cwiseProduct(x);
                Vec out(static_cast<Eigen::Index>(op.row_subset.size()));
                for (size_t r = 0; r < op.row_subset.size(); ++r) {
                    const Eigen::Index i = op.row_subset[r];
                    double acc = 0.0;
                    for (Eigen::Index j = 0; j < n; ++j) {
                        acc += op.kernel(((i - j) % n + n) % n) * t(j);
                    }
                    out(static_cast<Eigen::Index>(r)) = acc;
                }
                return out;
            } else if constexpr (std::is_same_v<T, Mask>) {
                Vec out(mask_output_dim(op.keep));
                Eigen::Index k = 0;
                for (size_t i = 0; i < op.keep.size(); ++i) {
                    if (op.keep[i]) out(k++) = x(static_cast<Eigen::Index>(i));
                }
                return out;
            } else {
                const Eigen::Index blocks = op.input_len / op.factor;
                Vec out(blocks);
                for (Eigen::Index b = 0; b < blocks; ++b) {
                    out(b) = x.segment(b * op.factor, op.factor).mean();
                }
                return out;
            }
        },
        v_);
}

Vec MeasurementOperator::adjoint(const Vec& y) const {
    if (y.size() != output_dim()) {
        throw ContractError("adjoint: input length does not match operator output");
    }
    return std::visit(
        [&y](const auto& op) -> Vec {
            using T = std::decay_t<decltype(op)>;
            if constexpr (std::is_same_v<T, Gaussian>) {
                return op.a.transpose() * y;
            } else if constexpr (std::is_same_v<T, PartialCirculant>) {
                const Eigen::Index n = op.kernel.size();
                Vec out = Vec::Zero(n);
                for (size_t r = 0; r < op.row_subset.size(); ++r) {
                    const Eigen::Index i = op.row_subset[r];
                    const double yi = y(static_cast<Eigen::Index>(r));
                    for (Eigen::Index j = 0; j < n; ++j) {
                        out(j) += op.kernel(((i - j) % n + n) % n) * yi;
                    }
                }
                return op.signs.cwiseProduct(out);
            } else if constexpr (std::is_same_v<T, Mask>) {
                Vec out = Vec::Zero(static_cast<Eigen::Index>(op.keep.size()));
                Eigen::Index k = 0;
                for (size_t i = 0; i < op.keep.size(); ++i) {
                    if (op.keep[i]) out(static_cast<Eigen::Index>(i)) = y(k++);
                }
                return out;
            } else {
                Vec out(op.input_len);
                const double inv = 1.0 / static_cast<double>(op.factor);
                const Eigen::Index blocks = op.input_len / op.factor;
                for (Eigen::Index b = 0; b < blocks; ++b) {
                    out.segment(b * op.factor, op.factor).setConstant(y(b) * inv);
                }
                return out;
            }
        },
        v_);
}

DenseMatrix MeasurementOperator::as_dense() const {
    const Eigen::Index n = input_dim();
    const Eigen::Index m = output_dim();
    if (n > 4096) throw ContractError("as_dense: input length exceeds desk scale");
    return std::visit(
        [n, m](const auto& op) -> DenseMatrix {
            using T = std::decay_t<decltype(op)>;
            if constexpr (std::is_same_v<T, Gaussian>) {
                return op.a;
            } else if constexpr (std::is_same_v<T, PartialCirculant>) {
                DenseMatrix d(m, n);
                for (size_t r = 0; r < op.row_subset.size(); ++r) {
                    const Eigen::Index i = op.row_subset[r];
                    for (Eigen::Index j = 0; j < n; ++j) {
                        d(static_cast<Eigen::Index>(r), j) =
                            op.kernel(((i - j) % n + n) % n) * op.signs(j);
                    }
                }
                return d;
            } else if constexpr (std::is_same_v<T, Mask>) {
                DenseMatrix d = DenseMatrix::Zero(m, n);
                Eigen::Index k = 0;
                for (size_t i = 0; i < op.keep.size(); ++i) {
                    if (op.keep[i]) d(k++, static_cast<Eigen::Index>(i)) = 1.0;
                }
                return d;
            } else {
                DenseMatrix d = DenseMatrix::Zero(m, n);
                const double inv = 1.0 / static_cast<double>(op.factor);
                for (Eigen::Index b = 0; b < m; ++b) {
                    for (Eigen::Index j = 0; j < op.factor; ++j) {
                        d(b, b * op.factor + j) = inv;
                    }
                }
                return d;
            }
        },
        v_);
}

const char* MeasurementOperator::kind_name() const {
    return std::visit(
        [](const auto& op) -> const char* {
            using T = std::decay_t<decltype(op)>;
            if constexpr (std::is_same_v<T, Gaussian>) return "cs";
            if constexpr (std::is_same_v<T, PartialCirculant>) return "circulant";
            if constexpr (std::is_same_v<T, Mask>) return "inpaint";
            if constexpr (std::is_same_v<T, Downsample>) return "sr";
        },
        v_);
}

namespace {

Eigen::Index measurement_count(Eigen::Index n, double ratio) {
    if (!(ratio > 0.0 && ratio <= 1.0)) {
        throw ConfigError("operator spec: ratio must lie in (0, 1]");
    }
    return std::clamp<Eigen::Index>(
        static_cast<Eigen::Index>(std::llround(ratio * static_cast<double>(n))), 1, n);
}

// Uniform m-subset of {0..n-1} without replacement (partial Fisher-Yates).
std::vector<Eigen::Index> sample_subset(Eigen::Index n, Eigen::Index m, RandomStream& stream) {
    std::vector<Eigen::Index> pool(static_cast<size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto j = i + static_cast<Eigen::Index>(stream.next_u64() %
                                                     static_cast<std::uint64_t>(n - i));
        std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
    }
    pool.resize(static_cast<size_t>(m));
    return pool;
}

} // namespace

MeasurementOperator make_operator(const std::string& kind, Eigen::Index input_len,
                                  double ratio, Eigen::Index factor, RandomStream& stream) {
    if (kind == "cs") {
        const Eigen::Index m = measurement_count(input_len, ratio);
        return MeasurementOperator::gaussian(gaussian_matrix(m, input_len, stream));
    }
    if (kind == "circulant") {
        const Eigen::Index m = measurement_count(input_len, ratio);
        Vec kernel = gaussian_vector(input_len, stream);
        Vec signs(input_len);
        for (Eigen::Index i = 0; i < input_len; ++i) {
            signs(i) = (stream.next_u64() & 1u) ? 1.0 : -1.0;
        }
        return MeasurementOperator::partial_circulant(std::move(kernel), std::move(signs),
                                                      sample_subset(input_len, m, stream));
    }
    if (kind == "inpaint") {
        const Eigen::Index m = measurement_count(input_len, ratio);
        const auto kept = sample_subset(input_len, m, stream);
        std::vector<bool> keep(static_cast<size_t>(input_len), false);
        for (Eigen::Index i : kept) keep[static_cast<size_t>(i)] = true;
        return MeasurementOperator::mask(std::move(keep));
    }
    if (kind == "sr") {
        if (factor < 1 || input_len % factor != 0) {
            throw ConfigError("operator spec: sr factor must divide the signal length");
        }
        return MeasurementOperator::downsample(factor, input_len);
    }
    throw ConfigError("operator spec: unknown kind '" + kind + "'");
}

} // namespace rtil
