#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "rtil/numkit.hpp"

namespace rtil {

// Forward measurement operators for the three inverse problems. All act on
// flat signal vectors; adjoints are exact so residual gradients are cheap.
class MeasurementOperator {
public:
    struct Gaussian {
        DenseMatrix a;
    };
    // Selected rows of Circ(kernel) applied after elementwise sign flips.
    struct PartialCirculant {
        Vec kernel;
        Vec signs;  // entries +-1
        std::vector<Eigen::Index> row_subset;
    };
    struct Mask {
        std::vector<bool> keep;
    };
    // Non-overlapping block means; factor must divide the input length.
    struct Downsample {
        Eigen::Index factor;
        Eigen::Index input_len;
    };

    static MeasurementOperator gaussian(DenseMatrix a);
    static MeasurementOperator partial_circulant(Vec kernel, Vec signs,
                                                 std::vector<Eigen::Index> row_subset);
    static MeasurementOperator mask(std::vector<bool> keep);
    static MeasurementOperator downsample(Eigen::Index factor, Eigen::Index input_len);

    Eigen::Index input_dim() const;
    Eigen::Index output_dim() const;

    Vec apply(const Vec& x) const;
    // Exact adjoint: <apply(x), y> == <x, adjoint(y)> for all x, y.
    Vec adjoint(const Vec& y) const;
    DenseMatrix as_dense() const;

    const char* kind_name() const;

private:
    std::variant<Gaussian, PartialCirculant, Mask, Downsample> v_;
};

// Builds the operator named by a config spec. `ratio` is the kept fraction
// of measurements (cs, circulant, inpaint); `factor` is the downsampling
// factor (sr). Randomness comes from the stream only.
MeasurementOperator make_operator(const std::string& kind, Eigen::Index input_len,
                                  double ratio, Eigen::Index factor, RandomStream& stream);

} // namespace rtil
