#pragma once

#include "grid.hpp"

#include <Eigen/Dense>
#include <vector>

namespace yieldcast {

/// Empirical orthogonal functions of a stack of repeated surveys.
struct EofDecomposition {
    std::vector<FieldRaster> patterns;          // unit-norm spatial patterns, EOF1 first
    Eigen::MatrixXd expansion_coefficients;     // surveys x k
    std::vector<double> variance_fraction;      // share of total anomaly variance per pattern
};

struct EofOptions {
    // Scale every survey to unit spatial variance before removing the temporal mean.
    bool standardize_surveys = false;
};

/// Cells missing in any survey are excluded from the decomposition and stay
/// missing in the patterns.
EofDecomposition compute_eofs(const std::vector<FieldRaster>& surveys, std::size_t k, const EofOptions& options = {});

}  // namespace yieldcast
