#pragma once

#include <Eigen/Dense>

namespace pilf {

/// Row-major dense matrix used for all numeric blocks. Sequence batches stack
/// samples vertically: row `b * steps + t` is timestep t of sample b.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace pilf
