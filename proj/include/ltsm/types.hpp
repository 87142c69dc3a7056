#pragma once

#include <Eigen/Dense>

namespace ltsm {

// Row index is time, column index is variate throughout the library.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

}  // namespace ltsm
