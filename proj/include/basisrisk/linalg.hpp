#pragma once

#include <Eigen/Dense>

namespace basisrisk {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

}  // namespace basisrisk
