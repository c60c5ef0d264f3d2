#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace gecal {

struct SingularMatrixError : std::runtime_error {
  SingularMatrixError(const std::string& context, double condition)
      : std::runtime_error(context + ": matrix is singular or ill-conditioned (condition ~ " +
                           std::to_string(condition) + ")"),
        condition(condition) {}
  double condition;
};

// Solves A x = b for symmetric positive definite A via an eigendecomposition,
// throwing SingularMatrixError when A is indefinite or its condition number
// exceeds 1e12.  Intended for the small (k <= ~8) Gram systems used here.
Eigen::VectorXd spd_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                          const std::string& context);

}  // namespace gecal
