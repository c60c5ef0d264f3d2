#include "gecal/linalg.hpp"

#include <limits>

namespace gecal {

namespace {

constexpr double kConditionLimit = 1e12;

}  // namespace

Eigen::VectorXd spd_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                          const std::string& context) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  const double emin = es.eigenvalues().minCoeff();
  const double emax = es.eigenvalues().maxCoeff();
  const double condition =
      emin > 0.0 ? emax / emin : std::numeric_limits<double>::infinity();
  if (!(emin > 0.0) || condition > kConditionLimit)
    throw SingularMatrixError(context, condition);
  return es.eigenvectors() *
         (es.eigenvalues().cwiseInverse().asDiagonal() * (es.eigenvectors().transpose() * b));
}

}  // namespace gecal
