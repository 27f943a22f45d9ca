#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstddef>
#include <limits>
#include <stdexcept>

namespace tegrid::qp {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Vector = Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

class QpError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// minimize 1/2 x'Qx + q'x  subject to  Ax = b,  lo <= x <= hi.
///
/// Q must be symmetric positive semidefinite; both triangles are stored.
/// Bounds may be +-infinity. Construction validates every invariant and
/// throws QpError on violation.
class QpProblem {
 public:
  QpProblem(SparseMatrix Q, Vector q, SparseMatrix A, Vector b, Vector lo,
            Vector hi);

  /// Dense convenience overload for small problems and tests.
  static QpProblem dense(const Eigen::MatrixXd& Q, const Vector& q,
                         const Eigen::MatrixXd& A, const Vector& b,
                         const Vector& lo, const Vector& hi);

  Eigen::Index num_vars() const { return q_.size(); }
  Eigen::Index num_eq() const { return b_.size(); }

  const SparseMatrix& Q() const { return Q_; }
  const Vector& q() const { return q_; }
  const SparseMatrix& A() const { return A_; }
  const Vector& b() const { return b_; }
  const Vector& lo() const { return lo_; }
  const Vector& hi() const { return hi_; }

  double objective(const Vector& x) const;

  /// Same constraints, objective scaled by c > 0.
  QpProblem scaled(double c) const;

 private:
  SparseMatrix Q_;
  Vector q_;
  SparseMatrix A_;
  Vector b_;
  Vector lo_;
  Vector hi_;
};

enum class QpStatus { Optimal, MaxIterations, Infeasible };

const char* to_string(QpStatus s);

struct QpSolution {
  Vector x;
  Vector y;  // equality multipliers, sign: Qx + q - A'y - z_lo + z_hi = 0
  double objective = 0.0;
  QpStatus status = QpStatus::MaxIterations;
  std::size_t iterations = 0;
  double primal_residual = 0.0;  // max |Ax - b|
  double dual_residual = 0.0;    // max |stationarity residual|
  double complementarity = 0.0;  // mean bound slack * multiplier
};

struct QpSettings {
  double tol = 1e-8;
  std::size_t max_iter = 20000;
  /// Iterations without primal-residual progress before declaring the
  /// equality system inconsistent with the bounds.
  std::size_t stall_window = 100;
};

/// Mehrotra predictor-corrector interior point method. Deterministic:
/// identical inputs give bitwise-identical output.
QpSolution solve_qp(const QpProblem& problem, const QpSettings& settings = {});

}  // namespace tegrid::qp
