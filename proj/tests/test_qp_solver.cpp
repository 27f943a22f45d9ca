#include "doctest.h"

#include "tegrid/qp/solver.hpp"

#include <cmath>
#include <random>

using namespace tegrid::qp;

namespace {

struct DenseQp {
  Eigen::MatrixXd Q;
  Vector q;
  Eigen::MatrixXd A;
  Vector b;
  Vector lo, hi;
};

/// Method of multipliers on the equalities with an accelerated projected
/// gradient inner loop over the box. Shares no code with the solver.
Vector projected_gradient_oracle(const DenseQp& p) {
  const Eigen::Index n = p.q.size();
  auto project = [&](Vector v) {
    for (Eigen::Index i = 0; i < n; ++i) v[i] = std::clamp(v[i], p.lo[i], p.hi[i]);
    return v;
  };
  const double penalty = 10.0;
  const Eigen::MatrixXd H = p.Q + penalty * p.A.transpose() * p.A;
  const double lipschitz = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(H)
                               .eigenvalues()
                               .maxCoeff();
  Vector lambda = Vector::Zero(p.b.size());
  Vector x = project(Vector::Zero(n));
  for (int outer = 0; outer < 400; ++outer) {
    Vector y = x, x_prev = x;
    double t = 1.0;
    for (int inner = 0; inner < 4000; ++inner) {
      const Vector grad = p.Q * y + p.q + p.A.transpose() * (lambda + penalty * (p.A * y - p.b));
      const Vector x_next = project(y - grad / lipschitz);
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      y = x_next + ((t - 1.0) / t_next) * (x_next - x_prev);
      if ((x_next - x_prev).norm() < 1e-14) {
        x_prev = x_next;
        break;
      }
      x_prev = x_next;
      t = t_next;
    }
    x = x_prev;
    lambda += penalty * (p.A * x - p.b);
    if ((p.A * x - p.b).norm() < 1e-12) break;
  }
  return x;
}

DenseQp random_problem(std::mt19937_64& rng, int n, int m) {
  std::normal_distribution<double> normal(0.0, 1.0);
  DenseQp p;
  Eigen::MatrixXd M(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) M(i, j) = normal(rng);
  p.Q = M.transpose() * M / n + 0.1 * Eigen::MatrixXd::Identity(n, n);
  p.q.resize(n);
  for (int i = 0; i < n; ++i) p.q[i] = 2.0 * normal(rng);
  p.A.resize(m, n);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < n; ++c) p.A(r, c) = normal(rng);
  // Right-hand side from an interior point keeps the problem feasible.
  Vector interior(n);
  for (int i = 0; i < n; ++i) interior[i] = 0.3 * normal(rng);
  p.b = p.A * interior;
  p.lo = Vector::Constant(n, -1.0);
  p.hi = Vector::Constant(n, 1.0);
  return p;
}

QpProblem to_problem(const DenseQp& p) {
  return QpProblem::dense(p.Q, p.q, p.A, p.b, p.lo, p.hi);
}

Vector single(double v) { return Vector::Constant(1, v); }

}  // namespace

TEST_CASE("active lower bound") {
  const QpProblem p = QpProblem::dense(Eigen::MatrixXd::Identity(1, 1), single(0.0),
                                       Eigen::MatrixXd(0, 1), Vector(0), single(1.0),
                                       single(kInf));
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::Optimal);
  CHECK(s.x[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(s.objective == doctest::Approx(0.5).epsilon(1e-8));
}

TEST_CASE("equality-constrained symmetric problem") {
  // (x-2)^2 + (y-2)^2 = 1/2 x'(2I)x - 4x - 4y + 8
  Eigen::MatrixXd Q = 2.0 * Eigen::MatrixXd::Identity(2, 2);
  Vector q(2);
  q << -4, -4;
  Eigen::MatrixXd A(1, 2);
  A << 1, 1;
  const QpProblem p = QpProblem::dense(Q, q, A, single(2.0), Vector::Constant(2, -kInf),
                                       Vector::Constant(2, kInf));
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::Optimal);
  CHECK(s.x[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(s.x[1] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(s.y[0] == doctest::Approx(-2.0).epsilon(1e-8));
}

TEST_CASE("linear program part: zero Hessian with bounds") {
  // min x0 + 2 x1  s.t. x0 + x1 = 1, x >= 0  ->  (1, 0)
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(2, 2);
  Vector q(2);
  q << 1, 2;
  Eigen::MatrixXd A(1, 2);
  A << 1, 1;
  const QpProblem p = QpProblem::dense(Q, q, A, single(1.0), Vector::Zero(2),
                                       Vector::Constant(2, kInf));
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::Optimal);
  CHECK(s.x[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(std::abs(s.x[1]) < 1e-8);
}

TEST_CASE("fixed variables are honoured") {
  Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(2, 2);
  const QpProblem p = QpProblem::dense(Q, Vector::Constant(2, -3.0), Eigen::MatrixXd(0, 2),
                                       Vector(0), Vector::Constant(2, 0.5),
                                       (Vector(2) << 0.5, 10.0).finished());
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::Optimal);
  CHECK(s.x[0] == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(s.x[1] == doctest::Approx(3.0).epsilon(1e-8));
}

TEST_CASE("random PSD problems match the projected-gradient oracle") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 8; ++trial) {
    const DenseQp dp = random_problem(rng, 10, 2 + trial % 3);
    const QpSolution s = solve_qp(to_problem(dp));
    REQUIRE(s.status == QpStatus::Optimal);
    const Vector oracle = projected_gradient_oracle(dp);
    CHECK((s.x - oracle).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("optimality under feasible perturbations") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    const DenseQp dp = random_problem(rng, 10, 3);
    const QpProblem p = to_problem(dp);
    const QpSolution s = solve_qp(p);
    REQUIRE(s.status == QpStatus::Optimal);
    // Directions in the null space of A that keep x inside the box.
    const Eigen::MatrixXd null_basis =
        Eigen::FullPivLU<Eigen::MatrixXd>(dp.A).kernel();
    int tried = 0;
    for (int k = 0; k < 2000 && tried < 200; ++k) {
      Vector coeffs(null_basis.cols());
      for (Eigen::Index i = 0; i < coeffs.size(); ++i) coeffs[i] = normal(rng);
      Vector delta = null_basis * coeffs;
      delta *= 1e-4 / delta.norm();
      const Vector moved = s.x + delta;
      bool inside = true;
      for (Eigen::Index i = 0; i < moved.size(); ++i) {
        inside = inside && moved[i] >= dp.lo[i] && moved[i] <= dp.hi[i];
      }
      if (!inside) continue;
      ++tried;
      CHECK(p.objective(moved) >= s.objective - 1e-8);
    }
    CHECK(tried > 0);
  }
}

TEST_CASE("determinism: identical inputs give bitwise-identical x") {
  std::mt19937_64 rng(3);
  const DenseQp dp = random_problem(rng, 12, 3);
  const QpSolution a = solve_qp(to_problem(dp));
  const QpSolution b = solve_qp(to_problem(dp));
  REQUIRE(a.x.size() == b.x.size());
  for (Eigen::Index i = 0; i < a.x.size(); ++i) CHECK(a.x[i] == b.x[i]);
  CHECK(a.iterations == b.iterations);
}

TEST_CASE("objective scaling leaves the minimizer unchanged") {
  std::mt19937_64 rng(17);
  const DenseQp dp = random_problem(rng, 10, 2);
  const QpProblem p = to_problem(dp);
  const QpSolution base = solve_qp(p);
  REQUIRE(base.status == QpStatus::Optimal);
  for (double c : {0.25, 4.0, 30.0}) {
    const QpSolution s = solve_qp(p.scaled(c));
    REQUIRE(s.status == QpStatus::Optimal);
    CHECK((s.x - base.x).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("inconsistent equality and bounds is reported infeasible") {
  // x0 + x1 = 5 with 0 <= x <= 1.
  Eigen::MatrixXd A(1, 2);
  A << 1, 1;
  const QpProblem p = QpProblem::dense(Eigen::MatrixXd::Identity(2, 2), Vector::Zero(2), A,
                                       single(5.0), Vector::Zero(2), Vector::Ones(2));
  const QpSolution s = solve_qp(p);
  CHECK(s.status == QpStatus::Infeasible);
  CHECK(s.primal_residual > 1.0);
}

TEST_CASE("iteration cap reports MaxIterations") {
  std::mt19937_64 rng(8);
  const DenseQp dp = random_problem(rng, 10, 2);
  QpSettings settings;
  settings.max_iter = 2;
  CHECK(solve_qp(to_problem(dp), settings).status == QpStatus::MaxIterations);
}

TEST_CASE("construction rejects malformed problems") {
  Eigen::MatrixXd indefinite(2, 2);
  indefinite << 1, 0, 0, -1;
  CHECK_THROWS_AS(QpProblem::dense(indefinite, Vector::Zero(2), Eigen::MatrixXd(0, 2),
                                   Vector(0), Vector::Zero(2), Vector::Ones(2)),
                  QpError);
  Eigen::MatrixXd asym(2, 2);
  asym << 1, 0.5, 0, 1;
  CHECK_THROWS_AS(QpProblem::dense(asym, Vector::Zero(2), Eigen::MatrixXd(0, 2), Vector(0),
                                   Vector::Zero(2), Vector::Ones(2)),
                  QpError);
  CHECK_THROWS_AS(QpProblem::dense(Eigen::MatrixXd::Identity(2, 2), Vector::Zero(2),
                                   Eigen::MatrixXd(0, 2), Vector(0), Vector::Ones(2),
                                   Vector::Zero(2)),
                  QpError);
  CHECK_THROWS_AS(QpProblem::dense(Eigen::MatrixXd::Identity(2, 2), Vector::Zero(3),
                                   Eigen::MatrixXd(0, 2), Vector(0), Vector::Zero(2),
                                   Vector::Ones(2)),
                  QpError);
}
