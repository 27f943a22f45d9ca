#include "tegrid/qp/solver.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <vector>

namespace tegrid::qp {
namespace {

using Triplet = Eigen::Triplet<double>;
using Index = Eigen::Index;

bool finite(double v) { return std::isfinite(v); }

double inf_norm(const Vector& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

void check_symmetric_psd(const SparseMatrix& Q) {
  double scale = 1.0;
  for (Index k = 0; k < Q.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(Q, k); it; ++it) {
      scale = std::max(scale, std::abs(it.value()));
    }
  }
  const SparseMatrix asym = SparseMatrix(Q.transpose()) - Q;
  for (Index k = 0; k < asym.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(asym, k); it; ++it) {
      if (std::abs(it.value()) > 1e-12 * scale) {
        throw QpError("Q is not symmetric");
      }
    }
  }
  if (Q.rows() == 0) return;
  // Shifted LDL': a PSD matrix plus a tiny ridge is positive definite, so a
  // negative pivot beyond the ridge means Q has a negative eigenvalue.
  const double ridge = 1e-10 * scale;
  SparseMatrix shifted = Q;
  for (Index i = 0; i < Q.rows(); ++i) shifted.coeffRef(i, i) += ridge;
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(shifted);
  if (ldlt.info() != Eigen::Success) throw QpError("Q is not positive semidefinite");
  if (ldlt.vectorD().minCoeff() < -1e-8 * scale) {
    throw QpError("Q is not positive semidefinite");
  }
}

// Active-set polish: fix the bounds the interior point identified as
// active, solve the resulting equality-constrained KKT system, and accept
// the result only if it is primal and dual feasible to `tol`.
bool polish(const QpProblem& problem, const SparseMatrix& A, const Vector& b,
            const Vector& lo, const Vector& hi, const std::vector<char>& has_lo,
            const std::vector<char>& has_hi, double tol, Vector& x, Vector& y,
            Vector& zl, Vector& zu, QpSolution& out) {
  const Index n = problem.num_vars();
  const Index m = A.rows();
  const SparseMatrix& Q = problem.Q();
  std::vector<Index> active;
  std::vector<double> value;
  std::vector<char> upper;
  for (Index i = 0; i < n; ++i) {
    if (has_lo[i] && x[i] - lo[i] < zl[i]) {
      active.push_back(i);
      value.push_back(lo[i]);
      upper.push_back(0);
    } else if (has_hi[i] && hi[i] - x[i] < zu[i]) {
      active.push_back(i);
      value.push_back(hi[i]);
      upper.push_back(1);
    }
  }
  const Index na = static_cast<Index>(active.size());
  const Index dim = n + m + na;
  const double reg = 1e-11;
  std::vector<Triplet> trips;
  for (Index k = 0; k < Q.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(Q, k); it; ++it) {
      if (it.row() >= it.col()) trips.emplace_back(it.row(), it.col(), it.value());
    }
  }
  for (Index i = 0; i < n; ++i) trips.emplace_back(i, i, reg);
  for (Index k = 0; k < A.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(A, k); it; ++it) {
      trips.emplace_back(n + it.row(), it.col(), it.value());
    }
  }
  for (Index k = 0; k < na; ++k) trips.emplace_back(n + m + k, active[k], 1.0);
  for (Index r = n; r < dim; ++r) trips.emplace_back(r, r, -reg);
  SparseMatrix K(dim, dim);
  K.setFromTriplets(trips.begin(), trips.end());
  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower> ldlt(K);
  if (ldlt.info() != Eigen::Success) return false;

  Vector rhs(dim);
  rhs.head(n) = -problem.q();
  rhs.segment(n, m) = b;
  for (Index k = 0; k < na; ++k) rhs[n + m + k] = value[k];
  auto apply_exact = [&](const Vector& v) {
    Vector r(dim);
    r.head(n) = Q * v.head(n);
    r.segment(n, m) = A * v.head(n);
    for (Index k = 0; k < na; ++k) {
      r[active[k]] += v[n + m + k];
      r[n + m + k] = v[active[k]];
    }
    r.head(n) += A.transpose() * v.segment(n, m);
    return r;
  };
  Vector sol = ldlt.solve(rhs);
  for (int pass = 0; pass < 5; ++pass) sol += ldlt.solve(rhs - apply_exact(sol));
  if (!sol.allFinite()) return false;

  // Stationarity reads Qx + q + A'w + E'v = 0, so y = -w and the bound
  // multipliers follow from v.
  Vector px = sol.head(n);
  Vector py = -sol.segment(n, m);
  Vector pzl = Vector::Zero(n), pzu = Vector::Zero(n);
  for (Index k = 0; k < na; ++k) {
    const double v = sol[n + m + k];
    if (upper[k]) {
      pzu[active[k]] = v;
    } else {
      pzl[active[k]] = -v;
    }
    px[active[k]] = value[k];
  }
  for (Index i = 0; i < n; ++i) {
    if (has_lo[i] && px[i] < lo[i] - tol) return false;
    if (has_hi[i] && px[i] > hi[i] + tol) return false;
    if (pzl[i] < -tol || pzu[i] < -tol) return false;
  }
  const double rp = inf_norm(A * px - b);
  const double rd = inf_norm(Q * px + problem.q() - A.transpose() * py - pzl + pzu);
  if (rp > tol || rd > tol) return false;
  x = std::move(px);
  y = std::move(py);
  zl = pzl.cwiseMax(0.0);
  zu = pzu.cwiseMax(0.0);
  out.primal_residual = rp;
  out.dual_residual = rd;
  out.complementarity = 0.0;
  return true;
}

}  // namespace

QpProblem::QpProblem(SparseMatrix Q, Vector q, SparseMatrix A, Vector b,
                     Vector lo, Vector hi)
    : Q_(std::move(Q)),
      q_(std::move(q)),
      A_(std::move(A)),
      b_(std::move(b)),
      lo_(std::move(lo)),
      hi_(std::move(hi)) {
  const Index n = q_.size();
  if (Q_.rows() != n || Q_.cols() != n) throw QpError("Q must be n x n");
  if (A_.cols() != n && !(A_.rows() == 0)) throw QpError("A must have n columns");
  if (A_.rows() == 0) A_.resize(0, n);
  if (A_.rows() != b_.size()) throw QpError("A and b row counts differ");
  if (lo_.size() != n || hi_.size() != n) throw QpError("bounds must have length n");
  for (Index i = 0; i < n; ++i) {
    if (std::isnan(lo_[i]) || std::isnan(hi_[i]) || lo_[i] > hi_[i]) {
      throw QpError("bound lo > hi at index " + std::to_string(i));
    }
    if (lo_[i] == kInf || hi_[i] == -kInf) {
      throw QpError("empty bound interval at index " + std::to_string(i));
    }
  }
  if (!q_.allFinite() || !b_.allFinite()) throw QpError("non-finite q or b");
  Q_.makeCompressed();
  A_.makeCompressed();
  check_symmetric_psd(Q_);
}

QpProblem QpProblem::dense(const Eigen::MatrixXd& Q, const Vector& q,
                           const Eigen::MatrixXd& A, const Vector& b,
                           const Vector& lo, const Vector& hi) {
  SparseMatrix A_sparse = A.sparseView();
  if (A.rows() == 0) A_sparse.resize(0, q.size());
  return QpProblem(Q.sparseView(), q, std::move(A_sparse), b, lo, hi);
}

double QpProblem::objective(const Vector& x) const {
  return 0.5 * x.dot(Q_ * x) + q_.dot(x);
}

QpProblem QpProblem::scaled(double c) const {
  if (!(c > 0.0)) throw QpError("scale must be positive");
  return QpProblem(c * Q_, c * q_, A_, b_, lo_, hi_);
}

const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::MaxIterations: return "max_iterations";
    case QpStatus::Infeasible: return "infeasible";
  }
  return "unknown";
}

QpSolution solve_qp(const QpProblem& problem, const QpSettings& settings) {
  const Index n = problem.num_vars();
  const SparseMatrix& Q = problem.Q();

  // Variables with lo == hi become equality rows and are treated as free.
  // Boxes narrower than rounding noise are fixed too: an interior point
  // cannot live inside them.
  std::vector<Index> fixed;
  for (Index i = 0; i < n; ++i) {
    const double l = problem.lo()[i], h = problem.hi()[i];
    if (l == h || (std::isfinite(h - l) &&
                   h - l <= 1e-13 * std::max({1.0, std::abs(l), std::abs(h)}))) {
      fixed.push_back(i);
    }
  }
  const Index m0 = problem.num_eq();
  const Index m = m0 + static_cast<Index>(fixed.size());

  SparseMatrix A(m, n);
  {
    std::vector<Triplet> trips;
    trips.reserve(problem.A().nonZeros() + fixed.size());
    for (Index k = 0; k < problem.A().outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(problem.A(), k); it; ++it) {
        trips.emplace_back(it.row(), it.col(), it.value());
      }
    }
    for (std::size_t k = 0; k < fixed.size(); ++k) {
      trips.emplace_back(m0 + static_cast<Index>(k), fixed[k], 1.0);
    }
    A.setFromTriplets(trips.begin(), trips.end());
  }
  const SparseMatrix At = A.transpose();
  Vector b(m);
  b.head(m0) = problem.b();
  Vector lo = problem.lo();
  Vector hi = problem.hi();
  for (std::size_t k = 0; k < fixed.size(); ++k) {
    b[m0 + static_cast<Index>(k)] = lo[fixed[k]];
    lo[fixed[k]] = -kInf;
    hi[fixed[k]] = kInf;
  }

  std::vector<char> has_lo(n), has_hi(n);
  Index bound_count = 0;
  for (Index i = 0; i < n; ++i) {
    has_lo[i] = finite(lo[i]);
    has_hi[i] = finite(hi[i]);
    bound_count += has_lo[i] + has_hi[i];
  }

  // Primal and dual regularization of the quasi-definite KKT matrix;
  // iterative refinement against the exact matrix removes the bias.
  const double reg_primal = 1e-9;
  const double reg_dual = 1e-9;
  constexpr double kMaxReg = 1e-5;

  // KKT pattern: lower triangle of [[Q + S, A'], [A, -reg]].
  std::vector<Triplet> base;
  for (Index k = 0; k < Q.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(Q, k); it; ++it) {
      if (it.row() >= it.col()) base.emplace_back(it.row(), it.col(), it.value());
    }
  }
  for (Index k = 0; k < A.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(A, k); it; ++it) {
      base.emplace_back(n + it.row(), it.col(), it.value());
    }
  }
  for (Index r = 0; r < m; ++r) base.emplace_back(n + r, n + r, -reg_dual);
  const std::size_t diag_offset = base.size();
  for (Index i = 0; i < n; ++i) base.emplace_back(i, i, 0.0);

  SparseMatrix K(n + m, n + m);
  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower> ldlt;
  bool analyzed = false;

  // Starting point: regularized equality-constrained minimizer pushed
  // into the interior of the box.
  Vector x = Vector::Zero(n);
  Vector y = Vector::Zero(m);
  Vector zl = Vector::Zero(n);
  Vector zu = Vector::Zero(n);
  {
    std::vector<Triplet> trips = base;
    for (Index i = 0; i < n; ++i) {
      trips[diag_offset + i] = Triplet(i, i, 1.0);
    }
    K.setFromTriplets(trips.begin(), trips.end());
    ldlt.analyzePattern(K);
    analyzed = true;
    ldlt.factorize(K);
    if (ldlt.info() == Eigen::Success) {
      Vector rhs(n + m);
      rhs.head(n) = -problem.q();
      rhs.tail(m) = b;
      const Vector sol = ldlt.solve(rhs);
      if (sol.allFinite()) x = sol.head(n);
    }
  }
  for (Index i = 0; i < n; ++i) {
    if (has_lo[i] && has_hi[i]) {
      const double margin = std::min(1.0, 0.25 * (hi[i] - lo[i]));
      x[i] = std::clamp(x[i], lo[i] + margin, hi[i] - margin);
    } else if (has_lo[i]) {
      x[i] = std::max(x[i], lo[i] + 1.0);
    } else if (has_hi[i]) {
      x[i] = std::min(x[i], hi[i] - 1.0);
    }
    if (has_lo[i]) zl[i] = 1.0;
    if (has_hi[i]) zu[i] = 1.0;
  }

  QpSolution out;
  Vector sl(n), su(n), rd(n), rp(m);
  Vector dx(n), dw(m), dzl(n), dzu(n);
  Vector dx_aff(n), dzl_aff(n), dzu_aff(n);
  Vector cl(n), cu(n), sigma(n);

  auto evaluate = [&]() {
    for (Index i = 0; i < n; ++i) {
      sl[i] = has_lo[i] ? x[i] - lo[i] : 0.0;
      su[i] = has_hi[i] ? hi[i] - x[i] : 0.0;
    }
    rd = Q * x + problem.q() - At * y - zl + zu;
    rp = A * x - b;
  };
  auto mean_complementarity = [&]() {
    if (bound_count == 0) return 0.0;
    double acc = 0.0;
    for (Index i = 0; i < n; ++i) {
      if (has_lo[i]) acc += sl[i] * zl[i];
      if (has_hi[i]) acc += su[i] * zu[i];
    }
    return acc / static_cast<double>(bound_count);
  };

  // Solves [[Q+S, A'], [A, 0]] [dx; w] = [r1; r2] with refinement.
  auto kkt_solve = [&](const Vector& r1, const Vector& r2, Vector& sx, Vector& sw) {
    Vector rhs(n + m);
    rhs.head(n) = r1;
    rhs.tail(m) = r2;
    Vector sol = ldlt.solve(rhs);
    for (int pass = 0; pass < 3; ++pass) {
      Vector res(n + m);
      res.head(n) = r1 - (Q * sol.head(n) + sigma.cwiseProduct(sol.head(n)) +
                          At * sol.tail(m));
      res.tail(m) = r2 - A * sol.head(n);
      sol += ldlt.solve(res);
    }
    sx = sol.head(n);
    sw = sol.tail(m);
  };

  auto recover_dz = [&](const Vector& step_x, Vector& out_l, Vector& out_u) {
    for (Index i = 0; i < n; ++i) {
      out_l[i] = has_lo[i] ? (cl[i] - zl[i] * step_x[i]) / sl[i] : 0.0;
      out_u[i] = has_hi[i] ? (cu[i] + zu[i] * step_x[i]) / su[i] : 0.0;
    }
  };

  auto max_step = [&](const Vector& step_x, const Vector& step_l,
                      const Vector& step_u) {
    double alpha = 1.0;
    for (Index i = 0; i < n; ++i) {
      if (has_lo[i]) {
        if (step_x[i] < 0.0) alpha = std::min(alpha, -sl[i] / step_x[i]);
        if (step_l[i] < 0.0) alpha = std::min(alpha, -zl[i] / step_l[i]);
      }
      if (has_hi[i]) {
        if (step_x[i] > 0.0) alpha = std::min(alpha, su[i] / step_x[i]);
        if (step_u[i] < 0.0) alpha = std::min(alpha, -zu[i] / step_u[i]);
      }
    }
    return alpha;
  };

  double best_rp = kInf;
  std::size_t best_iter = 0;
  // Numerical breakdown while the primal residual has stopped moving is the
  // same signal as the stall window, reached early.
  auto breakdown_status = [&](std::size_t at) {
    return out.primal_residual > settings.tol && at - best_iter >= 3
               ? QpStatus::Infeasible
               : QpStatus::MaxIterations;
  };
  out.status = QpStatus::MaxIterations;
  bool broke_down = false;

  std::size_t iter = 0;
  for (;; ++iter) {
    evaluate();
    const double mu = mean_complementarity();
    out.primal_residual = inf_norm(rp);
    out.dual_residual = inf_norm(rd);
    out.complementarity = mu;
    out.iterations = iter;

    if (out.primal_residual <= settings.tol && out.dual_residual <= settings.tol &&
        mu <= settings.tol) {
      out.status = QpStatus::Optimal;
      break;
    }
    if (out.primal_residual < 0.99 * best_rp) {
      best_rp = out.primal_residual;
      best_iter = iter;
    } else if (out.primal_residual > settings.tol &&
               iter - best_iter >= settings.stall_window) {
      out.status = QpStatus::Infeasible;
      break;
    }
    if (iter >= settings.max_iter) break;

    for (Index i = 0; i < n; ++i) {
      double s = 0.0;
      if (has_lo[i]) s += zl[i] / sl[i];
      if (has_hi[i]) s += zu[i] / su[i];
      sigma[i] = s;
    }
    // Huge barrier weights near active bounds can wipe out a pivot; retry
    // with heavier regularization before giving up.
    bool factored = false;
    for (double reg = reg_primal; reg <= kMaxReg && !factored; reg *= 100.0) {
      std::vector<Triplet> trips = base;
      for (Index i = 0; i < n; ++i) {
        trips[diag_offset + i] = Triplet(i, i, sigma[i] + reg);
      }
      for (Index r = 0; r < m; ++r) {
        trips[static_cast<std::size_t>(diag_offset) - static_cast<std::size_t>(m) +
              static_cast<std::size_t>(r)] = Triplet(n + r, n + r, -reg);
      }
      K.setFromTriplets(trips.begin(), trips.end());
      if (!analyzed) {
        ldlt.analyzePattern(K);
        analyzed = true;
      }
      ldlt.factorize(K);
      factored = ldlt.info() == Eigen::Success;
    }
    if (!factored) {
      out.status = breakdown_status(iter);
      broke_down = true;
      break;
    }

    // Predictor.
    for (Index i = 0; i < n; ++i) {
      cl[i] = has_lo[i] ? -sl[i] * zl[i] : 0.0;
      cu[i] = has_hi[i] ? -su[i] * zu[i] : 0.0;
    }
    auto newton_rhs = [&]() {
      Vector r1 = -rd;
      for (Index i = 0; i < n; ++i) {
        if (has_lo[i]) r1[i] += cl[i] / sl[i];
        if (has_hi[i]) r1[i] -= cu[i] / su[i];
      }
      return r1;
    };
    kkt_solve(newton_rhs(), -rp, dx_aff, dw);
    recover_dz(dx_aff, dzl_aff, dzu_aff);
    const double alpha_aff = max_step(dx_aff, dzl_aff, dzu_aff);

    double mu_aff = 0.0;
    if (bound_count > 0) {
      for (Index i = 0; i < n; ++i) {
        if (has_lo[i]) {
          mu_aff += (sl[i] + alpha_aff * dx_aff[i]) * (zl[i] + alpha_aff * dzl_aff[i]);
        }
        if (has_hi[i]) {
          mu_aff += (su[i] - alpha_aff * dx_aff[i]) * (zu[i] + alpha_aff * dzu_aff[i]);
        }
      }
      mu_aff /= static_cast<double>(bound_count);
    }
    const double centering = mu > 0.0 ? std::pow(mu_aff / mu, 3.0) : 0.0;

    // Corrector.
    for (Index i = 0; i < n; ++i) {
      cl[i] = has_lo[i]
                  ? centering * mu - sl[i] * zl[i] - dx_aff[i] * dzl_aff[i]
                  : 0.0;
      cu[i] = has_hi[i]
                  ? centering * mu - su[i] * zu[i] + dx_aff[i] * dzu_aff[i]
                  : 0.0;
    }
    kkt_solve(newton_rhs(), -rp, dx, dw);
    recover_dz(dx, dzl, dzu);
    const double alpha = std::min(1.0, 0.995 * max_step(dx, dzl, dzu));

    Vector x_next = x + alpha * dx;
    bool interior = x_next.allFinite() && dzl.allFinite() && dzu.allFinite() &&
                    dw.allFinite();
    for (Index i = 0; interior && i < n; ++i) {
      if (has_lo[i] && !(x_next[i] > lo[i])) interior = false;
      if (has_hi[i] && !(x_next[i] < hi[i])) interior = false;
    }
    if (!interior) {
      out.status = breakdown_status(iter);
      broke_down = true;
      break;
    }
    x = std::move(x_next);
    y -= alpha * dw;
    zl += alpha * dzl;
    zu += alpha * dzu;
  }

  // A breakdown close to the optimum usually still identifies the active
  // set, in which case the polished point is an exact answer.
  const bool try_polish =
      out.status == QpStatus::Optimal || (broke_down && out.status != QpStatus::Infeasible);
  if (try_polish &&
      polish(problem, A, b, lo, hi, has_lo, has_hi, settings.tol, x, y, zl, zu, out)) {
    out.status = QpStatus::Optimal;
  }
  out.x = x;
  out.y = y.head(m0);
  out.objective = problem.objective(x);
  return out;
}

}  // namespace tegrid::qp
