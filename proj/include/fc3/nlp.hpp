#pragma once

#include <type_traits>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fc3::nlp {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// A vector-valued differentiable function of the decision vector.
/// `eval` must resize and fill `value` (dim) and `jacobian` (dim x n).
template <typename Scalar>
struct Term {
  int dim = 0;
  std::function<void(const Vec<Scalar>& x, Vec<Scalar>& value, Mat<Scalar>& jacobian)> eval;
  Scalar weight = Scalar(1);  // residual terms only
  std::string label;
};

/// min sum_k w_k |r_k(x)|^2  s.t.  h(x) = 0, g(x) <= 0, lower <= x <= upper.
template <typename Scalar>
struct Problem {
  int dim = 0;
  std::vector<Term<Scalar>> residuals;
  std::vector<Term<Scalar>> equalities;
  std::vector<Term<Scalar>> inequalities;
  std::optional<Vec<Scalar>> lower;
  std::optional<Vec<Scalar>> upper;
};

template <typename Scalar>
struct Options {
  Scalar mu0 = Scalar(1);
  Scalar mu_growth = Scalar(5);
  Scalar tol_feas = Scalar(1e-4);
  Scalar tol_kkt = Scalar(1e-5);
  int max_outer = 20;
  int max_inner = 50;
  Scalar armijo = Scalar(0.01);
  Scalar damping = Scalar(1e-10);
  Scalar min_step = Scalar(1e-12);
};

template <typename Scalar>
struct Multipliers {
  Vec<Scalar> ineq;  // one per inequality row (bounds last)
  Vec<Scalar> eq;
  Scalar mu = Scalar(1);
};

template <typename Scalar>
struct Solution {
  Vec<Scalar> x_star;
  bool feasible = false;
  Scalar max_violation = Scalar(0);
  Scalar kkt_residual = Scalar(0);
  int outer_iterations = 0;
  int inner_iterations = 0;
  Scalar objective = Scalar(0);
  Multipliers<Scalar> multipliers;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename Scalar>
struct Stacked {
  Vec<Scalar> r, g, h;
  Mat<Scalar> Jr, Jg, Jh;
};

template <typename Scalar>
int rows_of(const std::vector<Term<Scalar>>& terms) {
  int n = 0;
  for (const auto& t : terms) n += t.dim;
  return n;
}

template <typename Scalar>
void stack(const std::vector<Term<Scalar>>& terms, const Vec<Scalar>& x, bool weighted, Vec<Scalar>& v,
           Mat<Scalar>& J, int extra_rows = 0) {
  const int n = static_cast<int>(x.size());
  const int rows = rows_of(terms);
  v.resize(rows + extra_rows);
  J.setZero(rows + extra_rows, n);
  Vec<Scalar> tv;
  Mat<Scalar> tJ;
  int row = 0;
  for (const auto& t : terms) {
    t.eval(x, tv, tJ);
    if (tv.size() != t.dim || tJ.rows() != t.dim || tJ.cols() != n)
      throw NumericError("term '" + t.label + "' returned inconsistent dimensions");
    if (!tv.allFinite() || !tJ.allFinite()) throw NumericError("term '" + t.label + "' returned a non-finite value");
    if (weighted && t.weight != Scalar(1)) {
      using std::sqrt;
      const Scalar s = sqrt(t.weight);
      v.segment(row, t.dim) = s * tv;
      J.block(row, 0, t.dim, n) = s * tJ;
    } else {
      v.segment(row, t.dim) = tv;
      J.block(row, 0, t.dim, n) = tJ;
    }
    row += t.dim;
  }
}

template <typename Scalar>
Stacked<Scalar> evaluate(const Problem<Scalar>& p, const Vec<Scalar>& x) {
  Stacked<Scalar> s;
  const int nb = (p.lower ? p.dim : 0) + (p.upper ? p.dim : 0);
  stack(p.residuals, x, true, s.r, s.Jr);
  stack(p.equalities, x, false, s.h, s.Jh);
  stack(p.inequalities, x, false, s.g, s.Jg, nb);
  int row = rows_of(p.inequalities);
  if (p.upper) {
    for (int i = 0; i < p.dim; ++i, ++row) {
      s.g(row) = x(i) - (*p.upper)(i);
      s.Jg(row, i) = Scalar(1);
    }
  }
  if (p.lower) {
    for (int i = 0; i < p.dim; ++i, ++row) {
      s.g(row) = (*p.lower)(i) - x(i);
      s.Jg(row, i) = Scalar(-1);
    }
  }
  return s;
}

template <typename Scalar>
Scalar max_violation(const Stacked<Scalar>& s) {
  Scalar v = Scalar(0);
  if (s.g.size()) v = std::max(v, s.g.maxCoeff());
  if (s.h.size()) v = std::max(v, s.h.cwiseAbs().maxCoeff());
  return v;
}

// Powell-Hestenes-Rockafellar augmented Lagrangian.
template <typename Scalar>
Scalar merit(const Stacked<Scalar>& s, const Multipliers<Scalar>& m) {
  Scalar f = s.r.squaredNorm();
  const Scalar mu = m.mu;
  for (int i = 0; i < s.g.size(); ++i) {
    const Scalar shifted = std::max(Scalar(0), s.g(i) + m.ineq(i) / (Scalar(2) * mu));
    f += mu * shifted * shifted - m.ineq(i) * m.ineq(i) / (Scalar(4) * mu);
  }
  for (int j = 0; j < s.h.size(); ++j) f += mu * s.h(j) * s.h(j) + m.eq(j) * s.h(j);
  return f;
}

template <typename Scalar>
void gradient_and_hessian(const Stacked<Scalar>& s, const Multipliers<Scalar>& m, Vec<Scalar>& grad,
                          Mat<Scalar>& H) {
  const Scalar mu = m.mu;
  grad = Scalar(2) * s.Jr.transpose() * s.r;
  H = Scalar(2) * s.Jr.transpose() * s.Jr;
  for (int i = 0; i < s.g.size(); ++i) {
    const Scalar coeff = Scalar(2) * mu * s.g(i) + m.ineq(i);
    if (coeff <= Scalar(0)) continue;
    const auto row = s.Jg.row(i);
    grad += coeff * row.transpose();
    H += Scalar(2) * mu * row.transpose() * row;
  }
  if (s.h.size()) {
    grad += s.Jh.transpose() * (Scalar(2) * mu * s.h + m.eq);
    H += Scalar(2) * mu * s.Jh.transpose() * s.Jh;
  }
}

template <typename Scalar>
Vec<Scalar> solve_damped(const Mat<Scalar>& H, const Vec<Scalar>& grad, Scalar& damping) {
  const int n = static_cast<int>(grad.size());
  const Scalar scale = std::max(Scalar(1), H.diagonal().cwiseAbs().maxCoeff());
  for (int attempt = 0; attempt < 30; ++attempt) {
    Mat<Scalar> A = H;
    A.diagonal().array() += damping * scale;
    Eigen::LDLT<Mat<Scalar>> ldlt(A);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
      Vec<Scalar> step = ldlt.solve(-grad);
      if (step.allFinite()) return step;
    }
    damping = std::max(damping * Scalar(10), Scalar(1e-12));
  }
  return Vec<Scalar>::Zero(n);
}

}  // namespace detail

template <typename Scalar>
Multipliers<Scalar> zero_multipliers(const Problem<Scalar>& p, Scalar mu = Scalar(1)) {
  const int ng = detail::rows_of(p.inequalities) + (p.lower ? p.dim : 0) + (p.upper ? p.dim : 0);
  return {Vec<Scalar>::Zero(ng), Vec<Scalar>::Zero(detail::rows_of(p.equalities)), mu};
}

/// Gauss-Newton direction of the augmented Lagrangian at `x` with
/// Levenberg damping `damping` (relative to the largest Hessian diagonal).
template <typename Scalar>
Vec<Scalar> newton_step(const Problem<Scalar>& p, const std::type_identity_t<Vec<Scalar>>& x, const Multipliers<Scalar>& m,
                        Scalar damping = Scalar(1e-10)) {
  const auto s = detail::evaluate(p, x);
  Vec<Scalar> grad;
  Mat<Scalar> H;
  detail::gradient_and_hessian(s, m, grad, H);
  return detail::solve_damped(H, grad, damping);
}

/// Augmented Lagrangian outer loop around a damped Gauss-Newton inner loop
/// with backtracking line search. Never throws on non-convergence; the
/// returned Solution carries the diagnostics.
template <typename Scalar>
Solution<Scalar> solve(const Problem<Scalar>& p, const std::type_identity_t<Vec<Scalar>>& x_init,
                       const std::type_identity_t<Options<Scalar>>& opt = {}) {
  if (x_init.size() != p.dim) throw std::invalid_argument("initial point has wrong dimension");
  Solution<Scalar> sol;
  Multipliers<Scalar> m = zero_multipliers(p, opt.mu0);
  Vec<Scalar> x = x_init;
  Scalar damping = opt.damping;
  Scalar prev_violation = std::numeric_limits<Scalar>::infinity();
  Vec<Scalar> grad;
  Mat<Scalar> H;

  auto s = detail::evaluate(p, x);
  for (int outer = 0; outer < opt.max_outer; ++outer) {
    sol.outer_iterations = outer + 1;
    for (int inner = 0; inner < opt.max_inner; ++inner) {
      detail::gradient_and_hessian(s, m, grad, H);
      if (grad.template lpNorm<Eigen::Infinity>() <= opt.tol_kkt) break;
      ++sol.inner_iterations;
      const Scalar f0 = detail::merit(s, m);
      bool accepted = false;
      for (int retry = 0; retry < 6 && !accepted; ++retry) {
        const Vec<Scalar> step = detail::solve_damped(H, grad, damping);
        const Scalar slope = grad.dot(step);
        if (!(slope < Scalar(0))) {
          damping = std::max(damping * Scalar(100), Scalar(1e-8));
          continue;
        }
        Scalar alpha = Scalar(1);
        while (alpha > Scalar(1e-10)) {
          Vec<Scalar> trial = x + alpha * step;
          auto st = detail::evaluate(p, trial);
          if (detail::merit(st, m) <= f0 + opt.armijo * alpha * slope) {
            x = std::move(trial);
            s = std::move(st);
            accepted = true;
            break;
          }
          alpha *= Scalar(0.5);
        }
        if (accepted) {
          damping = std::max(opt.damping, damping * Scalar(0.1));
          if ((alpha * step).template lpNorm<Eigen::Infinity>() < opt.min_step) inner = opt.max_inner;
        } else {
          damping = std::max(damping * Scalar(100), Scalar(1e-8));
        }
      }
      if (!accepted) break;
    }

    const Scalar v = detail::max_violation(s);
    // First-order multiplier update; afterwards the inner gradient equals the
    // Lagrangian gradient at the new multipliers.
    for (int i = 0; i < s.g.size(); ++i) m.ineq(i) = std::max(Scalar(0), m.ineq(i) + Scalar(2) * m.mu * s.g(i));
    if (s.h.size()) m.eq += Scalar(2) * m.mu * s.h;
    Vec<Scalar> lag = Scalar(2) * s.Jr.transpose() * s.r;
    if (s.g.size()) lag += s.Jg.transpose() * m.ineq;
    if (s.h.size()) lag += s.Jh.transpose() * m.eq;
    sol.kkt_residual = lag.size() ? lag.template lpNorm<Eigen::Infinity>() : Scalar(0);
    sol.max_violation = v;
    if (v <= opt.tol_feas && sol.kkt_residual <= opt.tol_kkt) break;
    if (v > Scalar(0.5) * prev_violation) m.mu *= opt.mu_growth;
    prev_violation = v;
  }

  sol.x_star = x;
  sol.max_violation = detail::max_violation(s);
  sol.feasible = sol.max_violation <= opt.tol_feas;
  sol.objective = s.r.squaredNorm();
  sol.multipliers = m;
  return sol;
}

}  // namespace fc3::nlp
