#pragma once

#include "hedonic/core_types.hpp"
#include "hedonic/random.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace hedonic {

/// Intercept plus coefficients over the columns of a DesignMatrix. When the
/// matrix was standardized, the coefficients are in standardized units and
/// `standardization` maps raw rows into that space.
struct LinearFit {
  double intercept = 0.0;
  Eigen::VectorXd coefficients;
  double lambda = 0.0;
  std::vector<std::string> column_names;
  std::optional<Standardization> standardization;
};

class RankDeficientError : public Error {
 public:
  RankDeficientError(const std::string& what, std::vector<std::string> dependent)
      : Error(what), dependent_columns(std::move(dependent)) {}
  std::vector<std::string> dependent_columns;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, Eigen::VectorXd iterate, int cycles)
      : Error(what), last_iterate(std::move(iterate)), cycles(cycles) {}
  Eigen::VectorXd last_iterate;
  int cycles;
};

inline constexpr const char* kInterceptName = "(intercept)";

namespace detail {

inline Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& X) {
  Eigen::MatrixXd Z(X.rows(), X.cols() + 1);
  Z.col(0).setOnes();
  Z.rightCols(X.cols()) = X;
  return Z;
}

}  // namespace detail

/// Least squares with a free intercept, solved by column-pivoted QR.
inline LinearFit fit_ols(const DesignMatrix& dm) {
  const Index n = dm.rows();
  const Index p = dm.cols();
  if (n <= p + 1)
    throw ArgumentError("OLS needs more rows than regressors plus one (n=" + std::to_string(n) +
                        ", p=" + std::to_string(p) + ")");
  const Eigen::MatrixXd Z = detail::with_intercept(dm.X);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
  qr.setThreshold(1e-10);
  if (qr.rank() < Z.cols()) {
    std::vector<std::string> dependent;
    const auto& perm = qr.colsPermutation().indices();
    for (Index k = qr.rank(); k < Z.cols(); ++k) {
      const Index c = perm(k);
      dependent.push_back(c == 0 ? kInterceptName : dm.column_names[static_cast<std::size_t>(c - 1)]);
    }
    std::string list;
    for (const auto& d : dependent) list += (list.empty() ? "" : ", ") + d;
    throw RankDeficientError("design matrix is rank deficient; linearly dependent: " + list,
                             std::move(dependent));
  }
  const Eigen::VectorXd theta = qr.solve(dm.y);
  LinearFit fit;
  fit.intercept = theta(0);
  fit.coefficients = theta.tail(p);
  fit.column_names = dm.column_names;
  fit.standardization = dm.standardization;
  return fit;
}

/// ŷ = intercept + transform(rows)·β, with rows in original units.
inline Eigen::VectorXd predict(const LinearFit& fit, const Eigen::MatrixXd& rows) {
  if (rows.cols() != fit.coefficients.size())
    throw ArgumentError("predict: expected " + std::to_string(fit.coefficients.size()) +
                        " columns, got " + std::to_string(rows.cols()));
  Eigen::VectorXd yhat;
  if (fit.standardization)
    yhat = apply_standardization(*fit.standardization, rows) * fit.coefficients;
  else
    yhat = rows * fit.coefficients;
  yhat.array() += fit.intercept;
  return yhat;
}

inline Eigen::VectorXd residuals(const DesignMatrix& dm, const LinearFit& fit) {
  Eigen::VectorXd e = dm.y - dm.X * fit.coefficients;
  e.array() -= fit.intercept;
  return e;
}

namespace detail {

/// (ZᵀZ)⁻¹ for Z = [1 | X].
inline Eigen::MatrixXd bread(const DesignMatrix& dm) {
  const Eigen::MatrixXd Z = with_intercept(dm.X);
  const Eigen::MatrixXd ztz = Z.transpose() * Z;
  return ztz.ldlt().solve(Eigen::MatrixXd::Identity(ztz.rows(), ztz.cols()));
}

inline Eigen::VectorXd sandwich_se(const Eigen::MatrixXd& bread, const Eigen::MatrixXd& meat, double factor) {
  const Eigen::MatrixXd v = factor * bread * meat * bread;
  return v.diagonal().cwiseMax(0.0).cwiseSqrt();
}

}  // namespace detail

/// Classical homoskedastic OLS standard errors; index 0 is the intercept.
inline Eigen::VectorXd classical_se(const DesignMatrix& dm, const LinearFit& fit) {
  const double n = static_cast<double>(dm.rows());
  const double k = static_cast<double>(dm.cols() + 1);
  const Eigen::VectorXd e = residuals(dm, fit);
  const double sigma2 = e.squaredNorm() / (n - k);
  return (sigma2 * detail::bread(dm).diagonal()).cwiseSqrt();
}

/// HC1 heteroskedasticity-robust standard errors; index 0 is the intercept.
inline Eigen::VectorXd hc1_se(const DesignMatrix& dm, const LinearFit& fit) {
  const Eigen::MatrixXd Z = detail::with_intercept(dm.X);
  const Eigen::VectorXd e = residuals(dm, fit);
  const Eigen::MatrixXd scores = Z.array().colwise() * e.array();
  const double n = static_cast<double>(dm.rows());
  const double k = static_cast<double>(Z.cols());
  return detail::sandwich_se(detail::bread(dm), scores.transpose() * scores, n / (n - k));
}

/// CR1 cluster-robust standard errors clustered on `dm.clusters`; index 0
/// is the intercept.
inline Eigen::VectorXd cluster_robust_se(const DesignMatrix& dm, const LinearFit& fit) {
  if (dm.clusters.size() != static_cast<std::size_t>(dm.rows()))
    throw ArgumentError("cluster labels do not match row count");
  const Eigen::MatrixXd Z = detail::with_intercept(dm.X);
  const Eigen::VectorXd e = residuals(dm, fit);
  std::map<std::string, Eigen::VectorXd> score_sums;
  for (Index i = 0; i < Z.rows(); ++i) {
    auto [it, inserted] = score_sums.try_emplace(dm.clusters[static_cast<std::size_t>(i)]);
    if (inserted) it->second = Eigen::VectorXd::Zero(Z.cols());
    it->second += e(i) * Z.row(i).transpose();
  }
  const double G = static_cast<double>(score_sums.size());
  if (score_sums.size() < 2) throw ArgumentError("need >=2 clusters");
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(Z.cols(), Z.cols());
  for (const auto& [cluster, s] : score_sums) meat.noalias() += s * s.transpose();
  const double n = static_cast<double>(dm.rows());
  const double k = static_cast<double>(Z.cols());
  const double c = G / (G - 1.0) * (n - 1.0) / (n - k);
  return detail::sandwich_se(detail::bread(dm), meat, c);
}

inline double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

struct LassoOptions {
  double tol = 1e-7;
  int max_cycles = 10000;
  /// Record the objective after every full or active-set pass.
  bool record_objective = false;
};

/// Centred sufficient statistics for a LASSO problem.
struct GramProblem {
  Eigen::MatrixXd gram;  // X̃ᵀX̃ with X̃ column-centred
  Eigen::VectorXd xty;   // X̃ᵀỹ
  double yty = 0.0;      // ỹᵀỹ
  Eigen::VectorXd x_mean;
  double y_mean = 0.0;
  Index n = 0;

  /// λ at which every coefficient is zero.
  double lambda_max() const {
    return n == 0 || xty.size() == 0 ? 0.0 : xty.cwiseAbs().maxCoeff() / static_cast<double>(n);
  }

  double objective(const Eigen::VectorXd& beta, double lambda) const {
    const double rss = yty - 2.0 * xty.dot(beta) + beta.dot(gram * beta);
    return rss / (2.0 * static_cast<double>(n)) + lambda * beta.lpNorm<1>();
  }

  static GramProblem from(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    GramProblem g;
    g.n = X.rows();
    g.x_mean = X.colwise().mean().transpose();
    g.y_mean = y.mean();
    const Eigen::MatrixXd Xc = X.rowwise() - g.x_mean.transpose();
    const Eigen::VectorXd yc = y.array() - g.y_mean;
    g.gram = Eigen::MatrixXd::Zero(X.cols(), X.cols());
    g.gram.selfadjointView<Eigen::Lower>().rankUpdate(Xc.transpose());
    g.gram = g.gram.selfadjointView<Eigen::Lower>();
    g.xty = Xc.transpose() * yc;
    g.yty = yc.squaredNorm();
    return g;
  }
};

struct LassoSolution {
  Eigen::VectorXd beta;
  int cycles = 0;
  int active_sweeps = 0;
  std::vector<double> objective_history;
};

namespace detail {

inline constexpr Index kNewtonMaxActive = 2000;
inline constexpr int kNewtonMaxSteps = 50;

/// Exact minimizer t ≥ 0 of the LASSO objective along β + t·d, where
/// `grad` = X̃ᵀ(ỹ − X̃β) and `gd` = X̃ᵀX̃·d. The objective along the ray is
/// convex piecewise quadratic with kinks where a coordinate crosses zero.
/// Sets `zeroed` to the coordinate sitting on a kink at t, or -1.
inline double lasso_ray_minimizer(const Eigen::VectorXd& beta, const Eigen::VectorXd& grad, const Eigen::VectorXd& d,
                                  const Eigen::VectorXd& gd, double threshold, Index& zeroed) {
  zeroed = -1;
  const double a = d.dot(gd);
  const double c = d.dot(grad);
  double slope = 0.0;  // Σ d_j·sign(β_j + t·d_j) just after t = 0
  std::vector<std::pair<double, Index>> kinks;
  for (Index j = 0; j < d.size(); ++j) {
    if (d(j) == 0.0) continue;
    if (beta(j) == 0.0) {
      slope += std::abs(d(j));
    } else {
      slope += beta(j) > 0.0 ? d(j) : -d(j);
      if ((beta(j) > 0.0) != (d(j) > 0.0)) kinks.emplace_back(-beta(j) / d(j), j);
    }
  }
  std::sort(kinks.begin(), kinks.end());
  double start = 0.0;
  for (std::size_t k = 0;; ++k) {
    const double end = k < kinks.size() ? kinks[k].first : std::numeric_limits<double>::infinity();
    const double offset = threshold * slope - c;  // φ'(t) = a·t + offset on this segment
    if (a * start + offset >= 0.0) return start;
    if (a > 0.0 && -offset / a < end) return -offset / a;
    if (k == kinks.size()) return 0.0;  // unbounded descent: leave it to the sweeps
    start = end;
    zeroed = kinks[k].second;
    slope += 2.0 * std::abs(d(kinks[k].second));
  }
}

/// Cyclic coordinate descent for (1/2n)‖ỹ − X̃β‖² + λ‖β‖₁ on Gram
/// statistics, warm-started from `beta`. Alternates full sweeps with sweeps
/// over the current nonzero set.
inline LassoSolution lasso_cd(const GramProblem& g, double lambda, Eigen::VectorXd beta,
                              const LassoOptions& opts) {
  if (lambda < 0.0 || !std::isfinite(lambda)) throw ArgumentError("lambda must be finite and >= 0");
  const Index p = g.gram.cols();
  const double threshold = lambda * static_cast<double>(g.n);
  if (beta.size() != p) beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd grad = g.xty - g.gram * beta;  // X̃ᵀ(ỹ − X̃β)
  LassoSolution sol;

  const auto update = [&](Index j) {
    const double gjj = g.gram(j, j);
    if (gjj <= 0.0) return 0.0;
    const double old = beta(j);
    const double fresh = soft_threshold(grad(j) + gjj * old, threshold) / gjj;
    const double delta = fresh - old;
    if (delta != 0.0) {
      grad.noalias() -= delta * g.gram.col(j);
      beta(j) = fresh;
    }
    return std::abs(delta);
  };
  const auto record = [&] {
    if (opts.record_objective) sol.objective_history.push_back(g.objective(beta, lambda));
  };

  std::vector<Index> active;
  // Slow sweeps mean an ill-conditioned active block. Step toward the
  // sign-fixed minimizer on the nonzero set, stopping at the first sign change.
  // Returns true when the step stopped on a sign change and may be repeated.
  const auto newton_step = [&]() -> bool {
    std::vector<Index> nz;
    for (Index j : active)
      if (beta(j) != 0.0) nz.push_back(j);
    const auto m = static_cast<Index>(nz.size());
    if (m == 0 || m > kNewtonMaxActive) return false;
    Eigen::MatrixXd gaa(m, m);
    Eigen::VectorXd rhs(m), signs(m);
    for (Index i = 0; i < m; ++i) {
      for (Index k = 0; k < m; ++k) gaa(i, k) = g.gram(nz[static_cast<std::size_t>(i)], nz[static_cast<std::size_t>(k)]);
      const Index j = nz[static_cast<std::size_t>(i)];
      signs(i) = beta(j) > 0.0 ? 1.0 : -1.0;
      rhs(i) = grad(j) - threshold * signs(i);
    }
    Eigen::VectorXd step;
    bool singular = false;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(gaa);
    if (ldlt.info() == Eigen::Success) {
      step = ldlt.solve(rhs);
      singular = !step.allFinite() || (gaa * step - rhs).norm() > 1e-8 * rhs.norm();
    } else {
      singular = true;
    }
    if (singular) {
      // The penalty is linear along the block's null space: move along the
      // null-space part of −sign(β) until a coefficient reaches zero.
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
      cod.setThreshold(1e-10);
      cod.compute(gaa);
      step = cod.rank() < m ? Eigen::VectorXd(cod.solve(gaa * signs) - signs) : Eigen::VectorXd(cod.solve(rhs));
    }
    if (!step.allFinite() || step.squaredNorm() == 0.0) return false;
    Eigen::VectorXd d = Eigen::VectorXd::Zero(p);
    for (Index i = 0; i < m; ++i) d(nz[static_cast<std::size_t>(i)]) = step(i);

    const double current = g.objective(beta, lambda);
    Eigen::VectorXd best;
    double best_obj = current;
    bool best_zeroes = false;
    // Exact minimizer up to the first sign change.
    const Eigen::VectorXd gd = g.gram * d;
    Index zeroed = -1;
    const double t = lasso_ray_minimizer(beta, grad, d, gd, threshold, zeroed);
    if (t > 0.0) {
      Eigen::VectorXd trial = beta + t * d;
      if (zeroed >= 0) trial(zeroed) = 0.0;
      const double obj = g.objective(trial, lambda);
      if (obj <= best_obj) {
        best = std::move(trial);
        best_obj = obj;
        best_zeroes = zeroed >= 0;
      }
    }
    // Projected step: coefficients that would change sign are set to zero,
    // which can drop several at once.
    if (!singular) {
      for (double scale = 1.0; scale > 1e-6; scale *= 0.5) {
        Eigen::VectorXd trial = beta + scale * d;
        bool clipped = false;
        for (Index i = 0; i < m; ++i) {
          const Index j = nz[static_cast<std::size_t>(i)];
          if (trial(j) * signs(i) <= 0.0) {
            trial(j) = 0.0;
            clipped = true;
          }
        }
        const double obj = g.objective(trial, lambda);
        if (obj < best_obj) {
          best = std::move(trial);
          best_obj = obj;
          best_zeroes = clipped;
          break;
        }
        if (!clipped) break;
      }
    }
    if (best.size() == 0 || !(best_obj <= current)) return false;
    beta = std::move(best);
    grad = g.xty - g.gram * beta;
    return best_zeroes;
  };

  // Only full sweeps count as cycles; each active-set phase is capped
  // separately at max_cycles sweeps.
  while (true) {
    double max_change = 0.0;
    for (Index j = 0; j < p; ++j) max_change = std::max(max_change, update(j));
    ++sol.cycles;
    record();
    if (max_change < opts.tol) break;
    if (sol.cycles >= opts.max_cycles)
      throw ConvergenceError("LASSO did not converge after " + std::to_string(sol.cycles) + " cycles",
                             beta, sol.cycles);
    active.clear();
    for (Index j = 0; j < p; ++j)
      if (beta(j) != 0.0) active.push_back(j);
    for (int sweep = 1;; ++sweep) {
      double active_change = 0.0;
      for (Index j : active) active_change = std::max(active_change, update(j));
      ++sol.active_sweeps;
      if (sweep % 10 == 0 && active_change >= opts.tol)
        for (int step = 0; step < kNewtonMaxSteps && newton_step(); ++step) {
        }
      record();
      if (active_change < opts.tol) break;
      if (sweep >= opts.max_cycles)
        throw ConvergenceError("LASSO active set did not converge after " + std::to_string(sweep) + " sweeps",
                               beta, sol.cycles);
    }
  }
  sol.beta = std::move(beta);
  return sol;
}

inline LinearFit lasso_fit_from(const GramProblem& g, const Eigen::VectorXd& beta, double lambda,
                                const DesignMatrix& dm) {
  LinearFit fit;
  fit.coefficients = beta;
  fit.intercept = g.y_mean - g.x_mean.dot(beta);
  fit.lambda = lambda;
  fit.column_names = dm.column_names;
  fit.standardization = dm.standardization;
  return fit;
}

}  // namespace detail

/// LASSO by cyclic coordinate descent with an unpenalized intercept.
inline LinearFit fit_lasso(const DesignMatrix& dm, double lambda, const LassoOptions& opts = {},
                           LassoSolution* diagnostics = nullptr) {
  if (dm.rows() < 1) throw ArgumentError("LASSO needs at least one row");
  const auto g = GramProblem::from(dm.X, dm.y);
  auto sol = detail::lasso_cd(g, lambda, Eigen::VectorXd::Zero(dm.cols()), opts);
  auto fit = detail::lasso_fit_from(g, sol.beta, lambda, dm);
  if (diagnostics) *diagnostics = std::move(sol);
  return fit;
}

/// Log-spaced grid from λ_max down to λ_max·min_ratio.
inline std::vector<double> lambda_grid(double lambda_max, int grid_size, double min_ratio = 1e-4) {
  if (grid_size < 2) throw ArgumentError("lambda grid needs at least two points");
  std::vector<double> grid(static_cast<std::size_t>(grid_size));
  if (lambda_max <= 0.0) {
    std::fill(grid.begin(), grid.end(), 0.0);
    return grid;
  }
  const double lo = std::log(lambda_max * min_ratio);
  const double hi = std::log(lambda_max);
  for (int i = 0; i < grid_size; ++i)
    grid[static_cast<std::size_t>(i)] = std::exp(hi + (lo - hi) * i / (grid_size - 1));
  grid.front() = lambda_max;
  return grid;
}

struct LambdaSelection {
  double lambda = 0.0;
  std::size_t index = 0;
  std::vector<double> grid;
  std::vector<double> cv_mse;
};

struct LambdaSearchOptions {
  int grid_size = 100;
  int folds = 5;
  double min_ratio = 1e-4;
  LassoOptions lasso;
};

/// k-fold cross-validated choice of λ on a log grid; ties go to the larger λ.
inline LambdaSelection cross_validate_lambda(const DesignMatrix& dm, const LambdaSearchOptions& opts,
                                             std::uint64_t seed) {
  if (opts.folds < 2) throw ArgumentError("cross-validation needs k >= 2");
  const Index n = dm.rows();
  if (n < opts.folds) throw ArgumentError("fewer rows than folds");
  const Index p = dm.cols();
  LambdaSelection sel;
  sel.grid = lambda_grid(GramProblem::from(dm.X, dm.y).lambda_max(), opts.grid_size, opts.min_ratio);
  sel.cv_mse.assign(sel.grid.size(), 0.0);

  Rng rng(seed);
  RowIndices order = iota_rows(n);
  shuffle_rows(order, rng);
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < order.size(); ++i)
    fold_of[static_cast<std::size_t>(order[i])] = static_cast<int>(i % static_cast<std::size_t>(opts.folds));

  // Raw cross products let each training Gram be obtained by subtraction.
  Eigen::MatrixXd xtx_all = Eigen::MatrixXd::Zero(p, p);
  xtx_all.selfadjointView<Eigen::Lower>().rankUpdate(dm.X.transpose());
  const Eigen::VectorXd xty_all = dm.X.transpose() * dm.y;
  const Eigen::VectorXd xsum_all = dm.X.colwise().sum().transpose();
  const double ysum_all = dm.y.sum();
  const double yy_all = dm.y.squaredNorm();

  for (int f = 0; f < opts.folds; ++f) {
    RowIndices held;
    for (Index i = 0; i < n; ++i)
      if (fold_of[static_cast<std::size_t>(i)] == f) held.push_back(i);
    const Index nh = static_cast<Index>(held.size());
    Eigen::MatrixXd Xh(nh, p);
    Eigen::VectorXd yh(nh);
    for (Index i = 0; i < nh; ++i) {
      Xh.row(i) = dm.X.row(held[static_cast<std::size_t>(i)]);
      yh(i) = dm.y(held[static_cast<std::size_t>(i)]);
    }
    Eigen::MatrixXd xtx_h = Eigen::MatrixXd::Zero(p, p);
    xtx_h.selfadjointView<Eigen::Lower>().rankUpdate(Xh.transpose());

    GramProblem g;
    g.n = n - nh;
    const double nt = static_cast<double>(g.n);
    g.x_mean = (xsum_all - Xh.colwise().sum().transpose()) / nt;
    g.y_mean = (ysum_all - yh.sum()) / nt;
    Eigen::MatrixXd raw = xtx_all - xtx_h;
    raw = raw.selfadjointView<Eigen::Lower>();
    g.gram = raw - nt * g.x_mean * g.x_mean.transpose();
    g.xty = (xty_all - Xh.transpose() * yh) - nt * g.y_mean * g.x_mean;
    g.yty = (yy_all - yh.squaredNorm()) - nt * g.y_mean * g.y_mean;

    Eigen::MatrixXd path(p, static_cast<Index>(sel.grid.size()));
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    for (std::size_t l = 0; l < sel.grid.size(); ++l) {
      beta = detail::lasso_cd(g, sel.grid[l], std::move(beta), opts.lasso).beta;
      path.col(static_cast<Index>(l)) = beta;
    }
    const Eigen::MatrixXd centered = Xh.rowwise() - g.x_mean.transpose();
    const Eigen::MatrixXd pred = centered * path;
    for (std::size_t l = 0; l < sel.grid.size(); ++l) {
      const Eigen::VectorXd err = (yh.array() - g.y_mean).matrix() - pred.col(static_cast<Index>(l));
      sel.cv_mse[l] += err.squaredNorm();
    }
  }
  for (auto& v : sel.cv_mse) v /= static_cast<double>(n);

  // Grid is descending, so strict improvement keeps the larger λ on ties.
  sel.index = 0;
  for (std::size_t l = 1; l < sel.cv_mse.size(); ++l)
    if (sel.cv_mse[l] < sel.cv_mse[sel.index] * (1.0 - 1e-12)) sel.index = l;
  sel.lambda = sel.grid[sel.index];
  return sel;
}

inline double select_lambda(const DesignMatrix& dm, int grid_size, int k, std::uint64_t seed) {
  LambdaSearchOptions opts;
  opts.grid_size = grid_size;
  opts.folds = k;
  return cross_validate_lambda(dm, opts, seed).lambda;
}

/// Penalized OLS as used for model comparison: λ chosen by inner
/// cross-validation, then refit on all rows along the same grid.
inline LinearFit fit_penalized_ols(const DesignMatrix& dm, const LambdaSearchOptions& opts, std::uint64_t seed) {
  const auto sel = cross_validate_lambda(dm, opts, seed);
  const auto g = GramProblem::from(dm.X, dm.y);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(dm.cols());
  for (std::size_t l = 0; l <= sel.index; ++l)
    beta = detail::lasso_cd(g, sel.grid[l], std::move(beta), opts.lasso).beta;
  return detail::lasso_fit_from(g, beta, sel.lambda, dm);
}

}  // namespace hedonic
