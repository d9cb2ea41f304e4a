#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace hedonic;

namespace {

DesignMatrix matrix_of(Eigen::MatrixXd X, Eigen::VectorXd y) {
  DesignMatrix dm;
  for (Index j = 0; j < X.cols(); ++j) dm.column_names.push_back("x" + std::to_string(j));
  dm.X = std::move(X);
  dm.y = std::move(y);
  for (Index i = 0; i < dm.rows(); ++i) {
    dm.ids.push_back(std::to_string(i));
    dm.clusters.push_back(std::to_string(i));
  }
  return dm;
}

Eigen::MatrixXd gaussian(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

/// Normal-equations oracle with an intercept column.
Eigen::VectorXd normal_equations(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  Eigen::MatrixXd Z(X.rows(), X.cols() + 1);
  Z << Eigen::VectorXd::Ones(X.rows()), X;
  return (Z.transpose() * Z).inverse() * Z.transpose() * y;
}

/// Centred columns with XᵀX = n·I.
Eigen::MatrixXd orthonormal_design(Index n, Index p, Rng& rng) {
  Eigen::MatrixXd raw = gaussian(n, p, rng);
  raw = raw.rowwise() - raw.colwise().mean();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, p);
  return Q * std::sqrt(static_cast<double>(n));
}

}  // namespace

TEST(FitOls, ExactLine) {
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(20, -3, 5);
  const auto fit = fit_ols(matrix_of(x, 2.0 * x.array() + 3.0));
  EXPECT_NEAR(fit.intercept, 3.0, 1e-10);
  EXPECT_NEAR(fit.coefficients(0), 2.0, 1e-10);
  EXPECT_LT((predict(fit, x) - (2.0 * x.array() + 3.0).matrix()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(FitOls, ConstantTarget) {
  Rng rng(1);
  const auto fit = fit_ols(matrix_of(gaussian(30, 3, rng), Eigen::VectorXd::Constant(30, 4.5)));
  EXPECT_NEAR(fit.intercept, 4.5, 1e-12);
  EXPECT_LT(fit.coefficients.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FitOls, MatchesNormalEquations) {
  Rng rng(2);
  const Eigen::MatrixXd X = gaussian(50, 5, rng);
  const Eigen::VectorXd y = X * Eigen::VectorXd::LinSpaced(5, -1, 1) + gaussian(50, 1, rng);
  const auto fit = fit_ols(matrix_of(X, y));
  const Eigen::VectorXd oracle = normal_equations(X, y);
  EXPECT_NEAR(fit.intercept, oracle(0), 1e-8 * std::max(1.0, std::abs(oracle(0))));
  for (Index j = 0; j < 5; ++j)
    EXPECT_NEAR(fit.coefficients(j), oracle(j + 1), 1e-8 * std::max(1.0, std::abs(oracle(j + 1))));
}

TEST(FitOls, ResidualsOrthogonalAndPermutationInvariant) {
  Rng rng(3);
  const Eigen::MatrixXd X = gaussian(80, 4, rng);
  const Eigen::VectorXd y = X.rowwise().sum() + gaussian(80, 1, rng);
  const auto dm = matrix_of(X, y);
  const auto fit = fit_ols(dm);
  const Eigen::VectorXd e = residuals(dm, fit);
  const double scale = y.cwiseAbs().maxCoeff();
  EXPECT_LT((X.transpose() * e).cwiseAbs().maxCoeff(), 1e-8 * 80 * scale);
  EXPECT_LT(std::abs(e.sum()), 1e-8 * 80 * scale);
  EXPECT_LE(e.squaredNorm() / 80, (y.array() - y.mean()).square().mean());

  RowIndices perm = iota_rows(80);
  shuffle_rows(perm, rng);
  Eigen::MatrixXd Xp(80, 4);
  Eigen::VectorXd yp(80);
  for (Index i = 0; i < 80; ++i) {
    Xp.row(i) = X.row(perm[static_cast<std::size_t>(i)]);
    yp(i) = y(perm[static_cast<std::size_t>(i)]);
  }
  const auto fp = fit_ols(matrix_of(Xp, yp));
  EXPECT_LT((fp.coefficients - fit.coefficients).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(FitOls, RankDeficiencyNamesDependentColumn) {
  Rng rng(4);
  Eigen::MatrixXd X = gaussian(40, 3, rng);
  X.col(2) = X.col(0) - 2.0 * X.col(1);
  try {
    fit_ols(matrix_of(X, gaussian(40, 1, rng)));
    FAIL() << "expected rank error";
  } catch (const RankDeficientError& e) {
    ASSERT_EQ(e.dependent_columns.size(), 1u);
    EXPECT_NE(std::string(e.what()).find(e.dependent_columns[0]), std::string::npos);
  }
  EXPECT_THROW(fit_ols(matrix_of(gaussian(4, 3, rng), gaussian(4, 1, rng))), ArgumentError);
}

TEST(Predict, HandComputedAndWidthChecked) {
  LinearFit fit;
  fit.intercept = 1.0;
  fit.coefficients = Eigen::Vector2d(2.0, -0.5);
  Eigen::MatrixXd rows(3, 2);
  rows << 1, 2, 0, 0, -1, 4;
  const Eigen::VectorXd yhat = predict(fit, rows);
  EXPECT_DOUBLE_EQ(yhat(0), 2.0);
  EXPECT_DOUBLE_EQ(yhat(1), 1.0);
  EXPECT_DOUBLE_EQ(yhat(2), -3.0);
  fit.standardization = Standardization{{1.0, 2.0}, {0.0, 0.5}};
  EXPECT_DOUBLE_EQ(predict(fit, rows)(0), 1.0 + 2.0 * 0.0 - 0.5 * 4.0);
  fit.coefficients.setZero();
  EXPECT_TRUE((predict(fit, rows).array() == 1.0).all());
  EXPECT_THROW(predict(fit, Eigen::MatrixXd(2, 3)), ArgumentError);
}

TEST(Lasso, OrthonormalDesignMatchesSoftThreshold) {
  Rng rng(5);
  const Index n = 64;
  const Eigen::MatrixXd X = orthonormal_design(n, 8, rng);
  ASSERT_LT((X.transpose() * X - n * Eigen::MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff(), 1e-9);
  const Eigen::VectorXd y = X * Eigen::VectorXd::LinSpaced(8, -1.5, 2.0) + 0.3 * gaussian(n, 1, rng);
  const auto dm = matrix_of(X, y);
  const Eigen::VectorXd ols = (X.transpose() * (y.array() - y.mean()).matrix()) / n;
  for (double lambda : {0.0, 0.05, 0.4, 1.0}) {
    const auto fit = fit_lasso(dm, lambda);
    for (Index j = 0; j < 8; ++j) {
      const double oracle = (ols(j) > 0 ? 1.0 : -1.0) * std::max(std::abs(ols(j)) - lambda, 0.0);
      EXPECT_NEAR(fit.coefficients(j), oracle, 1e-8) << "lambda " << lambda << " column " << j;
    }
  }
}

TEST(Lasso, ZeroPenaltyEqualsOls) {
  Rng rng(6);
  const Eigen::MatrixXd X = gaussian(120, 6, rng);
  const Eigen::VectorXd y = X * Eigen::VectorXd::LinSpaced(6, 1, 3) + gaussian(120, 1, rng);
  const auto dm = matrix_of(X, y);
  const auto lasso = fit_lasso(dm, 0.0);
  const auto ols = fit_ols(dm);
  EXPECT_LT((lasso.coefficients - ols.coefficients).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_NEAR(lasso.intercept, ols.intercept, 1e-6);
}

TEST(Lasso, LambdaMaxGivesExactZeros) {
  Rng rng(7);
  const Eigen::MatrixXd X = gaussian(90, 7, rng);
  const Eigen::VectorXd y = X.col(2) + gaussian(90, 1, rng);
  const auto dm = matrix_of(X, y);
  const double lmax = GramProblem::from(X, y).lambda_max();
  for (double lambda : {lmax, 2.0 * lmax}) {
    const auto fit = fit_lasso(dm, lambda);
    EXPECT_TRUE((fit.coefficients.array() == 0.0).all());
    EXPECT_NEAR(fit.intercept, y.mean(), 1e-12);
  }
  const auto below = fit_lasso(dm, 0.9 * lmax);
  EXPECT_GT((below.coefficients.array() != 0.0).count(), 0);
  EXPECT_EQ((fit_lasso(dm, 0.0).coefficients.array() != 0.0).count(), 7);
}

TEST(Lasso, ObjectiveNonIncreasingPerCycle) {
  Rng rng(8);
  Eigen::MatrixXd X = gaussian(100, 12, rng);
  X.col(1) = 0.9 * X.col(0) + 0.1 * X.col(1);
  const Eigen::VectorXd y = X.leftCols(3).rowwise().sum() + gaussian(100, 1, rng);
  LassoOptions opts;
  opts.record_objective = true;
  LassoSolution sol;
  fit_lasso(matrix_of(X, y), 0.05, opts, &sol);
  ASSERT_GE(sol.objective_history.size(), 2u);
  for (std::size_t c = 1; c < sol.objective_history.size(); ++c)
    EXPECT_LE(sol.objective_history[c], sol.objective_history[c - 1] + 1e-12) << "cycle " << c;
}

TEST(Lasso, CollinearBlockMeetsOptimalityConditions) {
  // Rows of a softmax block sum to one, as encoder confidences do.
  Rng rng(31);
  const Index n = 600, k = 12;
  Eigen::MatrixXd X(n, k + 3);
  const Eigen::MatrixXd logits = gaussian(n, k, rng);
  for (Index i = 0; i < n; ++i) {
    const Eigen::ArrayXd e = logits.row(i).array().exp();
    X.row(i).head(k) = (e / e.sum()).matrix().transpose();
  }
  X.rightCols(3) = gaussian(n, 3, rng);
  const Eigen::VectorXd y = 3.0 * X.col(0) - 2.0 * X.col(5) + X.col(k) + 0.3 * gaussian(n, 1, rng);
  auto dm = matrix_of(X, y);
  for (Index j = 0; j < dm.cols(); ++j) {
    const Eigen::ArrayXd c = dm.X.col(j).array() - dm.X.col(j).mean();
    dm.X.col(j) = (c / std::sqrt(c.square().sum() / (n - 1))).matrix();
  }
  const double lmax = GramProblem::from(dm.X, dm.y).lambda_max();
  for (double frac : {1e-2, 1e-3, 1e-4}) {
    const double lambda = frac * lmax;
    LassoOptions opts;
    opts.record_objective = true;
    LassoSolution sol;
    const auto fit = fit_lasso(dm, lambda, opts, &sol);
    for (std::size_t c = 1; c < sol.objective_history.size(); ++c)
      ASSERT_LE(sol.objective_history[c], sol.objective_history[c - 1] + 1e-12);
    const Eigen::MatrixXd Xc = dm.X.rowwise() - dm.X.colwise().mean();
    const Eigen::VectorXd r = (dm.y.array() - dm.y.mean()).matrix() - Xc * fit.coefficients;
    const Eigen::VectorXd corr = Xc.transpose() * r / static_cast<double>(n);
    for (Index j = 0; j < dm.cols(); ++j) {
      const double b = fit.coefficients(j);
      if (b == 0.0) {
        EXPECT_LE(std::abs(corr(j)), lambda * (1.0 + 1e-4)) << "frac " << frac << " column " << j;
      } else {
        EXPECT_NEAR(corr(j), b > 0.0 ? lambda : -lambda, 1e-5 * lmax) << "frac " << frac << " column " << j;
      }
    }
  }
}

TEST(Lasso, MoreColumnsThanRowsAtSmallLambda) {
  Rng rng(32);
  const Index n = 40, p = 60;
  const Eigen::MatrixXd X = gaussian(n, p, rng);
  const Eigen::VectorXd y = X.leftCols(5).rowwise().sum() + 0.1 * gaussian(n, 1, rng);
  const auto dm = matrix_of(X, y);
  const double lmax = GramProblem::from(dm.X, dm.y).lambda_max();
  const Eigen::MatrixXd Xc = X.rowwise() - X.colwise().mean();
  for (double frac : {1e-2, 1e-3, 1e-4}) {
    const double lambda = frac * lmax;
    const auto fit = fit_lasso(dm, lambda);
    EXPECT_LE((fit.coefficients.array() != 0.0).count(), n - 1);
    const Eigen::VectorXd r = (y.array() - y.mean()).matrix() - Xc * fit.coefficients;
    const Eigen::VectorXd corr = Xc.transpose() * r / static_cast<double>(n);
    for (Index j = 0; j < p; ++j) {
      const double b = fit.coefficients(j);
      if (b == 0.0) {
        EXPECT_LE(std::abs(corr(j)), lambda * (1.0 + 1e-3) + 1e-9) << "frac " << frac << " column " << j;
      } else {
        EXPECT_NEAR(corr(j), b > 0.0 ? lambda : -lambda, 1e-5 * lmax) << "frac " << frac << " column " << j;
      }
    }
  }
}

TEST(Lasso, NonConvergenceCarriesIterate) {
  Rng rng(9);
  const Eigen::MatrixXd X = gaussian(50, 5, rng);
  LassoOptions opts;
  opts.max_cycles = 1;
  opts.tol = 0.0;
  try {
    fit_lasso(matrix_of(X, X.rowwise().sum()), 0.01, opts);
    FAIL();
  } catch (const ConvergenceError& e) {
    EXPECT_EQ(e.cycles, 1);
    EXPECT_EQ(e.last_iterate.size(), 5);
  }
  EXPECT_THROW(fit_lasso(matrix_of(X, X.col(0)), -1.0), ArgumentError);
}

TEST(SelectLambda, PureNoisePicksTopOfGrid) {
  Rng rng(10);
  const auto dm = matrix_of(gaussian(200, 10, rng), gaussian(200, 1, rng));
  const double lmax = GramProblem::from(dm.X, dm.y).lambda_max();
  EXPECT_DOUBLE_EQ(select_lambda(dm, 100, 5, 1), lmax);
}

TEST(SelectLambda, PlantedSignalPicksLowerHalf) {
  Rng rng(11);
  const Eigen::MatrixXd X = gaussian(2000, 8, rng);
  const Eigen::VectorXd y = 2.0 * X.col(3) + 0.2 * gaussian(2000, 1, rng);
  const auto dm = matrix_of(X, y);
  LambdaSearchOptions opts;
  const auto sel = cross_validate_lambda(dm, opts, 4);
  EXPECT_GE(sel.index, sel.grid.size() / 2);
  EXPECT_NE(fit_lasso(dm, sel.lambda).coefficients(3), 0.0);
  const auto penalized = fit_penalized_ols(dm, opts, 4);
  EXPECT_NEAR(penalized.coefficients(3), 2.0, 0.1);
  EXPECT_DOUBLE_EQ(penalized.lambda, sel.lambda);
}

TEST(SelectLambda, TwoPointGrid) {
  Rng rng(12);
  const auto dm = matrix_of(gaussian(60, 3, rng), gaussian(60, 1, rng));
  const auto grid = lambda_grid(GramProblem::from(dm.X, dm.y).lambda_max(), 2);
  const double chosen = select_lambda(dm, 2, 3, 7);
  EXPECT_TRUE(chosen == grid[0] || chosen == grid[1]);
  EXPECT_NEAR(grid[1], grid[0] * 1e-4, 1e-15);
}

TEST(SelectLambda, CvGramsMatchDirectComputation) {
  Rng rng(13);
  const Eigen::MatrixXd X = gaussian(50, 4, rng);
  const Eigen::VectorXd y = X.col(0) + gaussian(50, 1, rng);
  const auto dm = matrix_of(X, y);
  LambdaSearchOptions opts;
  opts.grid_size = 5;
  opts.folds = 5;
  const auto sel = cross_validate_lambda(dm, opts, 21);

  // Oracle: refit each fold from scratch with the same fold assignment.
  Rng frng(21);
  RowIndices order = iota_rows(50);
  shuffle_rows(order, frng);
  std::vector<double> oracle(5, 0.0);
  for (int f = 0; f < 5; ++f) {
    RowIndices tr, te;
    for (std::size_t i = 0; i < order.size(); ++i) (static_cast<int>(i % 5) == f ? te : tr).push_back(order[i]);
    Eigen::MatrixXd Xt(static_cast<Index>(tr.size()), 4), Xh(static_cast<Index>(te.size()), 4);
    Eigen::VectorXd yt(static_cast<Index>(tr.size())), yh(static_cast<Index>(te.size()));
    for (std::size_t i = 0; i < tr.size(); ++i) Xt.row(static_cast<Index>(i)) = X.row(tr[i]), yt(static_cast<Index>(i)) = y(tr[i]);
    for (std::size_t i = 0; i < te.size(); ++i) Xh.row(static_cast<Index>(i)) = X.row(te[i]), yh(static_cast<Index>(i)) = y(te[i]);
    for (std::size_t l = 0; l < sel.grid.size(); ++l) {
      const auto fit = fit_lasso(matrix_of(Xt, yt), sel.grid[l]);
      oracle[l] += (yh - predict(fit, Xh)).squaredNorm();
    }
  }
  for (std::size_t l = 0; l < sel.grid.size(); ++l) EXPECT_NEAR(sel.cv_mse[l], oracle[l] / 50, 1e-6);
}

TEST(StandardErrors, SingletonClustersEqualHc1) {
  Rng rng(14);
  const Eigen::MatrixXd X = gaussian(150, 3, rng);
  Eigen::VectorXd y = X.col(0) + gaussian(150, 1, rng);
  y.array() *= 1.0 + X.col(1).array().abs();
  const auto dm = matrix_of(X, y);
  const auto fit = fit_ols(dm);
  EXPECT_LT((cluster_robust_se(dm, fit) - hc1_se(dm, fit)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(StandardErrors, ManyClustersCloseToClassicalUnderHomoskedasticity) {
  const Index n = 2000;
  const auto ds = fixtures::linear_dataset(n, Eigen::Vector3d(0.5, -0.2, 0.1), 14.0, 0.3, 200, 15);
  const auto dm = assemble_design_matrix(ds, std::nullopt, true, false);
  const auto fit = fit_ols(dm);
  const auto cr = cluster_robust_se(dm, fit);
  const auto classical = classical_se(dm, fit);
  for (Index j = 0; j < cr.size(); ++j) {
    EXPECT_GT(cr(j) / classical(j), 0.75);
    EXPECT_LT(cr(j) / classical(j), 1.25);
  }
}

TEST(StandardErrors, TwoClustersUseSmallSampleFactor) {
  Rng rng(16);
  const Index n = 40;
  const Eigen::MatrixXd X = gaussian(n, 1, rng);
  auto dm = matrix_of(X, X.col(0) + gaussian(n, 1, rng));
  for (Index i = 0; i < n; ++i) dm.clusters[static_cast<std::size_t>(i)] = i < 25 ? "a" : "b";
  const auto fit = fit_ols(dm);
  const auto se = cluster_robust_se(dm, fit);
  EXPECT_TRUE(se.allFinite());

  // Oracle sandwich built directly.
  Eigen::MatrixXd Z(n, 2);
  Z << Eigen::VectorXd::Ones(n), X;
  const Eigen::VectorXd e = residuals(dm, fit);
  const Eigen::MatrixXd bread = (Z.transpose() * Z).inverse();
  const Eigen::VectorXd sa = Z.topRows(25).transpose() * e.head(25);
  const Eigen::VectorXd sb = Z.bottomRows(15).transpose() * e.tail(15);
  const double c = 2.0 * (n - 1.0) / (n - 2.0);
  const Eigen::MatrixXd V = c * bread * (sa * sa.transpose() + sb * sb.transpose()) * bread;
  EXPECT_NEAR(se(1), std::sqrt(V(1, 1)), 1e-12);

  for (auto& g : dm.clusters) g = "one";
  try {
    cluster_robust_se(dm, fit);
    FAIL();
  } catch (const ArgumentError& e) {
    EXPECT_STREQ(e.what(), "need >=2 clusters");
  }
}
