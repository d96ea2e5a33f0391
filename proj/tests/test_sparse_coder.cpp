#include "oracles.hpp"

#include <segdict/sparse_coder.hpp>

#include <gtest/gtest.h>

#include <random>

namespace segdict {
namespace {

TEST(FeatureSign, ScalarSoftThreshold)
{
    Matrix d(1, 1);
    d << 1.0;
    Vector y(1);
    y << 2.0;
    SolverOptions opts;
    opts.lambda = 1.0;
    const auto r = feature_sign_solve(d, y, opts);
    ASSERT_TRUE(r.converged);
    EXPECT_DOUBLE_EQ(r.x(0), 1.0);
}

TEST(FeatureSign, LargeLambdaGivesZero)
{
    std::mt19937_64 rng(7);
    const Matrix d = oracle::random_matrix(6, 10, rng);
    const Vector y = oracle::random_vector(6, rng);
    SolverOptions opts;
    opts.lambda = (d.transpose() * y).cwiseAbs().maxCoeff();
    const auto r = feature_sign_solve(d, y, opts);
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.x.lpNorm<Eigen::Infinity>(), 0.0);
    EXPECT_EQ(r.iterations, 0);
}

TEST(FeatureSign, MatchesSignPatternOracleOn5x8)
{
    std::mt19937_64 rng(2024);
    const Matrix d = oracle::random_matrix(5, 8, rng);
    const Vector y = oracle::random_vector(5, rng);
    SolverOptions opts;
    opts.lambda = 0.1;
    const auto r = feature_sign_solve(d, y, opts);
    ASSERT_TRUE(r.converged);
    const double expected = oracle::lasso_bruteforce(d, y, 0.1, 5);
    EXPECT_NEAR(oracle::lasso_objective(d, y, r.x, 0.1), expected, 1e-8);
}

TEST(FeatureSign, RandomInstancesPassKktAndOracle)
{
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> dim(2, 6);
    std::uniform_int_distribution<int> atoms(2, 8);
    std::uniform_real_distribution<double> lam(0.05, 0.5);
    for (int trial = 0; trial < 100; ++trial) {
        const int rows = dim(rng);
        const int cols = atoms(rng);
        const Matrix d = oracle::random_matrix(rows, cols, rng);
        const Vector y = oracle::random_vector(rows, rng);
        SolverOptions opts;
        opts.lambda = lam(rng);
        const auto r = feature_sign_solve(d, y, opts);
        ASSERT_TRUE(r.converged) << "trial " << trial;
        EXPECT_LE(oracle::lasso_kkt_violation(d, y, r.x, opts.lambda), 1e-6) << "trial " << trial;
        const double expected = oracle::lasso_bruteforce(d, y, opts.lambda, rows);
        EXPECT_NEAR(oracle::lasso_objective(d, y, r.x, opts.lambda), expected, 1e-8) << "trial " << trial;
    }
}

TEST(FeatureSign, NeverWorseThanZeroAndMonotoneTrace)
{
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const Matrix d = oracle::random_matrix(20, 40, rng);
        const Vector y = oracle::random_vector(20, rng);
        SolverOptions opts;
        opts.lambda = 0.05;
        opts.record_trace = true;
        const auto r = feature_sign_solve(d, y, opts);
        ASSERT_TRUE(r.converged);
        EXPECT_LE(r.objective, 0.5 * y.squaredNorm() + 1e-12);
        double prev = 0.5 * y.squaredNorm();
        for (double v : r.trace) {
            EXPECT_LE(v, prev + 1e-10);
            prev = v;
        }
    }
}

TEST(FeatureSign, HomogeneousInSignalAndLambda)
{
    std::mt19937_64 rng(11);
    const Matrix d = oracle::random_matrix(6, 8, rng);
    const Vector y = oracle::random_vector(6, rng);
    SolverOptions opts;
    opts.lambda = 0.2;
    const auto base = feature_sign_solve(d, y, opts);
    const double c = 3.5;
    opts.lambda *= c;
    const auto scaled = feature_sign_solve(d, c * y, opts);
    EXPECT_LE((scaled.x - c * base.x).lpNorm<Eigen::Infinity>(), 1e-9);
}

TEST(FeatureSign, RejectsZeroAtom)
{
    Matrix d = Matrix::Identity(3, 3);
    d.col(1).setZero();
    EXPECT_THROW(feature_sign_solve(d, Vector::Ones(3), SolverOptions{}), Error);
}

TEST(FeatureSign, ReportsNonConvergenceWithBestIterate)
{
    std::mt19937_64 rng(3);
    const Matrix d = oracle::random_matrix(10, 20, rng);
    const Vector y = oracle::random_vector(10, rng);
    SolverOptions opts;
    opts.lambda = 0.01;
    opts.max_iter = 1;
    const auto r = feature_sign_solve(d, y, opts);
    EXPECT_FALSE(r.converged);
    EXPECT_LT(r.objective, 0.5 * y.squaredNorm());
}

TEST(FeatureSign, DuplicateAtomsPreferLowestIndex)
{
    Matrix d(2, 3);
    d << 1.0, 1.0, 0.0,
         0.0, 0.0, 1.0;
    Vector y(2);
    y << 3.0, 0.05;
    SolverOptions opts;
    opts.lambda = 0.1;
    const auto r = feature_sign_solve(d, y, opts);
    ASSERT_TRUE(r.converged);
    EXPECT_DOUBLE_EQ(r.x(0), 2.9);
    EXPECT_EQ(r.x(1), 0.0);
    EXPECT_EQ(r.x(2), 0.0);
}

TEST(BatchEncode, SingleColumnMatchesSolve)
{
    std::mt19937_64 rng(17);
    const Matrix d = oracle::random_matrix(8, 12, rng);
    const Matrix y = oracle::random_matrix(8, 1, rng);
    SolverOptions opts;
    opts.lambda = 0.1;
    const Matrix codes = batch_encode(d, y, opts);
    EXPECT_EQ(codes.col(0), feature_sign_solve(d, y.col(0), opts).x);
}

TEST(BatchEncode, AtomsEncodeToThemselves)
{
    std::mt19937_64 rng(23);
    Matrix d = oracle::random_matrix(50, 8, rng);
    d.colwise().normalize();
    SolverOptions opts;
    opts.lambda = 0.01;
    const Matrix codes = batch_encode(d, d, opts);
    for (Index i = 0; i < d.cols(); ++i) {
        Index arg = 0;
        codes.col(i).cwiseAbs().maxCoeff(&arg);
        EXPECT_EQ(arg, i);
        EXPECT_GE(codes(i, i), 0.9);
    }
}

TEST(BatchEncode, EqualsSequentialAndPropagatesColumnIndex)
{
    std::mt19937_64 rng(31);
    const Matrix d = oracle::random_matrix(10, 16, rng);
    Matrix y = oracle::random_matrix(10, 25, rng);
    SolverOptions opts;
    opts.lambda = 0.2;
    const Matrix codes = batch_encode(d, y, opts);
    for (Index c = 0; c < y.cols(); ++c)
        EXPECT_EQ(codes.col(c), feature_sign_solve(d, y.col(c), opts).x);

    y(0, 7) = std::numeric_limits<double>::quiet_NaN();
    try {
        batch_encode(d, y, opts);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("column 7"), std::string::npos);
    }
}

TEST(CodingObjective, HandValues)
{
    Matrix d(1, 1);
    d << 1.0;
    Matrix y(1, 1);
    y << 2.0;
    Matrix x(1, 1);
    x << 1.0;
    EXPECT_DOUBLE_EQ(coding_objective(d, y, x, 1.0), 1.5);
    EXPECT_DOUBLE_EQ(coding_objective(d, y, Matrix::Zero(1, 1), 1.0), 2.0);

    std::mt19937_64 rng(1);
    const Matrix dd = oracle::random_matrix(4, 6, rng);
    const Matrix xx = oracle::random_matrix(6, 3, rng);
    EXPECT_NEAR(coding_objective(dd, dd * xx, xx, 0.0), 0.0, 1e-20);
}

}  // namespace
}  // namespace segdict
