#pragma once

// L1-regularized least squares by feature-sign search:
//
//     min_x  1/2 ||y - D x||^2 + lambda ||x||_1
//
// The solver guesses the sign of every active coefficient, solves the
// resulting unconstrained quadratic on the active set in closed form, and
// line-searches along the segment to the new point, stopping at coefficient
// zero-crossings. All work is done on the Gram matrix D'D and the
// correlations D'y, so a batch of signals against one dictionary forms D'D
// only once.

#include <segdict/beat_model.hpp>
#include <segdict/error.hpp>
#include <segdict/parallel.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <string>
#include <vector>

namespace segdict {

struct SolverOptions {
    double lambda = 0.15;
    int max_iter = 1000;
    double opt_tol = 1e-7;
    bool record_trace = false;  // keep the objective after every feature-sign step

    void validate() const
    {
        if (!(lambda > 0.0))
            throw Error(ErrorKind::invalid_argument, "lambda must be positive");
        if (max_iter < 1)
            throw Error(ErrorKind::invalid_argument, "max_iter must be at least 1");
        if (!(opt_tol > 0.0))
            throw Error(ErrorKind::invalid_argument, "opt_tol must be positive");
    }
};

struct FeatureSignResult {
    Vector x;
    bool converged = false;
    int iterations = 0;
    double objective = 0.0;
    std::vector<double> trace;
};

namespace detail {

inline double sign_of(double v) noexcept { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// Solves G x = rhs for a symmetric positive definite G. A factorization whose
/// smallest pivot falls under 1e-12 of the largest is rejected; one retry with
/// a tiny ridge is attempted before giving up.
inline bool solve_spd(const Matrix& gram, const Vector& rhs, Vector& out)
{
    auto acceptable = [](const Eigen::LDLT<Matrix>& f) {
        if (f.info() != Eigen::Success)
            return false;
        const Vector pivots = f.vectorD();
        const double largest = pivots.maxCoeff();
        return largest > 0.0 && pivots.minCoeff() > 1e-12 * largest;
    };

    Eigen::LDLT<Matrix> ldlt(gram);
    if (acceptable(ldlt)) {
        out = ldlt.solve(rhs);
        return true;
    }
    Matrix ridged = gram;
    ridged.diagonal().array() += 1e-10 * gram.trace() / static_cast<double>(gram.rows());
    ldlt.compute(ridged);
    if (acceptable(ldlt)) {
        out = ldlt.solve(rhs);
        return true;
    }
    return false;
}

}  // namespace detail

/// Feature-sign search given the Gram matrix `gram` = D'D, the correlations
/// `dty` = D'y and the squared signal norm `yty` = y'y.
inline FeatureSignResult feature_sign_solve_gram(const Matrix& gram, const Vector& dty, double yty,
                                                 const SolverOptions& opts)
{
    opts.validate();
    const Index k = gram.rows();
    const double lambda = opts.lambda;

    FeatureSignResult res;
    res.x = Vector::Zero(k);
    Vector& x = res.x;
    Vector theta = Vector::Zero(k);
    Vector grad = -dty;
    std::vector<Index> active;

    auto objective = [&](const Vector& p) {
        return 0.5 * yty - p.dot(dty) + 0.5 * p.dot(gram * p) + lambda * p.lpNorm<1>();
    };
    double current = 0.5 * yty;

    while (true) {
        bool active_optimal = true;
        for (Index i : active)
            if (std::abs(grad(i) + lambda * theta(i)) > opts.opt_tol) {
                active_optimal = false;
                break;
            }

        if (active_optimal) {
            Index best = -1;
            double best_mag = 0.0;
            for (Index i = 0; i < k; ++i) {
                if (x(i) != 0.0)
                    continue;
                const double mag = std::abs(grad(i));
                if (mag > best_mag) {
                    best_mag = mag;
                    best = i;
                }
            }
            if (best < 0 || best_mag <= lambda + opts.opt_tol) {
                res.converged = true;
                break;
            }
            // Step in the direction that reduces the smooth part.
            theta(best) = grad(best) > 0.0 ? -1.0 : 1.0;
            active.insert(std::upper_bound(active.begin(), active.end(), best), best);
        }

        if (res.iterations >= opts.max_iter)
            break;
        ++res.iterations;

        const auto n_active = static_cast<Index>(active.size());
        Matrix gram_active(n_active, n_active);
        Vector rhs(n_active);
        Vector x_old(n_active);
        for (Index a = 0; a < n_active; ++a) {
            for (Index b = 0; b < n_active; ++b)
                gram_active(a, b) = gram(active[a], active[b]);
            rhs(a) = dty(active[a]) - lambda * theta(active[a]);
            x_old(a) = x(active[a]);
        }
        Vector x_new;
        if (!detail::solve_spd(gram_active, rhs, x_new))
            throw Error(ErrorKind::singular_active_gram,
                        "active set of size " + std::to_string(n_active) + " is rank deficient");

        bool consistent = true;
        for (Index a = 0; a < n_active; ++a)
            if (detail::sign_of(x_new(a)) != theta(active[a])) {
                consistent = false;
                break;
            }

        Vector chosen = x_new;
        if (!consistent) {
            // Discrete line search: the target point and every zero-crossing of
            // a coefficient that is currently nonzero.
            struct Candidate {
                double t;
                Index zeroed;
            };
            std::vector<Candidate> candidates;
            for (Index a = 0; a < n_active; ++a) {
                if (x_old(a) == 0.0)
                    continue;
                if (detail::sign_of(x_new(a)) != detail::sign_of(x_old(a)))
                    candidates.push_back({x_old(a) / (x_old(a) - x_new(a)), a});
            }
            std::stable_sort(candidates.begin(), candidates.end(),
                             [](const Candidate& l, const Candidate& r) { return l.t < r.t; });

            Vector probe = x;
            auto eval_at = [&](const Vector& point) {
                for (Index a = 0; a < n_active; ++a)
                    probe(active[a]) = point(a);
                return objective(probe);
            };

            double best_obj = eval_at(x_new);
            for (const auto& c : candidates) {
                Vector point = x_old + c.t * (x_new - x_old);
                point(c.zeroed) = 0.0;
                const double obj = eval_at(point);
                if (obj < best_obj) {
                    best_obj = obj;
                    chosen = point;
                }
            }
        }

        for (Index a = 0; a < n_active; ++a)
            x(active[a]) = chosen(a);
        std::erase_if(active, [&](Index i) { return x(i) == 0.0; });
        theta.setZero();
        for (Index i : active)
            theta(i) = detail::sign_of(x(i));
        grad.noalias() = gram * x - dty;

        const double next = objective(x);
        assert(next <= current + 1e-9 * (1.0 + std::abs(current)));
        current = next;
        if (opts.record_trace)
            res.trace.push_back(current);
    }

    res.objective = objective(x);
    return res;
}

namespace detail {

inline void check_dictionary(const Matrix& dict)
{
    if (!dict.allFinite())
        throw Error(ErrorKind::invalid_argument, "dictionary has non-finite entries");
    for (Index c = 0; c < dict.cols(); ++c)
        if (dict.col(c).squaredNorm() == 0.0)
            throw Error(ErrorKind::invalid_argument, "dictionary atom " + std::to_string(c) + " has zero norm");
}

}  // namespace detail

inline FeatureSignResult feature_sign_solve(const Matrix& dict, const Vector& y, const SolverOptions& opts)
{
    if (dict.rows() != y.size())
        throw Error(ErrorKind::shape_mismatch, "signal length does not match dictionary rows");
    detail::check_dictionary(dict);
    if (!y.allFinite())
        throw Error(ErrorKind::invalid_argument, "signal has non-finite entries");
    const Matrix gram = dict.transpose() * dict;
    const Vector dty = dict.transpose() * y;
    return feature_sign_solve_gram(gram, dty, y.squaredNorm(), opts);
}

struct EncodeStats {
    Index unconverged = 0;
    long long iterations = 0;
};

/// Codes every column of `signals` independently against `dict`.
inline Matrix batch_encode(const Matrix& dict, const Matrix& signals, const SolverOptions& opts,
                           EncodeStats* stats = nullptr)
{
    opts.validate();
    if (dict.rows() != signals.rows())
        throw Error(ErrorKind::shape_mismatch, "signal length " + std::to_string(signals.rows()) +
                                                   " does not match dictionary rows " +
                                                   std::to_string(dict.rows()));
    detail::check_dictionary(dict);

    const Matrix gram = dict.transpose() * dict;
    Matrix codes(dict.cols(), signals.cols());
    std::atomic<Index> unconverged{0};
    std::atomic<long long> iterations{0};

    parallel_for(signals.cols(), [&](std::ptrdiff_t c) {
        const auto col = static_cast<Index>(c);
        try {
            if (!signals.col(col).allFinite())
                throw Error(ErrorKind::invalid_argument, "signal has non-finite entries");
            // Per-column products keep results bit-identical to feature_sign_solve.
            const Vector y = signals.col(col);
            const Vector dty = dict.transpose() * y;
            auto r = feature_sign_solve_gram(gram, dty, y.squaredNorm(), opts);
            codes.col(col) = r.x;
            if (!r.converged)
                ++unconverged;
            iterations += r.iterations;
        } catch (const Error& e) {
            throw Error(e.kind(), "column " + std::to_string(col) + ": " + e.message());
        }
    });

    if (stats != nullptr) {
        stats->unconverged = unconverged;
        stats->iterations = iterations;
    }
    return codes;
}

/// Sum over columns of 1/2 ||y_i - D x_i||^2 + lambda ||x_i||_1.
inline double coding_objective(const Matrix& dict, const Matrix& signals, const Matrix& codes, double lambda)
{
    if (dict.rows() != signals.rows() || dict.cols() != codes.rows() || signals.cols() != codes.cols())
        throw Error(ErrorKind::shape_mismatch, "coding objective shapes incompatible");
    return 0.5 * (signals - dict * codes).squaredNorm() + lambda * codes.cwiseAbs().sum();
}

}  // namespace segdict
