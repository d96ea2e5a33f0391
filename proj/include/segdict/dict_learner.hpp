#pragma once

// Segment dictionary learning. Each segment dictionary alternates between
// feature-sign coding of the training segments and a dictionary update that
// solves
//
//     min_D ||Y - D X||_F^2   s.t.  ||d_k||^2 <= 1
//
// through its Lagrange dual
//
//     R(lam) = tr(Y'Y) - tr(Y X' (X X' + diag(lam))^-1 X Y') - sum(lam),
//
// maximized over lam >= 0 by projected Newton steps with backtracking. The
// dictionary is recovered as D = Y X' (X X' + diag(lam))^-1.

#include <segdict/beat_model.hpp>
#include <segdict/error.hpp>
#include <segdict/random.hpp>
#include <segdict/sparse_coder.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace segdict {

struct TrainConfig {
    int k = 32;
    double lambda = 0.15;
    int outer_iters = 30;
    double newton_tol = 1e-6;
    int newton_max = 50;
    std::uint64_t seed = 1;
    Index max_train_segments = 1000;
    double early_stop_tol = 1e-6;
    int coder_max_iter = 1000;
    double coder_opt_tol = 1e-7;

    void validate() const
    {
        if (k < 2)
            throw Error(ErrorKind::invalid_argument, "k must be at least 2");
        if (!(lambda > 0.0))
            throw Error(ErrorKind::invalid_argument, "lambda must be positive");
        if (outer_iters < 1)
            throw Error(ErrorKind::invalid_argument, "outer_iters must be at least 1");
        if (!(newton_tol > 0.0) || newton_max < 1)
            throw Error(ErrorKind::invalid_argument, "Newton tolerance and iteration cap must be positive");
        if (max_train_segments < 1)
            throw Error(ErrorKind::invalid_argument, "max_train_segments must be positive");
    }

    SolverOptions coder_options() const
    {
        SolverOptions o;
        o.lambda = lambda;
        o.max_iter = coder_max_iter;
        o.opt_tol = coder_opt_tol;
        return o;
    }
};

struct DualState {
    Vector lam;

    Matrix diagonal() const { return lam.asDiagonal(); }
};

/// k distinct, nonzero data columns picked uniformly at random and scaled to
/// unit norm.
inline SegmentDictionary init_dictionary(const Matrix& segments, int k, std::uint64_t seed, int segment_index = 1)
{
    if (k < 1 || segments.cols() < k)
        throw Error(ErrorKind::insufficient_distinct_columns,
                    "need at least " + std::to_string(k) + " columns, have " + std::to_string(segments.cols()));
    Rng rng(seed);
    std::vector<Index> order(static_cast<std::size_t>(segments.cols()));
    std::iota(order.begin(), order.end(), Index{0});
    shuffle(order, rng);

    SegmentDictionary dict{Matrix(segments.rows(), k), segment_index};
    int chosen = 0;
    for (Index col : order) {
        if (chosen == k)
            break;
        const double norm = segments.col(col).norm();
        if (!(norm > 0.0) || !std::isfinite(norm))
            continue;
        const Vector atom = segments.col(col) / norm;
        bool duplicate = false;
        for (int c = 0; c < chosen && !duplicate; ++c)
            duplicate = dict.atoms.col(c) == atom;
        if (duplicate)
            continue;
        dict.atoms.col(chosen++) = atom;
    }
    if (chosen < k)
        throw Error(ErrorKind::insufficient_distinct_columns,
                    "only " + std::to_string(chosen) + " distinct nonzero columns for " + std::to_string(k) + " atoms");
    return dict;
}

namespace detail {

/// Precomputed pieces of the dual for fixed codes X (k x n) and data Y (d x n).
class DualProblem {
public:
    DualProblem(const Matrix& codes, const Matrix& data)
        : xxt_(codes * codes.transpose()), yxt_(data * codes.transpose()), yty_(data.squaredNorm())
    {
    }

    struct Point {
        double value = 0.0;
        Matrix dict;     // Y X' M^-1
        Matrix m_inv;    // M^-1, M = X X' + diag(lam)
    };

    Index k() const noexcept { return xxt_.rows(); }
    const Matrix& xxt() const noexcept { return xxt_; }
    const Matrix& yxt() const noexcept { return yxt_; }

    /// Empty when X X' + diag(lam) is not numerically positive definite.
    std::optional<Point> evaluate(const Vector& lam) const
    {
        Matrix m = xxt_;
        m.diagonal() += lam;
        Eigen::LLT<Matrix> llt(m);
        if (llt.info() != Eigen::Success)
            return std::nullopt;
        const Vector diag = llt.matrixL().toDenseMatrix().diagonal();
        if (diag.minCoeff() <= 1e-10 * diag.maxCoeff())
            return std::nullopt;
        Point p;
        p.m_inv = llt.solve(Matrix::Identity(k(), k()));
        p.dict = llt.solve(yxt_.transpose()).transpose();
        p.value = yty_ - (yxt_ * p.dict.transpose()).trace() - lam.sum();
        if (!std::isfinite(p.value))
            return std::nullopt;
        return p;
    }

    static Vector gradient(const Point& p) { return p.dict.colwise().squaredNorm().transpose().array() - 1.0; }

    static Matrix hessian(const Point& p)
    {
        return -2.0 * (p.dict.transpose() * p.dict).cwiseProduct(p.m_inv);
    }

private:
    Matrix xxt_;
    Matrix yxt_;
    double yty_;
};

}  // namespace detail

/// R(lam) for codes X (k x n) and data Y (d x n).
inline double dual_objective(const Vector& lam, const Matrix& codes, const Matrix& data)
{
    if (codes.cols() != data.cols() || lam.size() != codes.rows())
        throw Error(ErrorKind::shape_mismatch, "dual objective shapes incompatible");
    const auto p = detail::DualProblem(codes, data).evaluate(lam);
    if (!p)
        throw Error(ErrorKind::indefinite_system, "X X' + diag(lam) is not positive definite");
    return p->value;
}

struct DualUpdateResult {
    SegmentDictionary dict;
    DualState dual;
    int newton_iterations = 0;
    bool converged = false;
    Index refreshed_atoms = 0;
    std::vector<double> dual_trace;  // R(lam) at every accepted iterate, starting point included
};

/// Dictionary update for fixed codes. Atoms whose code row is entirely zero
/// are excluded from the dual, then re-drawn from random nonzero data columns.
inline DualUpdateResult lagrange_dual_update(const Matrix& codes, const Matrix& data, const TrainConfig& cfg, Rng& rng,
                                             int segment_index = 1, const Vector* warm_start = nullptr)
{
    if (codes.cols() != data.cols())
        throw Error(ErrorKind::shape_mismatch, "codes and data have different column counts");
    const Index k = codes.rows();

    std::vector<Index> used;
    for (Index r = 0; r < k; ++r)
        if ((codes.row(r).array() != 0.0).any())
            used.push_back(r);
    if (used.empty())
        throw Error(ErrorKind::invalid_argument, "no atom is used by any code");

    const auto n_used = static_cast<Index>(used.size());
    Matrix used_codes(n_used, codes.cols());
    for (Index u = 0; u < n_used; ++u)
        used_codes.row(u) = codes.row(used[static_cast<std::size_t>(u)]);
    const detail::DualProblem problem(used_codes, data);

    Vector lam = Vector::Ones(n_used);
    if (warm_start != nullptr && warm_start->size() == k) {
        for (Index u = 0; u < n_used; ++u)
            lam(u) = std::max((*warm_start)(used[static_cast<std::size_t>(u)]), 1e-3);
    }

    DualUpdateResult res;
    auto point = problem.evaluate(lam);
    for (int bump = 0; !point && bump < 30; ++bump) {
        lam *= 10.0;
        point = problem.evaluate(lam);
    }
    if (!point)
        throw Error(ErrorKind::indefinite_system, "cannot find a positive definite starting point for the dual");
    res.dual_trace.push_back(point->value);

    for (int it = 0; it < cfg.newton_max; ++it) {
        res.newton_iterations = it + 1;
        const Vector grad = detail::DualProblem::gradient(*point);
        const Matrix hess = detail::DualProblem::hessian(*point);

        // Coordinates pinned at zero whose gradient pushes further down stay fixed.
        std::vector<Index> free;
        for (Index u = 0; u < n_used; ++u)
            if (lam(u) > 0.0 || grad(u) > 0.0)
                free.push_back(u);
        if (free.empty()) {
            res.converged = true;
            break;
        }

        const auto n_free = static_cast<Index>(free.size());
        Matrix neg_h(n_free, n_free);
        Vector g_free(n_free);
        for (Index a = 0; a < n_free; ++a) {
            g_free(a) = grad(free[static_cast<std::size_t>(a)]);
            for (Index b = 0; b < n_free; ++b)
                neg_h(a, b) = -hess(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(b)]);
        }
        Vector step_free;
        Eigen::LLT<Matrix> llt(neg_h);
        bool newton_ok = llt.info() == Eigen::Success;
        if (newton_ok) {
            const Vector diag = llt.matrixL().toDenseMatrix().diagonal();
            newton_ok = diag.minCoeff() > 1e-10 * diag.maxCoeff();
        }
        if (newton_ok) {
            step_free = llt.solve(g_free);
        } else {
            // Singular Hessian: plain gradient ascent for this iteration.
            step_free = g_free;
        }
        Vector direction = Vector::Zero(n_used);
        for (Index a = 0; a < n_free; ++a)
            direction(free[static_cast<std::size_t>(a)]) = step_free(a);

        bool accepted = false;
        Vector candidate;
        double t = 1.0;
        for (int halving = 0; halving < 60; ++halving, t *= 0.5) {
            candidate = (lam + t * direction).cwiseMax(0.0);
            auto next = problem.evaluate(candidate);
            if (next && next->value >= point->value) {
                point = std::move(next);
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            // No ascent left at working precision.
            res.converged = true;
            break;
        }
        const double rel_step = (candidate - lam).norm() / std::max(lam.norm(), 1.0);
        lam = candidate;
        res.dual_trace.push_back(point->value);
        if (rel_step < cfg.newton_tol) {
            res.converged = true;
            break;
        }
    }

    res.dict.segment_index = segment_index;
    res.dict.atoms = Matrix::Zero(data.rows(), k);
    res.dual.lam = Vector::Zero(k);
    for (Index u = 0; u < n_used; ++u) {
        const Index r = used[static_cast<std::size_t>(u)];
        res.dict.atoms.col(r) = point->dict.col(u);
        res.dual.lam(r) = lam(u);
    }

    std::vector<Index> nonzero_columns;
    for (Index c = 0; c < data.cols(); ++c)
        if (data.col(c).squaredNorm() > 0.0)
            nonzero_columns.push_back(c);
    for (Index r = 0; r < k; ++r) {
        const bool unused = !(codes.row(r).array() != 0.0).any();
        if (!unused || res.dict.atoms.col(r).norm() >= 1.0 - 1e-6)
            continue;
        if (nonzero_columns.empty())
            throw Error(ErrorKind::insufficient_distinct_columns, "no nonzero data column to refresh atoms from");
        const Index src = nonzero_columns[uniform_index(rng, nonzero_columns.size())];
        res.dict.atoms.col(r) = data.col(src).normalized();
        ++res.refreshed_atoms;
    }
    return res;
}

inline DualUpdateResult lagrange_dual_update(const Matrix& codes, const Matrix& data, const TrainConfig& cfg)
{
    Rng rng(derive_seed(cfg.seed, 0x5eed));
    return lagrange_dual_update(codes, data, cfg, rng);
}

struct AlternationRecord {
    int iteration = 0;
    double after_coding = 0.0;  // objective with new codes, previous dictionary
    double after_update = 0.0;  // objective with new codes, new dictionary
    int newton_iterations = 0;
    Index refreshed_atoms = 0;
};

struct LearnResult {
    SegmentDictionary dict;
    std::vector<AlternationRecord> history;
    bool early_stopped = false;
};

/// Alternating coding and dictionary updates for one segment's training data.
inline LearnResult learn_dictionary(const Matrix& segments, const TrainConfig& cfg, int segment_index = 1)
{
    cfg.validate();
    const std::uint64_t seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(segment_index));
    Rng rng(derive_seed(seed, 1));
    LearnResult res;
    res.dict = init_dictionary(segments, cfg.k, seed, segment_index);
    const SolverOptions opts = cfg.coder_options();

    double previous = std::numeric_limits<double>::infinity();
    int small_decreases = 0;
    Vector lam;
    for (int it = 1; it <= cfg.outer_iters; ++it) {
        const Matrix codes = batch_encode(res.dict.atoms, segments, opts);
        AlternationRecord rec;
        rec.iteration = it;
        rec.after_coding = coding_objective(res.dict.atoms, segments, codes, cfg.lambda);

        if ((codes.array() != 0.0).any()) {
            auto upd = lagrange_dual_update(codes, segments, cfg, rng, segment_index, lam.size() ? &lam : nullptr);
            res.dict = std::move(upd.dict);
            lam = std::move(upd.dual.lam);
            rec.newton_iterations = upd.newton_iterations;
            rec.refreshed_atoms = upd.refreshed_atoms;
        }
        rec.after_update = coding_objective(res.dict.atoms, segments, codes, cfg.lambda);
        res.history.push_back(rec);

        if (std::isfinite(previous)) {
            const double rel = (previous - rec.after_update) / std::max(std::abs(previous), 1e-300);
            small_decreases = rel < cfg.early_stop_tol ? small_decreases + 1 : 0;
            if (small_decreases >= 2) {
                res.early_stopped = true;
                break;
            }
        }
        previous = rec.after_update;
    }
    return res;
}

struct TrainResult {
    std::vector<SegmentDictionary> dicts;
    std::vector<std::vector<AlternationRecord>> history;  // one entry per segment
    std::vector<Index> training_columns;                  // beats actually used
};

/// A seeded, sorted sample of `cap` entries when `columns` is larger than `cap`.
/// Shared with the VQ baselines so both train on the same beats.
inline std::vector<Index> cap_training_columns(std::vector<Index> columns, Index cap, std::uint64_t seed)
{
    if (static_cast<Index>(columns.size()) <= cap)
        return columns;
    Rng rng(derive_seed(seed, 0xabcd));
    const auto picks = sample_without_replacement(static_cast<std::int64_t>(columns.size()), cap, rng);
    std::vector<Index> sampled;
    for (auto p : picks)
        sampled.push_back(columns[static_cast<std::size_t>(p)]);
    std::sort(sampled.begin(), sampled.end());
    return sampled;
}

/// Learns D_1..D_J from the beats listed in `train_subset`. When the subset is
/// larger than cfg.max_train_segments a seeded sample of that size is used.
inline TrainResult train_segment_dictionaries(const BeatMatrix& beats, const SegmentSpec& spec, const TrainConfig& cfg,
                                              std::vector<Index> train_subset)
{
    cfg.validate();
    if (train_subset.empty())
        throw Error(ErrorKind::invalid_argument, "empty training subset");
    for (Index i : train_subset)
        if (i < 0 || i >= beats.count())
            throw Error(ErrorKind::index_out_of_range, "training index " + std::to_string(i));
    train_subset = cap_training_columns(std::move(train_subset), cfg.max_train_segments, cfg.seed);

    Matrix train(beats.gamma(), static_cast<Index>(train_subset.size()));
    for (std::size_t c = 0; c < train_subset.size(); ++c)
        train.col(static_cast<Index>(c)) = beats.samples().col(train_subset[c]);

    TrainResult res;
    res.training_columns = train_subset;
    for (int j = 1; j <= spec.j_count(); ++j) {
        try {
            auto learned = learn_dictionary(segment_view(train, spec, j), cfg, j);
            res.dicts.push_back(std::move(learned.dict));
            res.history.push_back(std::move(learned.history));
        } catch (const Error& e) {
            throw Error(e.kind(), "segment " + std::to_string(j) + ": " + e.message());
        }
    }
    return res;
}

/// Codes every beat against the stacked dictionary B = [D_1; ...; D_J].
inline SparseCodeMatrix encode_beats(const BeatMatrix& beats, const SegmentSpec& spec,
                                     const std::vector<SegmentDictionary>& dicts, const SolverOptions& opts)
{
    if (static_cast<int>(dicts.size()) != spec.j_count())
        throw Error(ErrorKind::missing_segment, "have " + std::to_string(dicts.size()) + " dictionaries for " +
                                                    std::to_string(spec.j_count()) + " segments");
    const StackedDictionary stacked = stack_dictionaries(dicts);
    const Matrix signals = stack_segments(beats.samples(), spec);
    if (stacked.atoms.rows() != signals.rows())
        throw Error(ErrorKind::shape_mismatch, "stacked dictionary rows do not match segment layout");
    return SparseCodeMatrix{batch_encode(stacked.atoms, signals, opts), opts.lambda};
}

inline SparseCodeMatrix encode_beats(const BeatMatrix& beats, const SegmentSpec& spec,
                                     const std::vector<SegmentDictionary>& dicts, double lambda)
{
    SolverOptions opts;
    opts.lambda = lambda;
    return encode_beats(beats, spec, dicts, opts);
}

}  // namespace segdict
