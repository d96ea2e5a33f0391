#pragma once

// RBF-kernel SVM. Binary machines are trained by SMO on the dual
//   min_a  1/2 a'Qa - e'a   s.t. 0 <= a <= C, y'a = 0,   Q_ij = y_i y_j K(z_i, z_j)
// using maximal-violating-pair selection; multi-class is one-vs-one voting.

#include <segdict/beat_model.hpp>
#include <segdict/error.hpp>
#include <segdict/parallel.hpp>
#include <segdict/random.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace segdict {

inline double rbf_kernel(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b, double gamma)
{
    return std::exp(-gamma * (a - b).squaredNorm());
}

/// K(A_i, B_j) for all column pairs. Squared distances are clamped at zero.
inline Matrix rbf_gram(const Matrix& a, const Matrix& b, double gamma)
{
    const Vector na = a.colwise().squaredNorm().transpose();
    const Vector nb = b.colwise().squaredNorm().transpose();
    Matrix k = -2.0 * (a.transpose() * b);
    k.colwise() += na;
    k.rowwise() += nb.transpose();
    return (-gamma * k.array().max(0.0)).exp().matrix();
}

struct SmoOptions {
    double c = 1.0;
    double gamma = 1.0;
    double tol = 1e-3;
    long max_iter = 0;          // 0: max(10^7, 100 m)
    Index cache_limit = 4000;   // full Gram matrix when m <= this
    bool record_trace = false;

    void validate() const
    {
        if (!(c > 0.0) || !std::isfinite(c))
            throw Error(ErrorKind::invalid_argument, "C must be positive");
        if (!(gamma > 0.0) || !std::isfinite(gamma))
            throw Error(ErrorKind::invalid_argument, "gamma must be positive");
        if (!(tol > 0.0))
            throw Error(ErrorKind::invalid_argument, "tol must be positive");
        if (max_iter < 0)
            throw Error(ErrorKind::invalid_argument, "max_iter must be non-negative");
    }
};

struct TrainedSvm {
    Matrix support_vectors;  // feature dim x s
    Vector alphas;           // alpha_i * y_i
    double bias = 0.0;
    double gamma = 1.0;
    double c_penalty = 1.0;
    std::pair<std::string, std::string> class_pair;  // (+1 label, -1 label)

    double decision(const Eigen::Ref<const Vector>& z) const
    {
        double f = bias;
        for (Index s = 0; s < support_vectors.cols(); ++s)
            f += alphas(s) * rbf_kernel(support_vectors.col(s), z, gamma);
        return f;
    }

    /// Decision values for every column of `z`.
    Vector decision_values(const Matrix& z) const
    {
        if (support_vectors.cols() == 0)
            return Vector::Constant(z.cols(), bias);
        Vector f = rbf_gram(z, support_vectors, gamma) * alphas;
        f.array() += bias;
        return f;
    }
};

struct SmoResult {
    TrainedSvm model;
    Vector alpha;                    // unsigned, one per training point
    bool converged = false;
    long iterations = 0;
    double objective = 0.0;          // 1/2 a'Qa - e'a
    std::vector<double> trace;       // objective after each pair update
};

namespace detail {

class KernelRows {
public:
    KernelRows(const Matrix& features, double gamma, Index cache_limit)
        : features_(features), gamma_(gamma), norms_(features.colwise().squaredNorm().transpose())
    {
        if (features.cols() <= cache_limit)
            full_ = rbf_gram(features, features, gamma);
    }

    /// Column i of the kernel matrix; `scratch` backs the result when uncached.
    const double* column(Index i, Vector& scratch) const
    {
        if (full_.size() > 0)
            return full_.col(i).data();
        scratch = -2.0 * (features_.transpose() * features_.col(i));
        scratch.array() += norms_.array() + norms_(i);
        scratch = (-gamma_ * scratch.array().max(0.0)).exp().matrix();
        scratch(i) = 1.0;
        return scratch.data();
    }

private:
    const Matrix& features_;
    double gamma_;
    Vector norms_;
    Matrix full_;
};

}  // namespace detail

/// Binary SMO. `labels` holds +1/-1. Returns the last iterate flagged
/// unconverged if the iteration cap is hit.
inline SmoResult smo_train(const Matrix& features, const Vector& labels, const SmoOptions& opts)
{
    opts.validate();
    const Index m = features.cols();
    if (labels.size() != m)
        throw Error(ErrorKind::shape_mismatch, "one label per feature column required");
    bool has_pos = false, has_neg = false;
    for (Index i = 0; i < m; ++i) {
        if (labels(i) == 1.0)
            has_pos = true;
        else if (labels(i) == -1.0)
            has_neg = true;
        else
            throw Error(ErrorKind::invalid_argument, "binary labels must be +1 or -1");
    }
    if (!has_pos || !has_neg)
        throw Error(ErrorKind::single_class_input, "both classes must be present");
    if (!features.allFinite())
        throw Error(ErrorKind::invalid_argument, "features contain non-finite values");

    const double c = opts.c;
    const double tau = 1e-12;
    const long max_iter = opts.max_iter > 0 ? opts.max_iter : std::max<long>(10'000'000, 100 * static_cast<long>(m));
    const detail::KernelRows kernel(features, opts.gamma, opts.cache_limit);
    const Vector& y = labels;

    Vector alpha = Vector::Zero(m);
    Vector grad = Vector::Constant(m, -1.0);  // Q alpha - e
    Vector scratch_i, scratch_j;
    SmoResult res;

    auto in_up = [&](Index t) { return (y(t) > 0 && alpha(t) < c) || (y(t) < 0 && alpha(t) > 0); };
    auto in_low = [&](Index t) { return (y(t) > 0 && alpha(t) > 0) || (y(t) < 0 && alpha(t) < c); };
    auto objective = [&] { return 0.5 * alpha.dot(grad - Vector::Ones(m)); };

    long iter = 0;
    while (true) {
        Index i = -1, j = -1;
        double g_max = -std::numeric_limits<double>::infinity();
        double g_min = std::numeric_limits<double>::infinity();
        for (Index t = 0; t < m; ++t) {
            const double v = -y(t) * grad(t);
            if (in_up(t) && v > g_max) {
                g_max = v;
                i = t;
            }
            if (in_low(t) && v < g_min) {
                g_min = v;
                j = t;
            }
        }
        if (i < 0 || j < 0 || g_max - g_min <= opts.tol) {
            res.converged = true;
            break;
        }
        if (iter >= max_iter)
            break;
        ++iter;

        const double* ki = kernel.column(i, scratch_i);
        const double* kj = kernel.column(j, scratch_j);
        const double kij = ki[j];
        const double old_i = alpha(i), old_j = alpha(j);
        if (y(i) != y(j)) {
            double quad = ki[i] + kj[j] - 2.0 * kij;
            if (quad <= 0.0)
                quad = tau;
            const double delta = (-grad(i) - grad(j)) / quad;
            const double diff = alpha(i) - alpha(j);
            alpha(i) += delta;
            alpha(j) += delta;
            if (diff > 0.0) {
                if (alpha(j) < 0.0) {
                    alpha(j) = 0.0;
                    alpha(i) = diff;
                }
            } else if (alpha(i) < 0.0) {
                alpha(i) = 0.0;
                alpha(j) = -diff;
            }
            if (diff > 0.0) {
                if (alpha(i) > c) {
                    alpha(i) = c;
                    alpha(j) = c - diff;
                }
            } else if (alpha(j) > c) {
                alpha(j) = c;
                alpha(i) = c + diff;
            }
        } else {
            double quad = ki[i] + kj[j] - 2.0 * kij;
            if (quad <= 0.0)
                quad = tau;
            const double delta = (grad(i) - grad(j)) / quad;
            const double sum = alpha(i) + alpha(j);
            alpha(i) -= delta;
            alpha(j) += delta;
            if (sum > c) {
                if (alpha(i) > c) {
                    alpha(i) = c;
                    alpha(j) = sum - c;
                }
                if (alpha(j) > c) {
                    alpha(j) = c;
                    alpha(i) = sum - c;
                }
            } else {
                if (alpha(j) < 0.0) {
                    alpha(j) = 0.0;
                    alpha(i) = sum;
                }
                if (alpha(i) < 0.0) {
                    alpha(i) = 0.0;
                    alpha(j) = sum;
                }
            }
        }
        alpha(i) = std::clamp(alpha(i), 0.0, c);
        alpha(j) = std::clamp(alpha(j), 0.0, c);

        const double di = (alpha(i) - old_i) * y(i);
        const double dj = (alpha(j) - old_j) * y(j);
        for (Index t = 0; t < m; ++t)
            grad(t) += y(t) * (ki[t] * di + kj[t] * dj);
        if (opts.record_trace)
            res.trace.push_back(objective());
    }
    res.iterations = iter;
    res.objective = objective();

    // Bias: average y*grad over free vectors, else the midpoint of the feasible interval.
    double ub = std::numeric_limits<double>::infinity();
    double lb = -std::numeric_limits<double>::infinity();
    double free_sum = 0.0;
    Index n_free = 0;
    for (Index t = 0; t < m; ++t) {
        const double yg = y(t) * grad(t);
        if (alpha(t) >= c) {
            if (y(t) < 0)
                ub = std::min(ub, yg);
            else
                lb = std::max(lb, yg);
        } else if (alpha(t) <= 0.0) {
            if (y(t) > 0)
                ub = std::min(ub, yg);
            else
                lb = std::max(lb, yg);
        } else {
            ++n_free;
            free_sum += yg;
        }
    }
    const double rho = n_free > 0 ? free_sum / static_cast<double>(n_free) : 0.5 * (ub + lb);

    TrainedSvm& model = res.model;
    model.bias = -rho;
    model.gamma = opts.gamma;
    model.c_penalty = c;
    Index s = 0;
    for (Index t = 0; t < m; ++t)
        if (alpha(t) > 0.0)
            ++s;
    model.support_vectors.resize(features.rows(), s);
    model.alphas.resize(s);
    s = 0;
    for (Index t = 0; t < m; ++t)
        if (alpha(t) > 0.0) {
            model.support_vectors.col(s) = features.col(t);
            model.alphas(s) = alpha(t) * y(t);
            ++s;
        }
    res.alpha = std::move(alpha);
    return res;
}

struct MultiClassSvm {
    std::vector<std::string> classes;  // sorted
    std::vector<TrainedSvm> machines;  // one per unordered pair

    /// Predicted label per column of `z`.
    std::vector<std::string> predict(const Matrix& z) const;
    std::string predict_one(const Eigen::Ref<const Vector>& z) const
    {
        return predict(Matrix(z)).front();
    }
};

struct MultiClassTrainStats {
    int unconverged = 0;
    long iterations = 0;
};

inline MultiClassSvm train_multiclass(const Matrix& features, const std::vector<std::string>& labels,
                                      const SmoOptions& opts, MultiClassTrainStats* stats = nullptr)
{
    if (static_cast<Index>(labels.size()) != features.cols())
        throw Error(ErrorKind::shape_mismatch, "one label per feature column required");
    MultiClassSvm model;
    model.classes = labels;
    std::sort(model.classes.begin(), model.classes.end());
    model.classes.erase(std::unique(model.classes.begin(), model.classes.end()), model.classes.end());
    if (model.classes.size() < 2)
        throw Error(ErrorKind::single_class_input, "at least two classes required");

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t a = 0; a < model.classes.size(); ++a)
        for (std::size_t b = a + 1; b < model.classes.size(); ++b)
            pairs.emplace_back(a, b);

    model.machines.resize(pairs.size());
    std::vector<SmoResult> results(pairs.size());
    parallel_for(static_cast<std::ptrdiff_t>(pairs.size()), [&](std::ptrdiff_t p) {
        const auto& pos = model.classes[pairs[static_cast<std::size_t>(p)].first];
        const auto& neg = model.classes[pairs[static_cast<std::size_t>(p)].second];
        std::vector<Index> cols;
        for (std::size_t t = 0; t < labels.size(); ++t)
            if (labels[t] == pos || labels[t] == neg)
                cols.push_back(static_cast<Index>(t));
        Matrix sub(features.rows(), static_cast<Index>(cols.size()));
        Vector y(static_cast<Index>(cols.size()));
        for (std::size_t t = 0; t < cols.size(); ++t) {
            sub.col(static_cast<Index>(t)) = features.col(cols[t]);
            y(static_cast<Index>(t)) = labels[static_cast<std::size_t>(cols[t])] == pos ? 1.0 : -1.0;
        }
        SmoResult r = smo_train(sub, y, opts);
        r.model.class_pair = {pos, neg};
        results[static_cast<std::size_t>(p)] = std::move(r);
    });
    MultiClassTrainStats local;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        if (!results[p].converged)
            ++local.unconverged;
        local.iterations += results[p].iterations;
        model.machines[p] = std::move(results[p].model);
    }
    if (stats)
        *stats = local;
    return model;
}

inline std::vector<std::string> MultiClassSvm::predict(const Matrix& z) const
{
    const Index n_classes = static_cast<Index>(classes.size());
    auto class_of = [&](const std::string& label) {
        const auto it = std::lower_bound(classes.begin(), classes.end(), label);
        if (it == classes.end() || *it != label)
            throw Error(ErrorKind::invalid_argument, "machine refers to unknown class " + label);
        return static_cast<Index>(it - classes.begin());
    };

    // Canonical machine order so the tie-break sums do not depend on storage order.
    std::vector<std::size_t> order(machines.size());
    for (std::size_t p = 0; p < order.size(); ++p)
        order[p] = p;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return machines[a].class_pair < machines[b].class_pair; });

    Eigen::MatrixXi votes = Eigen::MatrixXi::Zero(n_classes, z.cols());
    Matrix margin = Matrix::Zero(n_classes, z.cols());
    for (const std::size_t p : order) {
        const TrainedSvm& svm = machines[p];
        const Index pos = class_of(svm.class_pair.first);
        const Index neg = class_of(svm.class_pair.second);
        const Vector f = svm.decision_values(z);
        for (Index c = 0; c < z.cols(); ++c) {
            const Index winner = f(c) > 0.0 ? pos : neg;
            ++votes(winner, c);
            margin(winner, c) += std::abs(f(c));
        }
    }

    std::vector<std::string> out(static_cast<std::size_t>(z.cols()));
    for (Index c = 0; c < z.cols(); ++c) {
        Index best = 0;
        for (Index k = 1; k < n_classes; ++k)
            if (votes(k, c) > votes(best, c) || (votes(k, c) == votes(best, c) && margin(k, c) > margin(best, c)))
                best = k;
        out[static_cast<std::size_t>(c)] = classes[static_cast<std::size_t>(best)];
    }
    return out;
}

/// Powers of four from 2^lo to at most 2^hi.
inline std::vector<double> power_grid(int lo, int hi)
{
    std::vector<double> g;
    for (int e = lo; e <= hi; e += 2)
        g.push_back(std::ldexp(1.0, e));
    return g;
}

inline std::vector<double> default_c_grid() { return power_grid(-3, 10); }
inline std::vector<double> default_gamma_grid() { return power_grid(-10, 3); }

/// Fold index per sample: each class is shuffled and dealt round-robin.
inline std::vector<int> stratified_folds(const std::vector<std::string>& labels, int folds, std::uint64_t seed)
{
    if (folds < 2)
        throw Error(ErrorKind::invalid_argument, "folds must be at least 2");
    std::map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t t = 0; t < labels.size(); ++t)
        by_class[labels[t]].push_back(t);
    std::vector<int> fold(labels.size(), 0);
    Rng rng(seed);
    for (auto& [label, members] : by_class) {
        if (static_cast<int>(members.size()) < folds)
            throw Error(ErrorKind::class_too_small_for_folds,
                        "class " + label + " has " + std::to_string(members.size()) + " samples for " +
                            std::to_string(folds) + " folds");
        shuffle(members, rng);
        for (std::size_t r = 0; r < members.size(); ++r)
            fold[members[r]] = static_cast<int>(r % static_cast<std::size_t>(folds));
    }
    return fold;
}

struct GridPoint {
    double c = 0.0;
    double gamma = 0.0;
    double accuracy = 0.0;
};

struct GridSearchResult {
    double c = 0.0;
    double gamma = 0.0;
    double accuracy = 0.0;
    std::vector<GridPoint> table;  // C ascending, then gamma ascending
};

/// Stratified k-fold CV over the grid. Ties go to the smaller C, then the smaller gamma.
inline GridSearchResult grid_search_cv(const Matrix& features, const std::vector<std::string>& labels,
                                       std::vector<double> c_grid, std::vector<double> gamma_grid, int folds,
                                       std::uint64_t seed = 1, double tol = 1e-3)
{
    if (c_grid.empty() || gamma_grid.empty())
        throw Error(ErrorKind::invalid_argument, "grids must be nonempty");
    if (static_cast<Index>(labels.size()) != features.cols())
        throw Error(ErrorKind::shape_mismatch, "one label per feature column required");
    for (auto* g : {&c_grid, &gamma_grid}) {
        std::sort(g->begin(), g->end());
        g->erase(std::unique(g->begin(), g->end()), g->end());
    }
    const std::vector<int> fold = stratified_folds(labels, folds, seed);

    struct Split {
        Matrix train, test;
        std::vector<std::string> train_labels, test_labels;
    };
    std::vector<Split> splits(static_cast<std::size_t>(folds));
    for (int f = 0; f < folds; ++f) {
        std::vector<Index> tr, te;
        for (std::size_t t = 0; t < labels.size(); ++t)
            (fold[t] == f ? te : tr).push_back(static_cast<Index>(t));
        Split& s = splits[static_cast<std::size_t>(f)];
        s.train = features(Eigen::all, tr);
        s.test = features(Eigen::all, te);
        for (Index t : tr)
            s.train_labels.push_back(labels[static_cast<std::size_t>(t)]);
        for (Index t : te)
            s.test_labels.push_back(labels[static_cast<std::size_t>(t)]);
    }

    GridSearchResult res;
    for (double c : c_grid)
        for (double g : gamma_grid)
            res.table.push_back({c, g, 0.0});

    const std::ptrdiff_t jobs = static_cast<std::ptrdiff_t>(res.table.size()) * folds;
    std::vector<Index> correct(static_cast<std::size_t>(jobs), 0);
    parallel_for(jobs, [&](std::ptrdiff_t job) {
        const GridPoint& gp = res.table[static_cast<std::size_t>(job / folds)];
        const Split& s = splits[static_cast<std::size_t>(job % folds)];
        SmoOptions opts;
        opts.c = gp.c;
        opts.gamma = gp.gamma;
        opts.tol = tol;
        const MultiClassSvm model = train_multiclass(s.train, s.train_labels, opts);
        const auto pred = model.predict(s.test);
        Index hits = 0;
        for (std::size_t t = 0; t < pred.size(); ++t)
            hits += pred[t] == s.test_labels[t];
        correct[static_cast<std::size_t>(job)] = hits;
    });

    bool first = true;
    for (std::size_t p = 0; p < res.table.size(); ++p) {
        Index hits = 0;
        for (int f = 0; f < folds; ++f)
            hits += correct[p * static_cast<std::size_t>(folds) + static_cast<std::size_t>(f)];
        GridPoint& gp = res.table[p];
        gp.accuracy = static_cast<double>(hits) / static_cast<double>(labels.size());
        if (first || gp.accuracy > res.accuracy) {
            res.c = gp.c;
            res.gamma = gp.gamma;
            res.accuracy = gp.accuracy;
            first = false;
        }
    }
    return res;
}

}  // namespace segdict
