#pragma once

// Experiment protocol: stratified train/test splits, accuracy reports, the
// Wilcoxon rank-sum test, feature-extraction timing and report tables.

#include <segdict/beat_model.hpp>
#include <segdict/error.hpp>
#include <segdict/random.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace segdict {

struct SplitPlan {
    std::map<std::string, Index> per_class_train_counts;
    std::uint64_t seed = 1;
};

struct SplitIndices {
    std::vector<Index> train;  // ascending
    std::vector<Index> test;   // ascending
};

namespace detail {

/// FNV-1a, so each class draws from its own stream regardless of plan order.
inline std::uint64_t label_stream(const std::string& label)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const unsigned char ch : label)
        h = (h ^ ch) * 0x100000001b3ull;
    return h;
}

}  // namespace detail

/// Per class, draws the requested number of training beats without replacement;
/// every other beat (including classes absent from the plan) is a test beat.
inline SplitIndices stratified_split(const std::vector<std::string>& labels, const SplitPlan& plan)
{
    std::map<std::string, std::vector<Index>> by_class;
    for (std::size_t t = 0; t < labels.size(); ++t)
        by_class[labels[t]].push_back(static_cast<Index>(t));

    std::vector<bool> is_train(labels.size(), false);
    for (const auto& [label, count] : plan.per_class_train_counts) {
        if (count < 1)
            throw Error(ErrorKind::invalid_argument, "training count for class " + label + " must be at least 1");
        const auto it = by_class.find(label);
        const Index available = it == by_class.end() ? 0 : static_cast<Index>(it->second.size());
        if (count > available)
            throw Error(ErrorKind::insufficient_class_samples, "class " + label + " has " + std::to_string(available) +
                                                                   " beats, " + std::to_string(count) + " requested");
        Rng class_rng(derive_seed(plan.seed, detail::label_stream(label)));
        for (const std::int64_t pick : sample_without_replacement(available, count, class_rng))
            is_train[static_cast<std::size_t>(it->second[static_cast<std::size_t>(pick)])] = true;
    }

    SplitIndices out;
    for (std::size_t t = 0; t < labels.size(); ++t)
        (is_train[t] ? out.train : out.test).push_back(static_cast<Index>(t));
    return out;
}

inline SplitIndices stratified_split(const BeatMatrix& beats, const SplitPlan& plan)
{
    return stratified_split(beats.labels(), plan);
}

struct EvalReport {
    double overall_accuracy = 0.0;
    std::map<std::string, double> per_class_accuracy;  // classes present in the truth
    std::vector<std::string> classes;                   // sorted union of truth and predictions
    Eigen::MatrixXi confusion;                          // rows: truth, cols: prediction
    std::map<std::string, double> timing;               // stage -> seconds
    std::string run_id;
};

inline EvalReport evaluate(const std::vector<std::string>& predicted, const std::vector<std::string>& truth)
{
    if (predicted.size() != truth.size())
        throw Error(ErrorKind::length_mismatch, std::to_string(predicted.size()) + " predictions for " +
                                                    std::to_string(truth.size()) + " labels");
    if (truth.empty())
        throw Error(ErrorKind::empty_sample, "nothing to evaluate");

    EvalReport r;
    std::set<std::string> all(truth.begin(), truth.end());
    all.insert(predicted.begin(), predicted.end());
    r.classes.assign(all.begin(), all.end());
    auto index_of = [&](const std::string& l) {
        return static_cast<Index>(std::lower_bound(r.classes.begin(), r.classes.end(), l) - r.classes.begin());
    };
    const Index n = static_cast<Index>(r.classes.size());
    r.confusion = Eigen::MatrixXi::Zero(n, n);
    for (std::size_t t = 0; t < truth.size(); ++t)
        ++r.confusion(index_of(truth[t]), index_of(predicted[t]));

    r.overall_accuracy = static_cast<double>(r.confusion.trace()) / static_cast<double>(truth.size());
    for (Index c = 0; c < n; ++c) {
        const int row = r.confusion.row(c).sum();
        if (row > 0)
            r.per_class_accuracy[r.classes[static_cast<std::size_t>(c)]] =
                static_cast<double>(r.confusion(c, c)) / static_cast<double>(row);
    }
    return r;
}

struct RankSumResult {
    double u = 0.0;        // Mann-Whitney U of xs: rank sum of xs minus nx(nx+1)/2
    double u_other = 0.0;  // same for ys; u + u_other = nx * ny
    double p_value = 1.0;  // two-sided
    double z = 0.0;        // normal approximation only
    bool exact = false;
};

namespace detail {

/// Midranks (1-based) of the pooled sample.
inline std::vector<double> midranks(const std::vector<double>& pooled, std::vector<Index>* tie_sizes = nullptr)
{
    std::vector<std::size_t> order(pooled.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pooled[a] < pooled[b]; });
    std::vector<double> rank(pooled.size());
    for (std::size_t lo = 0; lo < order.size();) {
        std::size_t hi = lo;
        while (hi + 1 < order.size() && pooled[order[hi + 1]] == pooled[order[lo]])
            ++hi;
        const double mid = 0.5 * static_cast<double>(lo + hi) + 1.0;
        for (std::size_t t = lo; t <= hi; ++t)
            rank[order[t]] = mid;
        if (tie_sizes && hi > lo)
            tie_sizes->push_back(static_cast<Index>(hi - lo + 1));
        lo = hi + 1;
    }
    return rank;
}

/// counts[u] = number of nx-subsets of ranks 1..nx+ny whose U statistic equals u.
inline std::vector<std::uint64_t> exact_u_counts(int nx, int ny)
{
    const int n = nx + ny;
    const int max_u = nx * ny;
    // ways[j][u]: subsets of size j drawn from the ranks seen so far, by U offset.
    std::vector<std::vector<std::uint64_t>> ways(static_cast<std::size_t>(nx + 1),
                                                 std::vector<std::uint64_t>(static_cast<std::size_t>(max_u + 1), 0));
    ways[0][0] = 1;
    for (int r = 1; r <= n; ++r)
        for (int j = std::min(r, nx); j >= 1; --j) {
            // Choosing rank r as the j-th smallest member adds r - j to U.
            const int add = r - j;
            if (add > ny)
                continue;
            for (int u = max_u; u >= add; --u)
                ways[static_cast<std::size_t>(j)][static_cast<std::size_t>(u)] +=
                    ways[static_cast<std::size_t>(j - 1)][static_cast<std::size_t>(u - add)];
        }
    return ways[static_cast<std::size_t>(nx)];
}

}  // namespace detail

/// Two-sided Wilcoxon rank-sum test. Exact when the pooled size is at most 16
/// and there are no ties; otherwise normal approximation with tie-corrected
/// variance and continuity correction.
inline RankSumResult wilcoxon_rank_sum(const std::vector<double>& xs, const std::vector<double>& ys)
{
    if (xs.empty() || ys.empty())
        throw Error(ErrorKind::empty_sample, "rank-sum test needs two nonempty samples");
    for (const auto* s : {&xs, &ys})
        for (const double v : *s)
            if (!std::isfinite(v))
                throw Error(ErrorKind::invalid_argument, "rank-sum input must be finite");

    const int nx = static_cast<int>(xs.size());
    const int ny = static_cast<int>(ys.size());
    std::vector<double> pooled(xs);
    pooled.insert(pooled.end(), ys.begin(), ys.end());
    std::vector<Index> ties;
    const std::vector<double> rank = detail::midranks(pooled, &ties);

    RankSumResult r;
    const double rx = std::accumulate(rank.begin(), rank.begin() + nx, 0.0);
    r.u = rx - nx * (nx + 1) / 2.0;
    r.u_other = static_cast<double>(nx) * ny - r.u;

    const int n = nx + ny;
    if (n <= 16 && ties.empty()) {
        r.exact = true;
        const auto counts = detail::exact_u_counts(nx, ny);
        const auto observed = static_cast<std::size_t>(std::llround(r.u));
        std::uint64_t total = 0, lower = 0, upper = 0;
        for (std::size_t u = 0; u < counts.size(); ++u) {
            total += counts[u];
            if (u <= observed)
                lower += counts[u];
            if (u >= observed)
                upper += counts[u];
        }
        const double tail = static_cast<double>(std::min(lower, upper)) / static_cast<double>(total);
        r.p_value = std::min(1.0, 2.0 * tail);
        return r;
    }

    const double mean = static_cast<double>(nx) * ny / 2.0;
    double tie_term = 0.0;
    for (const Index t : ties)
        tie_term += static_cast<double>(t) * t * t - static_cast<double>(t);
    const double var =
        static_cast<double>(nx) * ny / 12.0 * ((n + 1.0) - tie_term / (static_cast<double>(n) * (n - 1.0)));
    if (!(var > 0.0)) {
        r.p_value = 1.0;  // every observation tied
        return r;
    }
    const double dev = std::max(0.0, std::abs(r.u - mean) - 0.5);
    r.z = (r.u >= mean ? 1.0 : -1.0) * dev / std::sqrt(var);
    r.p_value = std::min(1.0, std::erfc(dev / std::sqrt(var) / std::sqrt(2.0)));
    return r;
}

struct StageTimes {
    double construction = 0.0;  // dictionary or codebook training; zero for FFT
    double encoding = 0.0;
};

struct TimingRow {
    std::string method;
    double construction = 0.0;  // median over reps
    double encoding = 0.0;      // median over reps
    double total = 0.0;         // median over reps of construction + encoding
    bool has_construction = false;
    std::vector<double> totals;  // per rep
};

inline double median(std::vector<double> v)
{
    if (v.empty())
        throw Error(ErrorKind::empty_sample, "median of empty sample");
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

struct BenchMethod {
    std::string name;
    bool has_construction = true;
    std::function<StageTimes()> run;  // measures itself; excludes I/O and classifier training
};

/// Runs each method `reps` times back to back and reports medians, rows sorted
/// by total time descending.
inline std::vector<TimingRow> bench_feature_extraction(const std::vector<BenchMethod>& methods, int reps)
{
    if (reps < 1)
        throw Error(ErrorKind::invalid_argument, "reps must be at least 1");
    std::vector<TimingRow> rows;
    for (const auto& m : methods) {
        std::vector<double> cons, enc;
        TimingRow row;
        row.method = m.name;
        row.has_construction = m.has_construction;
        for (int r = 0; r < reps; ++r) {
            const StageTimes t = m.run();
            cons.push_back(t.construction);
            enc.push_back(t.encoding);
            row.totals.push_back(t.construction + t.encoding);
        }
        row.construction = median(cons);
        row.encoding = median(enc);
        row.total = median(row.totals);
        rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(), [](const TimingRow& a, const TimingRow& b) { return a.total > b.total; });
    return rows;
}

/// Wall-clock seconds spent in `f`.
template <class F>
double time_seconds(F&& f)
{
    const auto start = std::chrono::steady_clock::now();
    f();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation; zero for a single value
};

inline MeanStd mean_std(const std::vector<double>& v)
{
    if (v.empty())
        throw Error(ErrorKind::empty_sample, "mean of empty sample");
    MeanStd out;
    out.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (const double x : v)
            ss += (x - out.mean) * (x - out.mean);
        out.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return out;
}

/// Repeated-run results of one feature method.
struct MethodRuns {
    std::string method;
    std::vector<EvalReport> runs;

    std::vector<double> overall() const
    {
        std::vector<double> v;
        for (const auto& r : runs)
            v.push_back(r.overall_accuracy);
        return v;
    }

    /// Per-run accuracy for one class; runs where the class was absent from the test set are skipped.
    std::vector<double> per_class(const std::string& label) const
    {
        std::vector<double> v;
        for (const auto& r : runs) {
            const auto it = r.per_class_accuracy.find(label);
            if (it != r.per_class_accuracy.end())
                v.push_back(it->second);
        }
        return v;
    }
};

namespace detail {

inline std::string format_fixed(double v, int digits)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string pct(const MeanStd& m)
{
    return format_fixed(100.0 * m.mean, 2) + " ± " + format_fixed(100.0 * m.std, 2);
}

inline std::string format_g(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4e", v);
    return buf;
}

/// Plain-text table with columns padded to their widest cell (counted in code points).
inline void write_aligned(std::ostream& out, const std::vector<std::vector<std::string>>& rows)
{
    auto width = [](const std::string& s) {
        std::size_t w = 0;
        for (const unsigned char ch : s)
            w += (ch & 0xC0) != 0x80;
        return w;
    };
    std::vector<std::size_t> w;
    for (const auto& row : rows)
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (w.size() <= c)
                w.push_back(0);
            w[c] = std::max(w[c], width(row[c]));
        }
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            out << row[c];
            if (c + 1 < row.size())
                out << std::string(w[c] - width(row[c]) + 2, ' ');
        }
        out << '\n';
    }
}

inline void write_csv(std::ostream& out, const std::vector<std::vector<std::string>>& rows)
{
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            const bool quote = row[c].find_first_of(",\"\n") != std::string::npos;
            if (c)
                out << ',';
            if (quote) {
                out << '"';
                for (const char ch : row[c])
                    out << (ch == '"' ? "\"\"" : std::string(1, ch));
                out << '"';
            } else {
                out << row[c];
            }
        }
        out << '\n';
    }
}

}  // namespace detail

/// Per-class accuracy table: one row per method, one column per class, then
/// the overall accuracy. Text cells are percentages as mean ± std over runs.
inline void write_accuracy_table(std::ostream& out, const std::vector<MethodRuns>& methods,
                                 const std::vector<std::string>& classes, bool csv)
{
    std::vector<std::vector<std::string>> rows;
    if (csv) {
        std::vector<std::string> head{"method", "class", "mean", "std", "runs"};
        rows.push_back(head);
        for (const auto& m : methods) {
            for (const auto& c : classes) {
                const auto v = m.per_class(c);
                if (v.empty())
                    continue;
                const MeanStd s = mean_std(v);
                rows.push_back({m.method, c, detail::format_fixed(s.mean, 6), detail::format_fixed(s.std, 6),
                                std::to_string(v.size())});
            }
            const MeanStd s = mean_std(m.overall());
            rows.push_back({m.method, "overall", detail::format_fixed(s.mean, 6), detail::format_fixed(s.std, 6),
                            std::to_string(m.runs.size())});
        }
        detail::write_csv(out, rows);
        return;
    }
    std::vector<std::string> head{"Method"};
    head.insert(head.end(), classes.begin(), classes.end());
    head.push_back("Overall");
    rows.push_back(head);
    for (const auto& m : methods) {
        std::vector<std::string> row{m.method};
        for (const auto& c : classes) {
            const auto v = m.per_class(c);
            row.push_back(v.empty() ? "-" : detail::pct(mean_std(v)));
        }
        row.push_back(detail::pct(mean_std(m.overall())));
        rows.push_back(row);
    }
    detail::write_aligned(out, rows);
}

struct RankSumRow {
    std::string method;
    std::string against;
    RankSumResult result;
};

/// Rank-sum test of each method's per-run accuracies against the reference method.
inline std::vector<RankSumRow> rank_sum_against(const std::vector<MethodRuns>& methods, const std::string& reference)
{
    const auto ref = std::find_if(methods.begin(), methods.end(),
                                  [&](const MethodRuns& m) { return m.method == reference; });
    if (ref == methods.end())
        throw Error(ErrorKind::invalid_argument, "reference method " + reference + " was not run");
    std::vector<RankSumRow> rows;
    for (const auto& m : methods)
        if (m.method != reference)
            rows.push_back({m.method, reference, wilcoxon_rank_sum(m.overall(), ref->overall())});
    return rows;
}

inline void write_rank_sum_table(std::ostream& out, const std::vector<RankSumRow>& rows, bool csv)
{
    std::vector<std::vector<std::string>> cells;
    if (csv) {
        cells.push_back({"method", "against", "u", "p_value", "exact"});
        for (const auto& r : rows) {
            std::ostringstream p;
            p << std::setprecision(17) << r.result.p_value;
            cells.push_back({r.method, r.against, detail::format_fixed(r.result.u, 1), p.str(),
                             r.result.exact ? "1" : "0"});
        }
        detail::write_csv(out, cells);
        return;
    }
    cells.push_back({"Method", "Against to", "U", "Probability of accept"});
    for (const auto& r : rows)
        cells.push_back({r.method, r.against, detail::format_fixed(r.result.u, 1), detail::format_g(r.result.p_value)});
    detail::write_aligned(out, cells);
}

inline void write_timing_table(std::ostream& out, const std::vector<TimingRow>& rows, bool csv)
{
    std::vector<std::vector<std::string>> cells;
    if (csv) {
        cells.push_back({"method", "construction_s", "encoding_s", "total_s", "reps"});
        for (const auto& r : rows)
            cells.push_back({r.method, r.has_construction ? detail::format_fixed(r.construction, 6) : "",
                             detail::format_fixed(r.encoding, 6), detail::format_fixed(r.total, 6),
                             std::to_string(r.totals.size())});
        detail::write_csv(out, cells);
        return;
    }
    cells.push_back({"Feature/dictionary", "Construction", "Encoding", "Time consumption"});
    for (const auto& r : rows)
        cells.push_back({r.method, r.has_construction ? detail::format_fixed(r.construction, 4) + "s" : "-",
                         detail::format_fixed(r.encoding, 4) + "s", detail::format_fixed(r.total, 4) + "s"});
    detail::write_aligned(out, cells);
}

inline void write_confusion_csv(std::ostream& out, const EvalReport& r)
{
    std::vector<std::vector<std::string>> cells;
    std::vector<std::string> head{"truth\\predicted"};
    head.insert(head.end(), r.classes.begin(), r.classes.end());
    cells.push_back(head);
    for (std::size_t i = 0; i < r.classes.size(); ++i) {
        std::vector<std::string> row{r.classes[i]};
        for (std::size_t j = 0; j < r.classes.size(); ++j)
            row.push_back(std::to_string(r.confusion(static_cast<Index>(i), static_cast<Index>(j))));
        cells.push_back(row);
    }
    detail::write_csv(out, cells);
}

}  // namespace segdict
