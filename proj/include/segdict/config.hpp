#pragma once

// Run configuration: a flat `key = value` file. Unknown keys are rejected;
// command-line flags are applied afterwards through RunConfig::set.

#include <segdict/classifier.hpp>
#include <segdict/dict_learner.hpp>
#include <segdict/error.hpp>
#include <segdict/evaluation.hpp>
#include <segdict/ingest.hpp>

#include <charconv>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace segdict {

namespace detail {

/// Shortest text that parses back to the same double.
inline std::string shortest(double v)
{
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace detail

struct RunConfig {
    std::string dataset;
    Index target_len = 300;
    int segments = 4;
    int k = 32;
    double lambda = 0.15;
    double encode_lambda = 0.0;  // 0: same as lambda
    int outer_iters = 30;
    double newton_tol = 1e-6;
    Index max_train_segments = 1000;
    std::uint64_t seed = 1;
    std::string output_dir = "out";
    std::string method = "sparse";
    int reps = 10;
    int cv_folds = 5;
    std::vector<double> c_grid = default_c_grid();
    std::vector<double> gamma_grid = default_gamma_grid();
    std::map<std::string, Index> train_counts;
    Index train_per_class = 0;  // used for classes missing from train_counts
    Index fft_coeffs = 100;
    int kmeans_max_iter = 100;
    double svm_tol = 1e-3;

    void set(const std::string& key, const std::string& raw)
    {
        const std::string value(detail::trim(raw));
        auto fail = [&](const std::string& why) {
            throw Error(ErrorKind::config_error, key + " = '" + value + "': " + why);
        };
        auto integer = [&]() {
            long long v = 0;
            const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
            if (res.ec != std::errc() || res.ptr != value.data() + value.size())
                fail("expected an integer");
            return v;
        };
        auto number = [&]() {
            double v = 0.0;
            if (!detail::parse_double(value, v))
                fail("expected a number");
            return v;
        };
        auto number_list = [&]() {
            std::vector<double> out;
            for (auto f : detail::split_commas(value)) {
                double v = 0.0;
                if (!detail::parse_double(f, v))
                    fail("expected comma-separated numbers");
                out.push_back(v);
            }
            return out;
        };

        if (key == "dataset")
            dataset = value;
        else if (key == "target_len")
            target_len = integer();
        else if (key == "segments")
            segments = static_cast<int>(integer());
        else if (key == "k")
            k = static_cast<int>(integer());
        else if (key == "lambda")
            lambda = number();
        else if (key == "encode_lambda")
            encode_lambda = number();
        else if (key == "outer_iters")
            outer_iters = static_cast<int>(integer());
        else if (key == "newton_tol")
            newton_tol = number();
        else if (key == "max_train_segments")
            max_train_segments = integer();
        else if (key == "seed") {
            const long long s = integer();
            if (s < 0)
                fail("seed must be non-negative");
            seed = static_cast<std::uint64_t>(s);
        } else if (key == "output_dir")
            output_dir = value;
        else if (key == "method")
            method = value;
        else if (key == "reps")
            reps = static_cast<int>(integer());
        else if (key == "cv_folds")
            cv_folds = static_cast<int>(integer());
        else if (key == "c_grid")
            c_grid = number_list();
        else if (key == "gamma_grid")
            gamma_grid = number_list();
        else if (key == "train_counts") {
            // label:count pairs, e.g. N:350,V:200
            train_counts.clear();
            if (value.empty())
                return;
            for (auto f : detail::split_commas(value)) {
                const std::string item(detail::trim(f));
                const auto colon = item.rfind(':');
                long long n = 0;
                if (colon == std::string::npos || colon == 0 ||
                    std::from_chars(item.data() + colon + 1, item.data() + item.size(), n).ptr !=
                        item.data() + item.size() ||
                    colon + 1 == item.size())
                    fail("expected label:count pairs");
                train_counts[item.substr(0, colon)] = n;
            }
        } else if (key == "train_per_class")
            train_per_class = integer();
        else if (key == "fft_coeffs")
            fft_coeffs = integer();
        else if (key == "kmeans_max_iter")
            kmeans_max_iter = static_cast<int>(integer());
        else if (key == "svm_tol")
            svm_tol = number();
        else
            throw Error(ErrorKind::config_error, "unknown key '" + key + "'");
    }

    void validate() const
    {
        auto fail = [](const std::string& why) { throw Error(ErrorKind::config_error, why); };
        if (target_len < static_cast<Index>(kMinRawSamplesPerChannel))
            fail("target_len must be at least " + std::to_string(kMinRawSamplesPerChannel));
        if (segments < 1 || segments > target_len)
            fail("segments must be in [1, target_len]");
        if (k < 2)
            fail("k must be at least 2");
        if (!(lambda > 0.0))
            fail("lambda must be positive");
        if (encode_lambda < 0.0)
            fail("encode_lambda must be non-negative");
        if (outer_iters < 1)
            fail("outer_iters must be at least 1");
        if (!(newton_tol > 0.0))
            fail("newton_tol must be positive");
        if (max_train_segments < 1)
            fail("max_train_segments must be positive");
        if (method != "sparse" && method != "kmeans" && method != "kmeanspp" && method != "fft" && method != "all")
            fail("method must be sparse, kmeans, kmeanspp, fft or all");
        if (reps < 1)
            fail("reps must be at least 1");
        if (cv_folds < 2)
            fail("cv_folds must be at least 2");
        if (c_grid.empty() || gamma_grid.empty())
            fail("SVM grids must be nonempty");
        for (double v : c_grid)
            if (!(v > 0.0))
                fail("c_grid entries must be positive");
        for (double v : gamma_grid)
            if (!(v > 0.0))
                fail("gamma_grid entries must be positive");
        for (const auto& [label, n] : train_counts)
            if (n < 1)
                fail("train count for " + label + " must be at least 1");
        if (train_per_class < 0)
            fail("train_per_class must be non-negative");
        if (fft_coeffs < 1)
            fail("fft_coeffs must be positive");
        if (kmeans_max_iter < 1)
            fail("kmeans_max_iter must be positive");
        if (!(svm_tol > 0.0))
            fail("svm_tol must be positive");
    }

    double coding_lambda() const { return encode_lambda > 0.0 ? encode_lambda : lambda; }

    TrainConfig train_config() const
    {
        TrainConfig t;
        t.k = k;
        t.lambda = lambda;
        t.outer_iters = outer_iters;
        t.newton_tol = newton_tol;
        t.seed = seed;
        t.max_train_segments = max_train_segments;
        return t;
    }

    /// Split plan for the given labels: explicit counts first, then train_per_class.
    SplitPlan split_plan(const std::vector<std::string>& labels, std::uint64_t split_seed) const
    {
        SplitPlan plan;
        plan.seed = split_seed;
        plan.per_class_train_counts = train_counts;
        if (train_per_class > 0)
            for (const auto& l : labels)
                plan.per_class_train_counts.emplace(l, train_per_class);
        if (plan.per_class_train_counts.empty())
            throw Error(ErrorKind::config_error, "no training counts: set train_counts or train_per_class");
        return plan;
    }
};

inline void parse_config(std::istream& in, RunConfig& cfg)
{
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        const auto hash = line.find('#');
        const std::string_view body = detail::trim(std::string_view(line).substr(0, hash));
        if (body.empty())
            continue;
        const auto eq = body.find('=');
        if (eq == std::string_view::npos)
            throw Error(ErrorKind::config_error, "line " + std::to_string(row) + ": expected key = value");
        const std::string key(detail::trim(body.substr(0, eq)));
        try {
            cfg.set(key, std::string(body.substr(eq + 1)));
        } catch (const Error& e) {
            throw Error(e.kind(), "line " + std::to_string(row) + ": " + e.message());
        }
    }
}

inline void write_config(std::ostream& out, const RunConfig& cfg)
{
    auto list = [](const std::vector<double>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i)
            s += (i ? "," : "") + detail::shortest(v[i]);
        return s;
    };
    std::string counts;
    for (const auto& [label, n] : cfg.train_counts)
        counts += (counts.empty() ? "" : ",") + label + ":" + std::to_string(n);
    out << "dataset = " << cfg.dataset << '\n'
        << "target_len = " << cfg.target_len << '\n'
        << "segments = " << cfg.segments << '\n'
        << "k = " << cfg.k << '\n'
        << "lambda = " << detail::shortest(cfg.lambda) << '\n'
        << "encode_lambda = " << detail::shortest(cfg.encode_lambda) << '\n'
        << "outer_iters = " << cfg.outer_iters << '\n'
        << "newton_tol = " << detail::shortest(cfg.newton_tol) << '\n'
        << "max_train_segments = " << cfg.max_train_segments << '\n'
        << "seed = " << cfg.seed << '\n'
        << "output_dir = " << cfg.output_dir << '\n'
        << "method = " << cfg.method << '\n'
        << "reps = " << cfg.reps << '\n'
        << "cv_folds = " << cfg.cv_folds << '\n'
        << "c_grid = " << list(cfg.c_grid) << '\n'
        << "gamma_grid = " << list(cfg.gamma_grid) << '\n'
        << "train_counts = " << counts << '\n'
        << "train_per_class = " << cfg.train_per_class << '\n'
        << "fft_coeffs = " << cfg.fft_coeffs << '\n'
        << "kmeans_max_iter = " << cfg.kmeans_max_iter << '\n'
        << "svm_tol = " << detail::shortest(cfg.svm_tol) << '\n';
}

}  // namespace segdict
