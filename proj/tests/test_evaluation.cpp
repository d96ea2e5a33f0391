#include "oracles.hpp"

#include <segdict/evaluation.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

namespace segdict {
namespace {

std::vector<std::string> repeat(const std::string& label, int n) { return std::vector<std::string>(n, label); }

TEST(StratifiedSplit, CountsComplementAndDeterminism)
{
    auto labels = repeat("N", 400);
    const auto v = repeat("V", 30);
    labels.insert(labels.end(), v.begin(), v.end());
    labels.push_back("Q");
    SplitPlan plan{{{"N", 350}, {"V", 10}}, 42};
    const auto s = stratified_split(labels, plan);
    EXPECT_EQ(s.train.size(), 360u);
    EXPECT_EQ(s.test.size(), 71u);
    int n_train = 0;
    for (Index t : s.train)
        n_train += labels[static_cast<std::size_t>(t)] == "N";
    EXPECT_EQ(n_train, 350);
    std::vector<Index> all = s.train;
    all.insert(all.end(), s.test.begin(), s.test.end());
    std::sort(all.begin(), all.end());
    for (std::size_t t = 0; t < all.size(); ++t)
        EXPECT_EQ(all[t], static_cast<Index>(t));
    EXPECT_TRUE(std::is_sorted(s.train.begin(), s.train.end()));

    const auto again = stratified_split(labels, plan);
    EXPECT_EQ(again.train, s.train);
    plan.seed = 43;
    EXPECT_NE(stratified_split(labels, plan).train, s.train);
}

TEST(StratifiedSplit, OverRequestNamesTheClass)
{
    const auto labels = repeat("A", 5);
    try {
        stratified_split(labels, SplitPlan{{{"A", 6}}, 1});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::insufficient_class_samples);
        EXPECT_NE(std::string(e.what()).find("class A"), std::string::npos);
    }
    EXPECT_THROW(stratified_split(labels, SplitPlan{{{"B", 1}}, 1}), Error);
}

TEST(Evaluate, AccuracyAndConfusion)
{
    const std::vector<std::string> truth{"N", "N", "V", "V"};
    const auto perfect = evaluate(truth, truth);
    EXPECT_EQ(perfect.overall_accuracy, 1.0);
    EXPECT_EQ(perfect.confusion(0, 1), 0);
    EXPECT_EQ(perfect.confusion.trace(), 4);

    const auto constant = evaluate(repeat("N", 4), truth);
    EXPECT_EQ(constant.overall_accuracy, 0.5);
    EXPECT_EQ(constant.per_class_accuracy.at("N"), 1.0);
    EXPECT_EQ(constant.per_class_accuracy.at("V"), 0.0);

    const std::vector<std::string> t6{"A", "A", "B", "B", "C", "C"};
    const std::vector<std::string> p6{"A", "B", "B", "B", "C", "A"};
    const auto r = evaluate(p6, t6);
    EXPECT_NEAR(r.overall_accuracy, 4.0 / 6.0, 1e-12);
    for (Index c = 0; c < 3; ++c)
        EXPECT_EQ(r.confusion.row(c).sum(), 2);
    EXPECT_EQ(r.confusion.sum(), 6);

    const auto extra = evaluate({"X", "N"}, {"N", "N"});
    EXPECT_EQ(extra.classes.size(), 2u);
    EXPECT_EQ(extra.per_class_accuracy.count("X"), 0u);
    EXPECT_THROW(evaluate({"N"}, truth), Error);
}

TEST(Wilcoxon, HandExamples)
{
    const auto r = wilcoxon_rank_sum({1, 2, 3}, {4, 5, 6});
    EXPECT_TRUE(r.exact);
    EXPECT_EQ(r.u, 0.0);
    EXPECT_NEAR(r.p_value, 0.1, 1e-15);
    const auto tied = wilcoxon_rank_sum({2, 2, 2}, {2, 2, 2});
    EXPECT_EQ(tied.p_value, 1.0);
    EXPECT_THROW(wilcoxon_rank_sum({}, {1.0}), Error);
}

TEST(Wilcoxon, ExactMatchesFullEnumeration)
{
    std::mt19937_64 rng(1);
    for (int nx = 1; nx <= 9; ++nx)
        for (int ny = 1; nx + ny <= 10; ++ny) {
            // Every observed U value via a permutation of distinct values.
            std::vector<double> pooled(static_cast<std::size_t>(nx + ny));
            for (int trial = 0; trial < 12; ++trial) {
                for (std::size_t t = 0; t < pooled.size(); ++t)
                    pooled[t] = static_cast<double>(t);
                shuffle(pooled, rng);
                const std::vector<double> xs(pooled.begin(), pooled.begin() + nx);
                const std::vector<double> ys(pooled.begin() + nx, pooled.end());
                const auto r = wilcoxon_rank_sum(xs, ys);
                ASSERT_TRUE(r.exact);
                const auto e = oracle::rank_sum_enumerate(nx, ny, r.u);
                const double expect =
                    std::min(1.0, 2.0 * static_cast<double>(std::min(e.lower, e.upper)) / static_cast<double>(e.total));
                EXPECT_NEAR(r.p_value, expect, 1e-12) << nx << "/" << ny;
                EXPECT_EQ(r.p_value, wilcoxon_rank_sum(ys, xs).p_value);
            }
        }
}

TEST(Wilcoxon, ExactCountsSumToBinomial)
{
    const auto counts = detail::exact_u_counts(8, 8);
    std::uint64_t total = 0;
    for (auto c : counts)
        total += c;
    EXPECT_EQ(total, 12870u);
    for (std::size_t u = 0; u < counts.size(); ++u)
        EXPECT_EQ(counts[u], counts[counts.size() - 1 - u]);
}

TEST(Wilcoxon, ExactAndNormalAgreeAtEightByEight)
{
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> xs, ys;
        for (int i = 0; i < 8; ++i) {
            xs.push_back(standard_normal(rng));
            ys.push_back(standard_normal(rng) + 0.8);
        }
        const auto exact = wilcoxon_rank_sum(xs, ys);
        ASSERT_TRUE(exact.exact);
        // Normal approximation of the same U: mean nx*ny/2, variance nx*ny*(n+1)/12.
        const double mean = 32.0;
        const double sd = std::sqrt(64.0 * 17.0 / 12.0);
        const double z = std::max(0.0, std::abs(exact.u - mean) - 0.5) / sd;
        const double normal = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
        EXPECT_NEAR(exact.p_value, normal, 0.02);
    }
}

TEST(Wilcoxon, NormalPathLargeOrTied)
{
    // Large tie-free samples use the normal approximation; symmetric in argument order.
    std::vector<double> xs, ys;
    for (int i = 0; i < 10; ++i) {
        xs.push_back(i);
        ys.push_back(i + 4.5);
    }
    const auto r = wilcoxon_rank_sum(xs, ys);
    EXPECT_FALSE(r.exact);
    EXPECT_EQ(r.p_value, wilcoxon_rank_sum(ys, xs).p_value);
    EXPECT_GT(r.p_value, 0.0);
    EXPECT_LT(r.p_value, 0.05);

    // Small samples with ties also use the normal approximation.
    const auto t = wilcoxon_rank_sum({1, 2, 2, 3}, {2, 4, 5});
    EXPECT_FALSE(t.exact);
    EXPECT_EQ(t.u + t.u_other, 12.0);
    EXPECT_GT(t.p_value, 0.0);
    EXPECT_LE(t.p_value, 1.0);
}

TEST(Bench, MedianAndOrdering)
{
    int calls = 0;
    std::vector<BenchMethod> methods;
    methods.push_back({"fast", true, [&] {
                           ++calls;
                           return StageTimes{0.1 * calls, 0.01};
                       }});
    methods.push_back({"slow", false, [] { return StageTimes{0.0, 5.0}; }});
    const auto rows = bench_feature_extraction(methods, 3);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].method, "slow");
    EXPECT_NEAR(rows[1].construction, 0.2, 1e-12);
    EXPECT_NEAR(rows[1].total, 0.21, 1e-12);
    EXPECT_EQ(rows[1].totals.size(), 3u);
    EXPECT_THROW(bench_feature_extraction(methods, 0), Error);
    EXPECT_GT(time_seconds([] {
                  volatile double x = 0;
                  for (int i = 0; i < 1000; ++i)
                      x = x + i;
              }),
              0.0);
}

TEST(Reports, TableLayoutsAndMeanStd)
{
    MethodRuns sparse{"Sparse dictionaries", {evaluate({"N", "V"}, {"N", "V"}), evaluate({"N", "N"}, {"N", "V"})}};
    MethodRuns fft{"FFT", {evaluate({"V", "V"}, {"N", "V"})}};
    const MeanStd ms = mean_std(sparse.overall());
    EXPECT_NEAR(ms.mean, 0.75, 1e-15);
    EXPECT_NEAR(ms.std, std::sqrt(0.125), 1e-15);

    std::ostringstream text;
    write_accuracy_table(text, {fft, sparse}, {"N", "V"}, false);
    const std::string t = text.str();
    EXPECT_EQ(t.rfind("Method", 0), 0u);
    EXPECT_NE(t.find("Sparse dictionaries"), std::string::npos);
    EXPECT_NE(t.find("75.00 ± 35.36"), std::string::npos);
    EXPECT_NE(t.find("Overall"), std::string::npos);

    std::ostringstream csv;
    write_accuracy_table(csv, {sparse}, {"N", "V"}, true);
    EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "method,class,mean,std,runs");

    const auto rows = rank_sum_against({fft, sparse}, "Sparse dictionaries");
    ASSERT_EQ(rows.size(), 1u);
    std::ostringstream p;
    write_rank_sum_table(p, rows, false);
    EXPECT_NE(p.str().find("Probability of accept"), std::string::npos);
    EXPECT_THROW(rank_sum_against({fft}, "missing"), Error);

    std::ostringstream timing;
    write_timing_table(timing, {{"K mean", 2.0, 1.0, 3.0, true, {3.0}}, {"FFT", 0.0, 0.5, 0.5, false, {0.5}}}, true);
    EXPECT_NE(timing.str().find("K mean,2.000000,1.000000,3.000000,1"), std::string::npos);
    EXPECT_NE(timing.str().find("FFT,,0.500000"), std::string::npos);

    std::ostringstream conf;
    write_confusion_csv(conf, sparse.runs[1]);
    EXPECT_EQ(conf.str(), "truth\\predicted,N,V\nN,1,0\nV,1,0\n");
}

}  // namespace
}  // namespace segdict
