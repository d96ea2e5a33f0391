#include <segdict/config.hpp>
#include <segdict/pipeline.hpp>
#include <segdict/serialize.hpp>
#include <segdict/synthetic.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace segdict;

namespace {

BeatMatrix small_synthetic(int per_class = 20, std::uint64_t seed = 3)
{
    SyntheticConfig sc;
    sc.classes = 3;
    sc.per_class = per_class;
    sc.k = 6;
    sc.gamma = 64;
    sc.seed = seed;
    return build_beat_matrix(generate_synthetic(sc).records, 64);
}

RunConfig small_config()
{
    RunConfig cfg;
    cfg.target_len = 64;
    cfg.k = 8;
    cfg.outer_iters = 5;
    cfg.reps = 2;
    cfg.cv_folds = 3;
    cfg.train_per_class = 8;
    cfg.c_grid = {1.0, 16.0};
    cfg.gamma_grid = {0.01, 0.1};
    cfg.fft_coeffs = 16;
    return cfg;
}

}  // namespace

TEST(Serialize, MatrixRoundTripIsExact)
{
    Rng rng(5);
    Matrix m = oracle::random_matrix(7, 4, rng);
    m(0, 0) = 1e-300;
    m(1, 1) = -0.1;
    m(2, 2) = 0.0;
    std::stringstream ss;
    write_matrix(ss, m, "m");
    const Matrix back = read_matrix(ss, "m");
    ASSERT_EQ(back.rows(), 7);
    ASSERT_EQ(back.cols(), 4);
    for (Index i = 0; i < m.size(); ++i)
        EXPECT_EQ(back.data()[i], m.data()[i]);
}

TEST(Serialize, MatrixErrors)
{
    std::stringstream wrong_name("1 1 a\n1\n");
    EXPECT_THROW(read_matrix(wrong_name, "b"), Error);
    std::stringstream short_row("1 2 a\n1\n");
    EXPECT_THROW(read_matrix(short_row), Error);
    std::stringstream bad_value("1 1 a\nx\n");
    EXPECT_THROW(read_matrix(bad_value), Error);
    std::stringstream truncated("2 1 a\n1\n");
    EXPECT_THROW(read_matrix(truncated), Error);
}

TEST(Serialize, SvmModelRoundTripPredictsIdentically)
{
    const BeatMatrix beats = small_synthetic();
    SmoOptions opts;
    opts.c = 4.0;
    opts.gamma = 0.05;
    const MultiClassSvm model = train_multiclass(beats.samples(), beats.labels(), opts);
    std::stringstream ss;
    write_svm_model(ss, model);
    const MultiClassSvm back = read_svm_model(ss);
    ASSERT_EQ(back.classes, model.classes);
    ASSERT_EQ(back.machines.size(), model.machines.size());
    for (std::size_t p = 0; p < model.machines.size(); ++p) {
        EXPECT_EQ(back.machines[p].bias, model.machines[p].bias);
        EXPECT_EQ(back.machines[p].class_pair, model.machines[p].class_pair);
        EXPECT_TRUE((back.machines[p].alphas.array() == model.machines[p].alphas.array()).all());
        EXPECT_EQ(back.machines[p].decision_values(beats.samples()),
                  model.machines[p].decision_values(beats.samples()));
    }
    EXPECT_EQ(back.predict(beats.samples()), model.predict(beats.samples()));
}

TEST(Serialize, RejectsForeignFiles)
{
    std::stringstream ss("format segdict-features 1\nend\n");
    EXPECT_THROW(read_svm_model(ss), Error);
    std::stringstream unterminated("format segdict-svm 1\n");
    EXPECT_THROW(read_svm_model(unterminated), Error);
}

TEST(Pipeline, FeatureModelRoundTripForEveryMethod)
{
    const BeatMatrix beats = small_synthetic();
    const RunConfig cfg = small_config();
    std::vector<Index> train;
    for (Index i = 0; i < beats.count(); i += 2)
        train.push_back(i);
    for (const auto method : parse_methods("all")) {
        const FitResult fit = fit_features(beats, train, cfg, method);
        std::stringstream ss;
        write_feature_model(ss, fit.model);
        const FeatureModel back = read_feature_model(ss);
        EXPECT_EQ(back.method, method);
        const Matrix a = extract_features(fit.model, beats);
        const Matrix b = extract_features(back, beats);
        ASSERT_EQ(a.rows(), b.rows()) << method_key(method);
        EXPECT_TRUE((a.array() == b.array()).all()) << method_key(method);
    }
}

TEST(Pipeline, FeatureDimensions)
{
    const BeatMatrix beats = small_synthetic();
    const RunConfig cfg = small_config();
    std::vector<Index> train(static_cast<std::size_t>(beats.count()));
    std::iota(train.begin(), train.end(), Index{0});
    const Index j = cfg.segments;
    EXPECT_EQ(extract_features(fit_features(beats, train, cfg, FeatureMethod::sparse).model, beats).rows(), cfg.k);
    const Matrix vq = extract_features(fit_features(beats, train, cfg, FeatureMethod::kmeans).model, beats);
    EXPECT_EQ(vq.rows(), j * cfg.k);
    // One active entry per segment.
    for (Index c = 0; c < vq.cols(); ++c)
        EXPECT_EQ(vq.col(c).sum(), static_cast<double>(j));
    EXPECT_EQ(extract_features(fit_features(beats, train, cfg, FeatureMethod::fft).model, beats).rows(), cfg.fft_coeffs);
}

TEST(Pipeline, ExtractRejectsMismatchedBeats)
{
    const BeatMatrix beats = small_synthetic();
    const RunConfig cfg = small_config();
    const FitResult fit = fit_features(beats, {0, 1, 2, 3, 4, 5, 6, 7, 8}, cfg, FeatureMethod::kmeans);
    SyntheticConfig sc;
    sc.gamma = 80;
    sc.per_class = 2;
    const BeatMatrix other = build_beat_matrix(generate_synthetic(sc).records, 80);
    EXPECT_THROW((void)extract_features(fit.model, other), Error);
}

TEST(Pipeline, ExperimentSharesSplitsAndIsDeterministic)
{
    const BeatMatrix beats = small_synthetic();
    RunConfig cfg = small_config();
    const auto methods = std::vector<FeatureMethod>{FeatureMethod::fft, FeatureMethod::kmeans};
    const ExperimentResult a = run_experiment(beats, cfg, methods);
    const ExperimentResult b = run_experiment(beats, cfg, methods);
    ASSERT_EQ(a.runs.size(), 2u);
    for (std::size_t m = 0; m < methods.size(); ++m) {
        ASSERT_EQ(a.runs[m].runs.size(), 2u);
        for (std::size_t r = 0; r < 2; ++r) {
            EXPECT_EQ(a.runs[m].runs[r].overall_accuracy, b.runs[m].runs[r].overall_accuracy);
            EXPECT_EQ(a.runs[m].runs[r].confusion, b.runs[m].runs[r].confusion);
            EXPECT_EQ(a.detail[m][r].grid.c, b.detail[m][r].grid.c);
        }
    }
    // Both methods are scored on the same test beats: the per-class test counts agree.
    for (std::size_t r = 0; r < 2; ++r)
        EXPECT_EQ(a.runs[0].runs[r].confusion.rowwise().sum(), a.runs[1].runs[r].confusion.rowwise().sum());
    // 20 beats per class, 8 train: 12 test each.
    EXPECT_EQ(a.runs[0].runs[0].confusion.sum(), 36);
}

TEST(Pipeline, StageIsNamedInErrors)
{
    const BeatMatrix beats = small_synthetic(5);
    RunConfig cfg = small_config();
    cfg.train_per_class = 6;
    try {
        (void)run_experiment(beats, cfg, {FeatureMethod::fft});
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::insufficient_class_samples);
        EXPECT_NE(std::string(e.what()).find("split"), std::string::npos);
    }
}

TEST(Config, ParseOverridesAndRoundTrip)
{
    std::istringstream in("# comment\nk = 16\nlambda=0.2  # trailing\ntrain_counts = N:350, V:200\n"
                          "c_grid = 1,2,4\nmethod = all\n");
    RunConfig cfg;
    parse_config(in, cfg);
    EXPECT_EQ(cfg.k, 16);
    EXPECT_EQ(cfg.lambda, 0.2);
    EXPECT_EQ(cfg.train_counts.at("N"), 350);
    EXPECT_EQ(cfg.train_counts.at("V"), 200);
    EXPECT_EQ(cfg.c_grid, (std::vector<double>{1, 2, 4}));
    cfg.validate();

    std::stringstream ss;
    write_config(ss, cfg);
    RunConfig back;
    parse_config(ss, back);
    std::stringstream again;
    write_config(again, back);
    EXPECT_EQ(ss.str(), again.str());
    EXPECT_EQ(back.gamma_grid, cfg.gamma_grid);
}

TEST(Config, ErrorsNameTheLine)
{
    RunConfig cfg;
    std::istringstream unknown("k = 4\nbogus = 1\n");
    try {
        parse_config(unknown, cfg);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::config_error);
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
    std::istringstream bad_int("k = 4.5\n");
    EXPECT_THROW(parse_config(bad_int, cfg), Error);
    std::istringstream bad_pairs("train_counts = N350\n");
    EXPECT_THROW(parse_config(bad_pairs, cfg), Error);
    RunConfig v;
    v.lambda = 0.0;
    EXPECT_THROW(v.validate(), Error);
    v = RunConfig{};
    v.method = "pca";
    EXPECT_THROW(v.validate(), Error);
}

TEST(Config, SplitPlanFallsBackToPerClassCount)
{
    RunConfig cfg;
    cfg.train_counts = {{"N", 5}};
    cfg.train_per_class = 2;
    const auto plan = cfg.split_plan({"N", "V", "V", "A"}, 9);
    EXPECT_EQ(plan.per_class_train_counts.at("N"), 5);
    EXPECT_EQ(plan.per_class_train_counts.at("V"), 2);
    EXPECT_EQ(plan.per_class_train_counts.at("A"), 2);
    EXPECT_THROW(RunConfig{}.split_plan({"N"}, 1), Error);
}

TEST(Synthetic, DeterministicAndWellFormed)
{
    SyntheticConfig sc;
    sc.classes = 3;
    sc.per_class = 10;
    sc.k = 5;
    sc.gamma = 40;
    const SyntheticDataset a = generate_synthetic(sc);
    const SyntheticDataset b = generate_synthetic(sc);
    ASSERT_EQ(a.records.size(), 30u);
    for (std::size_t i = 0; i < a.records.size(); ++i)
        EXPECT_EQ(a.records[i].samples, b.records[i].samples);
    for (const Matrix& d : a.planted) {
        ASSERT_EQ(d.rows(), 40);
        ASSERT_EQ(d.cols(), 5);
        // Each segment block of each atom has unit norm.
        for (Index c = 0; c < d.cols(); ++c)
            for (Index j = 0; j < sc.segments; ++j)
                EXPECT_NEAR(d.block(j * 10, c, 10, 1).norm(), 1.0, 1e-12);
    }
    sc.seed = 2;
    EXPECT_NE(generate_synthetic(sc).records[0].samples, a.records[0].samples);
}

TEST(Synthetic, CsvRoundTripsThroughIngest)
{
    SyntheticConfig sc;
    sc.classes = 2;
    sc.per_class = 3;
    sc.gamma = 32;
    const SyntheticDataset data = generate_synthetic(sc);
    std::stringstream ss;
    write_dataset_csv(ss, data.records);
    const auto parsed = parse_dataset(ss);
    ASSERT_EQ(parsed.size(), data.records.size());
    for (std::size_t i = 0; i < parsed.size(); ++i) {
        EXPECT_EQ(parsed[i].label, data.records[i].label);
        EXPECT_EQ(parsed[i].samples, data.records[i].samples);
    }
}
