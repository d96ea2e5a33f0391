#pragma once

// End-to-end experiment wiring: feature extraction for each method, the
// shared SVM classifier, repeated stratified splits and timing.

#include <segdict/baselines.hpp>
#include <segdict/beat_model.hpp>
#include <segdict/classifier.hpp>
#include <segdict/config.hpp>
#include <segdict/dict_learner.hpp>
#include <segdict/error.hpp>
#include <segdict/evaluation.hpp>
#include <segdict/serialize.hpp>

#include <functional>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace segdict {

enum class FeatureMethod { sparse, kmeans, kmeanspp, fft };

inline FeatureMethod parse_method(const std::string& s)
{
    if (s == "sparse")
        return FeatureMethod::sparse;
    if (s == "kmeans")
        return FeatureMethod::kmeans;
    if (s == "kmeanspp")
        return FeatureMethod::kmeanspp;
    if (s == "fft")
        return FeatureMethod::fft;
    throw Error(ErrorKind::config_error, "unknown method '" + s + "'");
}

inline std::string method_key(FeatureMethod m)
{
    switch (m) {
    case FeatureMethod::sparse: return "sparse";
    case FeatureMethod::kmeans: return "kmeans";
    case FeatureMethod::kmeanspp: return "kmeanspp";
    case FeatureMethod::fft: return "fft";
    }
    return "?";
}

inline std::string method_title(FeatureMethod m)
{
    switch (m) {
    case FeatureMethod::sparse: return "Sparse dictionaries";
    case FeatureMethod::kmeans: return "K-means";
    case FeatureMethod::kmeanspp: return "K-means++";
    case FeatureMethod::fft: return "FFT";
    }
    return "?";
}

/// `all` expands to every method, the sparse dictionaries last.
inline std::vector<FeatureMethod> parse_methods(const std::string& s)
{
    if (s == "all")
        return {FeatureMethod::fft, FeatureMethod::kmeans, FeatureMethod::kmeanspp, FeatureMethod::sparse};
    return {parse_method(s)};
}

/// Re-throws module errors prefixed with the pipeline stage.
template <class F>
auto with_stage(const std::string& stage, F&& f) -> decltype(f())
{
    try {
        return f();
    } catch (const Error& e) {
        throw Error(e.kind(), stage + ": " + e.message());
    }
}

struct FeatureModel {
    FeatureMethod method = FeatureMethod::sparse;
    Index target_len = 0;
    int channels = 1;
    SegmentSpec spec = SegmentSpec::equal(1, 1);
    double lambda = 0.0;  // coding lambda for sparse features
    Index fft_coeffs = 0;
    std::vector<SegmentDictionary> dicts;
    std::vector<VqCodebook> codebooks;
    int k = 0;
};

struct FitResult {
    FeatureModel model;
    double construction_seconds = 0.0;
    std::vector<std::vector<AlternationRecord>> history;  // sparse only, one per segment
    std::vector<Index> training_columns;
};

/// Trains the feature extractor for `method` on the beats listed in `train`.
inline FitResult fit_features(const BeatMatrix& beats, const std::vector<Index>& train, const RunConfig& cfg,
                              FeatureMethod method)
{
    FitResult res;
    FeatureModel& m = res.model;
    m.method = method;
    m.target_len = beats.gamma() / beats.channels();
    m.channels = beats.channels();
    m.lambda = cfg.coding_lambda();
    m.fft_coeffs = cfg.fft_coeffs;
    m.k = cfg.k;
    if (method == FeatureMethod::fft)
        return res;

    m.spec = SegmentSpec::equal(beats.gamma(), cfg.segments);
    const TrainConfig tc = cfg.train_config();
    if (method == FeatureMethod::sparse) {
        TrainResult tr;
        res.construction_seconds = time_seconds([&] { tr = train_segment_dictionaries(beats, m.spec, tc, train); });
        m.dicts = std::move(tr.dicts);
        res.history = std::move(tr.history);
        res.training_columns = std::move(tr.training_columns);
        return res;
    }

    const Seeding seeding = method == FeatureMethod::kmeanspp ? Seeding::kmeanspp : Seeding::random;
    res.construction_seconds = time_seconds([&] {
        res.training_columns = cap_training_columns(train, cfg.max_train_segments, cfg.seed);
        const Matrix subset = beats.samples()(Eigen::all, res.training_columns);
        for (int j = 1; j <= m.spec.j_count(); ++j) {
            auto km = with_stage("segment " + std::to_string(j), [&] {
                return kmeans_train(segment_view(subset, m.spec, j), cfg.k, seeding, derive_seed(cfg.seed, 100 + j),
                                    cfg.kmeans_max_iter, j);
            });
            m.codebooks.push_back(std::move(km.codebook));
        }
    });
    return res;
}

/// Feature matrix (one column per beat) for the trained extractor.
inline Matrix extract_features(const FeatureModel& m, const BeatMatrix& beats)
{
    if (beats.gamma() != m.target_len * m.channels || beats.channels() != m.channels)
        throw Error(ErrorKind::shape_mismatch, "beats do not match the feature model's length or channel count");
    switch (m.method) {
    case FeatureMethod::sparse: {
        SolverOptions opts;
        opts.lambda = m.lambda;
        return encode_beats(beats, m.spec, m.dicts, opts).codes;
    }
    case FeatureMethod::kmeans:
    case FeatureMethod::kmeanspp:
        return one_hot(vq_encode(beats.samples(), m.spec, m.codebooks), m.k);
    case FeatureMethod::fft:
        return fft_features(beats, m.fft_coeffs);
    }
    throw Error(ErrorKind::invalid_argument, "unknown feature method");
}

inline void write_feature_model(std::ostream& out, const FeatureModel& m)
{
    Header h;
    h.add("format", {"segdict-features", "1"});
    h.add_value("method", method_key(m.method));
    h.add_value("target_len", std::to_string(m.target_len));
    h.add_value("channels", std::to_string(m.channels));
    h.add_value("k", std::to_string(m.k));
    h.add_value("lambda", format_double(m.lambda));
    h.add_value("fft_coeffs", std::to_string(m.fft_coeffs));
    if (m.method != FeatureMethod::fft) {
        h.add_value("gamma", std::to_string(m.spec.gamma()));
        for (const auto& r : m.spec.boundaries())
            h.add("segment", {std::to_string(r.start), std::to_string(r.end)});
    }
    h.write(out);
    for (const auto& d : m.dicts)
        write_matrix(out, d.atoms, "atoms_" + std::to_string(d.segment_index));
    for (const auto& c : m.codebooks)
        write_matrix(out, c.centers, "centers_" + std::to_string(c.segment_index));
}

inline FeatureModel read_feature_model(std::istream& in)
{
    const Header h = Header::read(in);
    expect_magic(h, "segdict-features");
    FeatureModel m;
    m.method = parse_method(h.value("method"));
    m.target_len = h.integer("target_len");
    m.channels = static_cast<int>(h.integer("channels"));
    m.k = static_cast<int>(h.integer("k"));
    m.lambda = h.number("lambda");
    m.fft_coeffs = h.integer("fft_coeffs");
    if (m.method == FeatureMethod::fft)
        return m;
    std::vector<SegmentSpec::Range> ranges;
    for (const auto& f : h.all("segment")) {
        if (f.size() != 2)
            throw Error(ErrorKind::parse_error, "segment line needs start and end");
        ranges.push_back({static_cast<Index>(Header::to_integer(f[0], "segment")),
                          static_cast<Index>(Header::to_integer(f[1], "segment"))});
    }
    m.spec = SegmentSpec::custom(h.integer("gamma"), ranges);
    for (int j = 1; j <= m.spec.j_count(); ++j) {
        if (m.method == FeatureMethod::sparse)
            m.dicts.push_back({read_matrix(in, "atoms_" + std::to_string(j)), j});
        else
            m.codebooks.push_back({read_matrix(in, "centers_" + std::to_string(j)), j});
    }
    return m;
}

/// Columns of `features` and entries of `labels` at `idx`.
inline std::pair<Matrix, std::vector<std::string>> take(const Matrix& features, const std::vector<std::string>& labels,
                                                        const std::vector<Index>& idx)
{
    std::vector<std::string> l;
    l.reserve(idx.size());
    for (Index i : idx)
        l.push_back(labels[static_cast<std::size_t>(i)]);
    return {features(Eigen::all, idx), std::move(l)};
}

struct ClassifierFit {
    GridSearchResult grid;
    MultiClassSvm model;
    MultiClassTrainStats stats;
};

inline ClassifierFit fit_classifier(const Matrix& features, const std::vector<std::string>& labels,
                                    const RunConfig& cfg, std::uint64_t seed)
{
    ClassifierFit out;
    out.grid = grid_search_cv(features, labels, cfg.c_grid, cfg.gamma_grid, cfg.cv_folds, seed, cfg.svm_tol);
    SmoOptions opts;
    opts.c = out.grid.c;
    opts.gamma = out.grid.gamma;
    opts.tol = cfg.svm_tol;
    out.model = train_multiclass(features, labels, opts, &out.stats);
    return out;
}

struct RunOutcome {
    EvalReport report;
    GridSearchResult grid;
    StageTimes times;
    int unconverged_machines = 0;
};

/// One feature method on one split: fit on train, encode every beat, select SVM
/// parameters by CV on train, evaluate on test.
inline RunOutcome run_once(const BeatMatrix& beats, const SplitIndices& split, const RunConfig& cfg,
                           FeatureMethod method, std::uint64_t seed)
{
    RunConfig local = cfg;
    local.seed = seed;
    RunOutcome out;
    const FitResult fit = with_stage("train-dict", [&] { return fit_features(beats, split.train, local, method); });
    out.times.construction = fit.construction_seconds;
    Matrix features;
    out.times.encoding = time_seconds(
        [&] { features = with_stage("encode", [&] { return extract_features(fit.model, beats); }); });

    const auto [train_x, train_y] = take(features, beats.labels(), split.train);
    const auto [test_x, test_y] = take(features, beats.labels(), split.test);
    ClassifierFit cls;
    const double svm_seconds =
        time_seconds([&] { cls = with_stage("train-svm", [&] { return fit_classifier(train_x, train_y, local, seed); }); });
    out.grid = cls.grid;
    out.unconverged_machines = cls.stats.unconverged;
    out.report = with_stage("evaluate", [&] {
        if (split.test.empty())
            throw Error(ErrorKind::empty_sample, "split leaves no test beats");
        return evaluate(cls.model.predict(test_x), test_y);
    });
    out.report.timing["construction"] = out.times.construction;
    out.report.timing["encoding"] = out.times.encoding;
    out.report.timing["classifier"] = svm_seconds;
    out.report.run_id = method_key(method) + "-" + std::to_string(seed);
    return out;
}

struct ExperimentResult {
    std::vector<FeatureMethod> methods;
    std::vector<MethodRuns> runs;                 // per method, one report per rep
    std::vector<std::vector<RunOutcome>> detail;  // per method, per rep
};

/// Repetition r uses split seed derive_seed(cfg.seed, r); every method sees the same splits.
inline ExperimentResult run_experiment(const BeatMatrix& beats, const RunConfig& cfg,
                                       const std::vector<FeatureMethod>& methods,
                                       const std::function<void(const std::string&)>& progress = {})
{
    cfg.validate();
    ExperimentResult res;
    res.methods = methods;
    res.runs.resize(methods.size());
    res.detail.resize(methods.size());
    for (std::size_t m = 0; m < methods.size(); ++m)
        res.runs[m].method = method_title(methods[m]);
    for (int r = 0; r < cfg.reps; ++r) {
        const std::uint64_t seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(r));
        const SplitIndices split =
            with_stage("split", [&] { return stratified_split(beats.labels(), cfg.split_plan(beats.labels(), seed)); });
        for (std::size_t m = 0; m < methods.size(); ++m) {
            RunOutcome o = with_stage(method_key(methods[m]), [&] { return run_once(beats, split, cfg, methods[m], seed); });
            if (progress)
                progress(method_key(methods[m]) + " rep " + std::to_string(r + 1) + "/" + std::to_string(cfg.reps) +
                         " accuracy " + detail::format_fixed(o.report.overall_accuracy, 4));
            res.runs[m].runs.push_back(o.report);
            res.detail[m].push_back(std::move(o));
        }
    }
    return res;
}

/// Feature-extraction timing: construction on the training split plus encoding of every beat.
inline std::vector<TimingRow> bench_methods(const BeatMatrix& beats, const RunConfig& cfg,
                                            const std::vector<FeatureMethod>& methods, int reps)
{
    const SplitIndices split = stratified_split(beats.labels(), cfg.split_plan(beats.labels(), derive_seed(cfg.seed, 0)));
    std::vector<BenchMethod> bench;
    for (const FeatureMethod method : methods)
        bench.push_back({method_title(method), method != FeatureMethod::fft, [&, method] {
                             StageTimes t;
                             const FitResult fit = fit_features(beats, split.train, cfg, method);
                             t.construction = fit.construction_seconds;
                             t.encoding = time_seconds([&] { (void)extract_features(fit.model, beats); });
                             return t;
                         }});
    return bench_feature_extraction(bench, reps);
}

}  // namespace segdict
