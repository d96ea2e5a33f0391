// segdict: train segment dictionaries, encode beats, train and apply the SVM,
// and run the comparison experiments from the command line.

#include <segdict/config.hpp>
#include <segdict/ingest.hpp>
#include <segdict/pipeline.hpp>
#include <segdict/serialize.hpp>
#include <segdict/synthetic.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace segdict;

namespace {

struct CommonFlags {
    std::string config_path;
    std::string dataset;
    std::string method;
    std::string out;
    long long seed = -1;
    int reps = 0;
    std::vector<std::string> overrides;  // key=value
};

void add_common(CLI::App* cmd, CommonFlags& f)
{
    cmd->add_option("--config", f.config_path, "Configuration file (key = value lines)");
    cmd->add_option("--dataset", f.dataset, "Beat CSV; overrides the config's dataset");
    cmd->add_option("--seed", f.seed, "Random seed");
    cmd->add_option("--method", f.method, "Feature method: sparse, kmeans, kmeanspp, fft or all");
    cmd->add_option("--reps", f.reps, "Repetitions with distinct split seeds");
    cmd->add_option("--out", f.out, "Output directory");
    cmd->add_option("--set", f.overrides, "Override any config key: --set key=value");
}

RunConfig resolve_config(const CommonFlags& f)
{
    RunConfig cfg;
    if (!f.config_path.empty()) {
        auto in = open_input(f.config_path);
        parse_config(in, cfg);
    }
    for (const auto& kv : f.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorKind::config_error, "--set expects key=value, got '" + kv + "'");
        cfg.set(std::string(detail::trim(std::string_view(kv).substr(0, eq))), kv.substr(eq + 1));
    }
    if (!f.dataset.empty())
        cfg.dataset = f.dataset;
    if (f.seed >= 0)
        cfg.seed = static_cast<std::uint64_t>(f.seed);
    if (!f.method.empty())
        cfg.method = f.method;
    if (f.reps > 0)
        cfg.reps = f.reps;
    if (!f.out.empty())
        cfg.output_dir = f.out;
    cfg.validate();
    fs::create_directories(cfg.output_dir);
    return cfg;
}

std::string out_path(const RunConfig& cfg, const std::string& name) { return (fs::path(cfg.output_dir) / name).string(); }

BeatMatrix load_beats(const RunConfig& cfg)
{
    if (cfg.dataset.empty())
        throw Error(ErrorKind::config_error, "no dataset: set dataset in the config or pass --dataset");
    return with_stage("ingest", [&] {
        std::vector<Index> flat;
        BeatMatrix beats = build_beat_matrix(load_dataset(cfg.dataset), cfg.target_len, &flat);
        if (!flat.empty())
            std::cerr << "warning: " << flat.size() << " flat beats were zeroed\n";
        return beats;
    });
}

FeatureMethod single_method(const RunConfig& cfg)
{
    if (cfg.method == "all")
        throw Error(ErrorKind::config_error, "this command takes a single method");
    return parse_method(cfg.method);
}

SplitIndices first_split(const BeatMatrix& beats, const RunConfig& cfg)
{
    return with_stage("split",
                      [&] { return stratified_split(beats.labels(), cfg.split_plan(beats.labels(), derive_seed(cfg.seed, 0))); });
}

void write_split(const std::string& path, const BeatMatrix& beats, const SplitIndices& split)
{
    std::vector<std::string> role(static_cast<std::size_t>(beats.count()), "test");
    for (Index i : split.train)
        role[static_cast<std::size_t>(i)] = "train";
    auto out = open_output(path);
    out << "index,label,role\n";
    for (Index i = 0; i < beats.count(); ++i)
        out << i << ',' << beats.labels()[static_cast<std::size_t>(i)] << ',' << role[static_cast<std::size_t>(i)]
            << '\n';
}

struct LabeledSplit {
    std::vector<std::string> labels;
    SplitIndices split;
};

LabeledSplit read_split(const std::string& path)
{
    auto in = open_input(path);
    LabeledSplit out;
    std::string line;
    std::getline(in, line);
    if (detail::trim(line) != "index,label,role")
        throw Error(ErrorKind::parse_error, path + ": bad header");
    Index expected = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty())
            continue;
        const auto f = detail::split_commas(detail::trim(line));
        if (f.size() != 3 || std::string(f[0]) != std::to_string(expected))
            throw Error(ErrorKind::parse_error, path + ": bad row " + std::to_string(expected + 2));
        out.labels.emplace_back(f[1]);
        if (f[2] == "train")
            out.split.train.push_back(expected);
        else if (f[2] == "test")
            out.split.test.push_back(expected);
        else
            throw Error(ErrorKind::parse_error, path + ": role must be train or test");
        ++expected;
    }
    return out;
}

int cmd_gen_synthetic(const SyntheticConfig& sc, const std::string& out_dir)
{
    fs::create_directories(out_dir);
    const SyntheticDataset data = generate_synthetic(sc);
    {
        auto out = open_output((fs::path(out_dir) / "synthetic.csv").string());
        write_dataset_csv(out, data.records);
    }
    auto out = open_output((fs::path(out_dir) / "planted.txt").string());
    for (std::size_t c = 0; c < data.planted.size(); ++c)
        write_matrix(out, data.planted[c], "planted_" + std::to_string(c + 1));
    std::cerr << "wrote " << data.records.size() << " beats in " << sc.class_count() << " classes to " << out_dir << '\n';
    return 0;
}

int cmd_train_dict(const RunConfig& cfg)
{
    const BeatMatrix beats = load_beats(cfg);
    const SplitIndices split = first_split(beats, cfg);
    const FeatureMethod method = single_method(cfg);
    const FitResult fit = with_stage("train-dict", [&] { return fit_features(beats, split.train, cfg, method); });
    {
        auto out = open_output(out_path(cfg, "dictionary.txt"));
        write_feature_model(out, fit.model);
    }
    write_split(out_path(cfg, "split.csv"), beats, split);
    auto log = open_output(out_path(cfg, "train_log.csv"));
    log << "segment,iteration,after_coding,after_update,newton_iterations,refreshed_atoms\n";
    for (std::size_t j = 0; j < fit.history.size(); ++j)
        for (const auto& r : fit.history[j])
            log << j + 1 << ',' << r.iteration << ',' << format_double(r.after_coding) << ','
                << format_double(r.after_update) << ',' << r.newton_iterations << ',' << r.refreshed_atoms << '\n';
    std::cerr << method_key(method) << " model trained on " << fit.training_columns.size() << " of "
              << split.train.size() << " training beats in " << detail::format_fixed(fit.construction_seconds, 3)
              << " s\n";
    return 0;
}

int cmd_encode(const RunConfig& cfg, const std::string& model_path)
{
    FeatureModel model;
    {
        auto in = open_input(model_path.empty() ? out_path(cfg, "dictionary.txt") : model_path);
        model = with_stage("load model", [&] { return read_feature_model(in); });
    }
    RunConfig local = cfg;
    local.target_len = model.target_len;
    const BeatMatrix beats = load_beats(local);
    const Matrix features = with_stage("encode", [&] { return extract_features(model, beats); });
    auto out = open_output(out_path(cfg, "features.txt"));
    write_matrix(out, features, "features");
    const std::string split_path = out_path(cfg, "split.csv");
    if (!fs::exists(split_path))
        write_split(split_path, beats, first_split(beats, cfg));
    std::cerr << "encoded " << beats.count() << " beats into " << features.rows() << " features\n";
    return 0;
}

Matrix read_features(const RunConfig& cfg, const LabeledSplit& split)
{
    auto in = open_input(out_path(cfg, "features.txt"));
    Matrix f = with_stage("load features", [&] { return read_matrix(in, "features"); });
    if (f.cols() != static_cast<Index>(split.labels.size()))
        throw Error(ErrorKind::shape_mismatch, "features and split.csv disagree on the beat count");
    return f;
}

int cmd_train_svm(const RunConfig& cfg)
{
    const LabeledSplit ls = read_split(out_path(cfg, "split.csv"));
    const Matrix features = read_features(cfg, ls);
    const auto [x, y] = take(features, ls.labels, ls.split.train);
    const ClassifierFit fit = with_stage("train-svm", [&] { return fit_classifier(x, y, cfg, cfg.seed); });
    {
        auto out = open_output(out_path(cfg, "svm_model.txt"));
        write_svm_model(out, fit.model);
    }
    auto grid = open_output(out_path(cfg, "grid.csv"));
    grid << "c,gamma,cv_accuracy\n";
    for (const auto& g : fit.grid.table)
        grid << format_double(g.c) << ',' << format_double(g.gamma) << ',' << format_double(g.accuracy) << '\n';
    std::cerr << "selected C=" << fit.grid.c << " gamma=" << fit.grid.gamma << " (cv accuracy "
              << detail::format_fixed(fit.grid.accuracy, 4) << ")";
    if (fit.stats.unconverged > 0)
        std::cerr << ", " << fit.stats.unconverged << " machines hit the iteration cap";
    std::cerr << '\n';
    return 0;
}

void write_report_csv(const std::string& path, const EvalReport& r)
{
    auto out = open_output(path);
    out << "metric,class,value\n";
    out << "overall_accuracy,," << format_double(r.overall_accuracy) << '\n';
    for (const auto& [label, acc] : r.per_class_accuracy)
        out << "class_accuracy," << label << ',' << format_double(acc) << '\n';
}

int cmd_predict(const RunConfig& cfg, const std::string& model_path)
{
    const LabeledSplit ls = read_split(out_path(cfg, "split.csv"));
    const Matrix features = read_features(cfg, ls);
    MultiClassSvm model;
    {
        auto in = open_input(model_path.empty() ? out_path(cfg, "svm_model.txt") : model_path);
        model = with_stage("load model", [&] { return read_svm_model(in); });
    }
    const auto [x, y] = take(features, ls.labels, ls.split.test);
    const auto pred = with_stage("predict", [&] { return model.predict(x); });
    {
        auto out = open_output(out_path(cfg, "predictions.csv"));
        out << "index,truth,predicted\n";
        for (std::size_t t = 0; t < pred.size(); ++t)
            out << ls.split.test[t] << ',' << y[t] << ',' << pred[t] << '\n';
    }
    const EvalReport report = with_stage("evaluate", [&] { return evaluate(pred, y); });
    write_report_csv(out_path(cfg, "report.csv"), report);
    auto conf = open_output(out_path(cfg, "confusion.csv"));
    write_confusion_csv(conf, report);
    std::cout << "overall accuracy " << detail::format_fixed(report.overall_accuracy, 4) << " on " << pred.size()
              << " test beats\n";
    return 0;
}

std::vector<std::string> sorted_classes(const BeatMatrix& beats)
{
    std::vector<std::string> c = beats.labels();
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    return c;
}

int cmd_run_experiment(const RunConfig& cfg)
{
    const BeatMatrix beats = load_beats(cfg);
    const auto methods = parse_methods(cfg.method);
    const ExperimentResult res =
        run_experiment(beats, cfg, methods, [](const std::string& msg) { std::cerr << msg << '\n'; });
    const auto classes = sorted_classes(beats);

    {
        auto out = open_output(out_path(cfg, "accuracy.csv"));
        write_accuracy_table(out, res.runs, classes, true);
    }
    {
        auto out = open_output(out_path(cfg, "accuracy_table.txt"));
        write_accuracy_table(out, res.runs, classes, false);
    }
    {
        auto out = open_output(out_path(cfg, "runs.csv"));
        out << "method,rep,overall_accuracy,c,gamma,unconverged_machines\n";
        for (std::size_t m = 0; m < methods.size(); ++m)
            for (std::size_t r = 0; r < res.detail[m].size(); ++r) {
                const RunOutcome& o = res.detail[m][r];
                out << method_key(methods[m]) << ',' << r + 1 << ',' << format_double(o.report.overall_accuracy) << ','
                    << format_double(o.grid.c) << ',' << format_double(o.grid.gamma) << ','
                    << o.unconverged_machines << '\n';
            }
    }
    for (std::size_t m = 0; m < methods.size(); ++m) {
        auto out = open_output(out_path(cfg, "confusion_" + method_key(methods[m]) + ".csv"));
        write_confusion_csv(out, res.runs[m].runs.front());
    }

    // Wall-clock values live in their own files so every other output is reproducible.
    std::vector<TimingRow> timing;
    for (std::size_t m = 0; m < methods.size(); ++m) {
        TimingRow row;
        row.method = res.runs[m].method;
        row.has_construction = methods[m] != FeatureMethod::fft;
        std::vector<double> cons, enc;
        for (const auto& o : res.detail[m]) {
            cons.push_back(o.times.construction);
            enc.push_back(o.times.encoding);
            row.totals.push_back(o.times.construction + o.times.encoding);
        }
        row.construction = median(cons);
        row.encoding = median(enc);
        row.total = median(row.totals);
        timing.push_back(row);
    }
    std::stable_sort(timing.begin(), timing.end(), [](const TimingRow& a, const TimingRow& b) { return a.total > b.total; });
    {
        auto out = open_output(out_path(cfg, "timing.csv"));
        write_timing_table(out, timing, true);
    }
    {
        auto out = open_output(out_path(cfg, "timing_table.txt"));
        write_timing_table(out, timing, false);
    }

    const bool has_sparse = std::find(methods.begin(), methods.end(), FeatureMethod::sparse) != methods.end();
    if (has_sparse && methods.size() > 1) {
        const auto rows = rank_sum_against(res.runs, method_title(FeatureMethod::sparse));
        {
            auto out = open_output(out_path(cfg, "rank_sum.csv"));
            write_rank_sum_table(out, rows, true);
        }
        auto out = open_output(out_path(cfg, "rank_sum_table.txt"));
        write_rank_sum_table(out, rows, false);
    }

    write_accuracy_table(std::cout, res.runs, classes, false);
    return 0;
}

int cmd_bench(const RunConfig& cfg)
{
    const BeatMatrix beats = load_beats(cfg);
    const auto methods = parse_methods(cfg.method);
    const auto rows = with_stage("bench", [&] { return bench_methods(beats, cfg, methods, cfg.reps); });
    {
        auto out = open_output(out_path(cfg, "bench.csv"));
        write_timing_table(out, rows, true);
    }
    auto out = open_output(out_path(cfg, "bench_table.txt"));
    write_timing_table(out, rows, false);
    write_timing_table(std::cout, rows, false);
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Segment dictionaries for heartbeat classification"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string model_path;

    auto* train_dict = app.add_subcommand("train-dict", "Learn per-segment dictionaries (or VQ codebooks)");
    add_common(train_dict, flags);
    auto* encode = app.add_subcommand("encode", "Encode every beat with a trained feature model");
    add_common(encode, flags);
    encode->add_option("--model", model_path, "Feature model file (default: <out>/dictionary.txt)");
    auto* train_svm = app.add_subcommand("train-svm", "Grid-search and train the SVM on the training features");
    add_common(train_svm, flags);
    auto* predict = app.add_subcommand("predict", "Classify the test beats and write a report");
    add_common(predict, flags);
    predict->add_option("--model", model_path, "SVM model file (default: <out>/svm_model.txt)");
    auto* experiment = app.add_subcommand("run-experiment", "Full pipeline over repeated splits");
    add_common(experiment, flags);
    auto* bench = app.add_subcommand("bench", "Time feature extraction per method");
    add_common(bench, flags);

    SyntheticConfig synth;
    std::string synth_out = "synthetic";
    auto* gen = app.add_subcommand("gen-synthetic", "Write a planted-dictionary dataset");
    gen->add_option("--out", synth_out, "Output directory");
    gen->add_option("--seed", synth.seed, "Random seed");
    gen->add_option("--classes", synth.classes, "Number of classes");
    gen->add_option("--per-class", synth.per_class, "Beats per class");
    gen->add_option("--k", synth.k, "Atoms per planted dictionary");
    gen->add_option("--segments", synth.segments, "Segments per beat");
    gen->add_option("--gamma", synth.gamma, "Samples per beat");
    gen->add_option("--noise", synth.noise, "Noise standard deviation");
    gen->add_option("--perturbation", synth.perturbation, "Atom shape weight relative to the class prototype");
    std::string class_counts;
    gen->add_option("--class-counts", class_counts, "Named classes with beat counts, e.g. N:400,V:250");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (gen->parsed()) {
            if (!class_counts.empty()) {
                RunConfig scratch;
                scratch.set("train_counts", class_counts);
                // Keep the order given on the command line.
                for (auto f : detail::split_commas(class_counts)) {
                    const std::string item(detail::trim(f));
                    const std::string name = item.substr(0, item.rfind(':'));
                    synth.class_counts.emplace_back(name, static_cast<int>(scratch.train_counts.at(name)));
                }
            }
            return cmd_gen_synthetic(synth, synth_out);
        }
        const RunConfig cfg = resolve_config(flags);
        if (train_dict->parsed())
            return cmd_train_dict(cfg);
        if (encode->parsed())
            return cmd_encode(cfg, model_path);
        if (train_svm->parsed())
            return cmd_train_svm(cfg);
        if (predict->parsed())
            return cmd_predict(cfg, model_path);
        if (experiment->parsed())
            return cmd_run_experiment(cfg);
        if (bench->parsed())
            return cmd_bench(cfg);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
