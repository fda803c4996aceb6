#include "malbench/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <iostream>
#include <map>
#include <optional>

#include "malbench/analyze.hpp"
#include "malbench/evaluate.hpp"
#include "malbench/learn.hpp"
#include "malbench/orchestrate.hpp"
#include "malbench/plot.hpp"
#include "malbench/sample.hpp"
#include "malbench/synth.hpp"
#include "malbench/vectorize.hpp"

namespace malbench {

namespace {

const std::vector<std::string> kAlgorithms = {"DT", "RF", "LGBM", "SVM"};
const std::vector<std::string> kFeatureSets = {"parsed", "format_agnostic", "combined"};
const std::vector<std::string> kMeasures = {"accuracy", "real-life", "AUC"};

struct SplitArgs {
    std::string first_malware_time = "2018-01-01";
    std::string split_time = "2018-07-31";
    std::size_t top_n = 50;

    void add(CLI::App* app) {
        app->add_option("--first-malware-time", first_malware_time, "Earliest training date")->capture_default_str();
        app->add_option("--split-time", split_time, "Train/test boundary date")->capture_default_str();
        app->add_option("--top-n", top_n, "Families kept from each side")->capture_default_str();
    }

    SplitConfig config() const {
        SplitConfig c;
        c.first_malware_time = parse_date(first_malware_time);
        c.split_time = parse_date(split_time);
        c.top_n = top_n;
        return c;
    }
};

MetadataIndex load_index(const std::string& index_path, const FragmentManifest& manifest) {
    return index_path.empty() ? build_metadata_index(manifest) : read_metadata_index(index_path);
}

}  // namespace

int run_subcommand(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Benchmark harness for static malware detectors on EMBER-format features", "malbench"};
    app.require_subcommand(1);
    app.fallthrough(false);

    // vectorize
    std::vector<std::string> vec_inputs;
    std::string vec_out;
    VectorizeOptions vec_opts;
    bool vec_lenient = false;
    auto* vectorize = app.add_subcommand("vectorize", "Convert JSONL records into feature fragments");
    vectorize->add_option("--input,-i", vec_inputs, "JSONL input files, in order")->required();
    vectorize->add_option("--out,-o", vec_out, "Fragment directory")->required();
    vectorize->add_option("--fragment-size", vec_opts.fragment_size, "Rows per fragment")->capture_default_str();
    vectorize->add_option("--batch-size", vec_opts.batch_size, "Records vectorized together")->capture_default_str();
    vectorize->add_option("--workers", vec_opts.workers, "Vectorization threads")->capture_default_str();
    vectorize->add_flag("--lenient", vec_lenient, "Fill missing fields with zeros instead of failing");

    // index
    std::string idx_fragments, idx_out;
    auto* index = app.add_subcommand("index", "Build the metadata index of a fragment directory");
    index->add_option("--fragments,-f", idx_fragments, "Fragment directory or manifest")->required();
    index->add_option("--out,-o", idx_out, "Index CSV")->required();

    // sample
    std::string smp_fragments, smp_index, smp_out, smp_role = "train", smp_fs = "combined";
    std::size_t smp_n = 0, smp_ratio = 1;
    std::uint64_t smp_seed = 0;
    SplitArgs smp_split;
    auto* sample = app.add_subcommand("sample", "Draw and materialize a train or test dataset");
    sample->add_option("--fragments,-f", smp_fragments, "Fragment directory or manifest")->required();
    sample->add_option("--index", smp_index, "Metadata index CSV (rebuilt when omitted)");
    sample->add_option("--role", smp_role, "train or test")->check(CLI::IsMember({"train", "test"}))->capture_default_str();
    sample->add_option("--n-malware", smp_n, "Malware rows to draw")->required();
    sample->add_option("--ratio", smp_ratio, "Benign rows per malware row")->capture_default_str();
    sample->add_option("--feature-set", smp_fs, "Feature columns to keep")->check(CLI::IsMember(kFeatureSets))->capture_default_str();
    sample->add_option("--seed", smp_seed, "Sampling seed")->required();
    sample->add_option("--out,-o", smp_out, "Dataset CSV")->required();
    smp_split.add(sample);

    // train
    std::string trn_data, trn_alg, trn_out, trn_hyper;
    std::uint64_t trn_seed = 0;
    unsigned trn_threads = 1;
    auto* train_cmd = app.add_subcommand("train", "Train a detector on a dataset CSV");
    train_cmd->add_option("--data,-d", trn_data, "Dataset CSV")->required();
    train_cmd->add_option("--algorithm,-a", trn_alg, "DT, RF, LGBM or SVM")->check(CLI::IsMember(kAlgorithms))->required();
    train_cmd->add_option("--seed", trn_seed, "Training seed")->required();
    train_cmd->add_option("--hyperparams", trn_hyper, "Hyperparameter override file");
    train_cmd->add_option("--threads", trn_threads, "Random forest build threads")->capture_default_str();
    train_cmd->add_option("--out,-o", trn_out, "Model file")->required();

    // evaluate
    std::string ev_model, ev_data, ev_measure = "accuracy";
    double ev_target = 0.01;
    auto* evaluate = app.add_subcommand("evaluate", "Score a trained model on a dataset CSV");
    evaluate->add_option("--model,-m", ev_model, "Model file")->required();
    evaluate->add_option("--data,-d", ev_data, "Dataset CSV")->required();
    evaluate->add_option("--measure", ev_measure, "accuracy, real-life or AUC")->check(CLI::IsMember(kMeasures))->capture_default_str();
    evaluate->add_option("--target-fpr", ev_target, "FPR for the real-life measure")->capture_default_str();

    // run
    std::string run_config, run_out;
    bool run_resume = false;
    unsigned run_workers = 0;
    std::optional<std::uint64_t> run_seed;
    bool run_verbose = false;
    auto* run = app.add_subcommand("run", "Execute the experiment grid");
    run->add_option("--config,-c", run_config, "Experiment config file")->required();
    run->add_option("--out,-o", run_out, "Results CSV")->required();
    run->add_flag("--resume", run_resume, "Skip observations already recorded");
    run->add_option("--workers", run_workers, "Parallel runs (default: MALBENCH_WORKERS or core count)");
    run->add_option("--seed", run_seed, "Run a single seed instead of the config's seed list");
    run->add_flag("--verbose,-v", run_verbose, "Log each completed observation");

    // analyze
    std::string an_results, an_out, an_measure, an_mode = "correlation";
    int an_question = 1;
    bool an_relative = false;
    auto* analyze = app.add_subcommand("analyze", "Correlation and sensitivity tables from a results CSV");
    analyze->add_option("--results,-r", an_results, "Results CSV")->required();
    analyze->add_option("--question,-q", an_question, "Question 1, 2 or 3")->check(CLI::Range(1, 3))->capture_default_str();
    analyze->add_option("--measure", an_measure, "Perf measure (default: accuracy for question 1, real-life otherwise)")
        ->check(CLI::IsMember(kMeasures));
    analyze->add_option("--mode", an_mode, "correlation, sensitivity or fit")
        ->check(CLI::IsMember({"correlation", "sensitivity", "fit"}))
        ->capture_default_str();
    analyze->add_flag("--relative", an_relative, "Sensitivity as a fraction of the smaller level's performance");
    analyze->add_option("--out,-o", an_out, "Output CSV (default: stdout)");

    // plot
    std::string pl_table, pl_kind = "line", pl_group, pl_out;
    std::vector<std::string> pl_filters;
    PlotSpec pl_spec;
    auto* plot = app.add_subcommand("plot", "Render a line, box or regression plot as SVG");
    plot->add_option("--table,-t", pl_table, "Input CSV")->required();
    plot->add_option("--kind,-k", pl_kind, "line, box or regression")
        ->check(CLI::IsMember({"line", "box", "regression"}))
        ->capture_default_str();
    plot->add_option("--x", pl_spec.x, "X column");
    plot->add_option("--y", pl_spec.y, "Y column")->required();
    plot->add_option("--group-by", pl_group, "Comma-separated grouping columns");
    plot->add_option("--where", pl_filters, "column=value row filter, repeatable");
    plot->add_flag("--log2-x", pl_spec.log2_x, "Use log2 of the x column");
    plot->add_option("--title", pl_spec.title, "Figure title");
    plot->add_option("--out,-o", pl_out, "SVG output")->required();

    // synth
    SynthConfig syn;
    std::string syn_out;
    std::size_t syn_families = 20;
    unsigned syn_workers = 1;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic EMBER-format corpus");
    synth->add_option("--out,-o", syn_out, "JSONL output")->required();
    synth->add_option("--n", syn.n_samples, "Records")->capture_default_str();
    synth->add_option("--malware-fraction", syn.malware_fraction, "Fraction labelled malware")->capture_default_str();
    synth->add_option("--separability", syn.separability, "Class mean shift in standard deviations")->capture_default_str();
    synth->add_option("--families", syn_families, "Number of malware families")->capture_default_str();
    synth->add_option("--first-month", syn.first_month, "First month (YYYY-MM)")->capture_default_str();
    synth->add_option("--last-month", syn.last_month, "Last month (YYYY-MM)")->capture_default_str();
    synth->add_option("--seed", syn.seed, "Generator seed")->required();
    synth->add_option("--workers", syn_workers, "Generation threads")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e, out, err);
            return 0;
        }
        err << "error: " << e.what() << "\n\n";
        const CLI::App* failing = &app;
        for (const auto* sub : app.get_subcommands()) failing = sub;
        err << failing->help();
        return 2;
    }

    try {
        if (vectorize->parsed()) {
            vec_opts.mode = vec_lenient ? ParseMode::Lenient : ParseMode::Strict;
            VectorizeStats stats;
            const auto manifest = vectorize_corpus(vec_inputs, vec_out, vec_opts, &stats);
            out << "vectorized " << stats.records << " records into " << manifest.fragments.size() << " fragment(s)\n";
        } else if (index->parsed()) {
            const auto idx = build_metadata_index(read_manifest(idx_fragments));
            write_metadata_index(idx, idx_out);
            out << "indexed " << idx.rows.size() << " rows\n";
        } else if (sample->parsed()) {
            const auto manifest = read_manifest(smp_fragments);
            const auto pools = partition_pools(load_index(smp_index, manifest), smp_split.config());
            const DatasetSpec spec{parse_role(smp_role), smp_n, smp_ratio, parse_feature_set(smp_fs), smp_seed};
            const Dataset ds = draw_dataset(pools, spec);
            const FragmentStore store(manifest);
            write_dataset_csv(materialize(ds, store, spec.feature_set), smp_out);
            out << spec.name() << ": " << ds.rows.size() << " rows\n";
        } else if (train_cmd->parsed()) {
            Hyperparams params = trn_hyper.empty() ? Hyperparams{} : Hyperparams::load(trn_hyper);
            params.forest.threads = trn_threads;
            const auto data = read_dataset_csv(trn_data);
            const auto model = train(parse_algorithm(trn_alg), data.x, data.y, trn_seed, params);
            save_model(model, trn_out);
            out << "model " << to_hex(model_fingerprint(model));
            if (!model.converged) out << " (not converged after " << model.iterations << " epochs)";
            out << "\n";
        } else if (evaluate->parsed()) {
            const auto model = load_model(ev_model);
            const auto data = read_dataset_csv(ev_data);
            out << "perf_measure,performance,other_info\n";
            if (ev_measure == "accuracy") {
                out << "accuracy," << format_number(accuracy(data.y, model.predict(data.x))) << ",\n";
            } else if (ev_measure == "AUC") {
                out << "AUC,"
                    << (model.supports_scores() ? format_number(auc(roc_curve(data.y, model.score(data.x)))) : "")
                    << ",\n";
            } else {
                const auto op = model.supports_scores()
                                    ? recall_at_fpr(roc_curve(data.y, model.score(data.x)), ev_target)
                                    : hard_label_operating_point(data.y, model.predict(data.x));
                out << "real-life," << format_number(op.recall) << "," << format_number(op.achieved_fpr) << "\n";
            }
        } else if (run->parsed()) {
            ExperimentConfig config = ExperimentConfig::load(run_config);
            if (run_seed) config.seeds = {*run_seed};
            ExecuteOptions options;
            options.out_path = run_out;
            options.resume = run_resume;
            options.workers = run_workers;
            if (run_verbose) options.log = &err;
            const auto report = run_experiment(config, options);
            out << "runs: " << report.executed << " executed, " << report.skipped << " resumed, "
                << report.failures.size() << " failed; models trained: " << report.models_trained << "\n";
            if (!report.failures.empty()) {
                for (const auto& f : report.failures) err << "failed " << observation_key(f.run) << ": " << f.message << "\n";
                return 1;
            }
        } else if (analyze->parsed()) {
            const auto obs = read_observations(an_results);
            const std::string measure = !an_measure.empty() ? an_measure : an_question == 1 ? "accuracy" : "real-life";
            const DeltaMode mode = an_relative ? DeltaMode::Relative : DeltaMode::Absolute;
            Table table;
            if (an_mode == "correlation") {
                table.header = {"algorithm", "r", "n"};
                for (const auto& c : correlation_table(obs, an_question, measure)) {
                    table.rows.push_back({c.algorithm, format_number(c.r), std::to_string(c.n)});
                }
            } else {
                const auto slices = repeated_oat(obs, an_question, measure, mode);
                if (an_mode == "sensitivity") {
                    table.header = {"algorithm", "feature_set", "seed", "train_set_size", "log2_size", "delta"};
                    for (const auto& s : slices) {
                        table.rows.push_back({s.algorithm, s.feature_set, std::to_string(s.seed),
                                              format_number(s.point.level), format_number(std::log2(s.point.level)),
                                              format_number(s.point.delta)});
                    }
                } else {
                    std::map<std::string, std::vector<std::pair<double, double>>> by_alg;
                    std::vector<std::string> order;
                    for (const auto& s : slices) {
                        if (!by_alg.contains(s.algorithm)) order.push_back(s.algorithm);
                        by_alg[s.algorithm].emplace_back(std::log2(s.point.level), s.point.delta);
                    }
                    table.header = {"algorithm", "slope", "intercept", "n"};
                    for (const auto& a : order) {
                        const auto fit = fit_linear(by_alg[a]);
                        table.rows.push_back({a, format_number(fit.slope), format_number(fit.intercept),
                                              std::to_string(by_alg[a].size())});
                    }
                }
            }
            if (an_out.empty()) out << table.to_csv();
            else write_file_atomic(an_out, table.to_csv());
        } else if (plot->parsed()) {
            Table table = read_table(pl_table);
            for (const auto& f : pl_filters) {
                const auto eq = f.find('=');
                if (eq == std::string::npos) throw Error(ErrorKind::InvalidArgument, "--where expects column=value");
                const std::size_t col = table.column(f.substr(0, eq));
                const std::string value = f.substr(eq + 1);
                std::erase_if(table.rows, [&](const auto& row) { return row.at(col) != value; });
            }
            pl_spec.kind = parse_plot_kind(pl_kind);
            if (pl_spec.kind != PlotKind::Box && pl_spec.x.empty()) {
                throw Error(ErrorKind::InvalidArgument, "--x is required for line and regression plots");
            }
            for (std::string_view g : split(pl_group, ',')) {
                if (!trim(g).empty()) pl_spec.group_by.emplace_back(trim(g));
            }
            pl_spec.output = pl_out;
            emit_plot(table, pl_spec);
        } else if (synth->parsed()) {
            syn.families = SynthConfig::default_families(syn_families);
            generate_corpus(syn, syn_out, syn_workers);
            out << "wrote " << syn.n_samples << " records to " << syn_out << "\n";
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace malbench
