#include "malbench/orchestrate.hpp"

#include <algorithm>
#include <atomic>
#include <optional>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>

#include "malbench/evaluate.hpp"

namespace malbench {

namespace {

namespace fs = std::filesystem;

template <typename T, typename Parse>
std::vector<T> parse_list(std::string_view value, Parse parse_one) {
    std::vector<T> out;
    for (std::string_view item : split(value, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse_one(item));
    }
    return out;
}

std::size_t parse_size(std::string_view v) {
    const long long n = parse_integer(v);
    if (n < 0) throw Error(ErrorKind::InvalidArgument, "negative value " + std::string(v));
    return static_cast<std::size_t>(n);
}

template <typename T, typename Format>
std::string join(const std::vector<T>& items, Format format_one) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ", ";
        out += format_one(items[i]);
    }
    return out;
}

std::string size_text(std::size_t v) { return std::to_string(v); }
std::string same(const std::string& s) { return s; }

bool valid_measure(std::string_view m) { return m == "accuracy" || m == "real-life" || m == "AUC"; }

void require_doubling(const std::vector<std::size_t>& levels, std::string_view what) {
    if (levels.empty()) throw Error(ErrorKind::InvalidLevels, std::string(what) + " is empty");
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (levels[i] == 0) throw Error(ErrorKind::InvalidLevels, std::string(what) + " contains 0");
        if (i > 0 && levels[i] != 2 * levels[i - 1]) {
            throw Error(ErrorKind::InvalidLevels, std::string(what) + ": " + std::to_string(levels[i]) +
                                                      " does not double " + std::to_string(levels[i - 1]));
        }
    }
}

std::string resolve(const fs::path& base, const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute()) return p;
    return (base / p).lexically_normal().string();
}

std::string ratio_text(std::size_t k) { return "1:" + std::to_string(k); }

}  // namespace

ExperimentConfig ExperimentConfig::parse(std::string_view text) {
    ExperimentConfig c;
    std::size_t line_number = 0;
    for (std::string_view raw : malbench::split(text, '\n')) {
        ++line_number;
        const std::string_view line = trim(raw.substr(0, raw.find('#')));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorKind::InvalidArgument, "config line " + std::to_string(line_number) + ": expected key = value");
        }
        const std::string key(trim(line.substr(0, eq)));
        const std::string_view v = trim(line.substr(eq + 1));
        try {
            if (key == "fragments_dir") c.fragments_dir = v;
            else if (key == "index") c.index = v;
            else if (key == "models_dir") c.models_dir = v;
            else if (key == "hyperparams") c.hyperparams = v;
            else if (key == "questions") c.questions = parse_list<int>(v, [](auto s) { return static_cast<int>(parse_integer(s)); });
            else if (key == "train_levels") c.train_levels = parse_list<std::size_t>(v, parse_size);
            else if (key == "q2_test_malware") c.q2_test_malware = parse_size(v);
            else if (key == "q2_ratio") c.q2_ratio = parse_size(v);
            else if (key == "q3_train_malware") c.q3_train_malware = parse_size(v);
            else if (key == "q3_test_malware") c.q3_test_malware = parse_size(v);
            else if (key == "q3_ratios") c.q3_ratios = parse_list<std::size_t>(v, parse_size);
            else if (key == "q1_measures") c.q1_measures = parse_list<std::string>(v, [](auto s) { return std::string(s); });
            else if (key == "q2_measures") c.q2_measures = parse_list<std::string>(v, [](auto s) { return std::string(s); });
            else if (key == "q3_measures") c.q3_measures = parse_list<std::string>(v, [](auto s) { return std::string(s); });
            else if (key == "seeds") c.seeds = parse_list<std::uint64_t>(v, [](auto s) { return static_cast<std::uint64_t>(parse_integer(s)); });
            else if (key == "algorithms") c.algorithms = parse_list<Algorithm>(v, parse_algorithm);
            else if (key == "feature_sets") c.feature_sets = parse_list<FeatureSet>(v, parse_feature_set);
            else if (key == "target_fpr") c.target_fpr = parse_number(v);
            else if (key == "first_malware_time") c.split.first_malware_time = parse_date(v);
            else if (key == "split_time") c.split.split_time = parse_date(v);
            else if (key == "top_n") c.split.top_n = parse_size(v);
            else throw Error(ErrorKind::InvalidArgument, "unknown key '" + key + "'");
        } catch (const Error& e) {
            throw Error(e.kind(), "config line " + std::to_string(line_number) + ": " + e.message());
        }
    }
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    ExperimentConfig c = parse(read_file(path));
    const fs::path base = fs::path(path).parent_path();
    c.fragments_dir = resolve(base, c.fragments_dir);
    c.index = resolve(base, c.index);
    c.models_dir = resolve(base, c.models_dir);
    c.hyperparams = resolve(base, c.hyperparams);
    return c;
}

std::string ExperimentConfig::to_text() const {
    std::string out;
    auto put = [&](std::string_view key, const std::string& value) {
        out += key;
        out += " = ";
        out += value;
        out += '\n';
    };
    if (!fragments_dir.empty()) put("fragments_dir", fragments_dir);
    if (!index.empty()) put("index", index);
    if (!models_dir.empty()) put("models_dir", models_dir);
    if (!hyperparams.empty()) put("hyperparams", hyperparams);
    put("questions", join(questions, [](int q) { return std::to_string(q); }));
    put("train_levels", join(train_levels, size_text));
    put("q2_test_malware", std::to_string(q2_test_malware));
    put("q2_ratio", std::to_string(q2_ratio));
    put("q3_train_malware", std::to_string(q3_train_malware));
    put("q3_test_malware", std::to_string(q3_test_malware));
    put("q3_ratios", join(q3_ratios, size_text));
    put("q1_measures", join(q1_measures, same));
    put("q2_measures", join(q2_measures, same));
    put("q3_measures", join(q3_measures, same));
    put("seeds", join(seeds, [](std::uint64_t s) { return std::to_string(s); }));
    put("algorithms", join(algorithms, [](Algorithm a) { return std::string(to_string(a)); }));
    put("feature_sets", join(feature_sets, [](FeatureSet f) { return std::string(to_string(f)); }));
    put("target_fpr", format_number(target_fpr));
    put("first_malware_time", format_date(split.first_malware_time));
    put("split_time", format_date(split.split_time));
    put("top_n", std::to_string(split.top_n));
    return out;
}

void ExperimentConfig::validate() const {
    if (questions.empty()) throw Error(ErrorKind::InvalidLevels, "no questions selected");
    if (algorithms.empty()) throw Error(ErrorKind::InvalidLevels, "algorithm list is empty");
    if (feature_sets.empty()) throw Error(ErrorKind::InvalidLevels, "feature set list is empty");
    if (seeds.empty()) throw Error(ErrorKind::InvalidLevels, "seed list is empty");
    if (!(target_fpr > 0 && target_fpr < 1)) throw Error(ErrorKind::InvalidLevels, "target_fpr must lie in (0,1)");
    const std::set<int> qs(questions.begin(), questions.end());
    if (qs.size() != questions.size()) throw Error(ErrorKind::InvalidLevels, "duplicate question");
    for (int q : questions) {
        if (q < 1 || q > 3) throw Error(ErrorKind::InvalidLevels, "unknown question " + std::to_string(q));
    }
    auto check_measures = [](const std::vector<std::string>& ms, std::string_view what) {
        if (ms.empty()) throw Error(ErrorKind::InvalidLevels, std::string(what) + " is empty");
        for (const auto& m : ms)
            if (!valid_measure(m)) throw Error(ErrorKind::InvalidLevels, "unknown perf measure '" + m + "'");
    };
    if (qs.contains(1) || qs.contains(2)) require_doubling(train_levels, "train_levels");
    if (qs.contains(1)) check_measures(q1_measures, "q1_measures");
    if (qs.contains(2)) {
        check_measures(q2_measures, "q2_measures");
        if (q2_test_malware == 0 || q2_ratio == 0) throw Error(ErrorKind::InvalidLevels, "question 2 sizes must be positive");
    }
    if (qs.contains(3)) {
        check_measures(q3_measures, "q3_measures");
        require_doubling(q3_ratios, "q3_ratios");
        if (q3_train_malware == 0 || q3_test_malware == 0) {
            throw Error(ErrorKind::InvalidLevels, "question 3 sizes must be positive");
        }
    }
    split.validate();
}

DatasetSpec RunSpec::train_spec() const { return {Role::Train, train_n_malware, 1, feature_set, seed}; }

DatasetSpec RunSpec::test_spec() const { return {Role::Test, test_n_malware, test_benign_ratio, feature_set, seed}; }

std::string RunSpec::model_key() const {
    return ModelName{algorithm, train_n_malware, 1, feature_set, seed}.str();
}

std::string observation_key(const Observation& o) {
    return std::to_string(o.question) + "|" + o.algorithm + "|" + o.feature_set + "|" +
           std::to_string(o.train_set_size) + "|" + o.test_set_ratio + "|" + o.perf_measure + "|" +
           std::to_string(o.seed);
}

std::string observation_key(const RunSpec& r) {
    Observation o;
    o.question = r.question;
    o.algorithm = to_string(r.algorithm);
    o.feature_set = to_string(r.feature_set);
    o.train_set_size = 2 * r.train_n_malware;
    o.test_set_ratio = ratio_text(r.test_benign_ratio);
    o.perf_measure = r.perf_measure;
    o.seed = r.seed;
    return observation_key(o);
}

ExperimentPlan plan(const ExperimentConfig& config) {
    config.validate();
    ExperimentPlan p;
    auto emit = [&](int question, std::size_t train_n, std::size_t test_n, std::size_t ratio,
                    const std::vector<std::string>& measures) {
        for (Algorithm a : config.algorithms)
            for (FeatureSet f : config.feature_sets)
                for (std::uint64_t seed : config.seeds)
                    for (const auto& m : measures) p.runs.push_back({question, train_n, test_n, ratio, a, f, m, seed});
    };
    std::vector<int> questions = config.questions;
    std::sort(questions.begin(), questions.end());
    for (int q : questions) {
        if (q == 1) {
            for (std::size_t n : config.train_levels) emit(1, n, n, 1, config.q1_measures);
        } else if (q == 2) {
            for (std::size_t n : config.train_levels)
                emit(2, n, config.q2_test_malware, config.q2_ratio, config.q2_measures);
        } else {
            for (std::size_t k : config.q3_ratios)
                emit(3, config.q3_train_malware, config.q3_test_malware, k, config.q3_measures);
        }
    }
    return p;
}

void check_pools(const ExperimentPlan& plan, const Pools& pools) {
    std::size_t train_n = 0, test_n = 0, test_benign = 0;
    for (const auto& r : plan.runs) {
        train_n = std::max(train_n, r.train_n_malware);
        test_n = std::max(test_n, r.test_n_malware);
        test_benign = std::max(test_benign, r.test_n_malware * r.test_benign_ratio);
    }
    auto need = [](std::string_view pool, std::size_t have, std::size_t want) {
        if (want > have) {
            throw Error(ErrorKind::InsufficientPool, std::string(pool) + " pool holds " + std::to_string(have) +
                                                         ", plan needs " + std::to_string(want) + " (short by " +
                                                         std::to_string(want - have) + ")");
        }
    };
    need("train malware", pools.train_malware.size(), train_n);
    need("train benign", pools.train_benign.size(), train_n);
    need("test malware", pools.test_malware.size(), test_n);
    need("test benign", pools.test_benign.size(), test_benign);
}

namespace {

Observation evaluate_run(const RunSpec& run, const TrainedModel& model, const MaterializedDataset& test,
                         double target_fpr) {
    Observation o;
    o.question = run.question;
    o.algorithm = to_string(run.algorithm);
    o.feature_set = to_string(run.feature_set);
    o.train_set_size = 2 * run.train_n_malware;
    o.test_set_size = run.test_n_malware * (1 + run.test_benign_ratio);
    o.test_set_ratio = ratio_text(run.test_benign_ratio);
    o.perf_measure = run.perf_measure;
    o.seed = run.seed;
    if (run.perf_measure == "accuracy") {
        o.performance = accuracy(test.y, model.predict(test.x));
    } else if (run.perf_measure == "AUC") {
        if (model.supports_scores()) o.performance = auc(roc_curve(test.y, model.score(test.x)));
    } else {
        const OperatingPoint op = model.supports_scores()
                                      ? recall_at_fpr(roc_curve(test.y, model.score(test.x)), target_fpr)
                                      : hard_label_operating_point(test.y, model.predict(test.x));
        o.performance = op.recall;
        o.other_info = op.achieved_fpr;
    }
    return o;
}

std::vector<Observation> read_journal(const std::string& path) {
    std::vector<Observation> out;
    std::ifstream in(path);
    if (!in) return out;
    std::string line;
    const std::string header(kResultsHeader);
    while (std::getline(in, line)) {
        if (line.empty() || line == header) continue;
        try {
            auto rows = parse_observations(header + "\n" + line + "\n");
            out.insert(out.end(), rows.begin(), rows.end());
        } catch (const Error&) {
            // An interrupted append leaves a torn final line; it is simply rerun.
        }
    }
    return out;
}

}  // namespace

ExecuteReport execute(const ExperimentPlan& plan, const FragmentStore& store, const Pools& pools,
                      const Hyperparams& params, const ExecuteOptions& options) {
    if (options.out_path.empty()) throw Error(ErrorKind::InvalidArgument, "no output path");
    check_pools(plan, pools);

    std::set<std::string> seen;
    for (const auto& r : plan.runs) {
        if (!seen.insert(observation_key(r)).second) {
            throw Error(ErrorKind::InvalidLevels, "duplicate observation key " + observation_key(r));
        }
    }

    const std::string journal_path = options.out_path + ".partial";
    std::map<std::string, Observation> done;
    if (options.resume) {
        if (fs::exists(options.out_path)) {
            for (auto& o : read_observations(options.out_path)) done[observation_key(o)] = o;
        }
        for (auto& o : read_journal(journal_path)) done[observation_key(o)] = o;
    } else {
        fs::remove(journal_path);
    }

    ExecuteReport report;
    // One task per trained model; its runs keep plan order.
    std::map<std::string, std::vector<std::size_t>> by_model;
    std::vector<std::string> task_order;
    for (std::size_t i = 0; i < plan.runs.size(); ++i) {
        if (done.contains(observation_key(plan.runs[i]))) {
            ++report.skipped;
            continue;
        }
        auto [it, inserted] = by_model.try_emplace(plan.runs[i].model_key());
        if (inserted) task_order.push_back(it->first);
        it->second.push_back(i);
    }

    std::vector<std::optional<Observation>> fresh(plan.runs.size());
    std::vector<std::uint64_t> fingerprints(plan.runs.size(), 0);
    std::vector<std::string> errors(plan.runs.size());
    std::mutex journal_mutex;
    std::ofstream journal;
    if (!task_order.empty()) {
        journal.open(journal_path, std::ios::app);
        if (!journal) throw Error(ErrorKind::IoFailure, "cannot open journal " + journal_path);
    }
    std::atomic<std::size_t> trained{0};

    if (!options.models_dir.empty()) fs::create_directories(options.models_dir);
    const unsigned workers = options.workers ? options.workers : default_workers();
    parallel_for(task_order.size(), workers, [&](std::size_t t) {
        const auto& runs = by_model.at(task_order[t]);
        const RunSpec& first = plan.runs[runs.front()];
        std::optional<TrainedModel> model;
        std::uint64_t fingerprint = 0;
        std::string train_error;
        try {
            const Dataset train_ds = draw_dataset(pools, first.train_spec());
            const MaterializedDataset train_data = materialize(train_ds, store, first.feature_set);
            model = train(first.algorithm, train_data.x, train_data.y, first.seed, params);
            fingerprint = model_fingerprint(*model);
            ++trained;
            if (!options.models_dir.empty()) {
                save_model(*model, (fs::path(options.models_dir) / (task_order[t] + ".model")).string());
            }
        } catch (const std::exception& e) {
            train_error = std::string("training failed: ") + e.what();
        }

        std::map<std::pair<std::size_t, std::size_t>, MaterializedDataset> tests;
        for (std::size_t i : runs) {
            const RunSpec& run = plan.runs[i];
            if (!model) {
                errors[i] = train_error;
                continue;
            }
            try {
                const auto test_key = std::make_pair(run.test_n_malware, run.test_benign_ratio);
                auto it = tests.find(test_key);
                if (it == tests.end()) {
                    const Dataset test_ds = draw_dataset(pools, run.test_spec());
                    it = tests.emplace(test_key, materialize(test_ds, store, run.feature_set)).first;
                }
                Observation o = evaluate_run(run, *model, it->second, options.target_fpr);
                fingerprints[i] = fingerprint;
                {
                    std::lock_guard lock(journal_mutex);
                    journal << format_observation(o) << '\n' << std::flush;
                    if (options.log) {
                        *options.log << "done " << observation_key(o) << '\n' << std::flush;
                    }
                }
                fresh[i] = std::move(o);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    });
    journal.close();

    for (std::size_t i = 0; i < plan.runs.size(); ++i) {
        const std::string key = observation_key(plan.runs[i]);
        if (fresh[i]) {
            ++report.executed;
            report.model_fingerprints[key] = fingerprints[i];
            report.observations.push_back(*fresh[i]);
        } else if (auto it = done.find(key); it != done.end()) {
            report.observations.push_back(it->second);
        } else {
            report.failures.push_back({plan.runs[i], errors[i].empty() ? "not executed" : errors[i]});
        }
    }
    report.models_trained = trained;

    write_observations(report.observations, options.out_path);
    const std::string failures_path = options.out_path + ".failures";
    if (report.failures.empty()) {
        fs::remove(journal_path);
        fs::remove(failures_path);
    } else {
        std::string text;
        for (const auto& f : report.failures) text += observation_key(f.run) + "\t" + f.message + "\n";
        write_file_atomic(failures_path, text);
    }
    return report;
}

ExecuteReport run_experiment(const ExperimentConfig& config, ExecuteOptions options) {
    const ExperimentPlan p = plan(config);
    const FragmentManifest manifest = read_manifest(config.fragments_dir);
    const MetadataIndex index =
        config.index.empty() || !fs::exists(config.index) ? build_metadata_index(manifest) : read_metadata_index(config.index);
    const Pools pools = partition_pools(index, config.split);
    const FragmentStore store(manifest);
    const Hyperparams params = config.hyperparams.empty() ? Hyperparams{} : Hyperparams::load(config.hyperparams);
    if (options.models_dir.empty()) options.models_dir = config.models_dir;
    options.target_fpr = config.target_fpr;
    return execute(p, store, pools, params, options);
}

}  // namespace malbench
