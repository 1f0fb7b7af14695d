#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "ovid/error.hpp"
#include "ovid/evaluation.hpp"
#include "ovid/ingest.hpp"
#include "ovid/miner.hpp"
#include "ovid/model.hpp"
#include "ovid/store.hpp"
#include "ovid/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace ovid;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct Run {
    std::string subcommand;
    std::vector<std::string> argv;
    json seeds = json::object();
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
};

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out || !out.write(text.data(), static_cast<std::streamsize>(text.size()))) {
        throw Error(ErrorCode::Io, "cannot write " + path.string());
    }
}

fs::path manifest_path(const fs::path& out) {
    return fs::path(out.string() + ".manifest.json");
}

json option_values(const CLI::App& app) {
    json flags = json::object();
    for (const auto* opt : app.get_options()) {
        if (opt->get_name() == "--help" || opt->get_name() == "-h") {
            continue;
        }
        const auto& res = opt->results();
        const std::string name = opt->get_name();
        if (res.empty()) {
            continue;
        }
        flags[name] = res.size() == 1 ? json(res.front()) : json(res);
    }
    return flags;
}

void write_manifest(const Run& run, const CLI::App& sub, double seconds, const fs::path& out) {
    json m{{"subcommand", run.subcommand},
           {"argv", run.argv},
           {"flags", option_values(sub)},
           {"seeds", run.seeds},
           {"inputs", run.inputs},
           {"outputs", run.outputs},
           {"tool_version", kVersion},
           {"wall_time_seconds", seconds}};
    write_text(manifest_path(out), m.dump(2) + "\n");
}

EditorVocabulary vocabulary_from_names(std::vector<std::string> names) {
    if (names.empty() || names.back() != "other") {
        throw Error(ErrorCode::DimMismatch, "editor vocabulary without a trailing 'other' slot");
    }
    names.pop_back();
    return EditorVocabulary(std::move(names));
}

SplitRatios parse_ratios(const std::string& text) {
    std::vector<double> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(item, &used));
            if (used != item.size()) {
                throw std::invalid_argument(item);
            }
        } catch (const std::exception&) {
            throw Error(ErrorCode::InvalidArgument, "ratios must be three comma-separated numbers, got '" + text + "'");
        }
    }
    if (v.size() != 3) {
        throw Error(ErrorCode::InvalidArgument, "ratios must be three comma-separated numbers, got '" + text + "'");
    }
    return SplitRatios{v[0], v[1], v[2]};
}

SplitPart parse_part(const std::string& text) {
    if (auto p = parse_split_part(text)) {
        return *p;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown split '" + text + "' (train, validation, test)");
}

std::vector<FeatureBundle> require(std::vector<FeatureBundle> v, SplitPart part) {
    if (v.empty()) {
        throw Error(ErrorCode::EmptySplit, "feature file has no " + std::string(to_string(part)) + " examples");
    }
    return v;
}

struct ConfigFlags {
    std::string file;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;

    void attach(CLI::App* sub) {
        sub->add_option("--config", file, "key=value config file");
        sub->add_option("--set", overrides, "override one config key (key=value), repeatable");
        sub->add_option("--seed", seed, "random seed");
    }

    OvidConfig build() const {
        OvidConfig c;
        if (!file.empty()) {
            c = parse_config(read_text(file));
        }
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) {
                throw Error(ErrorCode::InvalidArgument, "--set expects key=value, got '" + kv + "'");
            }
            apply_config_entry(c, kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (seed) {
            c.seed = *seed;
        }
        c.validate();
        return c;
    }
};

ModelDims dims_of(const FeatureFile& f) {
    return ModelDims{f.d_c, f.d_u, f.d_e};
}

std::vector<FeatureBundle> raw_train(const FeatureFile& f) {
    return f.select(SplitPart::Train);
}

void print_metrics(const std::string& label, const Metrics& m) {
    std::printf("%s: precision %.4f recall %.4f f1 %.4f accuracy %.4f\n", label.c_str(), m.precision, m.recall, m.f1,
                m.accuracy);
}

ReportRow model_row(const std::string& name, const OvidModel& model, std::span<const FeatureBundle> normalized) {
    ReportRow row;
    row.method = name;
    row.counts = evaluate_model(model, normalized);
    row.metrics = metrics(row.counts);
    return row;
}

void write_report(const EvalReport& report, const fs::path& out, Run& run) {
    std::ostringstream jsonl;
    write_report_jsonl(report, jsonl);
    write_text(out, jsonl.str());
    std::ostringstream table;
    write_report_table(report, table);
    const fs::path table_path = fs::path(out.string() + ".txt");
    write_text(table_path, table.str());
    std::cout << table.str();
    run.outputs.push_back(out.string());
    run.outputs.push_back(table_path.string());
}

int dispatch(std::vector<std::string> args);

} // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) {
        args.emplace_back(argv[i]);
    }
    return dispatch(std::move(args));
}

namespace {

int dispatch(std::vector<std::string> args) {
    CLI::App app{"Vandalism detection pipeline over OpenStreetMap edit history", "ovid"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    Run run;
    run.argv = args;
    fs::path out;

    // ingest
    auto* ingest = app.add_subcommand("ingest", "parse a changeset dump and osmChange files into a store");
    std::string ing_changesets;
    std::vector<std::string> ing_osc;
    ingest->add_option("--changesets", ing_changesets, "changeset dump XML (optionally gzip)")->required();
    ingest->add_option("--osc", ing_osc, "osmChange XML files, applied in order");
    ingest->add_option("--out", out, "store file")->required();

    // mine
    auto* mine_cmd = app.add_subcommand("mine", "derive a balanced labelled dataset from vandalism reverts");
    std::string mine_store;
    std::uint64_t mine_seed = 0;
    mine_cmd->add_option("--store", mine_store)->required();
    mine_cmd->add_option("--seed", mine_seed, "negative sampling seed")->required();
    mine_cmd->add_option("--out", out, "dataset file")->required();

    // convert
    auto* convert = app.add_subcommand("convert", "import externally labelled changesets from CSV");
    std::string conv_csv, conv_store;
    convert->add_option("--csv", conv_csv, "changeset_id,label[,user_id] rows")->required();
    convert->add_option("--store", conv_store, "store used to fill in missing user ids");
    convert->add_option("--out", out, "dataset file")->required();

    // split
    auto* split = app.add_subcommand("split", "user-disjoint train/validation/test split");
    std::string split_dataset, split_ratios = "0.70,0.10,0.20";
    std::uint64_t split_seed = 0;
    split->add_option("--dataset", split_dataset)->required();
    split->add_option("--ratios", split_ratios, "train,validation,test")->capture_default_str();
    split->add_option("--seed", split_seed)->required();
    split->add_option("--out", out)->required();

    // featurize
    auto* featurize_cmd = app.add_subcommand("featurize", "compute feature vectors; normalisation is fit on train");
    std::string feat_store, feat_split, feat_editors, feat_map, feat_top12 = "additions";
    featurize_cmd->add_option("--store", feat_store)->required();
    featurize_cmd->add_option("--split", feat_split)->required();
    featurize_cmd->add_option("--editors", feat_editors, "editor prefix list (default: built in)");
    featurize_cmd->add_option("--map-features", feat_map, "key<TAB>value list (default: built in)");
    featurize_cmd->add_option("--top12", feat_top12, "additions or distinct")
        ->check(CLI::IsMember({"additions", "distinct"}))
        ->capture_default_str();
    featurize_cmd->add_option("--out", out)->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model on the train split, early-stopping on validation");
    std::string train_features;
    ConfigFlags train_cfg;
    train_cmd->add_option("--features", train_features)->required();
    train_cfg.attach(train_cmd);
    train_cmd->add_option("--out", out, "checkpoint file")->required();

    // tune
    auto* tune = app.add_subcommand("tune", "random hyperparameter search");
    std::string tune_features;
    std::size_t tune_trials = 30, tune_threads = 0;
    ConfigFlags tune_cfg;
    tune->add_option("--features", tune_features)->required();
    tune->add_option("--trials", tune_trials)->capture_default_str();
    tune->add_option("--threads", tune_threads, "worker threads (0: all cores; OVID_THREADS caps)");
    tune_cfg.attach(tune);
    tune->add_option("--out", out, "checkpoint of the best trial")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint and baselines on one split");
    std::string eval_ckpt, eval_features, eval_split = "test", eval_baselines;
    std::uint64_t eval_seed = 0;
    eval->add_option("--checkpoint", eval_ckpt)->required();
    eval->add_option("--features", eval_features)->required();
    eval->add_option("--split", eval_split)->capture_default_str();
    eval->add_option("--baselines", eval_baselines, "comma list of random,rules");
    eval->add_option("--seed", eval_seed, "seed of the random baseline");
    eval->add_option("--out", out, "report (JSONL; a .txt table is written alongside)")->required();

    // sweep
    auto* sweep = app.add_subcommand("sweep", "precision/recall over classification thresholds");
    std::string sweep_ckpt, sweep_features, sweep_split = "test";
    std::size_t sweep_points = 100;
    sweep->add_option("--checkpoint", sweep_ckpt)->required();
    sweep->add_option("--features", sweep_features)->required();
    sweep->add_option("--split", sweep_split)->capture_default_str();
    sweep->add_option("--points", sweep_points)->capture_default_str();
    sweep->add_option("--out", out, "CSV file")->required();

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "train and evaluate ablation variants (use --variant=-User)");
    std::string abl_features, abl_split = "test";
    std::vector<std::string> abl_variants;
    ConfigFlags abl_cfg;
    ablate_cmd->add_option("--features", abl_features)->required();
    ablate_cmd->add_option("--variant", abl_variants, "variant name, repeatable (default: all five)");
    ablate_cmd->add_option("--split", abl_split)->capture_default_str();
    abl_cfg.attach(ablate_cmd);
    ablate_cmd->add_option("--out", out, "report (JSONL; a .txt table is written alongside)")->required();

    // predict
    auto* predict = app.add_subcommand("predict", "score one changeset from a store");
    std::string pred_ckpt, pred_store, pred_map;
    ChangesetId pred_id = 0;
    predict->add_option("--checkpoint", pred_ckpt)->required();
    predict->add_option("--store", pred_store)->required();
    predict->add_option("--changeset-id", pred_id)->required();
    predict->add_option("--map-features", pred_map, "must match the list used for featurize");
    predict->add_option("--out", out, "optional JSON result");

    // rerun
    auto* rerun = app.add_subcommand("rerun", "repeat the invocation recorded in a manifest");
    std::string rerun_manifest;
    rerun->add_option("manifest", rerun_manifest)->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    const auto started = std::chrono::steady_clock::now();
    CLI::App* sub = app.get_subcommands().front();
    run.subcommand = sub->get_name();

    try {
        if (sub == rerun) {
            const json m = json::parse(read_text(rerun_manifest));
            auto again = m.at("argv").get<std::vector<std::string>>();
            if (!again.empty() && again.front() == "rerun") {
                throw Error(ErrorCode::InvalidArgument, "manifest records a rerun; refusing to recurse");
            }
            return dispatch(std::move(again));
        }

        if (sub == ingest) {
            ChangesetStore store;
            std::vector<fs::path> osc(ing_osc.begin(), ing_osc.end());
            const auto report = ingest_files(ing_changesets, osc, store);
            save_store(store, out);
            run.inputs.push_back(ing_changesets);
            run.inputs.insert(run.inputs.end(), ing_osc.begin(), ing_osc.end());
            std::size_t edits = 0;
            for (const auto& s : report.osc) {
                edits += s.edits;
            }
            std::printf("changesets %zu (skipped %zu, duplicates %zu), edits %zu, parked %zu (resolved %zu)\n",
                        report.changesets.parsed, report.changesets.skipped, report.duplicates, edits,
                        store.parked().size(), report.resolved);
        } else if (sub == mine_cmd) {
            const auto store = load_store(fs::path(mine_store));
            const auto result = ovid::mine(store, mine_seed);
            save_dataset(result.examples, mine_seed, out);
            run.inputs.push_back(mine_store);
            run.seeds["mine"] = mine_seed;
            std::printf("reverts %zu, positives %zu (explicit %zu, deletion %zu), examples %zu\n",
                        result.reverts.size(), result.examples.size() / 2, result.explicit_positives,
                        result.deletion_positives, result.examples.size());
        } else if (sub == convert) {
            std::optional<ChangesetStore> store;
            if (!conv_store.empty()) {
                store = load_store(fs::path(conv_store));
                run.inputs.push_back(conv_store);
            }
            std::ifstream in(conv_csv, std::ios::binary);
            if (!in) {
                throw Error(ErrorCode::Io, "cannot open " + conv_csv);
            }
            const auto examples = import_labels_csv(in, store ? &*store : nullptr);
            save_dataset(examples, std::nullopt, out);
            run.inputs.push_back(conv_csv);
            std::printf("examples %zu\n", examples.size());
        } else if (sub == split) {
            const auto file = load_dataset(fs::path(split_dataset));
            const auto s = split_user_disjoint(file.examples, parse_ratios(split_ratios), split_seed);
            save_split(s, out);
            run.inputs.push_back(split_dataset);
            run.seeds["split"] = split_seed;
            std::printf("train %zu, validation %zu, test %zu\n", s.train.size(), s.validation.size(),
                        s.test.size());
        } else if (sub == featurize_cmd) {
            const auto store = load_store(fs::path(feat_store));
            const auto s = to_split(load_dataset(fs::path(feat_split)));
            FeatureConfig config;
            MapFeatures custom_map;
            if (!feat_editors.empty()) {
                config.editors = EditorVocabulary::parse(read_text(feat_editors));
                run.inputs.push_back(feat_editors);
            }
            if (!feat_map.empty()) {
                custom_map = MapFeatures::parse(read_text(feat_map));
                config.map_features = &custom_map;
                run.inputs.push_back(feat_map);
            }
            config.top12 = feat_top12 == "distinct" ? Top12Mode::DistinctKeys : Top12Mode::Additions;
            const auto file = build_feature_file(store, s, config);
            save_features(file, out);
            run.inputs.push_back(feat_store);
            run.inputs.push_back(feat_split);
            std::printf("examples %zu, d_c %zu, d_u %zu, d_e %zu\n", file.bundles.size(), file.d_c, file.d_u,
                        file.d_e);
        } else if (sub == train_cmd) {
            const auto features = load_features(fs::path(train_features));
            const auto config = train_cfg.build();
            const auto tr = require(features.normalized(SplitPart::Train), SplitPart::Train);
            const auto va = require(features.normalized(SplitPart::Validation), SplitPart::Validation);
            auto result = ovid::train(tr, va, dims_of(features), config);
            const auto raw = raw_train(features);
            const auto cp = make_checkpoint(std::move(result.model), features, raw, 8, result.log);
            save_checkpoint(cp, out);
            run.inputs.push_back(train_features);
            run.seeds["train"] = config.seed;
            std::printf("epochs %zu, best epoch %zu, best validation loss %.6f%s\n", result.log.stopped_epoch,
                        result.log.best_epoch, result.log.best_val_loss,
                        result.log.early_stopped ? " (early stop)" : "");
            print_metrics("validation", metrics(evaluate_model(cp.model, va)));
        } else if (sub == tune) {
            const auto features = load_features(fs::path(tune_features));
            const auto base = tune_cfg.build();
            const auto tr = require(features.normalized(SplitPart::Train), SplitPart::Train);
            const auto va = require(features.normalized(SplitPart::Validation), SplitPart::Validation);
            auto result = random_search(SearchSpace{}, tune_trials, base.seed, tr, va, dims_of(features), base,
                                        tune_threads);
            const auto raw = raw_train(features);
            const auto cp = make_checkpoint(std::move(result.best_model), features, raw, 8, result.best_log);
            save_checkpoint(cp, out);
            std::ostringstream trials;
            for (const auto& t : result.trials) {
                json j{{"trial", t.index},
                       {"config", format_config(t.config)},
                       {"val_f1", t.validation.f1},
                       {"val_accuracy", t.validation.accuracy},
                       {"val_precision", t.validation.precision},
                       {"val_recall", t.validation.recall},
                       {"val_loss", t.val_loss},
                       {"best_epoch", t.best_epoch},
                       {"stopped_epoch", t.stopped_epoch},
                       {"best", t.index == result.best_index}};
                trials << j.dump() << '\n';
            }
            const fs::path trial_log = fs::path(out.string() + ".trials.jsonl");
            write_text(trial_log, trials.str());
            const fs::path best_cfg = fs::path(out.string() + ".config");
            write_text(best_cfg, format_config(result.best().config));
            run.inputs.push_back(tune_features);
            run.outputs.push_back(trial_log.string());
            run.outputs.push_back(best_cfg.string());
            run.seeds["tune"] = base.seed;
            std::printf("best trial %zu of %zu\n", result.best_index, result.trials.size());
            print_metrics("validation", result.best().validation);
        } else if (sub == eval) {
            const auto cp = load_checkpoint(fs::path(eval_ckpt));
            const auto features = load_features(fs::path(eval_features));
            check_compatible(cp, features);
            const SplitPart part = parse_part(eval_split);
            auto raw = require(features.select(part), part);
            FeatureFile normed = features;
            normed.norm = cp.norm;
            const auto data = normed.normalized(part);

            EvalReport report;
            report.split = std::string(to_string(part));
            report.rows.push_back(model_row("ovid", cp.model, data));

            std::stringstream list(eval_baselines);
            std::string name;
            while (std::getline(list, name, ',')) {
                if (name.empty()) {
                    continue;
                }
                if (name == "random") {
                    std::vector<Label> labels;
                    for (const auto& b : raw) {
                        labels.push_back(b.label);
                    }
                    const auto preds = random_baseline(raw.size(), eval_seed);
                    ReportRow row;
                    row.method = "random";
                    row.counts = confusion(preds, labels);
                    row.metrics = metrics(row.counts);
                    row.note = "fair coin, seed " + std::to_string(eval_seed);
                    report.rows.push_back(row);
                    run.seeds["random_baseline"] = eval_seed;
                } else if (name == "rules") {
                    auto fit = features.select(SplitPart::Train);
                    const auto val = features.select(SplitPart::Validation);
                    fit.insert(fit.end(), val.begin(), val.end());
                    const auto gs = grid_search_rules(require(std::move(fit), SplitPart::Train), RuleGrid::defaults());
                    ReportRow row;
                    row.method = "rules";
                    for (const auto& b : raw) {
                        row.counts.add(rule_baseline(b, gs.best), b.label);
                    }
                    row.metrics = metrics(row.counts);
                    char note[256];
                    std::snprintf(note, sizeof note,
                                  "approximate five-rule set; contributions<%g valid_tags<%g version>=%g "
                                  "deletes>=%g score>=%d (grid on train+validation)",
                                  gs.best.min_contributions, gs.best.min_valid_tags, gs.best.max_version,
                                  gs.best.large_deletion, gs.best.min_score);
                    row.note = note;
                    report.rows.push_back(row);
                } else {
                    throw Error(ErrorCode::InvalidArgument, "unknown baseline '" + name + "' (random, rules)");
                }
            }
            run.inputs.push_back(eval_ckpt);
            run.inputs.push_back(eval_features);
            write_report(report, out, run);
        } else if (sub == sweep) {
            const auto cp = load_checkpoint(fs::path(sweep_ckpt));
            const auto features = load_features(fs::path(sweep_features));
            check_compatible(cp, features);
            const SplitPart part = parse_part(sweep_split);
            FeatureFile normed = features;
            normed.norm = cp.norm;
            const auto data = require(normed.normalized(part), part);
            std::vector<ScoredExample> scores;
            for (const auto& b : data) {
                scores.push_back({cp.model.predict(b), b.label});
            }
            std::ostringstream csv;
            write_pr_csv(pr_sweep(scores, sweep_points), csv);
            write_text(out, csv.str());
            run.inputs.push_back(sweep_ckpt);
            run.inputs.push_back(sweep_features);
            std::printf("%zu thresholds written\n", sweep_points + 1);
        } else if (sub == ablate_cmd) {
            const auto features = load_features(fs::path(abl_features));
            const auto base = abl_cfg.build();
            std::vector<AblationVariant> variants;
            for (auto v : abl_variants) {
                if (!v.empty() && v.front() != '-') {
                    v.insert(v.begin(), '-');
                }
                variants.push_back(parse_ablation(v));
            }
            if (variants.empty()) {
                variants.assign(std::begin(kAblationVariants), std::end(kAblationVariants));
            }
            const SplitPart part = parse_part(abl_split);
            const auto tr = require(features.normalized(SplitPart::Train), SplitPart::Train);
            const auto va = require(features.normalized(SplitPart::Validation), SplitPart::Validation);
            const auto data = require(features.normalized(part), part);
            EvalReport report;
            report.split = std::string(to_string(part));
            const auto full = ovid::train(tr, va, dims_of(features), base);
            report.rows.push_back(model_row("ovid", full.model, data));
            for (auto v : variants) {
                const auto cfg = ablate(base, v);
                const auto r = ovid::train(tr, va, dims_of(features), cfg);
                report.rows.push_back(model_row(std::string(to_string(v)), r.model, data));
            }
            run.inputs.push_back(abl_features);
            run.seeds["train"] = base.seed;
            write_report(report, out, run);
        } else if (sub == predict) {
            const auto cp = load_checkpoint(fs::path(pred_ckpt));
            const auto store = load_store(fs::path(pred_store));
            const Changeset* c = store.find(pred_id);
            if (c == nullptr) {
                throw Error(ErrorCode::UnknownChangeset, "changeset " + std::to_string(pred_id) + " is not in the store");
            }
            FeatureConfig config;
            config.editors = vocabulary_from_names(cp.editors);
            MapFeatures custom_map;
            if (!pred_map.empty()) {
                custom_map = MapFeatures::parse(read_text(pred_map));
                config.map_features = &custom_map;
            }
            config.top12 = cp.top12;
            const auto history = UserHistoryIndex::build(store);
            const auto bundle = featurize(*c, store, history, config);
            const double y = cp.predict_raw(bundle);
            const Label label = classify(y, cp.model.config().th_class);
            const std::string label_text = label == Label::Vandalism ? "vandalism" : "regular";
            std::printf("changeset %llu: y_pred %.6f -> %s\n", static_cast<unsigned long long>(pred_id), y,
                        label_text.c_str());
            if (out.empty()) {
                return kExitOk;
            }
            json j{{"changeset", pred_id}, {"y_pred", y}, {"label", label_text},
                   {"th_class", cp.model.config().th_class}};
            write_text(out, j.dump() + "\n");
            run.inputs.push_back(pred_ckpt);
            run.inputs.push_back(pred_store);
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "ovid %s: %s\n", run.subcommand.c_str(), e.what());
        if (e.code() == ErrorCode::InvalidArgument) {
            std::fprintf(stderr, "%s", sub->help().c_str());
            return kExitUsage;
        }
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "ovid %s: %s\n", run.subcommand.c_str(), e.what());
        return kExitData;
    }

    if (std::find(run.outputs.begin(), run.outputs.end(), out.string()) == run.outputs.end()) {
        run.outputs.insert(run.outputs.begin(), out.string());
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    try {
        write_manifest(run, *sub, seconds, out);
    } catch (const Error& e) {
        std::fprintf(stderr, "ovid %s: %s\n", run.subcommand.c_str(), e.what());
        return kExitData;
    }
    return kExitOk;
}

} // namespace
