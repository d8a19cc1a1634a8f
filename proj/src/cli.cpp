#include "trajgnn/cli.hpp"

#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <iostream>

#include "trajgnn/classical.hpp"
#include "trajgnn/datapipe.hpp"
#include "trajgnn/experiment.hpp"
#include "trajgnn/model.hpp"
#include "trajgnn/textio.hpp"

namespace trajgnn {

namespace {

namespace fs = std::filesystem;

std::string metrics_csv(const Metrics& m) {
    std::string text =
        "mean_displ_m,final_displ_m,step1_m,step2_m,step3_m,step4_m,step5_m,count\n";
    text += format_double(m.mean_displacement) + ',' + format_double(m.final_displacement);
    for (int k = 0; k < kFutureSamples; ++k) text += ',' + format_double(m.per_step[k]);
    text += ',' + std::to_string(m.count) + '\n';
    return text;
}

struct TrainCli {
    std::string model = "gat";
    std::string strategy = "neighbour";
    bool no_residual = false;
    bool no_ff_output = false;
    bool no_edge_features = false;
    bool weighted_edges = false;
    std::uint64_t seed = 0;
    int max_epochs = 50;
    int batch_size = 32;
    int patience = 10;
};

// Flat key=value config mirrored by the flags; flags win.
void apply_train_config_file(const fs::path& path, TrainCli& opt) {
    for (const auto& [key, value] : read_key_value_file(path)) {
        if (key == "model") opt.model = value;
        else if (key == "strategy") opt.strategy = value;
        else if (key == "no_residual") opt.no_residual = parse_int(value, key) != 0;
        else if (key == "no_ff_output") opt.no_ff_output = parse_int(value, key) != 0;
        else if (key == "no_edge_features") opt.no_edge_features = parse_int(value, key) != 0;
        else if (key == "weighted_edges") opt.weighted_edges = parse_int(value, key) != 0;
        else if (key == "seed") opt.seed = static_cast<std::uint64_t>(parse_int(value, key));
        else if (key == "max_epochs") opt.max_epochs = static_cast<int>(parse_int(value, key));
        else if (key == "batch_size") opt.batch_size = static_cast<int>(parse_int(value, key));
        else if (key == "patience") opt.patience = static_cast<int>(parse_int(value, key));
        else throw std::runtime_error("unknown config key '" + key + "'");
    }
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(const std::string& spec) {
    std::vector<std::uint64_t> seeds;
    const std::size_t dots = spec.find("..");
    if (dots != std::string::npos) {
        const std::int64_t lo = parse_int(spec.substr(0, dots), "seed range");
        const std::int64_t hi = parse_int(spec.substr(dots + 2), "seed range");
        if (hi < lo) throw std::runtime_error("seed range is empty: " + spec);
        for (std::int64_t s = lo; s <= hi; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
        return seeds;
    }
    for (const std::string& token : split(spec, ',')) {
        seeds.push_back(static_cast<std::uint64_t>(parse_int(token, "seed list")));
    }
    return seeds;
}

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"interaction-graph trajectory prediction toolkit"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "parse raw track tables into canonical scenes");
    std::string ingest_dataset, ingest_in, ingest_out;
    ingest->add_option("--dataset", ingest_dataset, "ngsim or highd")->required();
    ingest->add_option("--in", ingest_in, "input file or directory of recordings")->required();
    ingest->add_option("--out", ingest_out, "output scene csv")->required();

    // synth
    auto* synth = app.add_subcommand("synth", "generate synthetic traffic scenes");
    std::string synth_config, synth_out;
    synth->add_option("--config", synth_config, "key=value synth config file")->required();
    synth->add_option("--out", synth_out, "output scene csv")->required();

    // split
    auto* split_cmd = app.add_subcommand("split", "split scenes per dataset policy");
    std::string split_dataset_kind, split_in, split_out_dir;
    split_cmd->add_option("--dataset", split_dataset_kind, "ngsim, highd or synthetic")
        ->required();
    split_cmd->add_option("--in", split_in, "scene csv")->required();
    split_cmd->add_option("--out-dir", split_out_dir, "directory for train/val/test csv")
        ->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "train a predictor");
    TrainCli tr;
    std::string train_scenes_path, val_scenes_path, model_out, train_config_path;
    auto* o_model = train_cmd->add_option("--model", tr.model, "ff, gcn or gat");
    auto* o_strategy = train_cmd->add_option("--strategy", tr.strategy,
                                             "self, preceding, neighbour or all");
    auto* o_nores = train_cmd->add_flag("--no-residual", tr.no_residual);
    auto* o_noff = train_cmd->add_flag("--no-ff-output", tr.no_ff_output);
    auto* o_noef = train_cmd->add_flag("--no-edge-features", tr.no_edge_features);
    auto* o_we = train_cmd->add_flag("--weighted-edges", tr.weighted_edges);
    auto* o_seed = train_cmd->add_option("--seed", tr.seed);
    auto* o_epochs = train_cmd->add_option("--max-epochs", tr.max_epochs);
    auto* o_batch = train_cmd->add_option("--batch-size", tr.batch_size);
    auto* o_patience = train_cmd->add_option("--patience", tr.patience);
    train_cmd->add_option("--train", train_scenes_path, "training scene csv")->required();
    train_cmd->add_option("--val", val_scenes_path, "validation scene csv")->required();
    train_cmd->add_option("--out", model_out, "output model file")->required();
    train_cmd->add_option("--config", train_config_path, "key=value overrides (flags win)");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a model or baseline");
    std::string eval_model_file, eval_baseline, eval_scenes, eval_out, eval_idm_params;
    eval_cmd->add_option("--model-file", eval_model_file);
    eval_cmd->add_option("--baseline", eval_baseline, "cvm or idm");
    eval_cmd->add_option("--idm-params", eval_idm_params, "idm parameter file for --baseline idm");
    eval_cmd->add_option("--scenes", eval_scenes)->required();
    eval_cmd->add_option("--out", eval_out, "output metrics csv")->required();

    // tune-idm
    auto* tune_cmd = app.add_subcommand("tune-idm", "guided random search for IDM parameters");
    std::string tune_scenes, tune_out;
    int tune_budget = 20000;
    std::uint64_t tune_seed = 0;
    tune_cmd->add_option("--scenes", tune_scenes)->required();
    tune_cmd->add_option("--budget", tune_budget);
    tune_cmd->add_option("--seed", tune_seed);
    tune_cmd->add_option("--out", tune_out)->required();

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "run the ablation grid");
    std::string ablate_scenes_dir, ablate_out_dir, ablate_seeds = "0..9";
    int ablate_epochs = 50, ablate_jobs = 1;
    ablate_cmd->add_option("--scenes-dir", ablate_scenes_dir,
                           "directory with train.csv/val.csv/test.csv")->required();
    ablate_cmd->add_option("--seeds", ablate_seeds, "e.g. 0..9 or 0,1,2");
    ablate_cmd->add_option("--out-dir", ablate_out_dir)->required();
    ablate_cmd->add_option("--max-epochs", ablate_epochs);
    ablate_cmd->add_option("--jobs", ablate_jobs, "parallel seed jobs");

    std::vector<const char*> argv;
    argv.push_back("trajgnn");
    for (const std::string& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*ingest) {
            TrackSource source;
            if (ingest_dataset == "ngsim") source = TrackSource::ngsim;
            else if (ingest_dataset == "highd") source = TrackSource::highd;
            else throw std::runtime_error("unknown dataset '" + ingest_dataset + "'");
            const RawTrackTable raw = ingest_path(ingest_in, source);
            const SmoothTable smooth = smooth_and_differentiate(raw);
            if (smooth.dropped_tracks > 0) {
                std::cerr << "warning: dropped " << smooth.dropped_tracks
                          << " tracks shorter than 3 samples\n";
            }
            write_scene_csv(ingest_out, window_extract(smooth));
        } else if (*synth) {
            const SynthConfig cfg = SynthConfig::from_key_values(read_key_value_file(synth_config));
            const RawTrackTable raw = generate_synthetic(cfg);
            const SmoothTable smooth = smooth_and_differentiate(raw);
            write_scene_csv(synth_out, window_extract(smooth));
        } else if (*split_cmd) {
            const SplitPolicy policy = split_policy_from_name(split_dataset_kind);
            const CanonicalSceneSet scenes = read_scene_csv(split_in);
            const SceneSplits splits = split_dataset(scenes, policy);
            fs::create_directories(split_out_dir);
            write_scene_csv(fs::path(split_out_dir) / "train.csv", splits.train);
            write_scene_csv(fs::path(split_out_dir) / "val.csv", splits.val);
            write_scene_csv(fs::path(split_out_dir) / "test.csv", splits.test);
        } else if (*train_cmd) {
            if (!train_config_path.empty()) {
                TrainCli from_file = tr;
                apply_train_config_file(train_config_path, from_file);
                // Flags set on the command line win over the config file.
                if (!*o_model) tr.model = from_file.model;
                if (!*o_strategy) tr.strategy = from_file.strategy;
                if (!*o_nores) tr.no_residual = from_file.no_residual;
                if (!*o_noff) tr.no_ff_output = from_file.no_ff_output;
                if (!*o_noef) tr.no_edge_features = from_file.no_edge_features;
                if (!*o_we) tr.weighted_edges = from_file.weighted_edges;
                if (!*o_seed) tr.seed = from_file.seed;
                if (!*o_epochs) tr.max_epochs = from_file.max_epochs;
                if (!*o_batch) tr.batch_size = from_file.batch_size;
                if (!*o_patience) tr.patience = from_file.patience;
            }
            TrainConfig cfg;
            cfg.model.kind = model_kind_from_name(tr.model);
            cfg.model.strategy = strategy_from_name(tr.strategy);
            cfg.model.use_residual = !tr.no_residual;
            cfg.model.use_ff_output = !tr.no_ff_output;
            cfg.model.use_edge_features = !tr.no_edge_features;
            cfg.model.use_weighted_edges = tr.weighted_edges;
            cfg.seed = tr.seed;
            cfg.max_epochs = tr.max_epochs;
            cfg.batch_size = tr.batch_size;
            cfg.patience = tr.patience;
            const CanonicalSceneSet train_scenes = read_scene_csv(train_scenes_path);
            const CanonicalSceneSet val_scenes = read_scene_csv(val_scenes_path);
            Model model = train(train_scenes, val_scenes, cfg);
            model.save(fs::path(model_out));
        } else if (*eval_cmd) {
            const CanonicalSceneSet scenes = read_scene_csv(eval_scenes);
            Metrics metrics;
            if (!eval_baseline.empty()) {
                if (eval_baseline == "cvm") {
                    metrics = evaluate_displacement(cvm_predictor(), scenes);
                } else if (eval_baseline == "idm") {
                    IdmParams params;  // NGSIM defaults unless a file is given
                    if (!eval_idm_params.empty()) params = load_idm_params(eval_idm_params);
                    metrics = evaluate_displacement(idm_predictor(params), scenes);
                } else {
                    throw std::runtime_error("unknown baseline '" + eval_baseline + "'");
                }
            } else if (!eval_model_file.empty()) {
                Model model = Model::load(fs::path(eval_model_file));
                metrics = evaluate_displacement(model_predictor(model), scenes);
            } else {
                throw std::runtime_error("eval needs --model-file or --baseline");
            }
            write_file(eval_out, metrics_csv(metrics));
        } else if (*tune_cmd) {
            const CanonicalSceneSet scenes = read_scene_csv(tune_scenes);
            const IdmParams params = tune_idm(scenes, tune_budget, tune_seed);
            save_idm_params(tune_out, params);
        } else if (*ablate_cmd) {
            SceneSplits splits;
            splits.train = read_scene_csv(fs::path(ablate_scenes_dir) / "train.csv");
            splits.val = read_scene_csv(fs::path(ablate_scenes_dir) / "val.csv");
            splits.test = read_scene_csv(fs::path(ablate_scenes_dir) / "test.csv");
            const std::vector<std::uint64_t> seeds = parse_seed_list(ablate_seeds);
            const RunReport report = ablation_suite(splits, seeds, ablate_epochs, ablate_jobs);
            emit_report(report, ablate_out_dir);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace trajgnn
