#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "trajgnn/classical.hpp"
#include "trajgnn/datapipe.hpp"
#include "trajgnn/model.hpp"
#include "trajgnn/optim.hpp"

namespace trajgnn {

struct TrainConfig {
    ModelConfig model;
    int batch_size = 32;
    int max_epochs = 50;
    int patience = 10;  // epochs without val improvement; <= 0 disables early stop
    std::uint64_t seed = 0;
    AdamConfig adam{};
    double clip_norm = 5.0;
};

struct TrainHistory {
    std::vector<double> train_loss;            // per epoch
    std::vector<double> val_mean_displacement;  // per epoch
    int best_epoch = -1;                        // index into the histories
    int epochs_run = 0;
};

/// Trains on batches of windows merged into one disjoint-union graph per
/// step; MSE over the scaled outputs of loss-masked nodes, Adam with global
/// norm clipping. Early stopping watches validation mean displacement and
/// restores the best epoch's parameters. Deterministic per seed.
Model train(const CanonicalSceneSet& train_scenes, const CanonicalSceneSet& val_scenes,
            const TrainConfig& cfg, TrainHistory* history = nullptr);

struct Metrics {
    double mean_displacement = 0.0;
    double final_displacement = 0.0;
    std::array<double, kFutureSamples> per_step{};
    std::size_t count = 0;  // evaluated vehicle instances
};

/// Absolute predicted positions (x,y per future step) for every vehicle row
/// of a window, in window vehicle order.
using WindowPredictor =
    std::function<std::vector<std::array<double, 2 * kFutureSamples>>(const PredictionWindow&)>;

WindowPredictor model_predictor(Model& model);
WindowPredictor cvm_predictor();
WindowPredictor idm_predictor(const IdmParams& params);

/// Euclidean position error of loss-masked vehicles: per-step means over
/// vehicles, their average, and the 5 s value.
Metrics evaluate_displacement(const WindowPredictor& predictor, const CanonicalSceneSet& scenes);

struct RunRow {
    std::string model, variant, strategy;
    std::uint64_t seed = 0;
    double mean_displ = 0.0;
    double final_displ = 0.0;
};

struct RunSummary {
    std::string model, variant, strategy;
    int n = 0;
    double mean_displ_mean = 0.0, mean_displ_std = 0.0;
    double final_displ_mean = 0.0, final_displ_std = 0.0;
};

struct RunReport {
    std::vector<RunRow> rows;
    /// Mean and sample (n-1) standard deviation per configuration, grouped in
    /// first-appearance order.
    std::vector<RunSummary> summaries() const;
};

/// Independent train+test evaluation per seed; rows in seed order.
RunReport run_multi_seed(const SceneSplits& splits, const TrainConfig& base,
                         std::span<const std::uint64_t> seeds, const std::string& model_label,
                         const std::string& variant_label);

/// The fixed ablation grid: five GCN variants, four GAT variants, and the
/// four construction strategies under the default GAT (13 configurations).
/// The all-connections row runs at most 3 seeds.
RunReport ablation_suite(const SceneSplits& splits, std::span<const std::uint64_t> seeds,
                         int max_epochs = 50, int jobs = 1);

/// Writes rows.csv, summary.csv and summary.svg; byte-stable per input.
void emit_report(const RunReport& report, const std::filesystem::path& out_dir);

}  // namespace trajgnn
