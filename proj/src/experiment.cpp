#include "trajgnn/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <stdexcept>
#include <thread>

#include "trajgnn/textio.hpp"

namespace trajgnn {

namespace {

struct PreparedWindow {
    InteractionGraph graph;
    Tensor features;
    Tensor targets;            // masked rows only
    std::vector<int> masked;   // row indices within the window
};

PreparedWindow prepare_window(const PredictionWindow& window, const ModelConfig& config) {
    PreparedWindow p;
    const SceneFrame frame = last_observed_frame(window);
    p.graph = prepare_graph(frame, config);
    p.features = window_node_features(window);
    p.masked = loss_masked_rows(window);
    if (!p.masked.empty()) p.targets = window_targets(window, p.masked);
    return p;
}

struct Batch {
    InteractionGraph graph;
    Tensor features;
    Tensor targets;
    std::vector<int> masked_rows;  // global row ids
};

Batch merge_batch(const std::vector<const PreparedWindow*>& windows) {
    Batch batch;
    std::size_t total_rows = 0, total_masked = 0;
    for (const PreparedWindow* w : windows) {
        total_rows += w->features.rows();
        total_masked += w->masked.size();
    }
    const std::size_t feat_dim = windows.front()->features.cols();
    const std::size_t target_dim = 2 * kFutureSamples;
    batch.features = Tensor::zeros({total_rows, feat_dim});
    batch.targets = Tensor::zeros({std::max<std::size_t>(total_masked, 1), target_dim});

    std::size_t row_offset = 0, masked_offset = 0;
    for (const PreparedWindow* w : windows) {
        append_disjoint(batch.graph, w->graph);
        const std::size_t rows = w->features.rows();
        std::copy(w->features.data.begin(), w->features.data.end(),
                  batch.features.data.begin() + row_offset * feat_dim);
        for (std::size_t m = 0; m < w->masked.size(); ++m) {
            batch.masked_rows.push_back(static_cast<int>(row_offset) + w->masked[m]);
            std::copy(w->targets.data.begin() + m * target_dim,
                      w->targets.data.begin() + (m + 1) * target_dim,
                      batch.targets.data.begin() + (masked_offset + m) * target_dim);
        }
        masked_offset += w->masked.size();
        row_offset += rows;
    }
    return batch;
}

// Fisher-Yates with an explicit 53-bit draw; identical on every platform.
void shuffle_indices(std::vector<std::size_t>& idx, std::mt19937_64& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(uniform01(rng()) * static_cast<double>(i));
        std::swap(idx[i - 1], idx[std::min(j, i - 1)]);
    }
}

std::vector<Tensor> snapshot_values(std::span<Param* const> params) {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const Param* p : params) out.push_back(p->value);
    return out;
}

void restore_values(std::span<Param* const> params, const std::vector<Tensor>& snapshot) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = snapshot[i];
}

double sample_std(const std::vector<double>& values, double mean) {
    if (values.size() < 2) return 0.0;
    double acc = 0.0;
    for (double v : values) acc += (v - mean) * (v - mean);
    return std::sqrt(acc / static_cast<double>(values.size() - 1));
}

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

}  // namespace

Model train(const CanonicalSceneSet& train_scenes, const CanonicalSceneSet& val_scenes,
            const TrainConfig& cfg, TrainHistory* history) {
    if (train_scenes.empty() || val_scenes.empty()) {
        throw std::invalid_argument("train: empty train or validation scene set");
    }
    cfg.model.validate();

    std::vector<PreparedWindow> prepared;
    prepared.reserve(train_scenes.size());
    for (const PredictionWindow& w : train_scenes) {
        prepared.push_back(prepare_window(w, cfg.model));
    }

    Model model = Model::create(cfg.model, cfg.seed);
    const std::vector<Param*> params = model.parameters();
    AdamState adam = AdamState::for_params(params, cfg.adam);
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);

    TrainHistory local_history;
    TrainHistory& hist = history ? *history : local_history;
    hist = TrainHistory{};

    double best_val = std::numeric_limits<double>::infinity();
    std::vector<Tensor> best_params = snapshot_values(params);
    int since_best = 0;

    std::vector<std::size_t> order(prepared.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        shuffle_indices(order, rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < order.size();
             begin += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
            std::vector<const PreparedWindow*> members;
            for (std::size_t i = begin; i < end; ++i) members.push_back(&prepared[order[i]]);
            Batch batch = merge_batch(members);
            if (batch.masked_rows.empty()) continue;

            Tape tape;
            const Tape::Id out = model.forward(tape, tape.input(batch.features), batch.graph);
            const Tape::Id picked = tape.gather_rows(out, batch.masked_rows);
            const Tape::Id loss = tape.mse(picked, batch.targets);
            loss_sum += tape.value(loss).data[0];
            ++batches;
            tape.backward(loss);
            clip_global_norm(params, cfg.clip_norm);
            adam_step(params, adam);
            zero_grad_all(params);
        }
        hist.train_loss.push_back(batches ? loss_sum / static_cast<double>(batches) : 0.0);

        const Metrics val = evaluate_displacement(model_predictor(model), val_scenes);
        hist.val_mean_displacement.push_back(val.mean_displacement);
        hist.epochs_run = epoch + 1;

        if (val.mean_displacement < best_val) {
            best_val = val.mean_displacement;
            best_params = snapshot_values(params);
            hist.best_epoch = epoch;
            since_best = 0;
        } else {
            ++since_best;
        }
        if (cfg.patience > 0 && since_best >= cfg.patience) break;
    }

    if (cfg.patience > 0) restore_values(params, best_params);
    return model;
}

WindowPredictor model_predictor(Model& model) {
    return [&model](const PredictionWindow& window) {
        const SceneFrame frame = last_observed_frame(window);
        const InteractionGraph graph = prepare_graph(frame, model.config);
        const Tensor features = window_node_features(window);
        const Tensor out = model.predict(features, graph);

        std::vector<std::array<double, 2 * kFutureSamples>> positions(window.vehicles.size());
        for (std::size_t i = 0; i < window.vehicles.size(); ++i) {
            const SceneSample& anchor = *window.vehicles[i].samples[kHistorySamples - 1];
            for (int k = 0; k < kFutureSamples; ++k) {
                positions[i][2 * k] = anchor.x + out.at(i, 2 * k) / kPositionScale;
                positions[i][2 * k + 1] = anchor.y + out.at(i, 2 * k + 1) / kPositionScale;
            }
        }
        return positions;
    };
}

WindowPredictor cvm_predictor() {
    return [](const PredictionWindow& window) {
        std::vector<std::array<double, 2 * kFutureSamples>> positions(window.vehicles.size());
        const SceneFrame frame = last_observed_frame(window);
        for (std::size_t i = 0; i < frame.states.size(); ++i) {
            const auto traj = cvm_predict(frame.states[i], kFutureSamples);
            for (int k = 0; k < kFutureSamples; ++k) {
                positions[i][2 * k] = traj[k][0];
                positions[i][2 * k + 1] = traj[k][1];
            }
        }
        return positions;
    };
}

WindowPredictor idm_predictor(const IdmParams& params) {
    return [params](const PredictionWindow& window) {
        const SceneFrame frame = last_observed_frame(window);
        const auto rollout = idm_rollout(frame.states, params, RolloutConfig{});
        std::vector<std::array<double, 2 * kFutureSamples>> positions(window.vehicles.size());
        for (std::size_t i = 0; i < frame.states.size(); ++i) {
            for (int k = 0; k < kFutureSamples; ++k) {
                positions[i][2 * k] = rollout[i][k][0];
                positions[i][2 * k + 1] = rollout[i][k][1];
            }
        }
        return positions;
    };
}

Metrics evaluate_displacement(const WindowPredictor& predictor,
                              const CanonicalSceneSet& scenes) {
    std::array<double, kFutureSamples> sums{};
    std::size_t count = 0;
    for (const PredictionWindow& window : scenes) {
        const std::vector<int> masked = loss_masked_rows(window);
        if (masked.empty()) continue;
        const auto predicted = predictor(window);
        for (int row : masked) {
            const WindowVehicle& v = window.vehicles[row];
            for (int k = 0; k < kFutureSamples; ++k) {
                const SceneSample& truth = *v.samples[kHistorySamples + k];
                sums[k] += std::hypot(predicted[row][2 * k] - truth.x,
                                      predicted[row][2 * k + 1] - truth.y);
            }
            ++count;
        }
    }
    if (count == 0) {
        throw std::invalid_argument("evaluate_displacement: no loss-masked vehicles");
    }
    Metrics m;
    m.count = count;
    double total = 0.0;
    for (int k = 0; k < kFutureSamples; ++k) {
        m.per_step[k] = sums[k] / static_cast<double>(count);
        total += m.per_step[k];
    }
    m.mean_displacement = total / kFutureSamples;
    m.final_displacement = m.per_step[kFutureSamples - 1];
    return m;
}

std::vector<RunSummary> RunReport::summaries() const {
    std::vector<RunSummary> out;
    std::vector<std::vector<double>> means, finals;
    for (const RunRow& row : rows) {
        std::size_t idx = out.size();
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (out[i].model == row.model && out[i].variant == row.variant &&
                out[i].strategy == row.strategy) {
                idx = i;
                break;
            }
        }
        if (idx == out.size()) {
            out.push_back(RunSummary{row.model, row.variant, row.strategy, 0, 0, 0, 0, 0});
            means.emplace_back();
            finals.emplace_back();
        }
        means[idx].push_back(row.mean_displ);
        finals[idx].push_back(row.final_displ);
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        RunSummary& s = out[i];
        s.n = static_cast<int>(means[i].size());
        for (double v : means[i]) s.mean_displ_mean += v;
        for (double v : finals[i]) s.final_displ_mean += v;
        s.mean_displ_mean /= s.n;
        s.final_displ_mean /= s.n;
        s.mean_displ_std = sample_std(means[i], s.mean_displ_mean);
        s.final_displ_std = sample_std(finals[i], s.final_displ_mean);
    }
    return out;
}

RunReport run_multi_seed(const SceneSplits& splits, const TrainConfig& base,
                         std::span<const std::uint64_t> seeds, const std::string& model_label,
                         const std::string& variant_label) {
    if (seeds.empty()) throw std::invalid_argument("run_multi_seed: need at least one seed");
    RunReport report;
    for (std::uint64_t seed : seeds) {
        TrainConfig cfg = base;
        cfg.seed = seed;
        Model model = train(splits.train, splits.val, cfg);
        const Metrics m = evaluate_displacement(model_predictor(model), splits.test);
        report.rows.push_back(RunRow{model_label, variant_label,
                                     strategy_name(base.model.strategy), seed,
                                     m.mean_displacement, m.final_displacement});
    }
    return report;
}

namespace {

struct GridItem {
    std::string model_label;
    std::string variant_label;
    ModelConfig config;
    bool reduced_seeds = false;  // all-connections row runs at most 3 seeds
};

std::vector<GridItem> ablation_grid() {
    auto gcn = [](bool residual, bool ff, bool weighted) {
        ModelConfig c;
        c.kind = ModelKind::GCN;
        c.strategy = Strategy::NeighbourConnection;
        c.use_residual = residual;
        c.use_ff_output = ff;
        c.use_weighted_edges = weighted;
        c.use_edge_features = false;
        return c;
    };
    auto gat = [](bool residual, bool ff, bool edge_features, Strategy strategy) {
        ModelConfig c;
        c.kind = ModelKind::GAT;
        c.strategy = strategy;
        c.use_residual = residual;
        c.use_ff_output = ff;
        c.use_edge_features = edge_features;
        return c;
    };
    const Strategy nb = Strategy::NeighbourConnection;
    std::vector<GridItem> grid;
    grid.push_back({"gcn", "default", gcn(true, true, false)});
    grid.push_back({"gcn", "no_ff_output", gcn(true, false, false)});
    grid.push_back({"gcn", "weighted_edges", gcn(true, true, true)});
    grid.push_back({"gcn", "no_residuals_weighted_edges", gcn(false, true, true)});
    grid.push_back({"gcn", "no_residuals", gcn(false, true, false)});
    grid.push_back({"gat", "default", gat(true, true, true, nb)});
    grid.push_back({"gat", "no_ff_output", gat(true, false, true, nb)});
    grid.push_back({"gat", "no_residuals", gat(false, true, true, nb)});
    grid.push_back({"gat", "no_edge_features", gat(true, true, false, nb)});
    grid.push_back({"gat", "default", gat(true, true, true, Strategy::SelfConnections)});
    grid.push_back({"gat", "default", gat(true, true, true, Strategy::PrecedingConnection)});
    grid.push_back({"gat", "default", gat(true, true, true, nb)});
    GridItem all{"gat", "default", gat(true, true, true, Strategy::AllConnections)};
    all.reduced_seeds = true;
    grid.push_back(all);
    return grid;
}

}  // namespace

RunReport ablation_suite(const SceneSplits& splits, std::span<const std::uint64_t> seeds,
                         int max_epochs, int jobs) {
    if (seeds.empty()) throw std::invalid_argument("ablation_suite: need at least one seed");
    const std::vector<GridItem> grid = ablation_grid();

    struct Job {
        std::size_t grid_index;
        std::uint64_t seed;
    };
    std::vector<Job> queue;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const std::size_t n =
            grid[g].reduced_seeds ? std::min<std::size_t>(3, seeds.size()) : seeds.size();
        for (std::size_t s = 0; s < n; ++s) queue.push_back(Job{g, seeds[s]});
    }

    std::vector<RunRow> results(queue.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= queue.size()) return;
            const Job& job = queue[i];
            TrainConfig cfg;
            cfg.model = grid[job.grid_index].config;
            cfg.max_epochs = max_epochs;
            cfg.seed = job.seed;
            Model model = train(splits.train, splits.val, cfg);
            const Metrics m = evaluate_displacement(model_predictor(model), splits.test);
            results[i] = RunRow{grid[job.grid_index].model_label,
                                grid[job.grid_index].variant_label,
                                strategy_name(cfg.model.strategy), job.seed,
                                m.mean_displacement, m.final_displacement};
        }
    };

    const int thread_count = std::max(1, jobs);
    if (thread_count == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < thread_count; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    RunReport report;
    report.rows = std::move(results);
    return report;
}

void emit_report(const RunReport& report, const std::filesystem::path& out_dir) {
    if (report.rows.empty()) throw std::invalid_argument("emit_report: empty report");
    std::filesystem::create_directories(out_dir);

    std::string rows = "model,variant,strategy,seed,mean_displ_m,final_displ_m\n";
    for (const RunRow& r : report.rows) {
        rows += r.model + ',' + r.variant + ',' + r.strategy + ',' + std::to_string(r.seed) +
                ',' + format_double(r.mean_displ) + ',' + format_double(r.final_displ) + '\n';
    }
    write_file(out_dir / "rows.csv", rows);

    const std::vector<RunSummary> summaries = report.summaries();
    std::string summary =
        "model,variant,strategy,n,mean_displ_mean,mean_displ_std,final_displ_mean,"
        "final_displ_std\n";
    for (const RunSummary& s : summaries) {
        summary += s.model + ',' + s.variant + ',' + s.strategy + ',' + std::to_string(s.n) +
                   ',' + format_double(s.mean_displ_mean) + ',' + format_double(s.mean_displ_std) +
                   ',' + format_double(s.final_displ_mean) + ',' +
                   format_double(s.final_displ_std) + '\n';
    }
    write_file(out_dir / "summary.csv", summary);

    // Point cloud of per-seed mean displacement with a mean tick per
    // configuration.
    const double width = 1000.0, height = 520.0;
    const double left = 70.0, right = 30.0, top = 20.0, bottom = 170.0;
    const double plot_w = width - left - right;
    const double plot_h = height - top - bottom;

    double vmax = 0.0;
    for (const RunRow& r : report.rows) vmax = std::max(vmax, r.mean_displ);
    if (vmax <= 0.0) vmax = 1.0;
    vmax *= 1.05;
    const auto y_of = [&](double v) { return top + plot_h * (1.0 - v / vmax); };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt2(width) + "\" height=\"" +
           fmt2(height) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    svg += "<rect width=\"" + fmt2(width) + "\" height=\"" + fmt2(height) +
           "\" fill=\"white\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double v = vmax * i / 5.0;
        const double y = y_of(v);
        svg += "<line x1=\"" + fmt2(left) + "\" y1=\"" + fmt2(y) + "\" x2=\"" +
               fmt2(width - right) + "\" y2=\"" + fmt2(y) +
               "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        svg += "<text x=\"" + fmt2(left - 8.0) + "\" y=\"" + fmt2(y + 4.0) +
               "\" text-anchor=\"end\">" + fmt2(v) + "</text>\n";
    }
    svg += "<text x=\"14\" y=\"" + fmt2(top + plot_h / 2.0) +
           "\" transform=\"rotate(-90 14 " + fmt2(top + plot_h / 2.0) +
           ")\" text-anchor=\"middle\">mean displacement [m]</text>\n";

    const std::size_t ncfg = summaries.size();
    for (std::size_t i = 0; i < ncfg; ++i) {
        const RunSummary& s = summaries[i];
        const double cx = left + plot_w * (static_cast<double>(i) + 0.5) /
                                      static_cast<double>(ncfg);
        int seed_idx = 0;
        for (const RunRow& r : report.rows) {
            if (r.model != s.model || r.variant != s.variant || r.strategy != s.strategy) {
                continue;
            }
            const double x = cx + (seed_idx - (s.n - 1) / 2.0) * 4.0;
            svg += "<circle cx=\"" + fmt2(x) + "\" cy=\"" + fmt2(y_of(r.mean_displ)) +
                   "\" r=\"3\" fill=\"#4477aa\" fill-opacity=\"0.7\"/>\n";
            ++seed_idx;
        }
        const double my = y_of(s.mean_displ_mean);
        svg += "<line x1=\"" + fmt2(cx - 12.0) + "\" y1=\"" + fmt2(my) + "\" x2=\"" +
               fmt2(cx + 12.0) + "\" y2=\"" + fmt2(my) +
               "\" stroke=\"#cc3311\" stroke-width=\"2\"/>\n";
        const std::string label = s.model + "/" + s.variant + "/" + s.strategy;
        const double lx = cx;
        const double ly = height - bottom + 16.0;
        svg += "<text x=\"" + fmt2(lx) + "\" y=\"" + fmt2(ly) + "\" transform=\"rotate(-40 " +
               fmt2(lx) + " " + fmt2(ly) + ")\" text-anchor=\"end\">" + label + "</text>\n";
    }
    svg += "<line x1=\"" + fmt2(left) + "\" y1=\"" + fmt2(top) + "\" x2=\"" + fmt2(left) +
           "\" y2=\"" + fmt2(top + plot_h) + "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg += "<line x1=\"" + fmt2(left) + "\" y1=\"" + fmt2(top + plot_h) + "\" x2=\"" +
           fmt2(width - right) + "\" y2=\"" + fmt2(top + plot_h) +
           "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg += "</svg>\n";
    write_file(out_dir / "summary.svg", svg);
}

}  // namespace trajgnn
