#include "trajgnn/datapipe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <unordered_map>

#include "trajgnn/classical.hpp"
#include "trajgnn/tensor.hpp"
#include "trajgnn/textio.hpp"

namespace trajgnn {

namespace {

constexpr double kFeetToMeters = 0.3048;
constexpr double kLaneWidthM = 4.0;
constexpr double kPlacementGapM = 15.0;
constexpr double kPlacementCapacityPerVehicleM = 20.0;
constexpr double kLaneChangeDurationS = 3.0;

double lane_center(int lane_id) { return kLaneWidthM * lane_id - kLaneWidthM / 2.0; }

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

CsvTable parse_csv(std::string_view text) {
    CsvTable table;
    const std::vector<std::string> lines = split_lines(text);
    if (lines.empty()) throw std::runtime_error("empty csv input");
    for (const std::string& cell : split(lines[0], ',')) {
        table.header.emplace_back(trim(cell));
    }
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        table.rows.push_back(split(lines[i], ','));
    }
    return table;
}

std::size_t require_column(const CsvTable& table, const std::string& name) {
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        if (table.header[i] == name) return i;
    }
    throw std::runtime_error("missing column '" + name + "'");
}

std::optional<std::size_t> optional_column(const CsvTable& table, const std::string& name) {
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        if (table.header[i] == name) return i;
    }
    return std::nullopt;
}

std::string cell_context(std::size_t row, const std::string& column) {
    return "row " + std::to_string(row + 1) + ", column '" + column + "'";
}

const std::string& cell(const std::vector<std::string>& row, std::size_t idx, std::size_t row_no,
                        const std::string& column) {
    if (idx >= row.size()) {
        throw std::runtime_error(cell_context(row_no, column) + ": missing cell");
    }
    return row[idx];
}

std::vector<VehicleTrack> group_tracks(
    std::vector<std::pair<std::int64_t, TrackPoint>>& rows) {
    std::map<std::int64_t, std::vector<TrackPoint>> by_vehicle;
    for (auto& [vid, point] : rows) by_vehicle[vid].push_back(point);
    std::vector<VehicleTrack> tracks;
    for (auto& [vid, points] : by_vehicle) {
        std::sort(points.begin(), points.end(),
                  [](const TrackPoint& a, const TrackPoint& b) { return a.frame < b.frame; });
        for (std::size_t i = 1; i < points.size(); ++i) {
            if (points[i].frame == points[i - 1].frame) {
                throw std::runtime_error("vehicle " + std::to_string(vid) +
                                         ": duplicate frame " +
                                         std::to_string(points[i].frame));
            }
        }
        tracks.push_back(VehicleTrack{vid, std::move(points)});
    }
    return tracks;
}

// Least-squares slope (per sample index) over the given range.
double lsq_slope(const std::vector<double>& values, std::size_t begin, std::size_t count) {
    const double n = static_cast<double>(count);
    double mean_i = 0.0, mean_v = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
        mean_i += static_cast<double>(k);
        mean_v += values[begin + k];
    }
    mean_i /= n;
    mean_v /= n;
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
        const double di = static_cast<double>(k) - mean_i;
        num += di * (values[begin + k] - mean_v);
        den += di * di;
    }
    return den > 0.0 ? num / den : 0.0;
}

// Forward-then-backward EMA, averaged. Each pass starts from a straight-line
// extrapolation of the track end (least-squares slope over one span) so the
// steady-state lag and lead cancel exactly on linear tracks.
std::vector<double> double_sided_ema(const std::vector<double>& x, double alpha,
                                     std::size_t span_samples) {
    const std::size_t n = x.size();
    const std::size_t k = std::min(std::max<std::size_t>(span_samples, 2), n);
    const double lag = (1.0 - alpha) / alpha;

    std::vector<double> fwd(n), bwd(n);
    fwd[0] = x[0] - lag * lsq_slope(x, 0, k);
    for (std::size_t i = 1; i < n; ++i) fwd[i] = alpha * x[i] + (1.0 - alpha) * fwd[i - 1];
    bwd[n - 1] = x[n - 1] + lag * lsq_slope(x, n - k, k);
    for (std::size_t i = n - 1; i-- > 0;) bwd[i] = alpha * x[i] + (1.0 - alpha) * bwd[i + 1];

    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = 0.5 * (fwd[i] + bwd[i]);
    return out;
}

}  // namespace

RawTrackTable parse_ngsim(std::string_view csv, int recording_id) {
    const CsvTable table = parse_csv(csv);
    const std::size_t c_vid = require_column(table, "Vehicle_ID");
    const std::size_t c_frame = require_column(table, "Frame_ID");
    const std::size_t c_lx = require_column(table, "Local_X");
    const std::size_t c_ly = require_column(table, "Local_Y");
    const std::size_t c_lane = require_column(table, "Lane_ID");
    const std::optional<std::size_t> c_vel = optional_column(table, "v_Vel");

    std::vector<std::pair<std::int64_t, TrackPoint>> rows;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        TrackPoint p;
        const std::int64_t vid =
            parse_int(cell(row, c_vid, r, "Vehicle_ID"), cell_context(r, "Vehicle_ID"));
        p.frame = parse_int(cell(row, c_frame, r, "Frame_ID"), cell_context(r, "Frame_ID"));
        // Source Local_Y runs longitudinally; convert feet to meters.
        p.x = parse_double(cell(row, c_ly, r, "Local_Y"), cell_context(r, "Local_Y")) *
              kFeetToMeters;
        p.y = parse_double(cell(row, c_lx, r, "Local_X"), cell_context(r, "Local_X")) *
              kFeetToMeters;
        p.lane_id = static_cast<int>(
            parse_int(cell(row, c_lane, r, "Lane_ID"), cell_context(r, "Lane_ID")));
        if (c_vel) {
            p.v_raw = parse_double(cell(row, *c_vel, r, "v_Vel"), cell_context(r, "v_Vel")) *
                      kFeetToMeters;
        }
        rows.emplace_back(vid, p);
    }

    RawTrackTable out;
    out.source = TrackSource::ngsim;
    out.rate_hz = 10.0;
    out.recordings.push_back(RawRecording{recording_id, group_tracks(rows)});
    return out;
}

RawTrackTable parse_highd(std::string_view tracks_csv, std::string_view meta_csv,
                          int recording_id) {
    const CsvTable meta = parse_csv(meta_csv);
    const std::size_t m_id = require_column(meta, "id");
    const std::size_t m_dir = require_column(meta, "drivingDirection");
    std::unordered_map<std::int64_t, int> direction;
    for (std::size_t r = 0; r < meta.rows.size(); ++r) {
        const auto& row = meta.rows[r];
        const std::int64_t vid = parse_int(cell(row, m_id, r, "id"), cell_context(r, "id"));
        direction[vid] = static_cast<int>(parse_int(
            cell(row, m_dir, r, "drivingDirection"), cell_context(r, "drivingDirection")));
    }

    const CsvTable table = parse_csv(tracks_csv);
    const std::size_t c_id = require_column(table, "id");
    const std::size_t c_frame = require_column(table, "frame");
    const std::size_t c_x = require_column(table, "x");
    const std::size_t c_y = require_column(table, "y");
    const std::size_t c_vx = require_column(table, "xVelocity");
    const std::size_t c_lane = require_column(table, "laneId");

    std::vector<std::pair<std::int64_t, TrackPoint>> rows;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::int64_t vid = parse_int(cell(row, c_id, r, "id"), cell_context(r, "id"));
        const auto dir = direction.find(vid);
        if (dir == direction.end()) {
            throw std::runtime_error("vehicle " + std::to_string(vid) +
                                     ": driving direction unavailable in meta file");
        }
        TrackPoint p;
        p.frame = parse_int(cell(row, c_frame, r, "frame"), cell_context(r, "frame"));
        p.x = parse_double(cell(row, c_x, r, "x"), cell_context(r, "x"));
        p.y = parse_double(cell(row, c_y, r, "y"), cell_context(r, "y"));
        p.v_raw = parse_double(cell(row, c_vx, r, "xVelocity"), cell_context(r, "xVelocity"));
        p.lane_id = static_cast<int>(
            parse_int(cell(row, c_lane, r, "laneId"), cell_context(r, "laneId")));
        // Direction 1 drives toward decreasing x; mirror so traffic flows +x.
        if (dir->second == 1) {
            p.x = -p.x;
            if (p.v_raw) p.v_raw = -*p.v_raw;
        }
        rows.emplace_back(vid, p);
    }

    RawTrackTable out;
    out.source = TrackSource::highd;
    out.rate_hz = 25.0;
    out.recordings.push_back(RawRecording{recording_id, group_tracks(rows)});
    return out;
}

RawTrackTable ingest_path(const std::filesystem::path& path, TrackSource source) {
    namespace fs = std::filesystem;
    if (!fs::exists(path)) throw std::runtime_error("input path does not exist: " + path.string());

    auto highd_meta_for = [](const fs::path& tracks) {
        std::string name = tracks.filename().string();
        const std::string suffix = "_tracks.csv";
        if (name.size() < suffix.size() ||
            name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) {
            throw std::runtime_error("highd tracks file must end in _tracks.csv: " + name);
        }
        name.replace(name.size() - suffix.size(), suffix.size(), "_tracksMeta.csv");
        return tracks.parent_path() / name;
    };

    std::vector<fs::path> inputs;
    if (fs::is_directory(path)) {
        for (const auto& entry : fs::directory_iterator(path)) {
            if (!entry.is_regular_file()) continue;
            const std::string name = entry.path().filename().string();
            if (source == TrackSource::ngsim) {
                if (name.size() > 4 && name.ends_with(".csv")) inputs.push_back(entry.path());
            } else {
                if (name.ends_with("_tracks.csv")) inputs.push_back(entry.path());
            }
        }
        std::sort(inputs.begin(), inputs.end());
        if (inputs.empty()) {
            throw std::runtime_error("no recordings found under " + path.string());
        }
    } else {
        inputs.push_back(path);
    }

    RawTrackTable out;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        RawTrackTable one;
        if (source == TrackSource::ngsim) {
            one = parse_ngsim(read_file(inputs[i]), static_cast<int>(i));
        } else {
            const fs::path meta = highd_meta_for(inputs[i]);
            if (!fs::exists(meta)) {
                throw std::runtime_error("missing meta file " + meta.string());
            }
            one = parse_highd(read_file(inputs[i]), read_file(meta), static_cast<int>(i));
        }
        out.source = one.source;
        out.rate_hz = one.rate_hz;
        out.recordings.push_back(std::move(one.recordings[0]));
    }
    return out;
}

SmoothTable smooth_and_differentiate(const RawTrackTable& table, double span_s) {
    if (!(span_s > 0.0)) throw std::invalid_argument("smoothing span must be positive");
    const std::size_t span_samples =
        static_cast<std::size_t>(std::max<long>(1, std::lround(span_s * table.rate_hz)));
    const double alpha = 2.0 / (static_cast<double>(span_samples) + 1.0);
    const double dt = 1.0 / table.rate_hz;

    SmoothTable out;
    out.source = table.source;
    out.rate_hz = table.rate_hz;
    for (const RawRecording& rec : table.recordings) {
        SmoothRecording srec;
        srec.recording_id = rec.recording_id;
        for (const VehicleTrack& track : rec.tracks) {
            const std::size_t n = track.points.size();
            if (n < 3) {
                ++out.dropped_tracks;
                continue;
            }
            std::vector<double> xs(n), ys(n);
            for (std::size_t i = 0; i < n; ++i) {
                xs[i] = track.points[i].x;
                ys[i] = track.points[i].y;
            }
            const std::vector<double> sx = double_sided_ema(xs, alpha, span_samples);
            const std::vector<double> sy = double_sided_ema(ys, alpha, span_samples);

            SmoothTrack st;
            st.vehicle_id = track.vehicle_id;
            st.points.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                SmoothPoint& p = st.points[i];
                p.frame = track.points[i].frame;
                p.lane_id = track.points[i].lane_id;
                p.x = sx[i];
                p.y = sy[i];
                if (i == 0) {
                    p.vx = (sx[1] - sx[0]) / dt;
                    p.vy = (sy[1] - sy[0]) / dt;
                } else if (i == n - 1) {
                    p.vx = (sx[n - 1] - sx[n - 2]) / dt;
                    p.vy = (sy[n - 1] - sy[n - 2]) / dt;
                } else {
                    p.vx = (sx[i + 1] - sx[i - 1]) / (2.0 * dt);
                    p.vy = (sy[i + 1] - sy[i - 1]) / (2.0 * dt);
                }
            }
            srec.tracks.push_back(std::move(st));
        }
        out.recordings.push_back(std::move(srec));
    }
    return out;
}

CanonicalSceneSet window_extract(const SmoothTable& table, double stride_s) {
    const int stride = static_cast<int>(std::lround(stride_s));
    if (stride < 1) throw std::invalid_argument("window stride must be >= 1 s");
    const std::int64_t step = std::lround(table.rate_hz);

    CanonicalSceneSet scenes;
    for (std::size_t rec_ord = 0; rec_ord < table.recordings.size(); ++rec_ord) {
        const SmoothRecording& rec = table.recordings[rec_ord];
        if (rec.tracks.empty()) continue;

        std::int64_t f0 = std::numeric_limits<std::int64_t>::max();
        std::int64_t f_max = std::numeric_limits<std::int64_t>::min();
        for (const SmoothTrack& t : rec.tracks) {
            f0 = std::min(f0, t.points.front().frame);
            f_max = std::max(f_max, t.points.back().frame);
        }

        // Per vehicle: 1 Hz tick -> sample, for frames on the recording grid.
        struct TickMap {
            std::int64_t vehicle_id;
            std::map<std::int64_t, SceneSample> ticks;
        };
        std::vector<TickMap> vehicles;
        for (const SmoothTrack& t : rec.tracks) {
            TickMap tm;
            tm.vehicle_id = t.vehicle_id;
            for (const SmoothPoint& p : t.points) {
                if ((p.frame - f0) % step != 0) continue;
                tm.ticks.emplace((p.frame - f0) / step,
                                 SceneSample{p.x, p.y, p.vx, p.vy, p.lane_id});
            }
            vehicles.push_back(std::move(tm));
        }
        std::sort(vehicles.begin(), vehicles.end(),
                  [](const TickMap& a, const TickMap& b) { return a.vehicle_id < b.vehicle_id; });

        const std::int64_t max_tick = (f_max - f0) / step;
        std::int64_t seq = 0;
        for (std::int64_t start = 0; start + (kWindowSamples - 1) <= max_tick; start += stride) {
            PredictionWindow window;
            window.recording_id = static_cast<int>(rec_ord);
            window.t0 = static_cast<double>(start + kHistorySamples);
            bool any_masked = false;
            for (const TickMap& tm : vehicles) {
                WindowVehicle wv;
                wv.vehicle_id = tm.vehicle_id;
                bool history = true;
                for (int k = 0; k < kWindowSamples; ++k) {
                    const auto it = tm.ticks.find(start + k);
                    if (it != tm.ticks.end()) {
                        wv.samples[k] = it->second;
                    } else if (k < kHistorySamples) {
                        history = false;
                        break;
                    }
                }
                if (!history) continue;
                wv.loss_mask = wv.fully_present();
                any_masked = any_masked || wv.loss_mask;
                window.vehicles.push_back(std::move(wv));
            }
            if (!any_masked) continue;
            window.window_id = static_cast<std::int64_t>(rec_ord) * 100000 + seq;
            ++seq;
            scenes.push_back(std::move(window));
        }
    }
    return scenes;
}

SplitPolicy split_policy_from_name(const std::string& name) {
    if (name == "ngsim") return SplitPolicy::ngsim;
    if (name == "highd" || name == "synthetic") return SplitPolicy::highd;
    throw std::invalid_argument("unknown dataset kind '" + name + "'");
}

SceneSplits split_dataset(const CanonicalSceneSet& scenes, SplitPolicy policy) {
    std::map<int, CanonicalSceneSet> by_recording;
    for (const PredictionWindow& w : scenes) by_recording[w.recording_id].push_back(w);
    std::vector<CanonicalSceneSet> recordings;
    for (auto& [id, windows] : by_recording) {
        std::sort(windows.begin(), windows.end(),
                  [](const PredictionWindow& a, const PredictionWindow& b) {
                      return a.window_id < b.window_id;
                  });
        recordings.push_back(std::move(windows));
    }

    SceneSplits splits;
    const std::size_t r = recordings.size();
    if (policy == SplitPolicy::ngsim) {
        if (r < 3) {
            throw std::runtime_error("ngsim split needs at least 3 recordings, got " +
                                     std::to_string(r));
        }
        for (std::size_t i = 0; i + 1 < r; ++i) {
            for (auto& w : recordings[i]) splits.train.push_back(std::move(w));
        }
        CanonicalSceneSet& last = recordings[r - 1];
        const std::size_t half = last.size() / 2;
        for (std::size_t i = 0; i < last.size(); ++i) {
            (i < half ? splits.val : splits.test).push_back(std::move(last[i]));
        }
    } else {
        const std::size_t tenth = (r + 9) / 10;  // ceil(10%)
        if (r < 2 * tenth + 1) {
            throw std::runtime_error("highd split needs more recordings, got " +
                                     std::to_string(r));
        }
        for (std::size_t i = 0; i < r; ++i) {
            CanonicalSceneSet* dst = &splits.train;
            if (i >= r - tenth) dst = &splits.test;
            else if (i >= r - 2 * tenth) dst = &splits.val;
            for (auto& w : recordings[i]) dst->push_back(std::move(w));
        }
    }
    return splits;
}

void SynthConfig::validate() const {
    if (lanes < 1 || vehicles < 1 || recordings < 1) {
        throw std::invalid_argument("synth config: counts must be positive");
    }
    if (!(length_m > 0.0) || !(duration_s >= 1.0)) {
        throw std::invalid_argument("synth config: length and duration must be positive");
    }
    if (lane_change_per_min < 0.0) {
        throw std::invalid_argument("synth config: lane_change_per_min must be >= 0");
    }
    auto range_ok = [](double lo, double hi) { return lo > 0.0 && hi >= lo; };
    if (!range_ok(v0_min, v0_max) || !range_ok(a_max_min, a_max_max) ||
        !range_ok(tau_min, tau_max) || !range_ok(b_min, b_max) || !range_ok(s0_min, s0_max)) {
        throw std::invalid_argument("synth config: invalid parameter range");
    }
    const int capacity =
        lanes * static_cast<int>(std::floor(length_m / kPlacementCapacityPerVehicleM));
    if (vehicles > capacity) {
        throw std::invalid_argument("synth config: " + std::to_string(vehicles) +
                                    " vehicles exceed placement capacity " +
                                    std::to_string(capacity));
    }
}

SynthConfig SynthConfig::from_key_values(const std::map<std::string, std::string>& kv) {
    SynthConfig cfg;
    for (const auto& [key, value] : kv) {
        if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(value, key));
        else if (key == "lanes") cfg.lanes = static_cast<int>(parse_int(value, key));
        else if (key == "length_m") cfg.length_m = parse_double(value, key);
        else if (key == "vehicles") cfg.vehicles = static_cast<int>(parse_int(value, key));
        else if (key == "mode") {
            if (value == "constant_velocity") cfg.mode = Mode::constant_velocity;
            else if (value == "idm_interacting") cfg.mode = Mode::idm_interacting;
            else throw std::runtime_error("unknown synth mode '" + value + "'");
        } else if (key == "lane_change_per_min") cfg.lane_change_per_min = parse_double(value, key);
        else if (key == "duration_s") cfg.duration_s = parse_double(value, key);
        else if (key == "recordings") cfg.recordings = static_cast<int>(parse_int(value, key));
        else if (key == "v0_min") cfg.v0_min = parse_double(value, key);
        else if (key == "v0_max") cfg.v0_max = parse_double(value, key);
        else if (key == "a_max_min") cfg.a_max_min = parse_double(value, key);
        else if (key == "a_max_max") cfg.a_max_max = parse_double(value, key);
        else if (key == "tau_min") cfg.tau_min = parse_double(value, key);
        else if (key == "tau_max") cfg.tau_max = parse_double(value, key);
        else if (key == "b_min") cfg.b_min = parse_double(value, key);
        else if (key == "b_max") cfg.b_max = parse_double(value, key);
        else if (key == "s0_min") cfg.s0_min = parse_double(value, key);
        else if (key == "s0_max") cfg.s0_max = parse_double(value, key);
        else throw std::runtime_error("unknown synth config key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

RawTrackTable generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 master(cfg.seed);

    RawTrackTable out;
    out.source = TrackSource::synthetic;
    out.rate_hz = 25.0;
    const double dt = 1.0 / out.rate_hz;
    const std::int64_t frames =
        static_cast<std::int64_t>(std::llround(cfg.duration_s * out.rate_hz));

    for (int rec = 0; rec < cfg.recordings; ++rec) {
        std::mt19937_64 rng(master());
        auto uniform = [&rng](double lo, double hi) { return lo + (hi - lo) * uniform01(rng()); };

        struct Vehicle {
            IdmAgent agent;
            double speed = 0.0;  // constant-velocity mode
            // lane-change script
            double next_change_s = std::numeric_limits<double>::infinity();
            double change_started_s = -1.0;
            int from_lane = 0, to_lane = 0;
        };
        std::vector<Vehicle> fleet(cfg.vehicles);

        for (int i = 0; i < cfg.vehicles; ++i) {
            fleet[i].agent.lane_id = 1 + static_cast<int>(uniform01(rng()) * cfg.lanes);
            fleet[i].agent.lane_id = std::min(fleet[i].agent.lane_id, cfg.lanes);
        }
        // Spread the vehicles of each lane along the road with a minimum gap.
        for (int lane = 1; lane <= cfg.lanes; ++lane) {
            std::vector<int> members;
            for (int i = 0; i < cfg.vehicles; ++i) {
                if (fleet[i].agent.lane_id == lane) members.push_back(i);
            }
            std::vector<double> positions;
            for (std::size_t k = 0; k < members.size(); ++k) {
                positions.push_back(uniform(0.0, cfg.length_m));
            }
            std::sort(positions.begin(), positions.end());
            for (std::size_t k = 0; k < members.size(); ++k) {
                if (k > 0) positions[k] = std::max(positions[k], positions[k - 1] + kPlacementGapM);
                fleet[members[k]].agent.x = positions[k];
                fleet[members[k]].agent.y = lane_center(lane);
            }
        }
        const double rate_per_s = cfg.lane_change_per_min / 60.0;
        for (Vehicle& v : fleet) {
            if (cfg.mode == SynthConfig::Mode::constant_velocity) {
                v.speed = uniform(cfg.v0_min, cfg.v0_max);
                v.agent.v = v.speed;
            } else {
                IdmParams p;
                p.v0 = uniform(cfg.v0_min, cfg.v0_max);
                p.a_max = uniform(cfg.a_max_min, cfg.a_max_max);
                p.tau = uniform(cfg.tau_min, cfg.tau_max);
                p.b = uniform(cfg.b_min, cfg.b_max);
                p.s0 = uniform(cfg.s0_min, cfg.s0_max);
                p.delta = 4.0;
                v.agent.params = p;
                v.agent.v = p.v0 * uniform(0.4, 1.0);
                if (rate_per_s > 0.0) {
                    v.next_change_s = -std::log(1.0 - uniform01(rng())) / rate_per_s;
                }
            }
        }

        RawRecording recording;
        recording.recording_id = rec;
        recording.tracks.resize(cfg.vehicles);
        for (int i = 0; i < cfg.vehicles; ++i) {
            recording.tracks[i].vehicle_id = i + 1;
            recording.tracks[i].points.reserve(frames + 1);
        }

        for (std::int64_t f = 0; f <= frames; ++f) {
            const double t = f * dt;
            for (int i = 0; i < cfg.vehicles; ++i) {
                recording.tracks[i].points.push_back(TrackPoint{
                    f, fleet[i].agent.x, fleet[i].agent.y, fleet[i].agent.lane_id, {}});
            }
            if (f == frames) break;

            if (cfg.mode == SynthConfig::Mode::constant_velocity) {
                for (Vehicle& v : fleet) v.agent.x += v.speed * dt;
                continue;
            }

            // Lane-change scripting before the dynamics step.
            for (Vehicle& v : fleet) {
                if (v.change_started_s < 0.0 && t >= v.next_change_s) {
                    const int lane = v.agent.lane_id;
                    std::vector<int> options;
                    if (lane > 1) options.push_back(lane - 1);
                    if (lane < cfg.lanes) options.push_back(lane + 1);
                    if (!options.empty()) {
                        const std::size_t pick =
                            std::min<std::size_t>(options.size() - 1,
                                                  static_cast<std::size_t>(uniform01(rng()) *
                                                                           options.size()));
                        v.change_started_s = t;
                        v.from_lane = lane;
                        v.to_lane = options[pick];
                    }
                    v.next_change_s =
                        t + kLaneChangeDurationS - std::log(1.0 - uniform01(rng())) / rate_per_s;
                }
            }
            std::vector<IdmAgent> agents;
            agents.reserve(fleet.size());
            for (const Vehicle& v : fleet) agents.push_back(v.agent);
            idm_joint_step(agents, dt);
            for (std::size_t i = 0; i < fleet.size(); ++i) {
                fleet[i].agent.x = agents[i].x;
                fleet[i].agent.v = agents[i].v;
            }
            for (Vehicle& v : fleet) {
                if (v.change_started_s < 0.0) continue;
                const double u = (t + dt - v.change_started_s) / kLaneChangeDurationS;
                const double y0 = lane_center(v.from_lane);
                const double y1 = lane_center(v.to_lane);
                if (u >= 1.0) {
                    v.agent.y = y1;
                    v.agent.lane_id = v.to_lane;
                    v.change_started_s = -1.0;
                } else {
                    v.agent.y = y0 + (y1 - y0) * 0.5 * (1.0 - std::cos(u * 3.14159265358979323846));
                    v.agent.lane_id = u < 0.5 ? v.from_lane : v.to_lane;
                }
            }
        }
        out.recordings.push_back(std::move(recording));
    }
    return out;
}

std::string scene_csv_string(const CanonicalSceneSet& scenes) {
    std::string text = "window_id,vehicle_id,sample_index,x,y,vx,vy,lane_id,loss_mask\n";
    for (const PredictionWindow& w : scenes) {
        for (const WindowVehicle& v : w.vehicles) {
            for (int k = 0; k < kWindowSamples; ++k) {
                if (!v.samples[k]) continue;
                const SceneSample& s = *v.samples[k];
                text += std::to_string(w.window_id);
                text += ',';
                text += std::to_string(v.vehicle_id);
                text += ',';
                text += std::to_string(k + 1);
                text += ',';
                text += format_double(s.x);
                text += ',';
                text += format_double(s.y);
                text += ',';
                text += format_double(s.vx);
                text += ',';
                text += format_double(s.vy);
                text += ',';
                text += std::to_string(s.lane_id);
                text += ',';
                text += v.loss_mask ? '1' : '0';
                text += '\n';
            }
        }
    }
    return text;
}

void write_scene_csv(const std::filesystem::path& path, const CanonicalSceneSet& scenes) {
    write_file(path, scene_csv_string(scenes));
}

CanonicalSceneSet parse_scene_csv(std::string_view csv) {
    const CsvTable table = parse_csv(csv);
    const std::vector<std::string> expected = {"window_id", "vehicle_id", "sample_index",
                                               "x",         "y",          "vx",
                                               "vy",        "lane_id",    "loss_mask"};
    if (table.header != expected) {
        throw std::runtime_error("scene csv: unexpected header");
    }

    std::map<std::int64_t, std::map<std::int64_t, WindowVehicle>> windows;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        if (row.size() != expected.size()) {
            throw std::runtime_error("scene csv row " + std::to_string(r + 1) +
                                     ": wrong field count");
        }
        const std::int64_t wid = parse_int(row[0], cell_context(r, "window_id"));
        const std::int64_t vid = parse_int(row[1], cell_context(r, "vehicle_id"));
        const std::int64_t sample = parse_int(row[2], cell_context(r, "sample_index"));
        if (sample < 1 || sample > kWindowSamples) {
            throw std::runtime_error("scene csv row " + std::to_string(r + 1) +
                                     ": sample_index out of range");
        }
        SceneSample s;
        s.x = parse_double(row[3], cell_context(r, "x"));
        s.y = parse_double(row[4], cell_context(r, "y"));
        s.vx = parse_double(row[5], cell_context(r, "vx"));
        s.vy = parse_double(row[6], cell_context(r, "vy"));
        s.lane_id = static_cast<int>(parse_int(row[7], cell_context(r, "lane_id")));
        const std::int64_t mask = parse_int(row[8], cell_context(r, "loss_mask"));

        WindowVehicle& wv = windows[wid][vid];
        wv.vehicle_id = vid;
        if (wv.samples[sample - 1].has_value()) {
            throw std::runtime_error("scene csv row " + std::to_string(r + 1) +
                                     ": duplicate sample");
        }
        wv.samples[sample - 1] = s;
        wv.loss_mask = mask != 0;
    }

    CanonicalSceneSet scenes;
    for (auto& [wid, vehicles] : windows) {
        PredictionWindow w;
        w.window_id = wid;
        w.recording_id = static_cast<int>(wid / 100000);
        w.t0 = 0.0;
        for (auto& [vid, wv] : vehicles) {
            if (!wv.history_complete()) {
                throw std::runtime_error("scene csv: vehicle " + std::to_string(vid) +
                                         " in window " + std::to_string(wid) +
                                         " lacks history samples");
            }
            if (wv.loss_mask && !wv.fully_present()) {
                throw std::runtime_error("scene csv: loss-masked vehicle " +
                                         std::to_string(vid) + " in window " +
                                         std::to_string(wid) + " is incomplete");
            }
            w.vehicles.push_back(std::move(wv));
        }
        scenes.push_back(std::move(w));
    }
    return scenes;
}

CanonicalSceneSet read_scene_csv(const std::filesystem::path& path) {
    return parse_scene_csv(read_file(path));
}

}  // namespace trajgnn
