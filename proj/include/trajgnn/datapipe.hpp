#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trajgnn/scene.hpp"

namespace trajgnn {

enum class TrackSource { ngsim, highd, synthetic };

struct TrackPoint {
    std::int64_t frame = 0;
    double x = 0.0;  // longitudinal, increasing in driving direction [m]
    double y = 0.0;  // lateral [m]
    int lane_id = 1;
    std::optional<double> v_raw;
};

/// One vehicle's raw samples within a recording; frames strictly increasing.
struct VehicleTrack {
    std::int64_t vehicle_id = 0;
    std::vector<TrackPoint> points;
};

struct RawRecording {
    int recording_id = 0;
    std::vector<VehicleTrack> tracks;
};

struct RawTrackTable {
    TrackSource source = TrackSource::synthetic;
    double rate_hz = 25.0;
    std::vector<RawRecording> recordings;
};

struct SmoothPoint {
    std::int64_t frame = 0;
    double x = 0.0, y = 0.0;
    double vx = 0.0, vy = 0.0;
    int lane_id = 1;
};

struct SmoothTrack {
    std::int64_t vehicle_id = 0;
    std::vector<SmoothPoint> points;
};

struct SmoothRecording {
    int recording_id = 0;
    std::vector<SmoothTrack> tracks;
};

struct SmoothTable {
    TrackSource source = TrackSource::synthetic;
    double rate_hz = 25.0;
    std::vector<SmoothRecording> recordings;
    int dropped_tracks = 0;  // tracks shorter than 3 samples
};

/// NGSIM-format trajectory CSV (Vehicle_ID, Frame_ID, Local_X, Local_Y,
/// Lane_ID; feet). Canonical x is the source Local_Y, canonical y Local_X,
/// both converted to meters; 10 Hz.
RawTrackTable parse_ngsim(std::string_view csv, int recording_id = 0);

/// HighD-format tracks CSV (id, frame, x, y, xVelocity, laneId; meters) plus
/// the per-vehicle meta CSV supplying drivingDirection. Coordinates are
/// mirrored so all traffic flows in +x; 25 Hz.
RawTrackTable parse_highd(std::string_view tracks_csv, std::string_view meta_csv,
                          int recording_id = 0);

/// Ingests a file or a directory of recordings (NGSIM: *.csv, one per
/// recording; HighD: *_tracks.csv with the matching *_tracksMeta.csv),
/// ordered by filename.
RawTrackTable ingest_path(const std::filesystem::path& path, TrackSource source);

/// Double-sided exponential smoothing (forward EMA then backward EMA with
/// alpha = 2/(N+1), N = round(span_s * rate), averaged) followed by central
/// differences for velocities. Both passes start from a least-squares slope
/// extrapolation of the track end so straight-line tracks pass through
/// unchanged. Tracks shorter than 3 samples are dropped and counted.
SmoothTable smooth_and_differentiate(const RawTrackTable& table, double span_s = 0.5);

/// 1 Hz subsampling and 10-sample windows starting every stride_s on the
/// recording grid. Vehicles present for all 5 history samples join a window;
/// loss_mask marks vehicles present for all 10. Windows without any
/// loss-masked vehicle are dropped. window_id encodes the recording:
/// recording_ordinal * 100000 + time-ordered index.
CanonicalSceneSet window_extract(const SmoothTable& table, double stride_s = 5.0);

struct SceneSplits {
    CanonicalSceneSet train, val, test;
};

enum class SplitPolicy { ngsim, highd };

SplitPolicy split_policy_from_name(const std::string& name);

/// ngsim policy: all but the last recording train; the last recording's
/// windows split half (time order) into validation then test. highd policy:
/// last ceil(10%) of recordings test, the ceil(10%) before that validation,
/// rest train.
SceneSplits split_dataset(const CanonicalSceneSet& scenes, SplitPolicy policy);

struct SynthConfig {
    enum class Mode { constant_velocity, idm_interacting };

    std::uint64_t seed = 0;
    int lanes = 2;
    double length_m = 400.0;
    int vehicles = 8;
    Mode mode = Mode::idm_interacting;
    double lane_change_per_min = 0.0;  // per vehicle
    double duration_s = 60.0;
    int recordings = 1;
    // Per-vehicle parameter ranges (idm mode); v0 doubles as the speed range
    // in constant-velocity mode.
    double v0_min = 10.0, v0_max = 35.0;
    double a_max_min = 1.0, a_max_max = 2.5;
    double tau_min = 0.8, tau_max = 1.6;
    double b_min = 2.0, b_max = 4.0;
    double s0_min = 2.0, s0_max = 6.0;

    void validate() const;
    static SynthConfig from_key_values(const std::map<std::string, std::string>& kv);
};

/// Deterministic synthetic highway traffic at 25 Hz: straight-line motion or
/// jointly integrated IDM vehicles with scripted cosine-ramp lane changes at
/// Poisson-distributed instants.
RawTrackTable generate_synthetic(const SynthConfig& cfg);

// Canonical scene CSV: window_id,vehicle_id,sample_index,x,y,vx,vy,lane_id,
// loss_mask; one row per vehicle-sample, UTF-8, LF, '.' decimals.
std::string scene_csv_string(const CanonicalSceneSet& scenes);
void write_scene_csv(const std::filesystem::path& path, const CanonicalSceneSet& scenes);
CanonicalSceneSet parse_scene_csv(std::string_view csv);
CanonicalSceneSet read_scene_csv(const std::filesystem::path& path);

}  // namespace trajgnn
