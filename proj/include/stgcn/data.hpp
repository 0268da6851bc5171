#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace stgcn {

// One subject: per-ROI time series (n_rois x n_frames, row-major) with a
// binary label. After preparation every non-constant ROI row is z-scored
// (population sd); constant rows map to all-zeros.
struct SubjectRecord {
    std::string id;
    int label = 0;
    int n_rois = 0;
    int n_frames = 0;
    std::vector<double> series;

    double at(int roi, int frame) const {
        return series[static_cast<std::size_t>(roi) * n_frames + frame];
    }
};

struct Dataset {
    std::string manifest_path;
    std::vector<SubjectRecord> subjects;
    int n_rois = 0;
    int count_label0 = 0;
    int count_label1 = 0;

    int min_frames() const;
};

// Structured I/O failure (missing file, malformed row, ...); the CLI maps
// these to exit code 3.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Manifest CSV with header `id,label,path`; series paths are resolved
// relative to the manifest's directory. Every referenced series file is
// loaded, validated and z-scored.
Dataset load_manifest(const std::string& path);

// Series matrix from CSV (n_rois rows of n_frames comma-separated decimals,
// no header) or from the binary container (sniffed by the "STGB" magic).
// Returns row-major values plus dimensions.
struct SeriesMatrix {
    int n_rois = 0;
    int n_frames = 0;
    std::vector<double> values;
};
SeriesMatrix load_series(const std::string& path);
SeriesMatrix load_series_csv(const std::string& path);
SeriesMatrix load_series_binary(const std::string& path);

// Series CSV written with shortest round-trip precision (%.17g); binary
// container: magic "STGB", u32 n_rois, u32 n_frames, f64 row-major
// little-endian.
void write_series_csv(const std::string& path, const SeriesMatrix& m);
void write_series_binary(const std::string& path, const SeriesMatrix& m);

// Per-row z-score with population (1/T) standard deviation; constant rows
// become all-zeros.
void zscore(SeriesMatrix& m);
void zscore_subject(SubjectRecord& s);

// ---- synthetic two-class VAR(1) benchmark family ----

struct SynthConfig {
    int n_subjects = 400;
    int n_rois = 16;
    int n_frames = 256;
    double class_gap = 1.0;  // in [0, 1]
    std::uint64_t seed = 7;
};

// The two stable coupling matrices (spectral radius 0.7). At gap 0 they are
// identical; their off-diagonal difference grows proportionally to gap.
std::pair<std::vector<double>, std::vector<double>> class_couplings(int n_rois, double class_gap);

// ROI pairs (i < j) where the two couplings differ; the ground truth for
// edge-importance localization checks.
std::vector<std::pair<int, int>> planted_difference_edges(int n_rois);

// Balanced labels, x_{t+1} = C_y x_t + eta with unit normal eta, burn-in,
// z-scored output. Bit-reproducible for a fixed seed.
Dataset synth_generate(const SynthConfig& cfg);

}  // namespace stgcn
