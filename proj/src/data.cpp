#include "stgcn/data.hpp"

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "stgcn/rng.hpp"

namespace stgcn {

namespace fs = std::filesystem;

int Dataset::min_frames() const {
    int m = subjects.empty() ? 0 : subjects.front().n_frames;
    for (const auto& s : subjects) {
        m = std::min(m, s.n_frames);
    }
    return m;
}

void zscore(SeriesMatrix& m) {
    for (int i = 0; i < m.n_rois; ++i) {
        double* row = m.values.data() + static_cast<std::size_t>(i) * m.n_frames;
        double mean = 0.0;
        for (int t = 0; t < m.n_frames; ++t) {
            mean += row[t];
        }
        mean /= m.n_frames;
        double var = 0.0;
        for (int t = 0; t < m.n_frames; ++t) {
            const double d = row[t] - mean;
            var += d * d;
        }
        var /= m.n_frames;  // population sd
        if (var <= 0.0) {
            std::fill(row, row + m.n_frames, 0.0);  // constant-row guard
            continue;
        }
        const double inv_sd = 1.0 / std::sqrt(var);
        for (int t = 0; t < m.n_frames; ++t) {
            row[t] = (row[t] - mean) * inv_sd;
        }
    }
}

void zscore_subject(SubjectRecord& s) {
    SeriesMatrix m{s.n_rois, s.n_frames, std::move(s.series)};
    zscore(m);
    s.series = std::move(m.values);
}

SeriesMatrix load_series_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open series file '" + path + "'");
    }
    SeriesMatrix m;
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() && in.peek() == std::char_traits<char>::eof()) {
            break;  // trailing newline
        }
        std::vector<double> vals;
        const char* p = line.c_str();
        int col = 0;
        while (true) {
            ++col;
            char* end = nullptr;
            const double v = std::strtod(p, &end);
            if (end == p) {
                throw IoError("'" + path + "': non-numeric cell at row " + std::to_string(row) +
                              ", column " + std::to_string(col));
            }
            vals.push_back(v);
            p = end;
            while (*p == ' ' || *p == '\t' || *p == '\r') {
                ++p;
            }
            if (*p == '\0') {
                break;
            }
            if (*p != ',') {
                throw IoError("'" + path + "': unexpected character '" + std::string(1, *p) +
                              "' at row " + std::to_string(row) + ", column " + std::to_string(col));
            }
            ++p;
        }
        if (m.n_frames == 0) {
            m.n_frames = static_cast<int>(vals.size());
        } else if (static_cast<int>(vals.size()) != m.n_frames) {
            throw IoError("'" + path + "': ragged row " + std::to_string(row) + " has " +
                          std::to_string(vals.size()) + " values, expected " +
                          std::to_string(m.n_frames));
        }
        m.values.insert(m.values.end(), vals.begin(), vals.end());
        ++m.n_rois;
    }
    if (m.n_rois == 0) {
        throw IoError("'" + path + "': empty series file");
    }
    return m;
}

namespace {

constexpr char kSeriesMagic[4] = {'S', 'T', 'G', 'B'};

void write_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
        throw IoError("'" + path + "': truncated binary series file");
    }
    return v;
}

}  // namespace

SeriesMatrix load_series_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open series file '" + path + "'");
    }
    char magic[4] = {};
    if (!in.read(magic, 4) || std::memcmp(magic, kSeriesMagic, 4) != 0) {
        throw IoError("'" + path + "': not a binary series file (bad magic)");
    }
    SeriesMatrix m;
    m.n_rois = static_cast<int>(read_u32(in, path));
    m.n_frames = static_cast<int>(read_u32(in, path));
    if (m.n_rois <= 0 || m.n_frames <= 0) {
        throw IoError("'" + path + "': invalid dimensions " + std::to_string(m.n_rois) + "x" +
                      std::to_string(m.n_frames));
    }
    const std::size_t count = static_cast<std::size_t>(m.n_rois) * static_cast<std::size_t>(m.n_frames);
    m.values.resize(count);
    if (!in.read(reinterpret_cast<char*>(m.values.data()),
                 static_cast<std::streamsize>(count * sizeof(double)))) {
        throw IoError("'" + path + "': truncated binary series file");
    }
    return m;
}

SeriesMatrix load_series(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) {
        throw IoError("cannot open series file '" + path + "'");
    }
    char magic[4] = {};
    probe.read(magic, 4);
    probe.close();
    if (std::memcmp(magic, kSeriesMagic, 4) == 0) {
        return load_series_binary(path);
    }
    return load_series_csv(path);
}

void write_series_csv(const std::string& path, const SeriesMatrix& m) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open '" + path + "' for writing");
    }
    char buf[64];
    for (int i = 0; i < m.n_rois; ++i) {
        for (int t = 0; t < m.n_frames; ++t) {
            std::snprintf(buf, sizeof(buf), "%.17g",
                          m.values[static_cast<std::size_t>(i) * m.n_frames + t]);
            out << buf << (t + 1 < m.n_frames ? "," : "\n");
        }
    }
    if (!out) {
        throw IoError("failed writing '" + path + "'");
    }
}

void write_series_binary(const std::string& path, const SeriesMatrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open '" + path + "' for writing");
    }
    out.write(kSeriesMagic, 4);
    write_u32(out, static_cast<std::uint32_t>(m.n_rois));
    write_u32(out, static_cast<std::uint32_t>(m.n_frames));
    out.write(reinterpret_cast<const char*>(m.values.data()),
              static_cast<std::streamsize>(m.values.size() * sizeof(double)));
    if (!out) {
        throw IoError("failed writing '" + path + "'");
    }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (const char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

Dataset load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open manifest '" + path + "'");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw IoError("manifest '" + path + "' is empty");
    }
    {
        const auto header = split_csv_line(line);
        if (header.size() != 3 || header[0] != "id" || header[1] != "label" || header[2] != "path") {
            throw IoError("manifest '" + path + "': expected header 'id,label,path'");
        }
    }

    Dataset ds;
    ds.manifest_path = path;
    const fs::path base = fs::path(path).parent_path();
    std::set<std::string> seen_ids;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) {
            continue;
        }
        const auto cells = split_csv_line(line);
        if (cells.size() != 3) {
            throw IoError("manifest '" + path + "': row " + std::to_string(row) + " has " +
                          std::to_string(cells.size()) + " fields, expected 3");
        }
        SubjectRecord s;
        s.id = cells[0];
        if (!seen_ids.insert(s.id).second) {
            throw IoError("manifest '" + path + "': duplicate subject id '" + s.id + "'");
        }
        if (cells[1] == "0") {
            s.label = 0;
        } else if (cells[1] == "1") {
            s.label = 1;
        } else {
            throw IoError("manifest '" + path + "': row " + std::to_string(row) + ": label '" +
                          cells[1] + "' is not 0 or 1");
        }
        const fs::path series_path = fs::path(cells[2]).is_absolute()
                                         ? fs::path(cells[2])
                                         : base / cells[2];
        SeriesMatrix m = load_series(series_path.string());
        zscore(m);
        s.n_rois = m.n_rois;
        s.n_frames = m.n_frames;
        s.series = std::move(m.values);
        if (ds.subjects.empty()) {
            ds.n_rois = s.n_rois;
        } else if (s.n_rois != ds.n_rois) {
            throw IoError("manifest '" + path + "': subject '" + s.id + "' has " +
                          std::to_string(s.n_rois) + " ROIs but earlier subjects have " +
                          std::to_string(ds.n_rois));
        }
        (s.label ? ds.count_label1 : ds.count_label0) += 1;
        ds.subjects.push_back(std::move(s));
    }
    if (ds.subjects.empty()) {
        throw IoError("manifest '" + path + "' lists no subjects");
    }
    return ds;
}

// ---- synthetic VAR(1) family ----

namespace {

double spectral_radius(const std::vector<double>& c, int n) {
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            m(i, j) = c[static_cast<std::size_t>(i) * n + j];
        }
    }
    const Eigen::EigenSolver<Eigen::MatrixXd> solver(m, /*computeEigenvectors=*/false);
    double rho = 0.0;
    for (int i = 0; i < n; ++i) {
        rho = std::max(rho, std::abs(solver.eigenvalues()[i]));
    }
    return rho;
}

struct BlockLayout {
    int block_size = 0;  // sign-flipped all-pairs block: ROIs [0, block_size)
    int chain_size = 0;  // direction-flipped chain: ROIs [block_size, block_size+chain_size)
};

BlockLayout block_layout(int n) {
    BlockLayout b;
    b.block_size = std::max(2, n / 3);
    b.chain_size = std::min(std::max(2, n / 4), n - b.block_size);
    return b;
}

constexpr double kSelfCoupling = 0.5;
constexpr double kRingCoupling = 0.25;
constexpr double kBlockCoupling = 0.35;
constexpr double kChainForward = 0.3;
constexpr double kChainBackward = 0.1;
constexpr double kTargetRadius = 0.7;

}  // namespace

std::pair<std::vector<double>, std::vector<double>> class_couplings(int n_rois, double class_gap) {
    const int n = n_rois;
    std::vector<double> c0(static_cast<std::size_t>(n) * n, 0.0);
    std::vector<double> c1(c0);
    auto at = [n](std::vector<double>& c, int i, int j) -> double& {
        return c[static_cast<std::size_t>(i) * n + j];
    };
    for (auto* c : {&c0, &c1}) {
        for (int i = 0; i < n; ++i) {
            at(*c, i, i) = kSelfCoupling;
            const int j = (i + 1) % n;
            at(*c, i, j) += kRingCoupling;
            at(*c, j, i) += kRingCoupling;
        }
    }
    const BlockLayout b = block_layout(n);
    // Class 1 couples the block coherently, class 0 anti-coherently. The sign
    // flip keeps per-ROI marginals identical while changing the joint
    // structure, so labels are invisible to any single ROI.
    for (int i = 0; i < b.block_size; ++i) {
        for (int j = i + 1; j < b.block_size; ++j) {
            at(c1, i, j) += class_gap * kBlockCoupling;
            at(c1, j, i) += class_gap * kBlockCoupling;
            at(c0, i, j) -= class_gap * kBlockCoupling;
            at(c0, j, i) -= class_gap * kBlockCoupling;
        }
    }
    // Lag-directional chain whose direction flips with the class; mostly
    // invisible to zero-lag correlations.
    for (int k = 0; k + 1 < b.chain_size; ++k) {
        const int i = b.block_size + k;
        const int j = b.block_size + k + 1;
        at(c1, i, j) += class_gap * kChainForward;
        at(c1, j, i) += class_gap * kChainBackward;
        at(c0, i, j) += class_gap * kChainBackward;
        at(c0, j, i) += class_gap * kChainForward;
    }
    for (auto* c : {&c0, &c1}) {
        const double rho = spectral_radius(*c, n);
        const double scale = kTargetRadius / rho;
        for (auto& v : *c) {
            v *= scale;
        }
    }
    return {std::move(c0), std::move(c1)};
}

std::vector<std::pair<int, int>> planted_difference_edges(int n_rois) {
    const BlockLayout b = block_layout(n_rois);
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < b.block_size; ++i) {
        for (int j = i + 1; j < b.block_size; ++j) {
            edges.emplace_back(i, j);
        }
    }
    for (int k = 0; k + 1 < b.chain_size; ++k) {
        edges.emplace_back(b.block_size + k, b.block_size + k + 1);
    }
    return edges;
}

Dataset synth_generate(const SynthConfig& cfg) {
    if (cfg.n_rois < 2) {
        throw std::invalid_argument("synth_generate: need at least 2 ROIs");
    }
    if (cfg.n_frames < 32) {
        throw std::invalid_argument("synth_generate: need at least 32 frames");
    }
    if (!(cfg.class_gap >= 0.0 && cfg.class_gap <= 1.0)) {
        throw std::invalid_argument("synth_generate: class_gap must be in [0, 1]");
    }
    const auto [c0, c1] = class_couplings(cfg.n_rois, cfg.class_gap);

    // Balanced labels in a seeded shuffle (one extra 0 when the count is odd).
    std::vector<int> labels(static_cast<std::size_t>(cfg.n_subjects), 0);
    for (int i = 0; i < cfg.n_subjects / 2; ++i) {
        labels[static_cast<std::size_t>(i)] = 1;
    }
    Rng label_rng(derive_seed(cfg.seed, "synth-labels"));
    label_rng.shuffle(labels);

    Dataset ds;
    ds.n_rois = cfg.n_rois;
    const int n = cfg.n_rois;
    constexpr int kBurnIn = 50;
    for (int s = 0; s < cfg.n_subjects; ++s) {
        const auto& coupling = labels[static_cast<std::size_t>(s)] ? c1 : c0;
        Rng rng(derive_seed(cfg.seed, "synth-subject") + static_cast<std::uint64_t>(s));
        std::vector<double> state(static_cast<std::size_t>(n));
        std::vector<double> next(static_cast<std::size_t>(n));
        for (auto& v : state) {
            v = rng.normal();
        }
        SubjectRecord rec;
        char idbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "s%04d", s);
        rec.id = idbuf;
        rec.label = labels[static_cast<std::size_t>(s)];
        rec.n_rois = n;
        rec.n_frames = cfg.n_frames;
        rec.series.assign(static_cast<std::size_t>(n) * cfg.n_frames, 0.0);
        for (int t = -kBurnIn; t < cfg.n_frames; ++t) {
            for (int i = 0; i < n; ++i) {
                double acc = rng.normal();
                const double* row = coupling.data() + static_cast<std::size_t>(i) * n;
                for (int j = 0; j < n; ++j) {
                    acc += row[j] * state[static_cast<std::size_t>(j)];
                }
                next[static_cast<std::size_t>(i)] = acc;
            }
            std::swap(state, next);
            if (t >= 0) {
                for (int i = 0; i < n; ++i) {
                    rec.series[static_cast<std::size_t>(i) * cfg.n_frames + t] =
                        state[static_cast<std::size_t>(i)];
                }
            }
        }
        zscore_subject(rec);
        (rec.label ? ds.count_label1 : ds.count_label0) += 1;
        ds.subjects.push_back(std::move(rec));
    }
    return ds;
}

}  // namespace stgcn
