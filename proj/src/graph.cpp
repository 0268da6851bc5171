#include "stgcn/graph.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "stgcn/data.hpp"

namespace stgcn {

AffinityMatrix compute_affinity(const std::vector<SubjectRecord>& subjects,
                                const std::vector<int>& subject_indices) {
    if (subject_indices.empty()) {
        throw std::invalid_argument("compute_affinity: no subjects given");
    }
    const int n = subjects[static_cast<std::size_t>(subject_indices[0])].n_rois;
    std::int64_t total_frames = 0;
    for (const int si : subject_indices) {
        const auto& s = subjects[static_cast<std::size_t>(si)];
        if (s.n_rois != n) {
            throw std::invalid_argument("compute_affinity: subject '" + s.id + "' has " +
                                        std::to_string(s.n_rois) + " ROIs, expected " +
                                        std::to_string(n));
        }
        total_frames += s.n_frames;
    }

    // Pearson over the concatenated series, two-pass for numerical safety.
    std::vector<double> mean(static_cast<std::size_t>(n), 0.0);
    for (const int si : subject_indices) {
        const auto& s = subjects[static_cast<std::size_t>(si)];
        for (int i = 0; i < n; ++i) {
            const double* row = s.series.data() + static_cast<std::size_t>(i) * s.n_frames;
            mean[static_cast<std::size_t>(i)] +=
                std::accumulate(row, row + s.n_frames, 0.0);
        }
    }
    for (auto& m : mean) {
        m /= static_cast<double>(total_frames);
    }

    std::vector<double> cov(static_cast<std::size_t>(n) * n, 0.0);
    std::vector<double> centered(static_cast<std::size_t>(n), 0.0);
    for (const int si : subject_indices) {
        const auto& s = subjects[static_cast<std::size_t>(si)];
        for (int t = 0; t < s.n_frames; ++t) {
            for (int i = 0; i < n; ++i) {
                centered[static_cast<std::size_t>(i)] = s.at(i, t) - mean[static_cast<std::size_t>(i)];
            }
            for (int i = 0; i < n; ++i) {
                const double ci = centered[static_cast<std::size_t>(i)];
                double* row = cov.data() + static_cast<std::size_t>(i) * n;
                for (int j = i; j < n; ++j) {
                    row[j] += ci * centered[static_cast<std::size_t>(j)];
                }
            }
        }
    }

    for (int i = 0; i < n; ++i) {
        if (cov[static_cast<std::size_t>(i) * n + i] <= 0.0) {
            throw std::invalid_argument(
                "compute_affinity: ROI " + std::to_string(i) +
                " has zero variance over the concatenated training series");
        }
    }

    AffinityMatrix a;
    a.n_rois = n;
    a.values.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double r = cov[static_cast<std::size_t>(i) * n + j] /
                             std::sqrt(cov[static_cast<std::size_t>(i) * n + i] *
                                       cov[static_cast<std::size_t>(j) * n + j]);
            const double v = std::min(std::abs(r), 1.0);
            a.values[static_cast<std::size_t>(i) * n + j] = v;
            a.values[static_cast<std::size_t>(j) * n + i] = v;
        }
    }
    return a;
}

AffinityMatrix compute_affinity(const std::vector<SubjectRecord>& subjects) {
    std::vector<int> idx(subjects.size());
    std::iota(idx.begin(), idx.end(), 0);
    return compute_affinity(subjects, idx);
}

NormalizedAdjacency normalize_adjacency(const AffinityMatrix& a) {
    const int n = a.n_rois;
    NormalizedAdjacency out;
    out.n_rois = n;
    out.degree.assign(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        double deg = 1.0;
        for (int j = 0; j < n; ++j) {
            deg += a.at(i, j);
        }
        out.degree[static_cast<std::size_t>(i)] = deg;
    }
    out.values.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double aij = a.at(i, j) + (i == j ? 1.0 : 0.0);
            out.values[static_cast<std::size_t>(i) * n + j] =
                aij / std::sqrt(out.degree[static_cast<std::size_t>(i)] *
                                out.degree[static_cast<std::size_t>(j)]);
        }
    }
    return out;
}

EdgeImportance importance_init(int n_rois) {
    EdgeImportance m;
    m.n_rois = n_rois;
    const std::int64_t packed = static_cast<std::int64_t>(n_rois) * (n_rois + 1) / 2;
    const double inv_softplus_one = std::log(std::exp(1.0) - 1.0);
    m.theta = Tensor::full({static_cast<int>(packed)}, inv_softplus_one, /*requires_grad=*/true);
    return m;
}

TensorPtr EdgeImportance::materialize() const {
    return softplus(mirror_upper(theta, n_rois));
}

std::vector<double> EdgeImportance::matrix_values() const {
    NoGradGuard no_grad;
    return materialize()->values();
}

TensorPtr normalization_constant(const AffinityMatrix& a) {
    const NormalizedAdjacency na = normalize_adjacency(a);
    return Tensor::from_data({a.n_rois, a.n_rois}, na.values, /*requires_grad=*/false);
}

TensorPtr effective_adjacency(const AffinityMatrix& a, const EdgeImportance& m) {
    if (a.n_rois != m.n_rois) {
        throw std::invalid_argument("effective_adjacency: affinity is " +
                                    std::to_string(a.n_rois) + " ROIs but importance is " +
                                    std::to_string(m.n_rois));
    }
    return mul(normalization_constant(a), m.materialize());
}

void write_matrix_csv(const std::string& path, const std::vector<double>& values, int n) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open '" + path + "' for writing");
    }
    char buf[64];
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            std::snprintf(buf, sizeof(buf), "%.9g", values[static_cast<std::size_t>(i) * n + j]);
            out << buf << (j + 1 < n ? "," : "\n");
        }
    }
    if (!out) {
        throw IoError("failed writing '" + path + "'");
    }
}

}  // namespace stgcn
