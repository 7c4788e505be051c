#pragma once

// Small synthetic datasets for training tests: well-separated Gaussian
// blobs, one per class.

#include <fstream>
#include <string>
#include <vector>

#include "mcdd/matrix.hpp"
#include "mcdd/rng.hpp"

namespace synthetic {

struct Blobs {
    mcdd::Matrix features;
    std::vector<std::size_t> labels;
};

inline Blobs make_blobs(std::size_t per_class, std::size_t num_classes, std::size_t dim,
                        double separation, double spread, std::uint64_t seed) {
    mcdd::Rng rng(mcdd::mix_seed(seed, 0x626c6f6273ULL));
    Blobs blobs;
    blobs.features = mcdd::Matrix(per_class * num_classes, dim);
    blobs.labels.resize(per_class * num_classes);
    std::size_t row = 0;
    for (std::size_t k = 0; k < num_classes; ++k) {
        std::vector<double> center(dim, 0.0);
        for (double& c : center) c = separation * rng.normal();
        for (std::size_t i = 0; i < per_class; ++i, ++row) {
            for (std::size_t c = 0; c < dim; ++c) {
                blobs.features(row, c) = center[c] + spread * rng.normal();
            }
            blobs.labels[row] = k;
        }
    }
    return blobs;
}

inline void write_blobs_csv(const Blobs& blobs, const std::string& path) {
    std::ofstream out(path);
    const std::size_t dim = blobs.features.cols();
    for (std::size_t c = 0; c < dim; ++c) out << "f" << c << ",";
    out << "class\n";
    char buf[64];
    for (std::size_t i = 0; i < blobs.features.rows(); ++i) {
        for (std::size_t c = 0; c < dim; ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", blobs.features(i, c));
            out << buf << ",";
        }
        out << "c" << blobs.labels[i] << "\n";
    }
}

} // namespace synthetic
