#include "mcdd/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include "mcdd/rng.hpp"

namespace mcdd {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cell);
            cell.clear();
        } else if (ch != '\r') {
            cell.push_back(ch);
        }
    }
    cells.push_back(cell);
    for (std::string& c : cells) {
        while (!c.empty() && (c.front() == ' ' || c.front() == '\t')) c.erase(c.begin());
        while (!c.empty() && (c.back() == ' ' || c.back() == '\t')) c.pop_back();
    }
    return cells;
}

bool all_digits(const std::string& s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
    double value = 0.0;
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end || cell.empty()) {
        throw std::invalid_argument("load_csv: cannot parse cell '" + cell + "' at row " +
                                    std::to_string(row + 1) + ", column " +
                                    std::to_string(col + 1));
    }
    return value;
}

// Numeric-aware name comparison so "10" sorts after "9".
bool name_less(const std::string& a, const std::string& b) {
    const auto as_number = [](const std::string& s, double& out) {
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
        return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
    };
    double na = 0.0;
    double nb = 0.0;
    if (as_number(a, na) && as_number(b, nb) && na != nb) return na < nb;
    return a < b;
}

} // namespace

TabularDataset load_csv(const std::filesystem::path& path, const std::string& label_column,
                        bool has_header) {
    std::ifstream file(path);
    if (!file) {
        throw std::invalid_argument("load_csv: cannot open '" + path.string() + "'");
    }

    TabularDataset dataset;
    dataset.name = path.stem().string();

    std::string line;
    std::vector<std::string> header;
    if (has_header) {
        if (!std::getline(file, line)) throw std::invalid_argument("load_csv: empty file");
        header = split_line(line);
    }

    std::size_t label_index = 0;
    bool label_index_known = false;
    if (all_digits(label_column)) {
        label_index = std::stoul(label_column);
        label_index_known = true;
    } else if (has_header) {
        const auto it = std::find(header.begin(), header.end(), label_column);
        if (it == header.end()) {
            throw std::invalid_argument("load_csv: label column '" + label_column +
                                        "' not found in header");
        }
        label_index = static_cast<std::size_t>(it - header.begin());
        label_index_known = true;
    } else {
        throw std::invalid_argument(
            "load_csv: label column must be a numeric index when there is no header");
    }

    std::vector<double> values;
    std::vector<std::string> raw_labels;
    std::size_t n_cols = has_header ? header.size() : 0;
    std::size_t row = has_header ? 1 : 0;
    while (std::getline(file, line)) {
        if (line.empty()) {
            ++row;
            continue;
        }
        const std::vector<std::string> cells = split_line(line);
        if (n_cols == 0) n_cols = cells.size();
        if (cells.size() != n_cols) {
            throw std::invalid_argument("load_csv: row " + std::to_string(row + 1) + " has " +
                                        std::to_string(cells.size()) + " cells, expected " +
                                        std::to_string(n_cols));
        }
        if (label_index >= n_cols) {
            throw std::invalid_argument("load_csv: label column index out of range");
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c == label_index) {
                raw_labels.push_back(cells[c]);
            } else {
                values.push_back(parse_cell(cells[c], row, c));
            }
        }
        ++row;
    }
    (void)label_index_known;
    if (raw_labels.empty()) throw std::invalid_argument("load_csv: no data rows");

    const std::size_t p = n_cols - 1;
    dataset.features = Matrix::from_rows(raw_labels.size(), p, std::move(values));

    std::unordered_map<std::string, std::size_t> label_ids;
    dataset.labels.reserve(raw_labels.size());
    for (const std::string& raw : raw_labels) {
        const auto [it, inserted] = label_ids.try_emplace(raw, dataset.class_names.size());
        if (inserted) dataset.class_names.push_back(raw);
        dataset.labels.push_back(it->second);
    }
    return dataset;
}

Matrix load_features_csv(const std::filesystem::path& path, bool has_header) {
    std::ifstream file(path);
    if (!file) {
        throw std::invalid_argument("load_features_csv: cannot open '" + path.string() + "'");
    }
    std::string line;
    std::size_t row = 0;
    if (has_header) {
        if (!std::getline(file, line)) {
            throw std::invalid_argument("load_features_csv: empty file");
        }
        ++row;
    }
    std::vector<double> values;
    std::size_t n_cols = 0;
    std::size_t n_rows = 0;
    while (std::getline(file, line)) {
        if (line.empty()) {
            ++row;
            continue;
        }
        const std::vector<std::string> cells = split_line(line);
        if (n_cols == 0) n_cols = cells.size();
        if (cells.size() != n_cols) {
            throw std::invalid_argument("load_features_csv: ragged row " +
                                        std::to_string(row + 1));
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            values.push_back(parse_cell(cells[c], row, c));
        }
        ++n_rows;
        ++row;
    }
    if (n_rows == 0) throw std::invalid_argument("load_features_csv: no data rows");
    return Matrix::from_rows(n_rows, n_cols, std::move(values));
}

std::vector<std::size_t> canonical_class_order(const TabularDataset& dataset) {
    std::vector<std::size_t> order(dataset.num_classes());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return name_less(dataset.class_names[a], dataset.class_names[b]);
    });
    return order;
}

NormalizationStats zscore_fit(const Matrix& features, std::span<const std::size_t> indices) {
    if (indices.empty()) throw std::invalid_argument("zscore_fit: no rows given");
    const std::size_t p = features.cols();
    NormalizationStats stats;
    stats.mean.assign(p, 0.0);
    stats.stddev.assign(p, 0.0);
    for (std::size_t i : indices) {
        const double* row = features.data() + i * p;
        for (std::size_t c = 0; c < p; ++c) stats.mean[c] += row[c];
    }
    const double inv_n = 1.0 / static_cast<double>(indices.size());
    for (std::size_t c = 0; c < p; ++c) stats.mean[c] *= inv_n;
    for (std::size_t i : indices) {
        const double* row = features.data() + i * p;
        for (std::size_t c = 0; c < p; ++c) {
            const double diff = row[c] - stats.mean[c];
            stats.stddev[c] += diff * diff;
        }
    }
    for (std::size_t c = 0; c < p; ++c) {
        stats.stddev[c] = std::sqrt(stats.stddev[c] * inv_n);
        if (stats.stddev[c] == 0.0) stats.stddev[c] = 1.0;
    }
    return stats;
}

Matrix zscore_apply(const Matrix& features, const NormalizationStats& stats) {
    if (features.cols() != stats.mean.size()) {
        throw std::invalid_argument("zscore_apply: attribute count mismatch");
    }
    Matrix out = features;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        double* row = out.data() + i * out.cols();
        for (std::size_t c = 0; c < out.cols(); ++c) {
            row[c] = (row[c] - stats.mean[c]) / stats.stddev[c];
        }
    }
    return out;
}

Matrix zscore_invert(const Matrix& normalized, const NormalizationStats& stats) {
    if (normalized.cols() != stats.mean.size()) {
        throw std::invalid_argument("zscore_invert: attribute count mismatch");
    }
    Matrix out = normalized;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        double* row = out.data() + i * out.cols();
        for (std::size_t c = 0; c < out.cols(); ++c) {
            row[c] = row[c] * stats.stddev[c] + stats.mean[c];
        }
    }
    return out;
}

std::vector<ScenarioSplit> make_loco_scenarios(const TabularDataset& dataset,
                                               std::size_t folds, std::uint64_t seed) {
    if (folds < 2) throw std::invalid_argument("make_loco_scenarios: folds must be >= 2");
    const std::size_t k_classes = dataset.num_classes();
    if (k_classes < 2) throw std::invalid_argument("make_loco_scenarios: need >= 2 classes");

    std::vector<std::vector<std::size_t>> class_rows(k_classes);
    for (std::size_t i = 0; i < dataset.labels.size(); ++i) {
        class_rows[dataset.labels[i]].push_back(i);
    }
    for (std::size_t k = 0; k < k_classes; ++k) {
        if (class_rows[k].size() < folds) {
            throw std::invalid_argument("make_loco_scenarios: class '" +
                                        dataset.class_names[k] + "' has only " +
                                        std::to_string(class_rows[k].size()) +
                                        " samples, need >= folds");
        }
    }

    const std::vector<std::size_t> order = canonical_class_order(dataset);
    std::vector<ScenarioSplit> scenarios;
    scenarios.reserve(k_classes * folds);

    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        const std::size_t ood = order[pos];

        // Shuffle each ID class once per OOD scenario, then deal out
        // contiguous chunks as folds: stratified within +/- 1 sample.
        std::vector<std::vector<std::size_t>> shuffled(k_classes);
        for (std::size_t k = 0; k < k_classes; ++k) {
            if (k == ood) continue;
            shuffled[k] = class_rows[k];
            Rng rng(mix_seed(seed, ood * 1000003ULL + k, 0x73706c6974ULL));
            rng.shuffle(shuffled[k]);
        }

        for (std::size_t fold = 0; fold < folds; ++fold) {
            ScenarioSplit split;
            split.ood_class = ood;
            split.fold = fold;
            split.ood_test_indices = class_rows[ood];
            for (std::size_t k = 0; k < k_classes; ++k) {
                if (k == ood) continue;
                const std::vector<std::size_t>& rows = shuffled[k];
                const std::size_t m = rows.size();
                const std::size_t base = m / folds;
                const std::size_t rem = m % folds;
                const auto chunk_begin = [&](std::size_t f) {
                    return f * base + std::min(f, rem);
                };
                const std::size_t begin = chunk_begin(fold);
                const std::size_t end = chunk_begin(fold + 1);
                for (std::size_t i = 0; i < m; ++i) {
                    if (i >= begin && i < end) {
                        split.id_test_indices.push_back(rows[i]);
                    } else {
                        split.train_indices.push_back(rows[i]);
                    }
                }
            }
            std::sort(split.train_indices.begin(), split.train_indices.end());
            std::sort(split.id_test_indices.begin(), split.id_test_indices.end());
            scenarios.push_back(std::move(split));
        }
    }
    return scenarios;
}

} // namespace mcdd
