#include "fedcome/data.hpp"

#include "fedcome/error.hpp"
#include "fedcome/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace fedcome {

Batch synth_dataset(int num_classes, std::size_t samples_per_class, std::size_t dim, double separation,
                    std::uint64_t seed) {
    if (num_classes < 2) {
        throw ConfigError("synth_dataset: num_classes must be at least 2");
    }
    if (dim < 2) {
        throw ConfigError("synth_dataset: dim must be at least 2");
    }
    if (!(separation > 0.0) || !std::isfinite(separation)) {
        throw ConfigError("synth_dataset: separation must be positive");
    }
    if (samples_per_class == 0) {
        throw ConfigError("synth_dataset: samples_per_class must be positive");
    }

    const auto classes = static_cast<std::size_t>(num_classes);
    std::normal_distribution<double> normal(0.0, 1.0);

    Matrix means(classes, dim);
    Rng mean_rng = make_rng(seed, Purpose::synth_means);
    for (std::size_t c = 0; c < classes; ++c) {
        auto row = means.row(c);
        double norm = 0.0;
        while (norm < 1e-6) {
            for (double& v : row) {
                v = normal(mean_rng);
            }
            norm = norm2(row);
        }
        for (double& v : row) {
            v *= separation / norm;
        }
    }

    Batch out;
    out.features = Matrix(classes * samples_per_class, dim);
    out.labels.reserve(classes * samples_per_class);
    Rng rng = make_rng(seed, Purpose::synth_samples);
    for (std::size_t c = 0; c < classes; ++c) {
        const auto mean = means.row(c);
        for (std::size_t s = 0; s < samples_per_class; ++s) {
            auto row = out.features.row(out.labels.size());
            for (std::size_t k = 0; k < dim; ++k) {
                row[k] = mean[k] + normal(rng);
            }
            out.labels.push_back(static_cast<int>(c));
        }
    }
    return out;
}

int num_classes_of(const Batch& batch) {
    int mx = -1;
    for (int y : batch.labels) {
        mx = std::max(mx, y);
    }
    return mx + 1;
}

std::vector<ClientDataset> pathological_partition(const Batch& full, const PartitionSpec& spec) {
    if (spec.num_clients == 0 || spec.classes_per_client == 0) {
        throw ConfigError("pathological_partition: num_clients and classes_per_client must be positive");
    }
    if (full.empty()) {
        throw ConfigError("pathological_partition: empty dataset");
    }
    const int num_classes = num_classes_of(full);
    if (spec.classes_per_client > static_cast<std::size_t>(num_classes)) {
        throw ConfigError(fmt::format("pathological_partition: classes_per_client {} exceeds {} classes",
                                      spec.classes_per_client, num_classes));
    }

    // Stable label sort, then per-class runs.
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < full.size(); ++i) {
        by_class[full.labels[i]].push_back(i);
    }
    const std::size_t present = by_class.size();
    const std::size_t total_shards = spec.num_clients * spec.classes_per_client;
    if (total_shards < present) {
        throw ConfigError(fmt::format(
            "pathological_partition: {} shards cannot cover {} classes without mixing classes in a shard",
            total_shards, present));
    }

    std::vector<std::vector<std::size_t>> shards;
    shards.reserve(total_shards);
    std::size_t class_pos = 0;
    for (const auto& [label, idx] : by_class) {
        const std::size_t count = total_shards / present + (class_pos < total_shards % present ? 1 : 0);
        ++class_pos;
        if (idx.size() < count) {
            throw ConfigError(fmt::format("pathological_partition: class {} has {} samples, needs {} shards", label,
                                          idx.size(), count));
        }
        const std::size_t size = idx.size() / count;
        for (std::size_t s = 0; s < count; ++s) {
            const auto first = idx.begin() + static_cast<std::ptrdiff_t>(s * size);
            const auto last = (s + 1 == count) ? idx.end() : first + static_cast<std::ptrdiff_t>(size);
            shards.emplace_back(first, last);
        }
    }

    std::vector<std::size_t> order(shards.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(spec.seed, Purpose::partition);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<ClientDataset> clients(spec.num_clients);
    for (std::size_t c = 0; c < spec.num_clients; ++c) {
        std::vector<std::size_t> samples;
        for (std::size_t k = 0; k < spec.classes_per_client; ++k) {
            const auto& shard = shards[order[c * spec.classes_per_client + k]];
            samples.insert(samples.end(), shard.begin(), shard.end());
        }
        ClientDataset& ds = clients[c];
        ds.client_id = static_cast<int>(c);
        for (std::size_t k = 0; k < samples.size(); ++k) {
            (k % 7 == 6 ? ds.test_indices : ds.train_indices).push_back(samples[k]);
        }
        ds.train = full.select(ds.train_indices);
        ds.test = full.select(ds.test_indices);
    }
    return clients;
}

std::vector<int> client_classes(const ClientDataset& ds) {
    std::set<int> s(ds.train.labels.begin(), ds.train.labels.end());
    s.insert(ds.test.labels.begin(), ds.test.labels.end());
    return {s.begin(), s.end()};
}

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError(fmt::format("cannot open '{}'", path.string()));
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset, const std::filesystem::path& path) {
    if (buf.size() < offset + 4) {
        throw FormatError(fmt::format("'{}': truncated header", path.string()));
    }
    return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
           (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

} // namespace

Batch load_idx_images(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    const auto images = read_all(images_path);
    const auto labels = read_all(labels_path);

    const std::uint32_t image_magic = read_be32(images, 0, images_path);
    if (image_magic != 0x00000803U) {
        throw FormatError(fmt::format("'{}': bad image magic 0x{:08x}", images_path.string(), image_magic));
    }
    const std::uint32_t label_magic = read_be32(labels, 0, labels_path);
    if (label_magic != 0x00000801U) {
        throw FormatError(fmt::format("'{}': bad label magic 0x{:08x}", labels_path.string(), label_magic));
    }

    const std::size_t count = read_be32(images, 4, images_path);
    const std::size_t rows = read_be32(images, 8, images_path);
    const std::size_t cols = read_be32(images, 12, images_path);
    const std::size_t label_count = read_be32(labels, 4, labels_path);
    if (count != label_count) {
        throw FormatError(fmt::format("IDX count mismatch: {} images vs {} labels", count, label_count));
    }
    const std::size_t pixels = rows * cols;
    if (pixels == 0) {
        throw FormatError(fmt::format("'{}': zero-sized images", images_path.string()));
    }
    if (images.size() < 16 + count * pixels) {
        throw FormatError(fmt::format("'{}': truncated pixel data", images_path.string()));
    }
    if (labels.size() < 8 + count) {
        throw FormatError(fmt::format("'{}': truncated label data", labels_path.string()));
    }

    Batch out;
    out.features = Matrix(count, pixels);
    out.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        auto row = out.features.row(i);
        const unsigned char* src = images.data() + 16 + i * pixels;
        for (std::size_t k = 0; k < pixels; ++k) {
            row[k] = static_cast<double>(src[k]) / 255.0;
        }
        const int y = labels[8 + i];
        if (y > 9) {
            throw FormatError(fmt::format("'{}': label {} at index {} outside [0, 10)", labels_path.string(), y, i));
        }
        out.labels[i] = y;
    }
    return out;
}

namespace {

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        cells.push_back(trim(cell));
    }
    if (!line.empty() && line.back() == ',') {
        cells.emplace_back();
    }
    return cells;
}

double parse_number(const std::string& cell, std::size_t line_no, const std::filesystem::path& path) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (!cell.empty() && *first == '+') {
        ++first;
    }
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (cell.empty() || ec != std::errc() || ptr != last || !std::isfinite(v)) {
        throw FormatError(fmt::format("'{}' line {}: non-numeric cell '{}'", path.string(), line_no, cell));
    }
    return v;
}

} // namespace

Batch load_csv(const std::filesystem::path& path, const std::string& label_column) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError(fmt::format("cannot open '{}'", path.string()));
    }
    std::string line;
    if (!std::getline(in, line) || trim(line).empty()) {
        throw FormatError(fmt::format("'{}': missing header row", path.string()));
    }
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
        line.erase(0, 3);
    }
    const auto header = split_csv_line(trim(line));
    const auto label_it = std::find(header.begin(), header.end(), label_column);
    if (label_it == header.end()) {
        throw FormatError(fmt::format("'{}': no column named '{}'", path.string(), label_column));
    }
    const auto label_pos = static_cast<std::size_t>(label_it - header.begin());
    if (header.size() < 2) {
        throw FormatError(fmt::format("'{}': no feature columns besides '{}'", path.string(), label_column));
    }

    std::vector<double> values;
    std::vector<int> labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw FormatError(fmt::format("'{}' line {}: expected {} cells, found {}", path.string(), line_no,
                                          header.size(), cells.size()));
        }
        for (std::size_t k = 0; k < cells.size(); ++k) {
            const double v = parse_number(cells[k], line_no, path);
            if (k == label_pos) {
                if (v < 0.0 || v != std::floor(v) || v > 1e9) {
                    throw FormatError(
                        fmt::format("'{}' line {}: label '{}' is not a non-negative integer", path.string(), line_no,
                                    cells[k]));
                }
                labels.push_back(static_cast<int>(v));
            } else {
                values.push_back(v);
            }
        }
    }
    if (labels.empty()) {
        throw FormatError(fmt::format("'{}': no data rows", path.string()));
    }
    const std::size_t dim = header.size() - 1;
    Batch out;
    out.features = Matrix(labels.size(), dim);
    std::copy(values.begin(), values.end(), out.features.data());
    out.labels = std::move(labels);
    return out;
}

} // namespace fedcome
