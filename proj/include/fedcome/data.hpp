#pragma once

#include "fedcome/model.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fedcome {

/// One client's private data. The index vectors record each sample's row in
/// the pooled dataset the client was carved from.
struct ClientDataset {
    int client_id = 0;
    Batch train;
    Batch test;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
};

struct PartitionSpec {
    std::size_t num_clients = 0;
    std::size_t classes_per_client = 0;
    std::uint64_t seed = 0;
};

/// Gaussian blobs with identity covariance. Class c is centred at
/// `separation * u_c`, with u_c a seeded random unit direction. Rows are
/// grouped by class, exactly `samples_per_class` per class.
Batch synth_dataset(int num_classes, std::size_t samples_per_class, std::size_t dim, double separation,
                    std::uint64_t seed);

/// Label-sorted shard partition. Every class is cut into contiguous
/// single-class shards (N*C shards in total, spread over the classes as
/// evenly as possible, leftover samples going to the class's last shard);
/// the shards are shuffled and dealt C per client, so no client sees more
/// than C classes. Each client's samples are split 6:1 into train/test by
/// round-robin position (every 7th sample goes to test).
std::vector<ClientDataset> pathological_partition(const Batch& full, const PartitionSpec& spec);

/// Distinct labels held by a client, train and test combined, ascending.
std::vector<int> client_classes(const ClientDataset& ds);

/// Largest label + 1.
int num_classes_of(const Batch& batch);

/// Reads an IDX image file (magic 0x00000803) and label file (magic
/// 0x00000801). Pixels are scaled to [0, 1].
Batch load_idx_images(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// Reads a numeric CSV with a header row. Features are the non-label columns
/// in header order; the label column must hold non-negative integers.
Batch load_csv(const std::filesystem::path& path, const std::string& label_column);

} // namespace fedcome
