#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vflu/tensor.hpp"

namespace vflu {

/// A labeled image set, pixels normalized to [0,1].
struct RawDataset {
    Tensor images; // [n, channels, height, width]
    std::vector<int> labels;
    std::string name;
    size_t num_classes = 10;

    size_t count() const { return images.shape.empty() ? 0 : images.shape[0]; }
    size_t channels() const { return images.shape[1]; }
    size_t height() const { return images.shape[2]; }
    size_t width() const { return images.shape[3]; }

    /// Copy of image i as a [c,h,w] tensor.
    Tensor image(size_t i) const;

    /// First n samples as a new dataset (n clamped to count()).
    RawDataset head(size_t n) const;
    /// Samples [from, from+n) as a new dataset.
    RawDataset slice(size_t from, size_t n) const;
};

/// One record split between the two feature parties.
struct VerticalSample {
    Tensor left;  // party A half
    Tensor right; // party B half
    int label = 0;
    bool poisoned = false;
};

/// Horizontal shard owned by one client (both halves of each sample).
struct ClientDataset {
    size_t client_id = 0;
    std::vector<VerticalSample> samples;
    size_t poison_count = 0;
};

enum class Party { A, B };

inline const char* party_name(Party p) { return p == Party::A ? "A" : "B"; }

/// Decode the big-endian IDX pair (images magic 0x00000803, labels 0x00000801).
/// Pixels are divided by 255. Malformed input raises FormatError with the
/// offending byte offset.
RawDataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Write a dataset back out as an IDX pair (test fixtures, round-trips).
void save_idx(const RawDataset& ds, const std::string& images_path, const std::string& labels_path);

/// CIFAR-10 binary batches: 3073-byte records, label byte first.
RawDataset load_cifar10(const std::vector<std::string>& batch_paths);

/// Deterministic class-conditional Gaussian-blob images: a desk-scale stand-in
/// that a small net learns past 90% accuracy. Labels are balanced to within 1.
RawDataset synth_dataset(uint64_t seed, size_t n, size_t num_classes, size_t height, size_t width);

/// Split every image into vertical halves: left takes columns [0, ceil(w/2)),
/// right takes the rest (odd widths give the left the extra column).
std::vector<VerticalSample> vertical_split(const RawDataset& ds);

/// Reassemble a split sample; inverse of vertical_split for one record.
Tensor concat_halves(const VerticalSample& s);

/// Seed-deterministic disjoint shards with sizes differing by at most 1.
std::vector<ClientDataset> partition_clients(const std::vector<VerticalSample>& samples,
                                             size_t num_clients, uint64_t seed);

struct BackdoorSpec {
    size_t trigger_rows = 3;
    size_t trigger_cols = 3;
    // negative origin selects the bottom-right corner of the half image
    long trigger_row = -1;
    long trigger_col = -1;
    double trigger_value = 1.0;
    int target_label = 8;
    double poison_fraction = 0.8;
    Party selected_party = Party::B;
};

/// Stamp the trigger into a seed-chosen poison_fraction of the client's
/// samples whose label differs from the target label; those samples are
/// relabeled to the target and flagged. The unselected party's half is never
/// touched. The poisoned count is round-half-up of fraction * eligible.
ClientDataset inject_backdoor(const ClientDataset& client, const BackdoorSpec& spec, uint64_t seed);

/// Trigger-stamp every test sample not already labeled with the target class;
/// the result is the evaluation set for backdoor accuracy.
std::vector<VerticalSample> build_backdoor_testset(const RawDataset& test, const BackdoorSpec& spec);

} // namespace vflu
