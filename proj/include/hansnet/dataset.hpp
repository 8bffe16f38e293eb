#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hansnet/config.hpp"
#include "hansnet/data.hpp"

namespace hansnet {

struct VolumeCase {
    std::string name;
    std::string split;  // train, val or test
    Hvol image;
    Hvol labels;
    /// Tumor slices selected for the slice-level sets (a prefix of the filter result
    /// for the last volume of a split when the quota runs out).
    std::vector<std::size_t> selected;
};

/// Phantom volumes per split, each split from its own seed stream, generated
/// until the split's tumor-slice quota is met.
std::vector<VolumeCase> generate_phantom_cases(const DataConfig& cfg, std::uint64_t seed);

/// Writes <name>_image.hvol, <name>_labels.hvol and manifest.json.
void save_cases(const std::filesystem::path& dir, const std::vector<VolumeCase>& cases, std::uint64_t seed);

/// Reads a directory written by save_cases. Volumes without a split are
/// assigned 70/15/15 by a seeded split; volumes without a slice selection
/// use every tumor slice.
std::vector<VolumeCase> load_cases(const std::filesystem::path& dir, std::uint64_t seed);

/// data_dir when set, otherwise in-memory phantoms.
std::vector<VolumeCase> obtain_cases(const Config& cfg);

/// Selected tumor slices of one split as stacked tensors at `size` x `size`.
SliceSet slice_set(const std::vector<VolumeCase>& cases, const std::string& split, std::size_t size);

/// Every slice of one volume at `size` x `size`.
SliceSet volume_slices(const VolumeCase& c, std::size_t size);

}  // namespace hansnet
