#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hansnet/tensor.hpp"

namespace hansnet {

struct NamedTensor {
    std::string name;
    Tensor value;
};

using ParamList = std::vector<NamedTensor>;

inline constexpr char kCheckpointMagic[4] = {'H', 'N', 'S', 'W'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

/// Layout, all little-endian:
///   "HNSW" | u16 version | { u16 name_len | name bytes | u8 rank | u32 dims[rank] | f64 values[] }*
/// Records run to end of file.
std::vector<std::uint8_t> encode_checkpoint(const ParamList& params);
ParamList decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const ParamList& params);
ParamList load_checkpoint(const std::filesystem::path& path);

/// Copies values from `saved` into same-named tensors of `params`. Every
/// parameter must be present with a matching shape; extra entries are an error.
void assign_checkpoint(const ParamList& params, const ParamList& saved);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace hansnet
