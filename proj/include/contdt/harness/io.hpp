#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "contdt/lora/lora.hpp"
#include "contdt/mhdt/mhdt.hpp"
#include "contdt/numerics/adam.hpp"
#include "contdt/tasks/dataset.hpp"

namespace contdt {

/// One entry of a checkpoint file.
struct NamedTensor {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "CDT1", u32 version, u32 entry count, then per entry u32 name length,
/// name bytes, u32 rank, u32 dims[rank] and little-endian float32 values;
/// a trailing u64 FNV-1a of everything before it.
std::string encode_checkpoint(const std::vector<NamedTensor>& entries);
/// Throws IoError on bad magic, version, truncation or checksum.
std::vector<NamedTensor> decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

std::vector<NamedTensor> snapshot(const ParamList& params);
/// Copies matching entries into the parameters. Every parameter must be
/// present with its exact shape; extra entries are an error too.
void restore(const ParamList& params, const std::vector<NamedTensor>& entries);

/// Adapter set plus "meta/*" entries: task, k, r, h, d and the base
/// fingerprint as four 16-bit chunks (exact in float32).
std::vector<NamedTensor> adapter_entries(const AdapterSet& set, const DTConfig& cfg, std::uint64_t fingerprint);
struct LoadedAdapters {
    AdapterSet set;
    std::uint64_t fingerprint = 0;
};
/// Rebuilds the set; warns on stderr when `expected_fingerprint` differs
/// from the one recorded at save time.
LoadedAdapters read_adapter_entries(const std::vector<NamedTensor>& entries, std::uint64_t expected_fingerprint);
/// Tensor elements excluding "meta/*" entries.
std::size_t payload_elements(const std::vector<NamedTensor>& entries);

inline constexpr int kDatasetVersion = 1;

/// JSON-lines: a header object {family, parameter, quality, H, n_traj, seed,
/// version, transitions}, then one object per trajectory. Floats are
/// written as the shortest decimal that reads back to the same value.
std::string encode_dataset(const OfflineDataset& data);
OfflineDataset decode_dataset(const std::string& text);
void save_dataset(const std::filesystem::path& path, const OfflineDataset& data);
OfflineDataset load_dataset(const std::filesystem::path& path);

/// Replay buffers use the dataset format with an extra "buffer" header field.
std::string encode_buffer(const ReplayBuffer& buffer, const OfflineDataset& source);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace contdt
