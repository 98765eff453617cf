#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deanet/adam.hpp"
#include "deanet/module.hpp"

namespace deanet {

/// One named float32 array of a DEAN container.
///
/// Layout (all integers little-endian): magic "DEAN", u32 version = 1,
/// u32 tensor count, then per tensor: u16 name length, UTF-8 name, u8 rank,
/// rank x u32 dims, prod(dims) x f32.
struct CheckpointEntry {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(std::span<const CheckpointEntry> entries);
// `source` names the file (or stream) in error messages.
std::vector<CheckpointEntry> decode_checkpoint(std::string_view bytes, const std::string& source);

void write_checkpoint(const std::filesystem::path& path, std::span<const CheckpointEntry> entries);
std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path);

const CheckpointEntry* find_entry(std::span<const CheckpointEntry> entries, std::string_view name);

template <typename T>
std::vector<CheckpointEntry> export_parameters(const Module<T>& module);

/// Copies every module parameter from `entries` by name. A missing name or a
/// shape mismatch throws DataError quoting both shapes. Entries under the
/// "adam." and "train." prefixes are ignored; any other unknown entry is an
/// error.
template <typename T>
void import_parameters(Module<T>& module, std::span<const CheckpointEntry> entries, const std::string& source);

// Optimizer moments are stored as "adam.m.<param>", "adam.v.<param>" plus a
// scalar "adam.step".
template <typename T>
std::vector<CheckpointEntry> export_adam_state(const Module<T>& module, const AdamState<T>& state);
template <typename T>
bool import_adam_state(const Module<T>& module, std::span<const CheckpointEntry> entries, AdamState<T>& state);

template <typename T>
void save_module(const std::filesystem::path& path, const Module<T>& module, const AdamState<T>* adam = nullptr);
template <typename T>
void load_module(const std::filesystem::path& path, Module<T>& module, AdamState<T>* adam = nullptr);

}  // namespace deanet
