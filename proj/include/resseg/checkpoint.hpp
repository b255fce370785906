#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "resseg/model.hpp"

namespace resseg {

/// Named-tensor archive.
///
///   "RSEG" | version u32 | entry count u32 | entries...
///   entry: name length u32 | UTF-8 name | dtype tag u32 | rank u32 |
///          dims u32 x rank | payload
///
/// All integers little-endian. Payload is prod(dims) 32-bit values for
/// f32/u32 entries and prod(dims) bytes for UTF-8 entries.
enum class Dtype : std::uint32_t { F32 = 0, Utf8 = 1, U32 = 2 };

inline constexpr std::uint32_t kArchiveVersion = 1;

struct ArchiveEntry {
  std::string name;
  Dtype dtype = Dtype::F32;
  std::vector<std::uint32_t> dims;
  std::vector<float> f32;
  std::vector<std::uint32_t> u32;
  std::string text;

  static ArchiveEntry tensor(std::string name, const Tensor<float>& t);
  static ArchiveEntry utf8(std::string name, std::string text);
  static ArchiveEntry words(std::string name, std::vector<std::uint32_t> values);

  Tensor<float> to_tensor() const;
};

struct Archive {
  std::vector<ArchiveEntry> entries;

  const ArchiveEntry* find(const std::string& name) const;
};

void write_archive(const std::filesystem::path& path, const Archive& archive);
Archive read_archive(const std::filesystem::path& path);

/// Archive holding the model config (entry "config"), every parameter, the
/// BN running statistics and, when given, LAMB state under "opt/".
Archive make_checkpoint(Model<float>& model, const LambState<float>* optimizer = nullptr);
void save_checkpoint(const std::filesystem::path& path, Model<float>& model,
                     const LambState<float>* optimizer = nullptr);

/// Copies archive tensors into `model`. Throws ConfigError listing both
/// shape lists when names or shapes disagree.
void restore_model(Model<float>& model, const Archive& archive);
/// Restores LAMB state; returns false if the archive holds none.
bool restore_optimizer(LambState<float>& state, const Archive& archive);

struct LoadedCheckpoint {
  Model<float> model;
  std::optional<LambState<float>> optimizer;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace resseg
