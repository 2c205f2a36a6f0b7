#pragma once

// Dataset ingestion (IDX, CSV, raw float32 + descriptor) and the binary model
// and code file formats.
//
// Model file (all integers little-endian, reals IEEE-754 binary64):
//   "FHM1" u16 version
//   u32 num_trees, u32 depth, u8 splitter, u32 subspace_rank, f64 sample_fraction,
//   u32 stump_candidates, u32 min_node_samples, u64 master_seed, u32 feature_dim
//   per tree, per internal node in heap order: u8 tag, then
//     0 stump:       u32 feature, f64 threshold
//     1 subspace:    for left then right: u32 rank, f64[D] mean, f64[D*rank] basis (column-major)
//     2 passthrough: u8 branch (0 left, 1 right)
//   u8 has_selection; if 1: u8 method, u8 has_objective, f64 objective, u32 k, u32[k] indices
//   u32 CRC-32 of all preceding bytes
//
// Code file:
//   "FHC1" u16 version, u16 flags (bit 0: labels present), u32 L, u64 N
//   N records of ceil(L/8) bytes (bit p in byte p/8, bit p%8)
//   if labels: N x i32
//   u32 CRC-32 of all preceding bytes

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "foresthash/hashcore.hpp"
#include "foresthash/selection.hpp"
#include "foresthash/training.hpp"

namespace foresthash::io {

inline constexpr std::uint16_t kModelVersion = 1;
inline constexpr std::uint16_t kCodeVersion = 1;
inline constexpr std::size_t kCodeHeaderBytes = 20;

/// IDX image + label pair. Pixels are scaled to [0, 1].
/// Throws FormatError (with byte offset) on bad magic, truncation or count mismatch.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
Dataset load_idx_images(const std::filesystem::path& images);
std::vector<std::int32_t> load_idx_labels(const std::filesystem::path& labels);

/// Sets labels and num_classes (max id + 1). Throws ValidationError on count mismatch.
void attach_labels(Dataset& data, std::vector<std::int32_t> labels);

struct CsvOptions {
    std::optional<std::size_t> label_column;  // zero-based
    bool header = false;
};

/// Comma-separated numeric rows, no quoting. Throws FormatError naming the
/// 1-based line on ragged rows or non-numeric cells.
Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options = {});

struct RawDescriptor {
    std::size_t rows = 0;
    std::size_t cols = 0;
};

/// Parses "N=<rows>,D=<cols>,dtype=f32le". Throws FormatError otherwise.
RawDescriptor parse_descriptor(std::string_view text);

/// Row-major little-endian float32 matrix described by a descriptor file.
/// Throws FormatError naming expected and actual byte counts on size mismatch.
Dataset load_raw(const std::filesystem::path& data, const std::filesystem::path& descriptor);

struct Model {
    Forest forest;
    std::optional<BlockSelection> selection;

    friend bool operator==(const Model&, const Model&) = default;
};

struct CodeFile {
    CodeMatrix codes;
    std::optional<std::vector<std::int32_t>> labels;

    friend bool operator==(const CodeFile&, const CodeFile&) = default;
};

std::vector<std::uint8_t> serialize_model(const Model& model);
/// Throws FormatError, UnsupportedVersionError or CorruptionError.
Model deserialize_model(std::span<const std::uint8_t> bytes);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

std::vector<std::uint8_t> serialize_codes(const CodeFile& codes);
CodeFile deserialize_codes(std::span<const std::uint8_t> bytes);
void save_codes(const CodeFile& codes, const std::filesystem::path& path);
CodeFile load_codes(const std::filesystem::path& path);

/// True when the file starts with the code-file magic.
bool is_code_file(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace foresthash::io
