#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gsure/tensor.hpp"
#include "gsure/training.hpp"

namespace gsure::io {

// Array file: 16-byte magic, u32 version, u32 rank, rank x u64 extents, then
// little-endian f64 values in row-major order.
inline constexpr std::uint32_t kArrayVersion = 1;
// Checkpoint file: 16-byte magic, u32 version, then a fixed field layout
// closed by an FNV-1a digest of everything before it.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_array(const Tensor& t);
Tensor decode_array(std::string_view bytes);
void write_array(const std::filesystem::path& path, const Tensor& t);
Tensor read_array(const std::filesystem::path& path);

std::string encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(std::string_view bytes);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
// Throws FormatError when an expected digest is given and differs.
Checkpoint read_checkpoint(const std::filesystem::path& path,
                           std::optional<std::uint64_t> expected_config_digest = std::nullopt,
                           std::optional<std::uint64_t> expected_schedule_digest = std::nullopt);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);

// Shortest round-trip decimal text of a double ("inf", "-inf", "nan" for
// non-finite values).
std::string format_double(double v);

// Binary (P5) graymap of one height x width image, mapping [lo, hi] to 0..255.
void write_pgm(const std::filesystem::path& path, std::span<const double> image, std::size_t height, std::size_t width,
               double lo = -1.0, double hi = 1.0);

std::string read_file(const std::filesystem::path& path);
// Writes via a temporary file and rename.
void write_file(const std::filesystem::path& path, std::string_view bytes);

std::string hex64(std::uint64_t v);
std::uint64_t parse_hex64(const std::string& s);

}  // namespace gsure::io
