#pragma once

#include "baq/linalg.hpp"
#include "baq/quantizer.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace baq {

// Layer tensor file ("BAQT"), all integers little-endian:
//   magic "BAQT" | u32 version = 1 | u32 rows | u32 cols | rows*cols f32, row-major
//
// Packed layer file ("BAQP"):
//   magic "BAQP" | u32 version = 1 | u32 M | u32 N
//   M x (f32 min, f32 max)
//   ceil(N/2) bytes of 4-bit widths: column j in the low nibble for even j,
//   high nibble for odd j
//   codes column by column, MSB first at R_j bits per code, each column
//   zero-padded to a byte boundary

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kFixedHeaderBytes = 16;

std::vector<std::uint8_t> encode_layer(const Matrix & m);
Matrix decode_layer(std::span<const std::uint8_t> bytes);

void write_layer(const std::filesystem::path & path, const Matrix & m);
Matrix read_layer(const std::filesystem::path & path);

std::vector<std::uint8_t> pack_quantized(const QuantizedLayer & q);
QuantizedLayer unpack_quantized(std::span<const std::uint8_t> bytes);

// Expected size of a packed file for the given shape and widths.
std::size_t packed_size_bytes(std::size_t rows, std::span<const int> per_column_bits);
std::size_t width_header_bytes(std::size_t cols);

// Bits per weight spent on codes (including the per-column byte padding),
// derived from the size of a packed file.
double code_bits_per_weight(std::size_t file_bytes, std::size_t rows, std::size_t cols);

std::vector<std::uint8_t> read_file(const std::filesystem::path & path);
// Writes to a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path & path, std::span<const std::uint8_t> bytes);

} // namespace baq
