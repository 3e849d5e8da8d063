#pragma once

// File helpers shared by checkpoints, dataset files and run manifests.

#include <filesystem>
#include <string>
#include <string_view>

namespace vmr::io {

/// Whole-file read. Throws IoError.
std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never observe a partial file. Creates parent directories. Throws IoError.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace vmr::io
