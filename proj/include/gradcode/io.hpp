#pragma once

#include <filesystem>
#include <string>

namespace gradcode {

// Writes via a sibling temp file plus rename, so readers never observe a
// partially written artifact.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

}  // namespace gradcode
