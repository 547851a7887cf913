#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace procplan::io {

std::string read_text_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace procplan::io
