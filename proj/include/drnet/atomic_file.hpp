#pragma once

#include <filesystem>
#include <string_view>

namespace drnet {

// Writes to a sibling temporary and renames over `path`, so readers never see
// a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace drnet
