#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace tarstop::detail {

std::string read_file(const std::filesystem::path& path);

/// Writes through a temporary sibling and renames, so readers never see a
/// partially written file.
void write_file(const std::filesystem::path& path, std::string_view text);

}  // namespace tarstop::detail
