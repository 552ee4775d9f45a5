#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace sgt::cli {

// `key = value` lines, optional `[section]` headers (organizational only),
// '#' or ';' comments. Keys are returned without the section prefix.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path);

}  // namespace sgt::cli
