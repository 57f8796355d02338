#pragma once

#include <filesystem>
#include <functional>
#include <ostream>
#include <string_view>

namespace iopcal {

/// Writes through a sibling temporary file and renames it over `path`, so a
/// reader never observes a partially written file.
void write_atomically(const std::filesystem::path& path,
                      const std::function<void(std::ostream&)>& writer,
                      bool binary = false);

void write_text_atomically(const std::filesystem::path& path, std::string_view text);

}  // namespace iopcal
