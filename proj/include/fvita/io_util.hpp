#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace fvita {

std::string read_file(const std::string& path);

// Writes to "<path>.tmp.<unique>" then renames into place, so interrupted
// runs never leave partially written files at the target path.
void atomic_write_file(const std::string& path, const std::string& contents);

void ensure_dir(const std::filesystem::path& dir);

uint64_t fnv1a64_bytes(const void* data, size_t len);

}  // namespace fvita
