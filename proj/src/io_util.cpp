#include "fvita/io_util.hpp"

#include <atomic>
#include <fstream>

#include "fvita/errors.hpp"

namespace fvita {

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open file: " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)),
                      std::istreambuf_iterator<char>());
    if (f.bad()) throw IoError("read failure: " + path);
    return bytes;
}

void atomic_write_file(const std::string& path, const std::string& contents) {
    static std::atomic<uint64_t> counter{0};
    std::filesystem::path target(path);
    if (target.has_parent_path()) ensure_dir(target.parent_path());
    std::filesystem::path tmp =
        target.string() + ".tmp." + std::to_string(counter.fetch_add(1));
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open for write: " + tmp.string());
        f.write(contents.data(), std::streamsize(contents.size()));
        f.flush();
        if (!f) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw IoError("write failure: " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("rename failed for " + path + ": " + ec.message());
    }
}

void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec && !std::filesystem::is_directory(dir))
        throw IoError("cannot create directory " + dir.string() + ": " +
                      ec.message());
}

uint64_t fnv1a64_bytes(const void* data, size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = 1469598103934665603ULL;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace fvita
