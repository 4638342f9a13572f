#include "mia/hash.hpp"

#include <array>
#include <cstdio>
#include <fstream>

#include "mia/error.hpp"

namespace mia {

std::uint64_t hash_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError(Errc::missing_file,
                        "cannot open file for hashing: " + path.string());
    }
    std::uint64_t h = kFnvOffset;
    std::array<char, 1 << 16> buf;
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        h = fnv1a64(buf.data(), static_cast<std::size_t>(in.gcount()), h);
    }
    if (in.bad()) {
        throw DataError(Errc::unreadable_file,
                        "read failure while hashing: " + path.string());
    }
    return h;
}

std::string hash_hex(std::uint64_t h) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace mia
