#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mia/checkpoint.hpp"
#include "mia/error.hpp"

namespace {

std::filesystem::path tmp_path(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

std::vector<char> read_all(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void write_all(const std::filesystem::path& p, const std::vector<char>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

mia::LmModel sample_model() {
    mia::LmConfig cfg;
    cfg.d_model = 16;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.context_len = 24;
    return mia::LmModel::random_init(cfg, 4242);
}

}  // namespace

TEST_CASE("checkpoint round trip is bit-exact") {
    mia::LmModel m = sample_model();
    auto path = tmp_path("mia_ckpt_roundtrip.ckpt");
    mia::save_checkpoint(m, path);
    mia::LmModel loaded = mia::load_checkpoint(path);
    CHECK(loaded.config() == m.config());
    REQUIRE(loaded.params().size() == m.params().size());
    for (std::size_t i = 0; i < m.params().size(); ++i) {
        CHECK(loaded.params()[i] == m.params()[i]);
    }
}

TEST_CASE("corrupting one payload byte trips the checksum") {
    mia::LmModel m = sample_model();
    auto path = tmp_path("mia_ckpt_corrupt.ckpt");
    mia::save_checkpoint(m, path);
    auto bytes = read_all(path);
    REQUIRE(bytes.size() > 100);
    bytes[bytes.size() - 200] ^= 0x01;  // inside the float payload
    write_all(path, bytes);
    try {
        mia::load_checkpoint(path);
        FAIL("expected checkpoint_checksum");
    } catch (const mia::DataError& e) {
        CHECK(e.code() == mia::Errc::checkpoint_checksum);
    }
}

TEST_CASE("bumped version field is rejected") {
    mia::LmModel m = sample_model();
    auto path = tmp_path("mia_ckpt_version.ckpt");
    mia::save_checkpoint(m, path);
    auto bytes = read_all(path);
    // header JSON starts right after magic + u32 length
    std::string needle = "\"version\":1";
    auto it = std::search(bytes.begin(), bytes.end(), needle.begin(), needle.end());
    REQUIRE(it != bytes.end());
    *(it + static_cast<std::ptrdiff_t>(needle.size()) - 1) = '9';
    write_all(path, bytes);
    try {
        mia::load_checkpoint(path);
        FAIL("expected checkpoint_version");
    } catch (const mia::DataError& e) {
        CHECK(e.code() == mia::Errc::checkpoint_version);
    }
}

TEST_CASE("truncated file and bad magic are distinct errors") {
    mia::LmModel m = sample_model();
    auto path = tmp_path("mia_ckpt_trunc.ckpt");
    mia::save_checkpoint(m, path);
    auto bytes = read_all(path);

    auto truncated = bytes;
    truncated.resize(bytes.size() - 13);
    write_all(path, truncated);
    try {
        mia::load_checkpoint(path);
        FAIL("expected checkpoint_truncated");
    } catch (const mia::DataError& e) {
        CHECK(e.code() == mia::Errc::checkpoint_truncated);
    }

    auto garbled = bytes;
    garbled[0] = 'X';
    write_all(path, garbled);
    try {
        mia::load_checkpoint(path);
        FAIL("expected checkpoint_magic");
    } catch (const mia::DataError& e) {
        CHECK(e.code() == mia::Errc::checkpoint_magic);
    }
}

TEST_CASE("missing checkpoint reports missing_file") {
    auto path = tmp_path("mia_ckpt_missing.ckpt");
    std::filesystem::remove(path);
    try {
        mia::load_checkpoint(path);
        FAIL("expected missing_file");
    } catch (const mia::DataError& e) {
        CHECK(e.code() == mia::Errc::missing_file);
    }
}
