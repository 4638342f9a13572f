#include "mia/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mia/error.hpp"
#include "mia/hash.hpp"

namespace mia {

namespace {

constexpr std::array<unsigned char, 8> kMagic = {'M', 'I', 'A', 'L',
                                                 'M', 0,   0,   1};

void put_u32le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) |
           (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint64_t get_u64le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

std::string float_payload_le(std::span<const float> params) {
    static_assert(std::endian::native == std::endian::little,
                  "payload serialization assumes a little-endian host");
    std::string payload(params.size() * 4, '\0');
    std::memcpy(payload.data(), params.data(), payload.size());
    return payload;
}

nlohmann::ordered_json config_json(const LmConfig& cfg) {
    return nlohmann::ordered_json{{"vocab_size", cfg.vocab_size},
                                  {"d_model", cfg.d_model},
                                  {"n_layers", cfg.n_layers},
                                  {"n_heads", cfg.n_heads},
                                  {"context_len", cfg.context_len},
                                  {"learning_rate", cfg.learning_rate},
                                  {"train_steps", cfg.train_steps},
                                  {"batch_size", cfg.batch_size},
                                  {"seed", cfg.seed}};
}

LmConfig config_from_json(const nlohmann::json& j) {
    LmConfig cfg;
    cfg.vocab_size = j.at("vocab_size").get<int>();
    cfg.d_model = j.at("d_model").get<int>();
    cfg.n_layers = j.at("n_layers").get<int>();
    cfg.n_heads = j.at("n_heads").get<int>();
    cfg.context_len = j.at("context_len").get<int>();
    cfg.learning_rate = j.at("learning_rate").get<double>();
    cfg.train_steps = j.at("train_steps").get<int>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

}  // namespace

void save_checkpoint(const LmModel& model, const std::filesystem::path& path) {
    nlohmann::ordered_json header;
    header["version"] = kCheckpointVersion;
    header["config"] = config_json(model.config());
    auto& manifest = header["tensors"] = nlohmann::ordered_json::array();
    for (const auto& s : model.tensors()) {
        manifest.push_back({{"name", s.name},
                            {"shape", {s.rows, s.cols}},
                            {"offset", s.offset * 4}});
    }
    std::string header_bytes = header.dump();
    std::string payload = float_payload_le(model.params());

    std::string file;
    file.reserve(8 + 4 + header_bytes.size() + payload.size() + 8);
    file.append(reinterpret_cast<const char*>(kMagic.data()), kMagic.size());
    put_u32le(file, static_cast<std::uint32_t>(header_bytes.size()));
    file += header_bytes;
    file += payload;
    put_u64le(file, fnv1a64(payload));

    // Write-to-temp plus rename so an interrupted run never leaves a
    // half-written checkpoint behind.
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out.write(file.data(), static_cast<std::streamsize>(file.size()))) {
            throw DataError(Errc::io_failure,
                            "cannot write checkpoint: " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

LmModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError(Errc::missing_file,
                        "cannot open checkpoint: " + path.string());
    }
    std::vector<unsigned char> bytes(std::istreambuf_iterator<char>(in), {});
    if (bytes.size() < kMagic.size() + 4) {
        throw DataError(Errc::checkpoint_truncated,
                        "checkpoint shorter than its preamble");
    }
    if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
        throw DataError(Errc::checkpoint_magic,
                        "bad checkpoint magic in " + path.string());
    }
    std::size_t pos = kMagic.size();
    std::uint32_t header_len = get_u32le(bytes.data() + pos);
    pos += 4;
    if (bytes.size() < pos + header_len) {
        throw DataError(Errc::checkpoint_truncated,
                        "checkpoint header truncated");
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                       bytes.begin() + static_cast<std::ptrdiff_t>(pos + header_len));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(Errc::checkpoint_malformed,
                        std::string("checkpoint header is not JSON: ") + e.what());
    }
    pos += header_len;

    int version = header.value("version", -1);
    if (version != kCheckpointVersion) {
        throw DataError(Errc::checkpoint_version,
                        "unsupported checkpoint version " +
                            std::to_string(version));
    }
    LmConfig cfg;
    std::vector<TensorSpec> expected;
    try {
        cfg = config_from_json(header.at("config"));
        cfg.validate();
        expected = tensor_layout(cfg);
        const auto& manifest = header.at("tensors");
        if (manifest.size() != expected.size()) {
            throw DataError(Errc::checkpoint_malformed,
                            "tensor manifest size mismatch");
        }
        for (std::size_t i = 0; i < expected.size(); ++i) {
            const auto& m = manifest[i];
            if (m.at("name").get<std::string>() != expected[i].name ||
                m.at("shape")[0].get<int>() != expected[i].rows ||
                m.at("shape")[1].get<int>() != expected[i].cols ||
                m.at("offset").get<std::size_t>() != expected[i].offset * 4) {
                throw DataError(Errc::checkpoint_malformed,
                                "tensor manifest disagrees with config: " +
                                    expected[i].name);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(Errc::checkpoint_malformed,
                        std::string("bad checkpoint header: ") + e.what());
    }

    const std::size_t n_params = param_count(cfg);
    const std::size_t payload_len = n_params * 4;
    if (bytes.size() != pos + payload_len + 8) {
        throw DataError(Errc::checkpoint_truncated,
                        "checkpoint payload truncated or oversized");
    }
    std::uint64_t stored = get_u64le(bytes.data() + pos + payload_len);
    std::uint64_t actual = fnv1a64(bytes.data() + pos, payload_len);
    if (stored != actual) {
        throw DataError(Errc::checkpoint_checksum,
                        "checkpoint payload checksum mismatch");
    }

    AlignedVec<float> params(n_params);
    std::memcpy(params.data(), bytes.data() + pos, payload_len);
    return LmModel(cfg, std::move(params));
}

}  // namespace mia
