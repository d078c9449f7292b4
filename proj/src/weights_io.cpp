#include <mdmlab/weights_io.hpp>

#include <json.hpp>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

static_assert(std::endian::native == std::endian::little, "weight files are little-endian");

namespace mdmlab {

namespace {

constexpr std::array<char, 8> kMagic = {'M', 'D', 'M', 'L', 'A', 'B', 'W', 'T'};
constexpr uint8_t kVersion = 0x01;

using ordered_json = nlohmann::ordered_json;

ordered_json config_to_json(const ModelConfig& c) {
    ordered_json j;
    j["vocab_size"] = c.vocab_size;
    j["num_layers"] = c.num_layers;
    j["num_heads"] = c.num_heads;
    j["model_dim"] = c.model_dim;
    j["ffn_dim"] = c.ffn_dim;
    j["max_seq_len"] = c.max_seq_len;
    j["mask_token_id"] = c.mask_token_id;
    j["eos_token_id"] = c.eos_token_id;
    j["pad_token_id"] = c.pad_token_id;
    return j;
}

ModelConfig config_from_json(const ordered_json& j) {
    ModelConfig c;
    try {
        c.vocab_size = j.at("vocab_size").get<int>();
        c.num_layers = j.at("num_layers").get<int>();
        c.num_heads = j.at("num_heads").get<int>();
        c.model_dim = j.at("model_dim").get<int>();
        c.ffn_dim = j.at("ffn_dim").get<int>();
        c.max_seq_len = j.at("max_seq_len").get<int>();
        c.mask_token_id = j.at("mask_token_id").get<int>();
        c.eos_token_id = j.at("eos_token_id").get<int>();
        c.pad_token_id = j.at("pad_token_id").get<int>();
    } catch (const ordered_json::exception& e) {
        throw FormatError(std::string("header config invalid: ") + e.what());
    }
    return c;
}

void write_u32(std::ostream& os, uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::istream& is, const char* what) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw FormatError(std::string("truncated file while reading ") + what);
    return v;
}

}  // namespace

uint32_t crc32(const void* data, size_t len, uint32_t seed) {
    static const auto table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    uint32_t crc = ~seed;
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xFF] ^ (crc >> 8);
    return ~crc;
}

void save_weights(Weights<float>& weights, const std::string& path) {
    weights.config.validate();
    auto refs = weights.tensor_refs();

    ordered_json header;
    header["config"] = config_to_json(weights.config);
    ordered_json manifest = ordered_json::array();
    int64_t offset = 0;
    for (const auto& r : refs) {
        ordered_json t;
        t["name"] = r.name;
        t["rows"] = r.rows;
        t["cols"] = r.cols;
        t["offset"] = offset;
        manifest.push_back(std::move(t));
        offset += r.size() * int64_t(sizeof(float));
    }
    header["tensors"] = std::move(manifest);
    header["payload_bytes"] = offset;
    const std::string header_str = header.dump();

    std::vector<char> payload(static_cast<size_t>(offset));
    int64_t cursor = 0;
    for (const auto& r : refs) {
        const int64_t bytes = r.size() * int64_t(sizeof(float));
        std::memcpy(payload.data() + cursor, r.data, size_t(bytes));
        cursor += bytes;
    }

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open for write: " + path);
    os.write(kMagic.data(), kMagic.size());
    os.put(char(kVersion));
    write_u32(os, uint32_t(header_str.size()));
    os.write(header_str.data(), std::streamsize(header_str.size()));
    os.write(payload.data(), std::streamsize(payload.size()));
    write_u32(os, crc32(payload.data(), payload.size()));
    if (!os) throw FormatError("write failed: " + path);
}

Weights<float> load_weights(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open: " + path);

    std::array<char, 8> magic{};
    is.read(magic.data(), magic.size());
    if (!is || magic != kMagic) throw FormatError("bad magic bytes: " + path);
    const int version = is.get();
    if (version != kVersion) {
        throw FormatError("unsupported format version " + std::to_string(version));
    }
    const uint32_t header_len = read_u32(is, "header length");
    std::string header_str(header_len, '\0');
    is.read(header_str.data(), header_len);
    if (!is) throw FormatError("truncated file while reading header");

    ordered_json header;
    try {
        header = ordered_json::parse(header_str);
    } catch (const ordered_json::exception& e) {
        throw FormatError(std::string("header is not valid JSON: ") + e.what());
    }
    const ModelConfig cfg = config_from_json(header.at("config"));
    try {
        cfg.validate();
    } catch (const std::exception& e) {
        throw FormatError(std::string("invalid config in header: ") + e.what());
    }

    Weights<float> w = Weights<float>::zeros(cfg);
    auto refs = w.tensor_refs();
    const auto& tensors = header.at("tensors");
    if (tensors.size() != refs.size()) {
        throw FormatError("tensor manifest count mismatch");
    }
    const int64_t payload_bytes = header.at("payload_bytes").get<int64_t>();
    int64_t expect_offset = 0;
    for (size_t i = 0; i < refs.size(); ++i) {
        const auto& t = tensors[i];
        if (t.at("name").get<std::string>() != refs[i].name ||
            t.at("rows").get<int64_t>() != refs[i].rows ||
            t.at("cols").get<int64_t>() != refs[i].cols) {
            throw FormatError("tensor manifest entry mismatch at " + refs[i].name);
        }
        if (t.at("offset").get<int64_t>() != expect_offset) {
            throw FormatError("tensor offsets are not contiguous at " + refs[i].name);
        }
        expect_offset += refs[i].size() * int64_t(sizeof(float));
    }
    if (payload_bytes != expect_offset) {
        throw FormatError("header payload length inconsistent with tensor manifest");
    }

    std::vector<char> payload(static_cast<size_t>(payload_bytes));
    is.read(payload.data(), std::streamsize(payload.size()));
    if (!is) throw FormatError("truncated payload");
    const uint32_t stored_crc = read_u32(is, "checksum");
    const uint32_t actual_crc = crc32(payload.data(), payload.size());
    if (stored_crc != actual_crc) throw FormatError("payload checksum failure");

    int64_t cursor = 0;
    for (auto& r : refs) {
        const int64_t bytes = r.size() * int64_t(sizeof(float));
        std::memcpy(r.data, payload.data() + cursor, size_t(bytes));
        cursor += bytes;
    }
    w.check_all_finite();
    return w;
}

}  // namespace mdmlab
