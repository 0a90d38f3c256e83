#include "quadapt/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace quadapt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<std::uint32_t, 256> make_crc_table() {
    std::array<std::uint32_t, 256> table{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
        table[i] = c;
    }
    return table;
}

constexpr auto kCrcTable = make_crc_table();

void append_f64_le(std::vector<std::uint8_t>& out, double value) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(value);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

double read_f64_le(const std::uint8_t* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

}  // namespace

std::uint32_t crc32(const std::uint8_t* data, std::size_t len) {
    std::uint32_t c = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i) c = kCrcTable[(c ^ data[i]) & 0xFF] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

std::vector<std::uint8_t> pack_blob(const NamedTensors& tensors) {
    std::size_t total = 0;
    for (const auto& [name, t] : tensors) total += t->size() * 8;
    std::vector<std::uint8_t> blob;
    blob.reserve(total);
    for (const auto& [name, t] : tensors) {
        for (double v : t->data) append_f64_le(blob, v);
    }
    return blob;
}

json build_manifest(const std::string& kind, const json& meta, const NamedTensors& tensors) {
    auto blob = pack_blob(tensors);
    json records = json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        const std::uint64_t length = t->size() * 8;
        records.push_back({{"name", name},
                           {"shape", t->shape},
                           {"offset", offset},
                           {"length", length}});
        offset += length;
    }
    return json{{"format_version", kCheckpointFormatVersion},
                {"kind", kind},
                {"meta", meta},
                {"tensors", records},
                {"crc32", crc32(blob.data(), blob.size())}};
}

std::vector<std::uint8_t> checkpoint_bytes(const std::string& kind, const json& meta,
                                           const NamedTensors& tensors) {
    const std::string manifest = build_manifest(kind, meta, tensors).dump(2);
    auto blob = pack_blob(tensors);
    std::vector<std::uint8_t> out(manifest.begin(), manifest.end());
    out.insert(out.end(), blob.begin(), blob.end());
    return out;
}

void write_checkpoint(const std::string& dir, const std::string& kind, const json& meta,
                      const NamedTensors& tensors) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create checkpoint directory " + dir + ": " + ec.message());

    const std::string manifest = build_manifest(kind, meta, tensors).dump(2) + "\n";
    {
        std::ofstream f(fs::path(dir) / "manifest.json", std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open " + dir + "/manifest.json for writing");
        f.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
        if (!f) throw IoError("failed writing " + dir + "/manifest.json");
    }
    {
        auto blob = pack_blob(tensors);
        std::ofstream f(fs::path(dir) / "weights.bin", std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open " + dir + "/weights.bin for writing");
        f.write(reinterpret_cast<const char*>(blob.data()),
                static_cast<std::streamsize>(blob.size()));
        if (!f) throw IoError("failed writing " + dir + "/weights.bin");
    }
}

const TensorPtr& LoadedCheckpoint::tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return t;
    }
    throw CheckpointError("manifest mismatch: tensor '" + name + "' not present in checkpoint");
}

LoadedCheckpoint read_checkpoint(const std::string& dir) {
    const fs::path mpath = fs::path(dir) / "manifest.json";
    const fs::path bpath = fs::path(dir) / "weights.bin";

    std::ifstream mf(mpath, std::ios::binary);
    if (!mf) throw IoError("cannot open " + mpath.string());
    json manifest;
    try {
        manifest = json::parse(mf);
    } catch (const json::exception& e) {
        throw CheckpointError("manifest mismatch: invalid JSON in " + mpath.string() + ": " +
                              e.what());
    }

    if (!manifest.is_object() || !manifest.contains("format_version") ||
        !manifest.contains("kind") || !manifest.contains("tensors") ||
        !manifest.contains("crc32")) {
        throw CheckpointError("manifest mismatch: missing required fields in " + mpath.string());
    }
    if (manifest["format_version"].get<int>() != kCheckpointFormatVersion) {
        throw CheckpointError("manifest mismatch: unsupported format_version");
    }

    std::ifstream bf(bpath, std::ios::binary);
    if (!bf) throw IoError("cannot open " + bpath.string());
    std::vector<std::uint8_t> blob((std::istreambuf_iterator<char>(bf)),
                                   std::istreambuf_iterator<char>());

    // Validate the record layout before touching the data.
    std::uint64_t expected_offset = 0;
    for (const auto& rec : manifest["tensors"]) {
        if (!rec.contains("name") || !rec.contains("shape") || !rec.contains("offset") ||
            !rec.contains("length")) {
            throw CheckpointError("manifest mismatch: malformed tensor record");
        }
        const auto offset = rec["offset"].get<std::uint64_t>();
        const auto length = rec["length"].get<std::uint64_t>();
        if (offset != expected_offset) {
            throw CheckpointError("corrupt blob: tensor offsets must be ascending and packed");
        }
        std::uint64_t count = 1;
        for (const auto& d : rec["shape"]) count *= d.get<std::uint64_t>();
        if (count * 8 != length) {
            throw CheckpointError("corrupt blob: record length disagrees with shape for tensor '" +
                                  rec["name"].get<std::string>() + "'");
        }
        expected_offset += length;
    }
    if (expected_offset != blob.size()) {
        throw CheckpointError("checksum mismatch: blob length " + std::to_string(blob.size()) +
                              " does not match manifest total " + std::to_string(expected_offset));
    }
    const std::uint32_t expect_crc = manifest["crc32"].get<std::uint32_t>();
    const std::uint32_t got_crc = crc32(blob.data(), blob.size());
    if (expect_crc != got_crc) {
        throw CheckpointError("checksum mismatch: manifest crc32 " + std::to_string(expect_crc) +
                              " vs blob crc32 " + std::to_string(got_crc));
    }

    LoadedCheckpoint out;
    out.kind = manifest["kind"].get<std::string>();
    out.meta = manifest.value("meta", json::object());
    out.manifest = manifest;
    for (const auto& rec : manifest["tensors"]) {
        const auto offset = rec["offset"].get<std::uint64_t>();
        const auto length = rec["length"].get<std::uint64_t>();
        std::vector<std::size_t> shape;
        for (const auto& d : rec["shape"]) shape.push_back(d.get<std::size_t>());
        std::vector<double> values(length / 8);
        for (std::size_t i = 0; i < values.size(); ++i) {
            values[i] = read_f64_le(blob.data() + offset + i * 8);
        }
        out.tensors.emplace_back(rec["name"].get<std::string>(),
                                 Tensor::create(std::move(shape), std::move(values)));
    }
    return out;
}

}  // namespace quadapt
