#include "facecycle/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <torch/torch.h>

#include "facecycle/error.hpp"
#include "facecycle/hashing.hpp"

namespace facecycle {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 8> kMagic = {'F', 'C', 'Y', 'C', 'K', 'P', 'T', '\0'};
constexpr std::size_t kDigestBytes = 32;

std::string dtype_name(torch::ScalarType t) {
    switch (t) {
        case torch::kFloat32: return "f32";
        case torch::kFloat64: return "f64";
        case torch::kInt64: return "i64";
        default: throw CheckpointError("unsupported tensor dtype " + std::string(c10::toString(t)));
    }
}

torch::ScalarType dtype_from(const std::string& name) {
    if (name == "f32") return torch::kFloat32;
    if (name == "f64") return torch::kFloat64;
    if (name == "i64") return torch::kInt64;
    throw CheckpointError("unknown tensor dtype '" + name + "'");
}

template <typename T>
void append_pod(std::string& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T read_pod(const std::string& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw CheckpointError("checkpoint truncated");
    T value;
    std::memcpy(&value, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return value;
}

std::string digest_bytes(const std::string& body) {
    const auto hex = sha256_hex(body);
    std::string raw(kDigestBytes, '\0');
    for (std::size_t i = 0; i < kDigestBytes; ++i)
        raw[i] = static_cast<char>(std::stoi(hex.substr(2 * i, 2), nullptr, 16));
    return raw;
}

struct Parsed {
    nlohmann::json header;
    std::string bytes;
    std::size_t payload_start = 0;
};

Parsed parse_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
    Parsed parsed;
    parsed.bytes.assign(std::istreambuf_iterator<char>(in), {});
    const auto& bytes = parsed.bytes;
    const auto where = " (" + path.string() + ")";

    if (bytes.size() < kMagic.size() + sizeof(std::uint32_t) + sizeof(std::uint64_t) + kDigestBytes)
        throw CheckpointError("checkpoint truncated" + where);
    if (std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0)
        throw CheckpointError("not a checkpoint file (bad magic)" + where);
    std::size_t pos = kMagic.size();
    const auto version = read_pod<std::uint32_t>(bytes, pos);
    if (version != kCheckpointVersion)
        throw CheckpointError("checkpoint version mismatch: file has " + std::to_string(version) +
                              ", expected " + std::to_string(kCheckpointVersion) + where);
    const auto header_len = read_pod<std::uint64_t>(bytes, pos);
    if (header_len > bytes.size() - pos - kDigestBytes) throw CheckpointError("checkpoint truncated" + where);

    const auto body_len = bytes.size() - kDigestBytes;
    if (digest_bytes(bytes.substr(0, body_len)) != bytes.substr(body_len))
        throw CheckpointError("checkpoint corrupt or truncated (checksum mismatch)" + where);
    try {
        parsed.header = nlohmann::json::parse(bytes.substr(pos, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint header unreadable: ") + e.what() + where);
    }
    parsed.payload_start = pos + header_len;
    return parsed;
}

}  // namespace

void CheckpointData::add(std::string name, const torch::Tensor& t) {
    tensors.emplace_back(std::move(name), t.detach().to(torch::kCPU).contiguous().clone());
}

const torch::Tensor& CheckpointData::tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw CheckpointError("checkpoint has no tensor named '" + name + "'");
}

bool CheckpointData::has(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return true;
    return false;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data) {
    nlohmann::json directory = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : data.tensors) {
        const auto nbytes = static_cast<std::uint64_t>(t.nbytes());
        directory.push_back({{"name", name},
                             {"dtype", dtype_name(t.scalar_type())},
                             {"shape", t.sizes().vec()},
                             {"offset", offset},
                             {"nbytes", nbytes}});
        offset += nbytes;
    }
    const nlohmann::json header = {{"kind", data.kind}, {"meta", data.meta}, {"tensors", directory}};
    const auto header_text = header.dump();

    std::string body(kMagic.data(), kMagic.size());
    append_pod<std::uint32_t>(body, kCheckpointVersion);
    append_pod<std::uint64_t>(body, header_text.size());
    body += header_text;
    for (const auto& [name, t] : data.tensors) {
        auto c = t.detach().to(torch::kCPU).contiguous();
        body.append(static_cast<const char*>(c.data_ptr()), c.nbytes());
    }
    body += digest_bytes(body);

    if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("cannot write checkpoint: " + tmp.string());
        out.write(body.data(), static_cast<std::streamsize>(body.size()));
        if (!out) throw CheckpointError("failed writing checkpoint: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
    auto parsed = parse_file(path);
    CheckpointData data;
    try {
        data.kind = parsed.header.at("kind").get<std::string>();
        data.meta = parsed.header.at("meta");
        const auto payload_end = parsed.bytes.size() - kDigestBytes;
        for (const auto& entry : parsed.header.at("tensors")) {
            const auto dtype = dtype_from(entry.at("dtype").get<std::string>());
            const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
            const auto offset = entry.at("offset").get<std::uint64_t>();
            const auto nbytes = entry.at("nbytes").get<std::uint64_t>();
            const auto start = parsed.payload_start + offset;
            if (start + nbytes > payload_end) throw CheckpointError("checkpoint truncated: " + path.string());
            auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
            if (static_cast<std::uint64_t>(t.nbytes()) != nbytes)
                throw CheckpointError("tensor size mismatch for '" + entry.at("name").get<std::string>() + "'");
            std::memcpy(t.data_ptr(), parsed.bytes.data() + start, nbytes);
            data.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint header malformed: ") + e.what());
    }
    return data;
}

nlohmann::json read_checkpoint_header(const std::filesystem::path& path) { return parse_file(path).header; }

}  // namespace facecycle
