#include "splicedet/train/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "splicedet/core/error.hpp"

namespace splicedet::train {

using nlohmann::ordered_json;

namespace {
constexpr char kMagic[8] = {'S', 'D', 'C', 'K', 'P', 'T', '0', '1'};

bool host_is_little_endian() {
    const std::uint16_t probe = 1;
    std::uint8_t first;
    std::memcpy(&first, &probe, 1);
    return first == 1;
}
}  // namespace

const core::Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    check(host_is_little_endian(), "checkpoint: big-endian hosts unsupported");
    ordered_json header;
    header["endianness"] = "little";
    header["dtype"] = "float32";
    ordered_json list = ordered_json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, tensor] : ckpt.tensors) {
        ordered_json entry;
        entry["name"] = name;
        entry["shape"] = tensor.shape();
        entry["offset"] = offset;
        entry["numel"] = tensor.numel();
        list.push_back(entry);
        offset += static_cast<std::uint64_t>(tensor.numel()) * sizeof(float);
    }
    header["tensors"] = list;
    header["meta"] = ordered_json::parse(ckpt.meta_json);
    const std::string header_text = header.dump();

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    check(static_cast<bool>(f), "checkpoint: cannot write " + path);
    f.write(kMagic, 8);
    const std::uint64_t header_len = header_text.size();
    f.write(reinterpret_cast<const char*>(&header_len), 8);
    f.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const auto& [name, tensor] : ckpt.tensors)
        f.write(reinterpret_cast<const char*>(tensor.data()),
                static_cast<std::streamsize>(tensor.numel() * sizeof(float)));
    check(static_cast<bool>(f), "checkpoint: short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    check(host_is_little_endian(), "checkpoint: big-endian hosts unsupported");
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("checkpoint: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("checkpoint: bad magic in " + path);
    std::uint64_t header_len = 0;
    f.read(reinterpret_cast<char*>(&header_len), 8);
    std::string header_text(header_len, '\0');
    f.read(header_text.data(), static_cast<std::streamsize>(header_len));
    if (!f) throw DataError("checkpoint: truncated header in " + path);

    ordered_json header;
    try {
        header = ordered_json::parse(header_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("checkpoint: header parse error: " + std::string(e.what()));
    }
    check(header.value("dtype", "") == "float32", "checkpoint: unsupported dtype");
    check(header.value("endianness", "") == "little", "checkpoint: unsupported endianness");

    Checkpoint ckpt;
    ckpt.meta_json = header.contains("meta") ? header["meta"].dump() : "{}";
    const std::streampos payload_start = f.tellg();
    for (const auto& entry : header["tensors"]) {
        const std::string name = entry.at("name").get<std::string>();
        std::vector<int> shape;
        for (const auto& d : entry.at("shape")) shape.push_back(d.get<int>());
        const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
        core::Tensor tensor(shape);
        f.seekg(payload_start + static_cast<std::streamoff>(offset));
        f.read(reinterpret_cast<char*>(tensor.data()),
               static_cast<std::streamsize>(tensor.numel() * sizeof(float)));
        if (!f) throw DataError("checkpoint: truncated payload for " + name);
        ckpt.tensors.emplace_back(name, std::move(tensor));
    }
    return ckpt;
}

Checkpoint snapshot(const nn::ParamRegistry& reg,
                    const std::vector<std::pair<std::string, core::Tensor>>& extra,
                    const std::string& meta_json) {
    Checkpoint ckpt;
    ckpt.meta_json = meta_json;
    for (const auto* p : reg.all()) ckpt.tensors.emplace_back(p->name, p->value);
    for (const auto& [name, tensor] : extra) ckpt.tensors.emplace_back(name, tensor);
    return ckpt;
}

void restore(nn::ParamRegistry& reg, const Checkpoint& ckpt) {
    for (auto* p : reg.all()) {
        const core::Tensor* stored = ckpt.find(p->name);
        if (!stored) throw DataError("checkpoint: missing tensor " + p->name);
        if (stored->numel() != p->value.numel())
            throw DataError("checkpoint: shape mismatch for " + p->name + ": stored " +
                            stored->shape_str() + " vs model " + p->value.shape_str());
        p->value = *stored;
        p->value.reshape(std::vector<int>(p->grad.shape()));
    }
}

}  // namespace splicedet::train
