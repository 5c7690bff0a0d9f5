#include "druformer/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include "json.hpp"

namespace druformer {

using nlohmann::json;

namespace {

void put_u64_le(std::ostream& out, uint64_t v) {
    uint8_t buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<uint8_t>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t get_u64_le(std::istream& in) {
    uint8_t buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    if (!in) throw std::runtime_error("checkpoint: truncated header length");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return v;
}

void write_doubles_le(std::ostream& out, const std::vector<double>& values) {
    static_assert(sizeof(double) == 8);
    for (double d : values) {
        uint64_t bits;
        std::memcpy(&bits, &d, 8);
        uint8_t buf[8];
        for (int i = 0; i < 8; ++i) buf[i] = static_cast<uint8_t>(bits >> (8 * i));
        out.write(reinterpret_cast<const char*>(buf), 8);
    }
}

std::vector<double> read_doubles_le(std::istream& in, size_t count) {
    std::vector<double> values(count);
    std::vector<uint8_t> buf(count * 8);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) throw std::runtime_error("checkpoint: truncated payload");
    for (size_t i = 0; i < count; ++i) {
        uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<uint64_t>(buf[i * 8 + b]) << (8 * b);
        std::memcpy(&values[i], &bits, 8);
    }
    return values;
}

}  // namespace

void write_checkpoint(const std::string& path, const Checkpoint& ck) {
    json header = json::parse(ck.meta_json);
    json tensors = json::array();
    uint64_t offset = 0;
    for (const auto& [name, t] : ck.tensors) {
        json entry;
        entry["name"] = name;
        entry["shape"] = t.shape();
        entry["offset"] = offset;
        tensors.push_back(entry);
        offset += t.numel() * 8;
    }
    header["tensors"] = tensors;
    const std::string header_text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    put_u64_le(out, header_text.size());
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const auto& [name, t] : ck.tensors) write_doubles_le(out, t.data());
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    const uint64_t header_len = get_u64_le(in);
    std::string header_text(header_len, '\0');
    in.read(header_text.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw std::runtime_error("checkpoint: truncated header");
    json header = json::parse(header_text);

    Checkpoint ck;
    for (const auto& entry : header.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        // Entries are written in offset order, so a sequential read matches.
        Tensor t = Tensor::from_data(shape, read_doubles_le(in, shape_numel(shape)));
        ck.tensors.emplace_back(name, std::move(t));
    }
    header.erase("tensors");
    ck.meta_json = header.dump();
    return ck;
}

void load_into_registry(const Checkpoint& ck, ParamRegistry& reg) {
    std::map<std::string, const Tensor*> by_name;
    for (const auto& [name, t] : ck.tensors) by_name[name] = &t;
    for (auto& p : reg.params()) {
        const auto it = by_name.find(p.name);
        if (it == by_name.end()) {
            throw std::runtime_error("checkpoint: missing tensor \"" + p.name + "\"");
        }
        if (it->second->shape() != p.tensor.shape()) {
            throw std::runtime_error("checkpoint: shape mismatch for \"" + p.name + "\"");
        }
        p.tensor.data() = it->second->data();
    }
}

}  // namespace druformer
