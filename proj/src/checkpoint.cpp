#include "iqe/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace iqe {

namespace {

constexpr char kMagic[4] = {'I', 'Q', 'E', 'C'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_raw(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if ((size_t)in.gcount() != sizeof(T)) throw std::runtime_error("truncated checkpoint: " + path);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamList<float>& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kMagic, 4);
    write_raw<uint32_t>(out, kVersion);
    write_raw<uint32_t>(out, (uint32_t)params.size());
    for (const auto& p : params) {
        if (p.name.size() > 0xffff) throw std::runtime_error("parameter name too long: " + p.name);
        write_raw<uint16_t>(out, (uint16_t)p.name.size());
        out.write(p.name.data(), (std::streamsize)p.name.size());
        const auto& shape = p.tensor.shape();
        write_raw<uint8_t>(out, (uint8_t)shape.size());
        for (int d : shape) write_raw<uint32_t>(out, (uint32_t)d);
        out.write(reinterpret_cast<const char*>(p.tensor.data()),
                  (std::streamsize)(sizeof(float) * (size_t)p.tensor.size()));
    }
    if (!out) throw std::runtime_error("short write on checkpoint: " + path);
}

CheckpointMap load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("not a checkpoint (bad magic): " + path);
    const uint32_t version = read_raw<uint32_t>(in, path);
    if (version != kVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) + ": " + path);
    const uint32_t count = read_raw<uint32_t>(in, path);
    CheckpointMap out;
    for (uint32_t i = 0; i < count; ++i) {
        const uint16_t name_len = read_raw<uint16_t>(in, path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if ((size_t)in.gcount() != name_len) throw std::runtime_error("truncated checkpoint: " + path);
        const uint8_t rank = read_raw<uint8_t>(in, path);
        CheckpointTensor t;
        long n = 1;
        for (uint8_t d = 0; d < rank; ++d) {
            const uint32_t dim = read_raw<uint32_t>(in, path);
            if (dim == 0) throw std::runtime_error("corrupt checkpoint dimension: " + path);
            t.shape.push_back((int)dim);
            n *= (long)dim;
        }
        t.data.resize((size_t)n);
        in.read(reinterpret_cast<char*>(t.data.data()), (std::streamsize)(sizeof(float) * (size_t)n));
        if ((size_t)in.gcount() != sizeof(float) * (size_t)n)
            throw std::runtime_error("truncated checkpoint: " + path);
        if (out.count(name)) throw std::runtime_error("duplicate parameter in checkpoint: " + name);
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

void apply_checkpoint(const CheckpointMap& ckpt, ParamList<float>& params) {
    for (auto& p : params) {
        auto it = ckpt.find(p.name);
        if (it == ckpt.end()) throw std::runtime_error("missing parameter in checkpoint: " + p.name);
        if (it->second.shape != p.tensor.shape())
            throw std::runtime_error("parameter shape mismatch for " + p.name + ": checkpoint " +
                                     shape_str(it->second.shape) + " vs model " +
                                     shape_str(p.tensor.shape()));
        p.tensor.values() = it->second.data;
    }
    if (ckpt.size() != params.size()) {
        for (const auto& [name, t] : ckpt) {
            bool known = false;
            for (const auto& p : params) known = known || p.name == name;
            if (!known) throw std::runtime_error("unknown parameter in checkpoint: " + name);
        }
    }
}

}  // namespace iqe
