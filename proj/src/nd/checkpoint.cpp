#include "flowprobe/nd/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "flowprobe/common/error.hpp"
#include "flowprobe/common/hash.hpp"

namespace flowprobe::nd {

namespace {

constexpr char kMagic[4] = {'F', 'P', 'V', '1'};

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f64(std::vector<uint8_t>& out, double d) {
    uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64(out, bits);
}

void put_str(std::vector<uint8_t>& out, const std::string& s) {
    put_u32(out, static_cast<uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

struct Reader {
    const uint8_t* p;
    const uint8_t* end;
    std::string path;

    void need(size_t n) const {
        if (static_cast<size_t>(end - p) < n) throw IoError("truncated checkpoint: " + path);
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
        p += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
        p += 8;
        return v;
    }
    double f64() {
        uint64_t bits = u64();
        double d;
        std::memcpy(&d, &bits, 8);
        return d;
    }
    std::string str() {
        const uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(p), n);
        p += n;
        return s;
    }
};

}  // namespace

std::vector<uint8_t> serialize_params(const ParamSet& params) {
    std::vector<uint8_t> out;
    put_u64(out, params.size());
    for (const auto& [name, e] : params.entries()) {
        put_str(out, name);
        put_u32(out, static_cast<uint32_t>(e.value.rank()));
        for (int d : e.value.shape()) put_u64(out, static_cast<uint64_t>(d));
        for (double x : e.value.vec()) put_f64(out, x);
    }
    return out;
}

std::string param_checksum(const ParamSet& params) {
    return sha256_hex(serialize_params(params));
}

void save_checkpoint(const std::string& path, const ParamSet& params, const MetaMap& meta) {
    const std::vector<uint8_t> section = serialize_params(params);

    MetaMap full_meta = meta;
    full_meta["content_sha"] = sha256_hex(section);

    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, static_cast<uint32_t>(full_meta.size()));
    for (const auto& [k, v] : full_meta) {
        put_str(out, k);
        put_str(out, v);
    }
    out.insert(out.end(), section.begin(), section.end());

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Reader r{bytes.data(), bytes.data() + bytes.size(), path};
    r.need(4);
    if (std::memcmp(r.p, kMagic, 4) != 0) throw IoError("bad magic in " + path);
    r.p += 4;

    Checkpoint ck;
    const uint32_t meta_count = r.u32();
    for (uint32_t i = 0; i < meta_count; ++i) {
        std::string k = r.str();
        std::string v = r.str();
        ck.meta.emplace(std::move(k), std::move(v));
    }

    const uint8_t* section_begin = r.p;
    const uint64_t n_params = r.u64();
    for (uint64_t i = 0; i < n_params; ++i) {
        std::string name = r.str();
        const uint32_t rank = r.u32();
        std::vector<int> shape;
        shape.reserve(rank);
        for (uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<int>(r.u64()));
        const int64_t count = Tensor::numel_of(shape);
        std::vector<double> data(static_cast<size_t>(count));
        for (int64_t j = 0; j < count; ++j) data[static_cast<size_t>(j)] = r.f64();
        ck.params.add(name, Tensor(std::move(shape), std::move(data)));
    }

    ck.content_sha = sha256_hex(section_begin, static_cast<size_t>(r.p - section_begin));
    auto it = ck.meta.find("content_sha");
    if (it != ck.meta.end() && it->second != ck.content_sha) {
        throw CompatError("checksum mismatch in " + path + " (file corrupt or tampered)");
    }
    return ck;
}

}  // namespace flowprobe::nd
