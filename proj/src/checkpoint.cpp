#include "dstok/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

namespace dstok {

uint32_t crc32_ieee(const uint8_t * data, size_t len, uint32_t seed) {
    static uint32_t table[256];
    static bool init = false;
    if (!init) {
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            table[i] = c;
        }
        init = true;
    }
    uint32_t crc = seed ^ 0xffffffffu;
    for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
    return crc ^ 0xffffffffu;
}

namespace {

void put_u16(std::vector<uint8_t> & b, uint16_t v) {
    b.push_back((uint8_t)(v & 0xff));
    b.push_back((uint8_t)(v >> 8));
}

void put_u32(std::vector<uint8_t> & b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back((uint8_t)((v >> (8 * i)) & 0xff));
}

uint16_t get_u16(const uint8_t * p) { return (uint16_t)(p[0] | (p[1] << 8)); }

uint32_t get_u32(const uint8_t * p) {
    return (uint32_t)p[0] | ((uint32_t)p[1] << 8) | ((uint32_t)p[2] << 16) | ((uint32_t)p[3] << 24);
}

constexpr uint32_t k_version = 1;

} // namespace

void save_checkpoint(const std::string & path, const NamedArrays & arrays) {
    std::vector<uint8_t> payload;
    for (const auto & [name, t] : arrays) {
        DSTOK_CHECK(t.defined(), "save_checkpoint: undefined tensor %s", name.c_str());
        DSTOK_CHECK(name.size() <= 0xffff, "save_checkpoint: name too long");
        DSTOK_CHECK(t.rank() <= 255, "save_checkpoint: rank too large");
        put_u16(payload, (uint16_t)name.size());
        payload.insert(payload.end(), name.begin(), name.end());
        payload.push_back((uint8_t)t.rank());
        for (int i = 0; i < t.rank(); ++i) put_u32(payload, (uint32_t)t.dim(i));
        const size_t at = payload.size();
        payload.resize(at + sizeof(float) * (size_t)t.numel());
        std::memcpy(payload.data() + at, t.data(), sizeof(float) * (size_t)t.numel());
    }
    std::vector<uint8_t> file;
    file.reserve(payload.size() + 12);
    file.insert(file.end(), {'D', 'S', 'A', 'T'});
    put_u32(file, k_version);
    file.insert(file.end(), payload.begin(), payload.end());
    put_u32(file, crc32_ieee(payload.data(), payload.size()));

    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        DSTOK_CHECK(f.good(), "save_checkpoint: cannot open %s", tmp.string().c_str());
        f.write((const char *)file.data(), (std::streamsize)file.size());
        DSTOK_CHECK(f.good(), "save_checkpoint: write failed for %s", tmp.string().c_str());
    }
    fs::rename(tmp, target);
}

NamedArrays load_checkpoint(const std::string & path) {
    std::ifstream f(path, std::ios::binary);
    DSTOK_CHECK(f.good(), "load_checkpoint: cannot open %s", path.c_str());
    std::vector<uint8_t> file((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    DSTOK_CHECK(file.size() >= 12, "load_checkpoint: %s too small", path.c_str());
    DSTOK_CHECK(std::memcmp(file.data(), "DSAT", 4) == 0, "load_checkpoint: bad magic in %s",
                path.c_str());
    DSTOK_CHECK(get_u32(file.data() + 4) == k_version, "load_checkpoint: unsupported version");
    const uint8_t * payload = file.data() + 8;
    const size_t payload_len = file.size() - 12;
    const uint32_t crc_stored = get_u32(file.data() + file.size() - 4);
    const uint32_t crc_actual = crc32_ieee(payload, payload_len);
    DSTOK_CHECK(crc_stored == crc_actual, "load_checkpoint: CRC mismatch in %s", path.c_str());

    NamedArrays arrays;
    size_t at = 0;
    while (at < payload_len) {
        DSTOK_CHECK(at + 2 <= payload_len, "load_checkpoint: truncated name length");
        const uint16_t name_len = get_u16(payload + at);
        at += 2;
        DSTOK_CHECK(at + name_len + 1 <= payload_len, "load_checkpoint: truncated entry");
        std::string name((const char *)payload + at, name_len);
        at += name_len;
        const uint8_t rank = payload[at++];
        Shape shape((size_t)rank);
        DSTOK_CHECK(at + 4ull * rank <= payload_len, "load_checkpoint: truncated dims");
        int64_t numel = 1;
        for (int i = 0; i < rank; ++i) {
            shape[(size_t)i] = (int)get_u32(payload + at);
            at += 4;
            numel *= shape[(size_t)i];
        }
        DSTOK_CHECK(numel >= 0 && at + sizeof(float) * (size_t)numel <= payload_len,
                    "load_checkpoint: truncated data for %s", name.c_str());
        Tensor t(shape);
        std::memcpy(t.data(), payload + at, sizeof(float) * (size_t)numel);
        at += sizeof(float) * (size_t)numel;
        arrays.emplace_back(std::move(name), std::move(t));
    }
    return arrays;
}

void load_into_params(const NamedArrays & arrays, ParamMap & params) {
    for (auto & [name, dst] : params.items) {
        const Tensor * src = find_array(arrays, name);
        DSTOK_CHECK(src != nullptr, "checkpoint: missing array %s", name.c_str());
        DSTOK_CHECK(src->shape() == dst.shape(), "checkpoint: shape mismatch for %s (%s vs %s)",
                    name.c_str(), shape_str(src->shape()).c_str(), shape_str(dst.shape()).c_str());
        dst.copy_from(*src);
    }
}

Tensor pack_u64_words(const std::vector<uint64_t> & words) {
    Tensor t(Shape{(int)(words.size() * 2)});
    std::memcpy(t.data(), words.data(), words.size() * sizeof(uint64_t));
    return t;
}

std::vector<uint64_t> unpack_u64_words(const Tensor & t) {
    DSTOK_CHECK(t.numel() % 2 == 0, "unpack_u64_words: odd word count");
    std::vector<uint64_t> words((size_t)t.numel() / 2);
    std::memcpy(words.data(), t.data(), words.size() * sizeof(uint64_t));
    return words;
}

const Tensor * find_array(const NamedArrays & arrays, const std::string & name) {
    for (const auto & it : arrays)
        if (it.first == name) return &it.second;
    return nullptr;
}

} // namespace dstok
