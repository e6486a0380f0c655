#include "vpkl/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "vpkl/common.hpp"

static_assert(std::endian::native == std::endian::little,
              "VPKF writer assumes a little-endian host");

namespace vpkl {

namespace {
constexpr char kMagic[4] = {'V', 'P', 'K', 'F'};

void write_u32(std::ostream& os, uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::istream& is, const char* what) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw FormatError(std::string("tensor stream truncated while reading ") + what);
    return v;
}
}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
    os.write(kMagic, 4);
    write_u32(os, kTensorFormatVersion);
    write_u32(os, static_cast<uint32_t>(t.rank()));
    for (int e : t.shape()) write_u32(os, static_cast<uint32_t>(e));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(t.size())));
    if (!os) throw FormatError("tensor write failed");
}

Tensor read_tensor(std::istream& is) {
    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("bad tensor magic (expected VPKF)");
    }
    const uint32_t version = read_u32(is, "version");
    if (version != kTensorFormatVersion) {
        throw FormatError("unsupported tensor format version " + std::to_string(version));
    }
    const uint32_t rank = read_u32(is, "rank");
    if (rank > 8) throw FormatError("implausible tensor rank " + std::to_string(rank));
    std::vector<int> shape(rank);
    int64_t n = 1;
    for (uint32_t i = 0; i < rank; ++i) {
        const uint32_t e = read_u32(is, "extent");
        if (e == 0 || e > (1u << 28)) throw FormatError("implausible tensor extent");
        shape[i] = static_cast<int>(e);
        n *= e;
    }
    Tensor t = Tensor::uninitialized(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(n)));
    if (!is) throw FormatError("tensor stream truncated while reading payload");
    return t;
}

void save_tensor(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    write_tensor(os, t);
}

Tensor load_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path);
    return read_tensor(is);
}

uint64_t fnv1a(const void* data, size_t len, uint64_t seed) {
    uint64_t h = seed;
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

uint64_t tensor_hash(const Tensor& t) {
    uint64_t h = fnv1a(t.shape().data(), t.shape().size() * sizeof(int));
    return fnv1a(t.data(), static_cast<size_t>(t.size()) * sizeof(double), h);
}

uint64_t file_hash(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path);
    char buf[65536];
    uint64_t h = 1469598103934665603ull;
    while (is) {
        is.read(buf, sizeof(buf));
        h = fnv1a(buf, static_cast<size_t>(is.gcount()), h);
    }
    return h;
}

}  // namespace vpkl
