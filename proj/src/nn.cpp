#include "ecgt2t/nn.hpp"

#include <cstring>
#include <fstream>

#include "ecgt2t/checkpoint.hpp"

namespace ecgt2t::nn {

namespace {
int g_threads = 1;
}

void set_threads(int n) {
    if (n < 1) n = 1;
    g_threads = n;
#ifdef _OPENMP
    omp_set_num_threads(n);
#endif
}

int get_threads() { return g_threads; }

template struct Tensor<float>;
template struct Tensor<double>;

namespace {

constexpr char kMagic[6] = {'E', 'C', 'G', 'W', '1', '\0'};

void put_u32_le(std::string& buf, uint32_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
    buf.push_back(static_cast<char>((v >> 16) & 0xff));
    buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                     const std::vector<std::pair<std::string, TensorPtr<float>>>& tensors) {
    nlohmann::json header;
    header["meta"] = meta;
    header["tensors"] = nlohmann::json::array();
    size_t offset = 0;
    for (const auto& [name, t] : tensors) {
        std::vector<int> shape;
        if (t->rank >= 1) shape.push_back(t->d0);
        if (t->rank >= 2) shape.push_back(t->d1);
        if (t->rank >= 3) shape.push_back(t->d2);
        header["tensors"].push_back({{"name", name},
                                     {"shape", shape},
                                     {"offset", offset},
                                     {"count", t->size()}});
        offset += t->size() * 4;
    }
    const std::string hdr = header.dump();

    std::string buf;
    buf.reserve(10 + hdr.size() + offset);
    buf.append(kMagic, 6);
    put_u32_le(buf, static_cast<uint32_t>(hdr.size()));
    buf += hdr;
    for (const auto& [name, t] : tensors) {
        for (float v : t->v) {
            uint32_t bits;
            std::memcpy(&bits, &v, 4);
            put_u32_le(buf, bits);
        }
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), Err::IoError, "cannot open " + path.string() + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    require(out.good(), Err::IoError, "short write to " + path.string());
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), Err::MissingCheckpoint, "cannot open checkpoint " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    require(data.size() >= 10, Err::FormatError, "checkpoint too small: " + path.string());
    require(std::memcmp(data.data(), kMagic, 6) == 0, Err::FormatError,
            "bad checkpoint magic in " + path.string());
    const auto* p = reinterpret_cast<const unsigned char*>(data.data());
    const uint32_t hdr_len = get_u32_le(p + 6);
    require(data.size() >= 10 + static_cast<size_t>(hdr_len), Err::FormatError,
            "truncated checkpoint header in " + path.string());

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(data.substr(10, hdr_len));
    } catch (const nlohmann::json::exception& e) {
        fail(Err::FormatError, "checkpoint header parse error: " + std::string(e.what()));
    }

    CheckpointData ck;
    ck.meta = header.value("meta", nlohmann::json::object());
    const size_t blob_base = 10 + hdr_len;
    for (const auto& entry : header.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<std::vector<int>>();
        const size_t offset = entry.at("offset").get<size_t>();
        const size_t count = entry.at("count").get<size_t>();
        require(blob_base + offset + count * 4 <= data.size(), Err::FormatError,
                "checkpoint blob out of range for tensor " + name);
        std::vector<float> values(count);
        for (size_t i = 0; i < count; ++i) {
            uint32_t bits = get_u32_le(p + blob_base + offset + i * 4);
            std::memcpy(&values[i], &bits, 4);
        }
        ck.tensors[name] = {shape, std::move(values)};
    }
    return ck;
}

}  // namespace ecgt2t::nn
