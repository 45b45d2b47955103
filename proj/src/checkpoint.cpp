#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "drnet/atomic_file.hpp"
#include "drnet/network.hpp"

namespace drnet {

namespace {

constexpr char kMagic[4] = {'D', 'R', 'N', '1'};

class Writer {
public:
    void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
    void u16(std::uint16_t v) {
        for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
    const std::string& bytes() const { return bytes_; }

private:
    std::string bytes_;
};

class Reader {
public:
    explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(bytes_[pos_++]);
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(bytes_[pos_++]) << (8 * i));
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }
    bool at_end() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n)
            throw TruncatedFile("checkpoint truncated at byte " + std::to_string(pos_) + " (needed " +
                                std::to_string(n) + " more bytes)");
    }

    std::string bytes_;
    std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

NetworkConfig read_config(Reader& r) {
    NetworkConfig c;
    c.patch_size = r.u32();
    const std::uint8_t conv = r.u8();
    const std::uint8_t pool = r.u8();
    if (conv > 1 || pool > 2) throw LoadError("checkpoint config has an unknown layer type");
    c.conv_type = static_cast<ConvType>(conv);
    c.pool_type = static_cast<PoolType>(pool);
    c.s = r.u32();
    c.c1 = r.u32();
    c.c2 = r.u32();
    c.fc_width = r.u32();
    c.classes = r.u32();
    return c;
}

Network read_into(Reader& r, const NetworkConfig& target) {
    Rng scratch(0);
    Network net = Network::build(target, scratch);
    auto params = net.parameters();
    const std::uint32_t count = r.u32();
    for (std::size_t k = 0; k < count; ++k) {
        const std::string name = r.str(r.u32());
        const Shape shape{r.u32(), r.u32(), r.u32(), r.u32()};
        if (k >= params.size())
            throw ParamShapeMismatch("checkpoint layer '" + name + "' has no counterpart in the configured network",
                                     name);
        if (params[k].name != name || params[k].value->shape() != shape)
            throw ParamShapeMismatch("checkpoint layer '" + name + "' " + shape.str() +
                                         " does not match configured layer '" + params[k].name + "' " +
                                         params[k].value->shape().str(),
                                     name);
        for (auto& v : params[k].value->values()) v = r.f32();
    }
    if (count < params.size())
        throw ParamShapeMismatch("checkpoint is missing layer '" + params[count].name + "'", params[count].name);
    if (!r.at_end()) throw LoadError("trailing bytes after checkpoint records at byte " + std::to_string(r.pos()));
    return net;
}

Network load_impl(const std::filesystem::path& path, const NetworkConfig* expected) {
    Reader r(read_file(path));
    if (r.str(4) != std::string(kMagic, 4)) throw BadMagic("not a checkpoint (bad magic): " + path.string());
    const std::uint16_t version = r.u16();
    if (version != kCheckpointVersion)
        throw VersionMismatch("checkpoint version " + std::to_string(version) + ", expected " +
                              std::to_string(kCheckpointVersion));
    const NetworkConfig stored = read_config(r);
    try {
        stored.validate();
    } catch (const ConfigError& e) {
        throw LoadError(std::string("checkpoint carries an invalid config: ") + e.what());
    }
    return read_into(r, expected ? *expected : stored);
}

}  // namespace

void save(const Network& net, const std::filesystem::path& path) {
    Writer w;
    w.raw(kMagic, 4);
    w.u16(kCheckpointVersion);
    const NetworkConfig& c = net.config();
    w.u32(static_cast<std::uint32_t>(c.patch_size));
    w.u8(static_cast<std::uint8_t>(c.conv_type));
    w.u8(static_cast<std::uint8_t>(c.pool_type));
    for (std::size_t v : {c.s, c.c1, c.c2, c.fc_width, c.classes}) w.u32(static_cast<std::uint32_t>(v));
    const auto params = net.parameters();
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        w.u32(static_cast<std::uint32_t>(p.name.size()));
        w.raw(p.name.data(), p.name.size());
        const Shape& s = p.value->shape();
        for (std::size_t e : {s.n, s.c, s.h, s.w}) w.u32(static_cast<std::uint32_t>(e));
        for (float v : p.value->values()) w.f32(v);
    }
    write_file_atomic(path, w.bytes());
}

Network load(const std::filesystem::path& path) { return load_impl(path, nullptr); }

Network load(const std::filesystem::path& path, const NetworkConfig& expected) {
    expected.validate();
    return load_impl(path, &expected);
}

}  // namespace drnet
