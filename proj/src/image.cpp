#include "drnet/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "drnet/atomic_file.hpp"

namespace drnet {

std::size_t ChangeMask::count_changed() const {
    return static_cast<std::size_t>(std::count(values.begin(), values.end(), std::uint8_t{1}));
}

namespace {

class HeaderParser {
public:
    explicit HeaderParser(std::string_view bytes) : bytes_(bytes) {}

    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            const char c = bytes_[pos_];
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    unsigned long number(const char* field) {
        skip_space_and_comments();
        if (pos_ >= bytes_.size()) throw ParseError(std::string("PGM header ends before ") + field, pos_);
        if (!std::isdigit(static_cast<unsigned char>(bytes_[pos_])))
            throw ParseError(std::string("PGM header: expected ") + field, pos_);
        unsigned long v = 0;
        while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
            v = v * 10 + static_cast<unsigned long>(bytes_[pos_] - '0');
            if (v > 0xFFFFFFFFUL) throw ParseError(std::string("PGM header overflow in ") + field, pos_);
            ++pos_;
        }
        return v;
    }

    std::size_t& pos() { return pos_; }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

PgmImage decode_pgm(std::string_view bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P') throw ParseError("not a PGM file (bad magic)", 0);
    if (bytes[1] != '5')
        throw UnsupportedFormat(std::string("unsupported netpbm format P") + bytes[1] + " (only binary P5)", 1);
    HeaderParser h(bytes);
    h.pos() = 2;
    const unsigned long width = h.number("width");
    const unsigned long height = h.number("height");
    const unsigned long maxval = h.number("maxval");
    if (maxval == 0 || maxval > 65535) throw ParseError("PGM maxval out of range", h.pos());
    if (h.pos() >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[h.pos()])))
        throw ParseError("PGM header must end with one whitespace byte", h.pos());
    const std::size_t payload_start = h.pos() + 1;

    const std::size_t bytes_per_sample = maxval > 255 ? 2 : 1;
    const unsigned long long samples = static_cast<unsigned long long>(width) * height;
    if (samples > (1ULL << 32)) throw ParseError("PGM header overflow: image too large", payload_start);
    const std::size_t need = static_cast<std::size_t>(samples) * bytes_per_sample;
    if (bytes.size() - payload_start < need)
        throw ParseError("PGM payload truncated: need " + std::to_string(need) + " bytes, have " +
                             std::to_string(bytes.size() - payload_start),
                         bytes.size());

    PgmImage out{Image(height, width), static_cast<unsigned>(maxval)};
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + payload_start;
    for (std::size_t i = 0; i < samples; ++i) {
        const unsigned v = bytes_per_sample == 1 ? p[i] : (static_cast<unsigned>(p[2 * i]) << 8) | p[2 * i + 1];
        if (v > maxval) throw ParseError("PGM sample exceeds maxval", payload_start + i * bytes_per_sample);
        out.image.pixels[i] = static_cast<double>(v);
    }
    return out;
}

PgmImage read_pgm(const std::filesystem::path& path) { return decode_pgm(slurp(path)); }

std::string encode_pgm(const Image& image, unsigned maxval) {
    if (maxval != 255 && maxval != 65535) throw ArgumentError("PGM maxval must be 255 or 65535");
    std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n" +
                      std::to_string(maxval) + "\n";
    out.reserve(out.size() + image.size() * (maxval > 255 ? 2 : 1));
    for (double v : image.pixels) {
        if (std::isnan(v)) throw NumericError("cannot encode NaN pixel as PGM");
        const double clamped = std::clamp(v, 0.0, static_cast<double>(maxval));
        const auto q = static_cast<unsigned>(std::floor(clamped + 0.5));
        if (maxval > 255) out.push_back(static_cast<char>(q >> 8));
        out.push_back(static_cast<char>(q & 0xFF));
    }
    return out;
}

void write_pgm(const Image& image, const std::filesystem::path& path, unsigned maxval) {
    write_file_atomic(path, encode_pgm(image, maxval));
}

Image mask_to_image(const ChangeMask& mask) {
    Image img(mask.height, mask.width);
    for (std::size_t i = 0; i < mask.size(); ++i) img.pixels[i] = mask.values[i] ? 255.0 : 0.0;
    return img;
}

ChangeMask image_to_mask(const Image& image, unsigned maxval) {
    ChangeMask m(image.height, image.width);
    const double threshold = static_cast<double>(maxval) / 2.0;
    for (std::size_t i = 0; i < image.size(); ++i) m.values[i] = image.pixels[i] > threshold ? 1 : 0;
    return m;
}

void write_mask(const ChangeMask& mask, const std::filesystem::path& path) {
    write_pgm(mask_to_image(mask), path, 255);
}

ChangeMask read_mask(const std::filesystem::path& path) {
    const PgmImage pgm = read_pgm(path);
    return image_to_mask(pgm.image, pgm.maxval);
}

}  // namespace drnet
