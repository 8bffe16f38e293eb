#include <algorithm>
#include <bit>
#include <cstring>

#include "hansnet/checkpoint.hpp"
#include "hansnet/data.hpp"

namespace hansnet {

namespace {

template <class T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    out.insert(out.end(), raw, raw + sizeof(T));
}

template <class T>
T get_le(const std::vector<std::uint8_t>& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw IoError("HVOL file truncated");
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, in.data() + pos, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    pos += sizeof(T);
    T v;
    std::memcpy(&v, raw, sizeof(T));
    return v;
}

}  // namespace

void Hvol::validate() const {
    const std::size_t n = voxels();
    if (dtype == HvolType::f32 ? f32.size() != n || !u8.empty() : u8.size() != n || !f32.empty())
        throw IoError("HVOL payload does not match its dimensions");
}

Hvol make_hvol_f32(std::size_t d, std::size_t h, std::size_t w, std::array<float, 3> spacing) {
    Hvol v;
    v.dtype = HvolType::f32;
    v.dims = {static_cast<std::uint32_t>(d), static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(w)};
    v.spacing = spacing;
    v.f32.assign(d * h * w, 0.0f);
    return v;
}

Hvol make_hvol_u8(std::size_t d, std::size_t h, std::size_t w, std::array<float, 3> spacing) {
    Hvol v;
    v.dtype = HvolType::u8;
    v.dims = {static_cast<std::uint32_t>(d), static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(w)};
    v.spacing = spacing;
    v.u8.assign(d * h * w, 0);
    return v;
}

std::vector<std::uint8_t> encode_hvol(const Hvol& v) {
    v.validate();
    std::vector<std::uint8_t> out(std::begin(kHvolMagic), std::end(kHvolMagic));
    put_le<std::uint16_t>(out, kHvolVersion);
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(v.dtype));
    for (auto d : v.dims) put_le<std::uint32_t>(out, d);
    for (auto s : v.spacing) put_le<float>(out, s);
    if (v.dtype == HvolType::f32) {
        out.reserve(out.size() + v.f32.size() * 4);
        for (float f : v.f32) put_le<float>(out, f);
    } else {
        out.insert(out.end(), v.u8.begin(), v.u8.end());
    }
    return out;
}

Hvol decode_hvol(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || !std::equal(std::begin(kHvolMagic), std::end(kHvolMagic), bytes.begin()))
        throw IoError("not an HVOL file (bad magic)");
    std::size_t pos = 4;
    const auto version = get_le<std::uint16_t>(bytes, pos);
    if (version != kHvolVersion) throw IoError("unsupported HVOL version " + std::to_string(version));
    const auto code = get_le<std::uint8_t>(bytes, pos);
    if (code > 1) throw IoError("unknown HVOL dtype code " + std::to_string(code));
    Hvol v;
    v.dtype = static_cast<HvolType>(code);
    for (auto& d : v.dims) d = get_le<std::uint32_t>(bytes, pos);
    for (auto& s : v.spacing) s = get_le<float>(bytes, pos);
    const std::size_t n = v.voxels();
    const std::size_t width = v.dtype == HvolType::f32 ? 4 : 1;
    if (bytes.size() - pos != n * width)
        throw IoError("HVOL payload is " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                      std::to_string(n * width));
    if (v.dtype == HvolType::f32) {
        v.f32.resize(n);
        for (auto& f : v.f32) f = get_le<float>(bytes, pos);
    } else {
        v.u8.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
    }
    return v;
}

void write_hvol(const std::filesystem::path& path, const Hvol& v) { write_file_bytes(path, encode_hvol(v)); }

Hvol read_hvol(const std::filesystem::path& path) { return decode_hvol(read_file_bytes(path)); }

}  // namespace hansnet
