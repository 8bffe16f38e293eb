#include "hansnet/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>

namespace hansnet {

namespace {

template <class T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    out.insert(out.end(), raw, raw + sizeof(T));
}

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    template <class T>
    T get() {
        need(sizeof(T));
        std::uint8_t raw[sizeof(T)];
        std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
        pos_ += sizeof(T);
        T value;
        std::memcpy(&value, raw, sizeof(T));
        return value;
    }

    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw IoError("checkpoint truncated");
    }
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ParamList& params) {
    std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
    put_le<std::uint16_t>(out, kCheckpointVersion);
    for (const auto& [name, t] : params) {
        if (name.size() > std::numeric_limits<std::uint16_t>::max()) throw IoError("parameter name too long: " + name);
        if (t.rank() > std::numeric_limits<std::uint8_t>::max()) throw IoError("rank too large for " + name);
        put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
        for (auto d : t.shape()) {
            if (d > std::numeric_limits<std::uint32_t>::max()) throw IoError("dimension too large for " + name);
            put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        }
        for (double v : t.data()) put_le<double>(out, v);
    }
    return out;
}

ParamList decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    if (r.str(4) != std::string(kCheckpointMagic, 4)) throw IoError("not a checkpoint (bad magic)");
    const auto version = r.get<std::uint16_t>();
    if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
    ParamList params;
    while (!r.done()) {
        const auto len = r.get<std::uint16_t>();
        std::string name = r.str(len);
        const auto rank = r.get<std::uint8_t>();
        Shape shape(rank);
        for (auto& d : shape) {
            d = r.get<std::uint32_t>();
            if (d == 0) throw IoError("zero dimension in checkpoint record " + name);
        }
        std::vector<double> values(numel(shape));
        for (auto& v : values) v = r.get<double>();
        params.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
    }
    return params;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

void save_checkpoint(const std::filesystem::path& path, const ParamList& params) {
    write_file_bytes(path, encode_checkpoint(params));
}

ParamList load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

void assign_checkpoint(const ParamList& params, const ParamList& saved) {
    std::map<std::string, const Tensor*> by_name;
    for (const auto& [name, t] : saved) by_name[name] = &t;
    for (const auto& [name, t] : params) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw IoError("checkpoint is missing parameter " + name);
        if (it->second->shape() != t.shape())
            throw IoError("shape mismatch for " + name + ": checkpoint " + shape_str(it->second->shape()) +
                          ", model " + shape_str(t.shape()));
        Tensor dst = t;
        auto d = dst.mutable_data();
        const auto s = it->second->data();
        std::copy(s.begin(), s.end(), d.begin());
        by_name.erase(it);
    }
    if (!by_name.empty()) throw IoError("checkpoint has unexpected parameter " + by_name.begin()->first);
}

}  // namespace hansnet
