#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "ganselect/error.hpp"
#include "ganselect/models.hpp"

// Layout (all integers little-endian):
//   "GSCK" | u32 version | u32 section count
//   per section: u8 kind | u8 hidden_activation | u8 output_activation | u8 0
//                u32 input_dim | u32 hidden_layers | u32 hidden_units | u32 output_dim
//                u32 parameter count | f64 values...

namespace ganselect {

namespace {

constexpr std::uint32_t kVersion = 1;
constexpr char kMagic[4] = {'G', 'S', 'C', 'K'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
    if (v > 0xFFFFFFFFull) throw ConfigError(std::string("checkpoint: ") + what + " does not fit in 32 bits");
    return static_cast<std::uint32_t>(v);
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint8_t u8() {
        need(1);
        return bytes_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
        return v;
    }
    double f64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
        return std::bit_cast<double>(v);
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw ConfigError("checkpoint: truncated at byte " + std::to_string(pos_));
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

Activation activation_from_byte(std::uint8_t b) {
    if (b > static_cast<std::uint8_t>(Activation::tanh))
        throw ConfigError("checkpoint: unknown activation tag " + std::to_string(b));
    return static_cast<Activation>(b);
}

}  // namespace

const CheckpointSection* Checkpoint::find(SectionKind kind) const {
    for (const auto& s : sections)
        if (s.kind == kind) return &s;
    return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put_u32(out, kVersion);
    put_u32(out, checked_u32(ckpt.sections.size(), "section count"));
    for (const auto& s : ckpt.sections) {
        if (s.params.size() != s.spec.param_count()) throw ConfigError("checkpoint: parameter count does not match spec");
        out.push_back(static_cast<std::uint8_t>(s.kind));
        out.push_back(static_cast<std::uint8_t>(s.spec.hidden_activation));
        out.push_back(static_cast<std::uint8_t>(s.spec.output_activation));
        out.push_back(0);
        put_u32(out, checked_u32(s.spec.input_dim, "input_dim"));
        put_u32(out, checked_u32(s.spec.hidden_layers, "hidden_layers"));
        put_u32(out, checked_u32(s.spec.hidden_units, "hidden_units"));
        put_u32(out, checked_u32(s.spec.output_dim, "output_dim"));
        put_u32(out, checked_u32(s.params.size(), "parameter count"));
        for (double v : s.params.values) put_f64(out, v);
    }
    return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    for (char c : kMagic)
        if (r.u8() != static_cast<std::uint8_t>(c)) throw ConfigError("checkpoint: bad magic");
    if (const auto v = r.u32(); v != kVersion) throw ConfigError("checkpoint: unsupported version " + std::to_string(v));
    const std::uint32_t count = r.u32();
    Checkpoint ckpt;
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointSection s;
        const std::uint8_t kind = r.u8();
        if (kind > static_cast<std::uint8_t>(SectionKind::generator_ema))
            throw ConfigError("checkpoint: unknown section kind " + std::to_string(kind));
        s.kind = static_cast<SectionKind>(kind);
        s.spec.hidden_activation = activation_from_byte(r.u8());
        s.spec.output_activation = activation_from_byte(r.u8());
        r.u8();
        s.spec.input_dim = r.u32();
        s.spec.hidden_layers = r.u32();
        s.spec.hidden_units = r.u32();
        s.spec.output_dim = r.u32();
        s.spec.validate();
        const std::uint32_t n = r.u32();
        if (n != s.spec.param_count()) throw ConfigError("checkpoint: parameter count does not match spec");
        s.params.values.resize(n);
        for (auto& v : s.params.values) v = r.f64();
        ckpt.sections.push_back(std::move(s));
    }
    if (!r.done()) throw ConfigError("checkpoint: trailing bytes");
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const auto bytes = encode_checkpoint(ckpt);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("checkpoint: cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("checkpoint: cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace ganselect
