#include "qtopo/nn/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "qtopo/errors.hpp"

namespace qtopo::nn {

namespace {

constexpr char kMagic[4] = {'Q', 'N', 'N', '1'};
constexpr std::uint32_t kVersion = 1;

void put(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Cursor {
public:
    explicit Cursor(const std::vector<std::uint8_t>& b) : b_(b) {}
    std::size_t pos() const { return pos_; }
    std::uint64_t get(int bytes) {
        if (b_.size() - pos_ < static_cast<std::size_t>(bytes)) throw FormatError("truncated checkpoint", pos_);
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * i);
        return v;
    }
    std::string text(std::size_t n) {
        if (b_.size() - pos_ < n) throw FormatError("truncated config block", pos_);
        std::string s(b_.begin() + static_cast<std::ptrdiff_t>(pos_), b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return s;
    }

private:
    const std::vector<std::uint8_t>& b_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(Network& net) {
    std::vector<std::uint8_t> out;
    for (char c : kMagic) out.push_back(static_cast<std::uint8_t>(c));
    put(out, kVersion, 4);
    const std::string cfg = net.config().to_text();
    put(out, cfg.size(), 4);
    out.insert(out.end(), cfg.begin(), cfg.end());
    put(out, net.layer_count(), 4);
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        Layer& l = net.layer(i);
        const LayerSpec& s = l.spec();
        put(out, static_cast<std::uint8_t>(s.kind), 1);
        put(out, static_cast<std::uint8_t>(s.activation), 1);
        put(out, 0, 2);
        for (int v : {s.kh, s.kw, s.sh, s.sw, s.cin, s.cout}) put(out, static_cast<std::uint32_t>(v), 4);
        put(out, std::bit_cast<std::uint64_t>(s.rate), 8);
        put(out, l.param_count(), 8);
    }
    for (const auto& p : net.parameters())
        for (std::size_t i = 0; i < p.size; ++i) put(out, std::bit_cast<std::uint64_t>(p.value[i]), 8);
    return out;
}

Network deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    Cursor c(bytes);
    for (char m : kMagic)
        if (c.get(1) != static_cast<std::uint8_t>(m)) throw FormatError("bad checkpoint magic", c.pos() - 1);
    if (c.get(4) != kVersion) throw FormatError("unsupported checkpoint version", 4);
    const auto cfg_len = c.get(4);
    const std::size_t cfg_at = c.pos();
    ModelConfig cfg;
    try {
        cfg = ModelConfig::from_text(c.text(cfg_len));
    } catch (const ConfigError& e) {
        throw FormatError(std::string("bad config block: ") + e.what(), cfg_at);
    }
    const std::size_t table_at = c.pos();
    const auto count = c.get(4);
    std::vector<LayerSpec> specs;
    std::vector<std::uint64_t> sizes;
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::size_t at = c.pos();
        LayerSpec s;
        const auto kind = c.get(1);
        const auto act = c.get(1);
        if (kind > static_cast<std::uint64_t>(LayerKind::softmax) || act > static_cast<std::uint64_t>(Activation::relu))
            throw FormatError("bad layer entry", at);
        s.kind = static_cast<LayerKind>(kind);
        s.activation = static_cast<Activation>(act);
        c.get(2);
        s.kh = static_cast<int>(c.get(4));
        s.kw = static_cast<int>(c.get(4));
        s.sh = static_cast<int>(c.get(4));
        s.sw = static_cast<int>(c.get(4));
        s.cin = static_cast<int>(c.get(4));
        s.cout = static_cast<int>(c.get(4));
        s.rate = std::bit_cast<double>(c.get(8));
        sizes.push_back(c.get(8));
        specs.push_back(s);
    }
    Network net = [&] {
        try {
            return Network(cfg, specs);
        } catch (const ConfigError& e) {
            throw FormatError(std::string("layer table rejected: ") + e.what(), table_at);
        }
    }();
    for (std::size_t i = 0; i < net.layer_count(); ++i)
        if (net.layer(i).param_count() != sizes[i]) throw FormatError("parameter count mismatch", table_at);
    for (auto& p : net.parameters())
        for (std::size_t i = 0; i < p.size; ++i) p.value[i] = std::bit_cast<double>(c.get(8));
    if (c.pos() != bytes.size()) throw FormatError("trailing bytes in checkpoint", c.pos());
    return net;
}

void save_checkpoint(Network& net, const std::string& path) {
    const auto bytes = serialize_checkpoint(net);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + path);
}

Network load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace qtopo::nn
