#include "qtopo/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "qtopo/chern.hpp"
#include "qtopo/parallel.hpp"
#include "qtopo/rng.hpp"

namespace qtopo {

namespace {

constexpr char kMagic[4] = {'Q', 'D', 'S', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kLayoutSpin3 = 0;
constexpr std::size_t kHeaderBytes = 20;
constexpr std::size_t kRecordMetaBytes = 1 + 1 + 8 + 8 + 8;

struct Recipe {
    Family family;
    int c;
    double m_lo;
    double m_hi;
    int label;
};

class Writer {
public:
    explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

private:
    std::vector<std::uint8_t>& out_;
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}
    std::size_t offset() const { return pos_; }
    void need(std::size_t n, const char* what) const {
        if (in_.size() - pos_ < n) throw FormatError(std::string("truncated ") + what, pos_);
    }
    std::uint8_t u8() { return in_[pos_++]; }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }

private:
    const std::vector<std::uint8_t>& in_;
    std::size_t pos_ = 0;
};

bool near_transition(double m) {
    const double a = std::fabs(m);
    return a <= 0.05 || std::fabs(a - 2.0) <= 0.05;
}

// Labels the stored (quantized) texture with the oracle and checks it
// against the generator's label.
void finalize(LabeledSample& s) {
    quantize(s.texture);
    const ChernResult r = chern_sum(s.texture.spins, s.texture.length);
    if (r.residual > kResidualLimit || r.chern != s.texture.label)
        throw ConsistencyError(std::string("oracle label ") + std::to_string(r.chern) +
                               " differs from generated label " + std::to_string(s.texture.label) +
                               " for family " + std::string(family_name(s.texture.family)));
}

SpinTexture vortex_with_open_gap(VortexPlane plane, int c, Rng& rng, int length) {
    for (int attempt = 0; attempt < 100; ++attempt) {
        const double m = rng.uniform(-3.0, 3.0);
        try {
            return vortex_texture(plane, c, m, length);
        } catch (const GapClosedError&) {
        }
    }
    throw GapClosedError("no gapped vortex found in 100 draws");
}

}  // namespace

int class_index(int chern) {
    if (chern < -4 || chern > 4) throw DomainError("Chern number outside -4..4");
    return chern + 4;
}

int class_chern(int index) {
    if (index < 0 || index >= kClassCount) throw DomainError("class index outside 0..8");
    return index - 4;
}

std::array<int, kClassCount> Dataset::class_counts() const {
    std::array<int, kClassCount> counts{};
    for (const auto& s : samples) ++counts[class_index(s.texture.label)];
    return counts;
}

void quantize(SpinTexture& t) {
    for (Vec3& v : t.spins)
        for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

Dataset build_corpus(const CorpusRecipe& recipe, std::uint64_t seed, std::uint64_t stream,
                     const std::string& name, int length) {
    std::vector<Recipe> plan;
    for (int c = 1; c <= 4; ++c) {
        for (int i = 0; i < recipe.per_interval; ++i) plan.push_back({Family::chern, c, -1.9, -0.1, -c});
        for (int i = 0; i < recipe.per_interval; ++i) plan.push_back({Family::chern, c, 0.1, 1.9, c});
        for (int i = 0; i < recipe.per_trivial; ++i) plan.push_back({Family::chern, c, -3.0, -3.0, 0});
        for (int i = 0; i < recipe.per_trivial; ++i) plan.push_back({Family::chern, c, 3.0, 3.0, 0});
    }
    for (int c = 1; c <= 4; ++c)
        for (Family f : {Family::vortex_yz, Family::vortex_xz, Family::vortex_xy})
            for (int i = 0; i < recipe.per_vortex; ++i) plan.push_back({f, c, -3.0, 3.0, 0});

    Dataset d;
    d.name = name;
    d.length = length;
    d.samples.resize(plan.size());
    parallel_for(plan.size(), [&](std::size_t i) {
        const Recipe& r = plan[i];
        const std::uint64_t s = derive_seed(seed, stream, i);
        Rng rng(derive_seed(s, Stream::parameter));
        SpinTexture t;
        AugmentOptions opts;
        if (r.family == Family::chern) {
            const double m = r.m_lo == r.m_hi ? r.m_lo : rng.uniform(r.m_lo, r.m_hi);
            t = texture(r.c, m, length);
        } else {
            const VortexPlane plane = r.family == Family::vortex_yz   ? VortexPlane::yz
                                      : r.family == Family::vortex_xz ? VortexPlane::xz
                                                                      : VortexPlane::xy;
            t = vortex_with_open_gap(plane, r.c, rng, length);
            opts.noise = false;
        }
        LabeledSample& out = d.samples[i];
        out.texture = augment(t, s, opts);
        out.near_transition = r.family == Family::chern && near_transition(out.texture.m);
        finalize(out);
    });
    return d;
}

TrainingSplit split_validation(const Dataset& all, std::uint64_t seed, double fraction) {
    std::array<std::vector<std::size_t>, kClassCount> by_class;
    for (std::size_t i = 0; i < all.samples.size(); ++i)
        by_class[class_index(all.samples[i].texture.label)].push_back(i);
    std::vector<bool> in_validation(all.samples.size(), false);
    for (int k = 0; k < kClassCount; ++k) {
        auto& idx = by_class[k];
        Rng rng(derive_seed(seed, Stream::split, static_cast<std::uint64_t>(k)));
        for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
        const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
        for (std::size_t i = 0; i < take; ++i) in_validation[idx[i]] = true;
    }
    TrainingSplit split;
    split.train.name = all.name + "_train";
    split.validation.name = all.name + "_validation";
    split.train.length = split.validation.length = all.length;
    for (std::size_t i = 0; i < all.samples.size(); ++i)
        (in_validation[i] ? split.validation : split.train).samples.push_back(all.samples[i]);
    return split;
}

TrainingSplit build_training(std::uint64_t seed, int length) {
    const Dataset all = build_corpus(kTrainingRecipe, seed, static_cast<std::uint64_t>(Stream::training),
                                     "training", length);
    TrainingSplit split = split_validation(all, seed);
    split.train.name = "train";
    split.validation.name = "validation";
    return split;
}

Dataset build_testing(std::uint64_t seed, int length) {
    return build_corpus(kTestingRecipe, seed, static_cast<std::uint64_t>(Stream::testing), "test", length);
}

std::vector<Dataset> build_prediction(std::uint64_t seed, int length) {
    const char* names[] = {"chern", "flip_z", "swap_yz", "helical", "conical", "fm"};
    std::vector<Dataset> sets(6);
    AugmentOptions opts;
    opts.noise = false;
    for (int cat = 0; cat < 6; ++cat) {
        Dataset& d = sets[cat];
        d.name = names[cat];
        d.length = length;
        d.samples.resize(kPredictionPerCategory);
        parallel_for(kPredictionPerCategory, [&](std::size_t i) {
            const std::uint64_t s = derive_seed(seed, Stream::prediction,
                                                static_cast<std::uint64_t>(cat) * 1000 + i);
            Rng rng(derive_seed(s, Stream::parameter));
            LabeledSample& out = d.samples[i];
            SpinTexture t;
            switch (cat) {
                case 0: {
                    const int c = 1 + static_cast<int>(i / 30);
                    const double m = -3.0 + 6.0 * static_cast<double>(i % 30) / 29.0;
                    t = texture(c, m, length);
                    const ChernResult r = chern_sum(t.spins, length);
                    t.label = r.chern;
                    out.ill_conditioned = r.residual > kResidualLimit;
                    out.near_transition = near_transition(m);
                    break;
                }
                case 1:
                case 2: {
                    const int c = 1 + static_cast<int>(i / 30);
                    const double m = (i % 30) < 15 ? -1.0 : 1.0;
                    t = cat == 1 ? flip_z(texture(c, m, length)) : swap_yz(texture(c, m, length));
                    break;
                }
                case 3:
                    t = helical_conical(0.0, length);
                    break;
                case 4: {
                    const double e = rng.uniform(0.05, 0.95);
                    t = helical_conical(rng.below(2) ? e : -e, length);
                    break;
                }
                default:
                    t = fm_texture(rng.below(2) ? 1 : -1, length);
                    break;
            }
            out.texture = augment(t, s, opts);
            if (!out.ill_conditioned) finalize(out);
            else quantize(out.texture);
        });
    }
    return sets;
}

std::vector<std::uint8_t> serialize(const Dataset& d) {
    const std::size_t sites = static_cast<std::size_t>(d.length) * d.length;
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderBytes + d.samples.size() * (kRecordMetaBytes + sites * 12));
    Writer w(out);
    for (char ch : kMagic) w.u8(static_cast<std::uint8_t>(ch));
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(d.samples.size()));
    w.u32(static_cast<std::uint32_t>(d.length));
    w.u32(kLayoutSpin3);
    for (const auto& s : d.samples) {
        const SpinTexture& t = s.texture;
        if (t.length != d.length || t.spins.size() != sites)
            throw ConfigError("sample lattice does not match dataset length");
        w.u8(static_cast<std::uint8_t>(static_cast<std::int8_t>(class_index(t.label))));
        w.u8(static_cast<std::uint8_t>(t.family));
        w.f64(static_cast<double>(t.c));
        w.f64(t.m);
        w.u64(t.augmentation.seed);
        for (const Vec3& v : t.spins)
            for (double x : v) {
                const float f = static_cast<float>(x);
                if (!std::isfinite(f)) throw NumericalError("non-finite spin component", -1);
                w.f32(f);
            }
    }
    return out;
}

Dataset deserialize(const std::vector<std::uint8_t>& bytes, const std::string& name) {
    Reader r(bytes);
    r.need(kHeaderBytes, "header");
    for (char ch : kMagic)
        if (r.u8() != static_cast<std::uint8_t>(ch)) throw FormatError("bad magic", r.offset() - 1);
    if (r.u32() != kVersion) throw FormatError("unsupported version", 4);
    const std::uint32_t count = r.u32();
    const std::uint32_t length = r.u32();
    if (length == 0 || length > 4096) throw FormatError("bad lattice length", 12);
    if (r.u32() != kLayoutSpin3) throw FormatError("unknown layout", 16);
    Dataset d;
    d.name = name;
    d.length = static_cast<int>(length);
    const std::size_t sites = static_cast<std::size_t>(length) * length;
    d.samples.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        r.need(kRecordMetaBytes + sites * 12, "sample record");
        const std::size_t start = r.offset();
        SpinTexture& t = d.samples[i].texture;
        const auto idx = static_cast<std::int8_t>(r.u8());
        if (idx < 0 || idx >= kClassCount) throw FormatError("label index out of range", start);
        t.label = class_chern(idx);
        try {
            t.family = family_from_tag(r.u8());
        } catch (const DomainError&) {
            throw FormatError("unknown family tag", start + 1);
        }
        const double c = r.f64();
        if (!std::isfinite(c) || c != std::floor(c)) throw FormatError("non-integer c", start + 2);
        t.c = static_cast<int>(c);
        t.m = r.f64();
        if (!std::isfinite(t.m)) throw FormatError("non-finite m", start + 10);
        t.augmentation.seed = r.u64();
        t.length = d.length;
        t.spins.resize(sites);
        for (Vec3& v : t.spins)
            for (double& x : v) {
                const std::size_t at = r.offset();
                const float f = r.f32();
                if (!std::isfinite(f)) throw FormatError("non-finite spin component", at);
                x = f;
            }
        d.samples[i].near_transition = t.family == Family::chern && near_transition(t.m);
    }
    if (r.offset() != bytes.size()) throw FormatError("trailing bytes", r.offset());
    return d;
}

void save(const Dataset& d, const std::string& path) {
    const std::vector<std::uint8_t> bytes = serialize(d);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + path);
}

Dataset load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::string name = path;
    const auto slash = name.find_last_of('/');
    if (slash != std::string::npos) name = name.substr(slash + 1);
    const auto dot = name.rfind('.');
    if (dot != std::string::npos) name = name.substr(0, dot);
    return deserialize(bytes, name);
}

void write_manifest(const std::vector<Dataset>& sets, const std::vector<std::string>& files,
                    std::uint64_t seed, const std::string& kind, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open " + path);
    out << "kind=" << kind << "\nseed=" << seed << "\nformat=QDS1\nformat_version=" << kVersion
        << "\nlayout=spin3\n";
    for (std::size_t i = 0; i < sets.size(); ++i) {
        const Dataset& d = sets[i];
        out << "\n[" << d.name << "]\nfile=" << (i < files.size() ? files[i] : "") << "\ncount=" << d.size()
            << "\nlength=" << d.length << "\n";
        const auto counts = d.class_counts();
        for (int k = 0; k < kClassCount; ++k) out << "class_" << class_chern(k) << '=' << counts[k] << '\n';
        std::array<int, 9> families{};
        for (const auto& s : d.samples) ++families[static_cast<int>(s.texture.family)];
        for (int f = 0; f < 9; ++f)
            if (families[f]) out << "family_" << family_name(static_cast<Family>(f)) << '=' << families[f] << '\n';
    }
    if (!out) throw Error("write failed for " + path);
}

}  // namespace qtopo
