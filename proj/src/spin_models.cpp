#include "qtopo/spin_models.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <string>

#include "qtopo/chern.hpp"
#include "qtopo/rng.hpp"

namespace qtopo {

namespace {

void check_length(int length) {
    if (length < 2) throw DomainError("lattice length must be at least 2");
}

double norm3(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

std::complex<double> winding(int c, double kx, double ky) {
    const std::complex<double> z(std::sin(kx), -std::sin(ky));
    std::complex<double> out(1.0, 0.0);
    for (int p = 0; p < c; ++p) out *= z;
    return out;
}

SpinTexture from_field(const HField& h, Family family, int c, double m, int label) {
    SpinTexture t;
    t.length = h.length;
    t.spins = normalize_field(h);
    t.family = family;
    t.c = c;
    t.m = m;
    t.label = label;
    return t;
}

template <class F>
HField make_field(int length, F&& f) {
    check_length(length);
    HField out;
    out.length = length;
    out.h.resize(static_cast<std::size_t>(length) * length);
    for (int i = 0; i < length; ++i)
        for (int j = 0; j < length; ++j) out.at(i, j) = f(momentum(i, length), momentum(j, length));
    return out;
}

}  // namespace

std::string_view family_name(Family f) {
    switch (f) {
        case Family::chern: return "chern";
        case Family::vortex_yz: return "vortex_yz";
        case Family::vortex_xz: return "vortex_xz";
        case Family::vortex_xy: return "vortex_xy";
        case Family::helical: return "helical";
        case Family::conical: return "conical";
        case Family::ferromagnet: return "fm";
        case Family::flip_z: return "flip_z";
        case Family::swap_yz: return "swap_yz";
    }
    return "unknown";
}

Family family_from_tag(std::uint8_t tag) {
    if (tag > static_cast<std::uint8_t>(Family::swap_yz))
        throw DomainError("unknown family tag " + std::to_string(tag));
    return static_cast<Family>(tag);
}

double momentum(int index, int length) {
    return -std::numbers::pi + 2.0 * std::numbers::pi * (index + 1) / length;
}

double HField::min_norm() const {
    double best = INFINITY;
    for (const Vec3& v : h) best = std::min(best, norm3(v));
    return best;
}

Vec3 h_field(int c, double m, double kx, double ky) {
    const std::complex<double> z = winding(c, kx, ky);
    return {z.real(), -z.imag(), std::cos(kx) + std::cos(ky) + m};
}

int model_chern(int c, double m) {
    const double a = std::fabs(m);
    if (a == 0.0 || a == 2.0) throw DomainError("model is gapless at |m| = 0 or 2");
    if (a > 2.0) return 0;
    return m > 0 ? c : -c;
}

HField chern_hfield(int c, double m, int length) {
    if (c < 1) throw DomainError("vorticity c must be positive");
    return make_field(length, [&](double kx, double ky) { return h_field(c, m, kx, ky); });
}

HField vortex_hfield(VortexPlane plane, int c, double m, int length) {
    if (c < 1) throw DomainError("vorticity c must be positive");
    switch (plane) {
        case VortexPlane::yz:
            return make_field(length, [&](double kx, double ky) {
                Vec3 v = h_field(c, m, kx, ky);
                v[0] = 0.0;
                return v;
            });
        case VortexPlane::xz:
            return make_field(length, [&](double kx, double ky) {
                Vec3 v = h_field(c, m, kx, ky);
                v[1] = 0.0;
                return v;
            });
        case VortexPlane::xy: {
            const double half = std::numbers::pi / length;
            return make_field(length, [&](double kx, double ky) {
                const std::complex<double> z = winding(c, kx + half, ky + half);
                return Vec3{z.real(), -z.imag(), 0.0};
            });
        }
    }
    throw DomainError("unknown vortex plane");
}

std::vector<Vec3> normalize_field(const HField& h) {
    std::vector<Vec3> out(h.h.size());
    for (std::size_t s = 0; s < h.h.size(); ++s) {
        const Vec3& v = h.h[s];
        const double n = norm3(v);
        if (!(n >= kGapThreshold))
            throw GapClosedError("|h| = " + std::to_string(n) + " at site (" +
                                 std::to_string(s / h.length) + ", " +
                                 std::to_string(s % h.length) + ")");
        out[s] = {v[0] / n, v[1] / n, v[2] / n};
    }
    return out;
}

SpinTexture texture(int c, double m, int length) {
    // Normalizing first reports a closed gap before the label is looked up.
    SpinTexture t = from_field(chern_hfield(c, m, length), Family::chern, c, m, 0);
    t.label = model_chern(c, m);
    return t;
}

SpinTexture vortex_texture(VortexPlane plane, int c, double m, int length) {
    const Family f = plane == VortexPlane::yz   ? Family::vortex_yz
                     : plane == VortexPlane::xz ? Family::vortex_xz
                                                : Family::vortex_xy;
    // The xy vortex does not depend on m.
    const double mm = plane == VortexPlane::xy ? 0.0 : m;
    return from_field(vortex_hfield(plane, c, mm, length), f, c, mm, 0);
}

SpinTexture helical_conical(double epsilon, int length) {
    if (!(std::fabs(epsilon) < 1.0)) throw DomainError("|epsilon| must be below 1");
    const double rho = std::sqrt(1.0 - epsilon * epsilon);
    HField h = make_field(length, [&](double kx, double ky) {
        return Vec3{rho * std::cos(kx + ky), rho * std::sin(kx + ky), epsilon};
    });
    SpinTexture t;
    t.length = length;
    t.spins = std::move(h.h);
    t.family = epsilon == 0.0 ? Family::helical : Family::conical;
    t.m = epsilon;
    return t;
}

SpinTexture fm_texture(int s, int length) {
    if (s != 1 && s != -1) throw DomainError("ferromagnet sign must be +1 or -1");
    check_length(length);
    SpinTexture t;
    t.length = length;
    t.spins.assign(static_cast<std::size_t>(length) * length, Vec3{0.0, 0.0, static_cast<double>(s)});
    t.family = Family::ferromagnet;
    t.m = s;
    return t;
}

HField flip_z(const HField& h) {
    HField out = h;
    for (Vec3& v : out.h) v[2] = -v[2];
    return out;
}

HField swap_yz(const HField& h) {
    HField out = h;
    for (Vec3& v : out.h) std::swap(v[1], v[2]);
    return out;
}

SpinTexture flip_z(const SpinTexture& t) {
    SpinTexture out = t;
    for (Vec3& v : out.spins) v[2] = -v[2];
    if (t.family == Family::chern) out.family = Family::flip_z;
    else if (t.family == Family::flip_z) out.family = Family::chern;
    out.label = chern_number(out).chern;
    return out;
}

SpinTexture swap_yz(const SpinTexture& t) {
    SpinTexture out = t;
    for (Vec3& v : out.spins) std::swap(v[1], v[2]);
    if (t.family == Family::chern) out.family = Family::swap_yz;
    else if (t.family == Family::swap_yz) out.family = Family::chern;
    out.label = chern_number(out).chern;
    return out;
}

Quaternion random_rotation(std::uint64_t seed) {
    Rng rng(seed);
    for (;;) {
        const Quaternion q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        const double n = norm(q);
        if (n > 1e-12) return (1.0 / n) * q;
    }
}

SpinTexture translate(const SpinTexture& t, int shift_x, int shift_y) {
    const int L = t.length;
    const int sx = ((shift_x % L) + L) % L;
    const int sy = ((shift_y % L) + L) % L;
    SpinTexture out = t;
    for (int i = 0; i < L; ++i)
        for (int j = 0; j < L; ++j) out.at(i, j) = t.at((i + sx) % L, (j + sy) % L);
    return out;
}

SpinTexture rotate(const SpinTexture& t, const Quaternion& q) {
    SpinTexture out = t;
    for (Vec3& v : out.spins) {
        v = qtopo::rotate(q, v);
        const double n = norm3(v);
        v = {v[0] / n, v[1] / n, v[2] / n};
    }
    return out;
}

SpinTexture augment(const SpinTexture& t, std::uint64_t seed, const AugmentOptions& opts) {
    SpinTexture out = t;
    AugmentRecord& rec = out.augmentation;
    rec.seed = seed;
    const int L = t.length;
    if (opts.translate) {
        Rng rng(derive_seed(seed, Stream::translate));
        rec.shift_x = static_cast<int>(rng.below(L));
        rec.shift_y = static_cast<int>(rng.below(L));
        rec.translated = true;
        out = translate(out, rec.shift_x, rec.shift_y);
        out.augmentation = rec;
    }
    if (opts.rotate) {
        rec.rotation = random_rotation(derive_seed(seed, Stream::rotate));
        rec.rotated = true;
        out = rotate(out, rec.rotation);
        out.augmentation = rec;
    }
    if (!opts.noise) return out;

    const int sites = L * L;
    if (opts.noise_sites > sites) throw DomainError("more noise sites than lattice sites");
    std::vector<int> order(sites);
    for (int attempt = 0; attempt < opts.max_attempts; ++attempt) {
        Rng rng(derive_seed(seed, Stream::noise, static_cast<std::uint64_t>(attempt)));
        std::iota(order.begin(), order.end(), 0);
        // Partial Fisher-Yates picks distinct sites.
        for (int s = 0; s < opts.noise_sites; ++s) {
            const int pick = s + static_cast<int>(rng.below(static_cast<std::uint64_t>(sites - s)));
            std::swap(order[s], order[pick]);
        }
        std::vector<int> chosen(order.begin(), order.begin() + opts.noise_sites);
        std::sort(chosen.begin(), chosen.end());

        SpinTexture noisy = out;
        bool closed = false;
        for (int s : chosen) {
            Vec3& v = noisy.spins[s];
            for (double& x : v) x += opts.noise_sd * rng.normal();
            const double n = norm3(v);
            if (!(n >= kGapThreshold)) {
                closed = true;
                break;
            }
            v = {v[0] / n, v[1] / n, v[2] / n};
        }
        if (closed) continue;
        if (opts.preserve_label) {
            const ChernResult r = chern_sum(noisy.spins, L);
            if (r.residual > kResidualLimit || r.chern != t.label) continue;
        }
        noisy.augmentation = rec;
        noisy.augmentation.noised = true;
        noisy.augmentation.noise_attempts = attempt + 1;
        noisy.augmentation.noise_sites = std::move(chosen);
        return noisy;
    }
    throw GapClosedError("noise augmentation failed after " + std::to_string(opts.max_attempts) +
                         " attempts");
}

}  // namespace qtopo
