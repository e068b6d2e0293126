#include "qtopo/eigenstate.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>

#include "qtopo/rng.hpp"

namespace qtopo {

namespace {

using CQuat = BasicQuaternion<Complex>;

int offset_for(int length) {
    if (length < 2 || length % 2 != 0) throw DomainError("F map needs an even lattice length");
    return length / 2 - 1;
}

// Index of p - k on the grid.
int diff_index(int ip, int ik, int length, int offset) {
    return ((ip - ik + offset) % length + length) % length;
}

struct FftBuffer {
    explicit FftBuffer(std::size_t n)
        : data(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n))) {
        if (!data) throw std::bad_alloc();
    }
    ~FftBuffer() { fftw_free(data); }
    FftBuffer(const FftBuffer&) = delete;
    FftBuffer& operator=(const FftBuffer&) = delete;
    fftw_complex* data;
};

struct PlanPair {
    fftw_plan forward;
    fftw_plan backward;
};

// FFTW planning is not thread safe; executing a plan on new arrays is.
PlanPair plans_for(int length) {
    static std::mutex mutex;
    static std::map<int, PlanPair> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(length);
    if (it != cache.end()) return it->second;
    FftBuffer a(static_cast<std::size_t>(length) * length);
    FftBuffer b(static_cast<std::size_t>(length) * length);
    PlanPair p{fftw_plan_dft_2d(length, length, a.data, b.data, FFTW_FORWARD, FFTW_ESTIMATE),
               fftw_plan_dft_2d(length, length, a.data, b.data, FFTW_BACKWARD, FFTW_ESTIMATE)};
    cache.emplace(length, p);
    return p;
}

// Spectra of the four components of a quaternion field.
std::array<std::vector<Complex>, 4> spectra(const std::vector<Quaternion>& q, int length,
                                            const PlanPair& plans) {
    const std::size_t n = q.size();
    FftBuffer in(n), out(n);
    std::array<std::vector<Complex>, 4> result;
    for (int comp = 0; comp < 4; ++comp) {
        for (std::size_t s = 0; s < n; ++s) {
            const double v = comp == 0 ? q[s].r : comp == 1 ? q[s].a : comp == 2 ? q[s].b : q[s].c;
            in.data[s][0] = v;
            in.data[s][1] = 0.0;
        }
        fftw_execute_dft(plans.forward, in.data, out.data);
        result[comp].resize(n);
        for (std::size_t s = 0; s < n; ++s) result[comp][s] = Complex(out.data[s][0], out.data[s][1]);
    }
    (void)length;
    return result;
}

// Spectrum of sum_k conj(q(k)) q(d - k), a quaternion with complex entries.
std::vector<CQuat> autocorrelation_spectrum(const std::vector<Quaternion>& q, int length,
                                            const PlanPair& plans) {
    const auto s = spectra(q, length, plans);
    std::vector<CQuat> out(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
        const CQuat x{s[0][i], -s[1][i], -s[2][i], -s[3][i]};
        const CQuat y{s[0][i], s[1][i], s[2][i], s[3][i]};
        out[i] = qmul(x, y);
    }
    return out;
}

FMap assemble(const std::vector<CQuat>& spectrum, int length, const PlanPair& plans) {
    const std::size_t n = spectrum.size();
    const int offset = offset_for(length);
    const double scale = 1.0 / static_cast<double>(n);
    std::array<std::vector<double>, 4> comps;
    FftBuffer in(n), out(n);
    for (int comp = 0; comp < 4; ++comp) {
        for (std::size_t s = 0; s < n; ++s) {
            const CQuat& q = spectrum[s];
            const Complex v = comp == 0 ? q.r : comp == 1 ? q.a : comp == 2 ? q.b : q.c;
            in.data[s][0] = v.real();
            in.data[s][1] = v.imag();
        }
        fftw_execute_dft(plans.backward, in.data, out.data);
        comps[comp].resize(n);
        for (std::size_t s = 0; s < n; ++s) comps[comp][s] = out.data[s][0] * scale;
    }
    FMap f;
    f.length = length;
    f.values.resize(n);
    for (int ip = 0; ip < length; ++ip) {
        for (int jp = 0; jp < length; ++jp) {
            const std::size_t src =
                static_cast<std::size_t>((ip + offset) % length) * length + (jp + offset) % length;
            const std::size_t dst = static_cast<std::size_t>(ip) * length + jp;
            f.values[dst] = comps[0][src];
            const double vec = std::sqrt(comps[1][src] * comps[1][src] +
                                         comps[2][src] * comps[2][src] +
                                         comps[3][src] * comps[3][src]);
            f.max_residue = std::max(f.max_residue, vec);
        }
    }
    return f;
}

void check_residue(const FMap& f) {
    if (!(f.max_residue < kResidueLimit))
        throw ConsistencyError("vector part of the F sum is " + std::to_string(f.max_residue));
}

std::vector<Quaternion> pure_field(const SpinTexture& t) {
    std::vector<Quaternion> q(t.spins.size());
    for (std::size_t s = 0; s < q.size(); ++s) q[s] = {0.0, t.spins[s][0], t.spins[s][1], t.spins[s][2]};
    return q;
}

FMap direct_sum(const std::vector<Quaternion>& upper, const std::vector<Quaternion>* lower,
                int length) {
    const int offset = offset_for(length);
    FMap f;
    f.length = length;
    f.values.resize(upper.size());
    for (int ip = 0; ip < length; ++ip) {
        for (int jp = 0; jp < length; ++jp) {
            Quaternion sum{};
            for (int ik = 0; ik < length; ++ik) {
                const int i2 = diff_index(ip, ik, length, offset);
                for (int jk = 0; jk < length; ++jk) {
                    const int j2 = diff_index(jp, jk, length, offset);
                    const std::size_t k = static_cast<std::size_t>(ik) * length + jk;
                    const std::size_t pk = static_cast<std::size_t>(i2) * length + j2;
                    sum = sum + qmul(conj(upper[k]), upper[pk]);
                    if (lower) sum = sum - qmul(conj((*lower)[k]), (*lower)[pk]);
                }
            }
            f.values[static_cast<std::size_t>(ip) * length + jp] = sum.r;
            f.max_residue = std::max(f.max_residue, std::sqrt(sum.a * sum.a + sum.b * sum.b + sum.c * sum.c));
        }
    }
    return f;
}

}  // namespace

BandPair eigenstates(const Vec3& h) {
    const double h1 = h[0], h2 = h[1], h3 = h[2];
    const double n = std::sqrt(h1 * h1 + h2 * h2 + h3 * h3);
    if (!(n >= kGapThreshold)) throw GapClosedError("eigenstates need |h| > 0");
    BandPair out;
    if (h3 >= 0.0) {
        const double s = 1.0 / std::sqrt(2.0 * n * (n + h3));
        out.upper = {Complex((n + h3) * s, 0.0), Complex(h1 * s, h2 * s)};
        out.lower = {Complex(-h1 * s, h2 * s), Complex((n + h3) * s, 0.0)};
    } else {
        const double s = 1.0 / std::sqrt(2.0 * n * (n - h3));
        out.upper = {Complex(h1 * s, -h2 * s), Complex((n - h3) * s, 0.0)};
        out.lower = {Complex((n - h3) * s, 0.0), Complex(-h1 * s, -h2 * s)};
    }
    return out;
}

double FMap::max_abs() const {
    double best = 0.0;
    for (double v : values) best = std::max(best, std::fabs(v));
    return best;
}

BandQuaternions band_quaternions(const HField& h) {
    BandQuaternions b;
    b.length = h.length;
    b.upper.resize(h.h.size());
    b.lower.resize(h.h.size());
    for (std::size_t s = 0; s < h.h.size(); ++s) {
        const BandPair p = eigenstates(h.h[s]);
        b.upper[s] = to_quaternion(p.upper);
        b.lower[s] = to_quaternion(p.lower);
    }
    return b;
}

FMap f_map(const HField& h) {
    offset_for(h.length);
    const BandQuaternions b = band_quaternions(h);
    const PlanPair plans = plans_for(h.length);
    std::vector<CQuat> spec = autocorrelation_spectrum(b.upper, h.length, plans);
    const std::vector<CQuat> low = autocorrelation_spectrum(b.lower, h.length, plans);
    for (std::size_t i = 0; i < spec.size(); ++i) spec[i] = spec[i] - low[i];
    FMap f = assemble(spec, h.length, plans);
    check_residue(f);
    return f;
}

FMap f_map_direct(const HField& h) {
    const BandQuaternions b = band_quaternions(h);
    FMap f = direct_sum(b.upper, &b.lower, h.length);
    check_residue(f);
    return f;
}

FMap f_map_pure_spin(const SpinTexture& t) {
    offset_for(t.length);
    const PlanPair plans = plans_for(t.length);
    FMap f = assemble(autocorrelation_spectrum(pure_field(t), t.length, plans), t.length, plans);
    check_residue(f);
    f.family = std::string(family_name(t.family));
    f.c = t.c;
    f.m = t.m;
    return f;
}

FMap f_map_pure_spin_direct(const SpinTexture& t) {
    FMap f = direct_sum(pure_field(t), nullptr, t.length);
    check_residue(f);
    f.family = std::string(family_name(t.family));
    f.c = t.c;
    f.m = t.m;
    return f;
}

FMap spinor_correlation(const HField& h) {
    const int L = h.length;
    const int offset = offset_for(L);
    std::vector<BandPair> states(h.h.size());
    for (std::size_t s = 0; s < h.h.size(); ++s) states[s] = eigenstates(h.h[s]);
    const auto braket = [](const Spinor& u, const Spinor& v) {
        return std::conj(u.alpha) * v.alpha + std::conj(u.beta) * v.beta;
    };
    FMap f;
    f.length = L;
    f.values.resize(h.h.size());
    for (int ip = 0; ip < L; ++ip) {
        for (int jp = 0; jp < L; ++jp) {
            Complex sum = 0.0;
            for (int ik = 0; ik < L; ++ik) {
                const int i2 = diff_index(ip, ik, L, offset);
                for (int jk = 0; jk < L; ++jk) {
                    const int j2 = diff_index(jp, jk, L, offset);
                    const BandPair& a = states[static_cast<std::size_t>(ik) * L + jk];
                    const BandPair& b = states[static_cast<std::size_t>(i2) * L + j2];
                    sum += braket(a.upper, b.upper) - braket(a.lower, b.lower);
                }
            }
            f.values[static_cast<std::size_t>(ip) * L + jp] = sum.real();
        }
    }
    return f;
}

HField add_h_noise(const HField& h, double sd, std::uint64_t seed) {
    if (sd == 0.0) {
        if (!(h.min_norm() >= kGapThreshold)) throw GapClosedError("field is gapless");
        return h;
    }
    constexpr int kAttempts = 100;
    for (int attempt = 0; attempt < kAttempts; ++attempt) {
        Rng rng(derive_seed(seed, Stream::h_noise, static_cast<std::uint64_t>(attempt)));
        HField out = h;
        for (Vec3& v : out.h)
            for (double& x : v) x += sd * rng.normal();
        if (out.min_norm() >= kGapThreshold) return out;
    }
    throw GapClosedError("h noise closed the gap in every attempt");
}

void write_fmap_csv(const FMap& f, const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "w");
    if (!fp) throw Error("cannot open " + path);
    for (int i = 0; i < f.length; ++i) {
        for (int j = 0; j < f.length; ++j)
            std::fprintf(fp, j + 1 < f.length ? "%.17g," : "%.17g\n", f.at(i, j));
    }
    if (std::fclose(fp) != 0) throw Error("write failed for " + path);
}

void write_fmap_pgm(const FMap& f, const std::string& path) {
    const auto [lo_it, hi_it] = std::minmax_element(f.values.begin(), f.values.end());
    const double lo = f.values.empty() ? 0.0 : *lo_it;
    const double hi = f.values.empty() ? 0.0 : *hi_it;
    const bool flat = !(hi - lo > kResidueLimit);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path);
    char comment[256];
    if (flat)
        std::snprintf(comment, sizeof comment, "# flat min=%.17g max=%.17g pixel=128\n", lo, hi);
    else
        std::snprintf(comment, sizeof comment,
                      "# min=%.17g max=%.17g pixel=round(255*(F-min)/(max-min))\n", lo, hi);
    out << "P5\n" << comment << f.length << ' ' << f.length << "\n255\n";
    std::vector<unsigned char> pixels(f.values.size());
    for (std::size_t s = 0; s < f.values.size(); ++s)
        pixels[s] = flat ? 128
                         : static_cast<unsigned char>(std::lround(255.0 * (f.values[s] - lo) / (hi - lo)));
    out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (!out) throw Error("write failed for " + path);
}

}  // namespace qtopo
