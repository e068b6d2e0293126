#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "qtopo/spin_models.hpp"

namespace qtopo {

using Complex = std::complex<double>;

struct Spinor {
    Complex alpha;
    Complex beta;
};

struct BandPair {
    Spinor upper;  // eigenvalue +|h|
    Spinor lower;  // eigenvalue -|h|
};

// Gauge-fixed eigenvectors of h . sigma. For h3 >= 0 the first component of
// the upper state is real, for h3 < 0 its second component is real. At
// h1 = h2 = 0 this gives lower = (0, 1) when h3 > 0 and upper = (0, 1) when
// h3 < 0.
BandPair eigenstates(const Vec3& h);

constexpr Quaternion to_quaternion(const Spinor& s) {
    return {s.alpha.real(), s.alpha.imag(), s.beta.real(), s.beta.imag()};
}

struct FMap {
    int length = 0;
    std::vector<double> values;  // row-major, (ip, jp) at ip * L + jp
    double max_residue = 0.0;    // largest |vector part| of the quaternion sum
    std::string family = "chern";
    int c = 0;
    double m = 0.0;
    double noise_sd = 0.0;
    std::uint64_t seed = 0;

    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * length + j]; }
    double max_abs() const;
};

inline constexpr double kResidueLimit = 1e-9;

// Per-site quaternion fields of the two bands.
struct BandQuaternions {
    int length = 0;
    std::vector<Quaternion> upper;
    std::vector<Quaternion> lower;
};
BandQuaternions band_quaternions(const HField& h);

// F(p) = Re sum_k [q+*(k) q+(p-k) - q-*(k) q-(p-k)]. The lattice length must
// be even so that p - k lands on the grid. The full quaternion sum is formed
// through FFT convolutions; a vector part above 1e-9 raises ConsistencyError.
FMap f_map(const HField& h);
// Same map by the direct O(L^4) sum.
FMap f_map_direct(const HField& h);
// Same sum with the pure quaternion (0, nx, ny, nz) and no lower band.
FMap f_map_pure_spin(const SpinTexture& t);
FMap f_map_pure_spin_direct(const SpinTexture& t);
// Re sum_k [<u+(k)|u+(p-k)> - <u-(k)|u-(p-k)>] from complex spinors.
FMap spinor_correlation(const HField& h);

// Adds N(0, sd) to every component at every site. Draws are repeated with
// the next substream while any |h| < 1e-9, up to 100 times.
HField add_h_noise(const HField& h, double sd, std::uint64_t seed);

void write_fmap_csv(const FMap& f, const std::string& path);
// 8-bit binary PGM with min-max scaling. A flat map (range <= 1e-9) is
// written as uniform 128.
void write_fmap_pgm(const FMap& f, const std::string& path);

}  // namespace qtopo
