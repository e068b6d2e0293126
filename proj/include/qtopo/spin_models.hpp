#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "qtopo/quaternion.hpp"

namespace qtopo {

inline constexpr int kDefaultLength = 40;
inline constexpr double kGapThreshold = 1e-9;

enum class Family : std::uint8_t {
    chern = 0,
    vortex_yz = 1,
    vortex_xz = 2,
    vortex_xy = 3,
    helical = 4,
    conical = 5,
    ferromagnet = 6,
    flip_z = 7,
    swap_yz = 8,
};

std::string_view family_name(Family f);
Family family_from_tag(std::uint8_t tag);

enum class VortexPlane { yz, xz, xy };

// Grid momentum k_i = -pi + 2 pi (i + 1) / L for 0-based i.
double momentum(int index, int length);

// Vector field before normalization. Site (i, j) has kx = k_i, ky = k_j and
// is stored at i * L + j.
struct HField {
    int length = 0;
    std::vector<Vec3> h;

    const Vec3& at(int i, int j) const { return h[static_cast<std::size_t>(i) * length + j]; }
    Vec3& at(int i, int j) { return h[static_cast<std::size_t>(i) * length + j]; }
    double min_norm() const;
};

struct AugmentRecord {
    bool translated = false;
    bool rotated = false;
    bool noised = false;
    int shift_x = 0;
    int shift_y = 0;
    Quaternion rotation = kOne;
    std::uint64_t seed = 0;
    int noise_attempts = 0;
    std::vector<int> noise_sites;
};

struct SpinTexture {
    int length = 0;
    std::vector<Vec3> spins;
    Family family = Family::chern;
    int c = 0;
    double m = 0.0;
    int label = 0;
    AugmentRecord augmentation;

    const Vec3& at(int i, int j) const { return spins[static_cast<std::size_t>(i) * length + j]; }
    Vec3& at(int i, int j) { return spins[static_cast<std::size_t>(i) * length + j]; }
};

Vec3 h_field(int c, double m, double kx, double ky);

// Expected Chern number of the continuum model, sgn(m) c for 0 < |m| < 2.
int model_chern(int c, double m);

HField chern_hfield(int c, double m, int length = kDefaultLength);
// The xy vortex is sampled on a grid shifted by half a cell, since on the
// plain grid it vanishes at the four high-symmetry points.
HField vortex_hfield(VortexPlane plane, int c, double m, int length = kDefaultLength);

// Normalizes h. Throws GapClosedError if any |h| < 1e-9.
std::vector<Vec3> normalize_field(const HField& h);

SpinTexture texture(int c, double m, int length = kDefaultLength);
SpinTexture vortex_texture(VortexPlane plane, int c, double m, int length = kDefaultLength);
SpinTexture helical_conical(double epsilon, int length = kDefaultLength);
SpinTexture fm_texture(int s, int length = kDefaultLength);

// Componentwise transforms; labels are recomputed with the Chern oracle.
HField flip_z(const HField& h);
HField swap_yz(const HField& h);
SpinTexture flip_z(const SpinTexture& t);
SpinTexture swap_yz(const SpinTexture& t);

// Uniformly distributed unit quaternion from four standard normals.
Quaternion random_rotation(std::uint64_t seed);

struct AugmentOptions {
    bool translate = true;
    bool rotate = true;
    bool noise = true;
    int noise_sites = 30;
    double noise_sd = 0.1 * 3.14159265358979323846;
    // Redraw the noise when it changes the oracle label.
    bool preserve_label = true;
    int max_attempts = 100;
};

SpinTexture translate(const SpinTexture& t, int shift_x, int shift_y);
SpinTexture rotate(const SpinTexture& t, const Quaternion& q);
SpinTexture augment(const SpinTexture& t, std::uint64_t seed, const AugmentOptions& opts = {});

}  // namespace qtopo
