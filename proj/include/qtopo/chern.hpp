#pragma once

#include <vector>

#include "qtopo/spin_models.hpp"

namespace qtopo {

inline constexpr double kResidualLimit = 0.05;

// Signed solid angle of the spherical triangle (a, b, c).
double solid_angle(const Vec3& a, const Vec3& b, const Vec3& c);

struct ChernResult {
    int chern = 0;
    double raw = 0.0;       // total solid angle / 4 pi
    double residual = 0.0;  // |raw - chern|
    int degenerate = 0;     // flat triangles with an antipodal pair, counted as zero area
    bool planar = false;    // all spins on one great circle; degree 0 without summing
};

// Plaquettes are walked k -> k+y -> k+x+y -> k+x and split into the
// triangles (1,2,3) and (1,3,4), with periodic wrap. Flat triangles
// contribute zero. Textures within 1e-6 rms of a great circle return 0
// directly.
ChernResult chern_sum(const std::vector<Vec3>& spins, int length);
// As chern_sum, but throws IllConditionedError when residual > 0.05.
ChernResult chern_number(const std::vector<Vec3>& spins, int length);
ChernResult chern_number(const SpinTexture& t);

// 2 min |h| over the grid.
double min_gap(const HField& h);

}  // namespace qtopo
