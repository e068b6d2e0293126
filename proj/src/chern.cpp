#include "qtopo/chern.hpp"

#include <cmath>
#include <numbers>
#include <span>
#include <string>

#include <Eigen/Eigenvalues>

namespace qtopo {

namespace {

constexpr double kDegenerate = 1e-12;
constexpr double kPlanar = 1e-12;

double dot3(const Vec3& x, const Vec3& y) { return x[0] * y[0] + x[1] * y[1] + x[2] * y[2]; }

Vec3 cross3(const Vec3& x, const Vec3& y) {
    return {x[1] * y[2] - x[2] * y[1], x[2] * y[0] - x[0] * y[2], x[0] * y[1] - x[1] * y[0]};
}

double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

// Lattice form: a flat triangle subtends no area, including the
// antipodal case that solid_angle rejects.
double lattice_angle(const Vec3& a, const Vec3& b, const Vec3& c, int& degenerate) {
    const double num = dot3(a, cross3(b, c));
    if (std::fabs(num) <= kDegenerate) {
        const double den = 1.0 + dot3(a, b) + dot3(b, c) + dot3(c, a);
        if (std::fabs(den) <= kDegenerate) ++degenerate;
        return 0.0;
    }
    return 2.0 * std::atan2(num, 1.0 + dot3(a, b) + dot3(b, c) + dot3(c, a));
}

// Mean squared distance of the spins from the best-fit plane through the
// origin: the smallest eigenvalue of the second-moment matrix.
double off_plane(const std::vector<Vec3>& spins) {
    Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
    for (const Vec3& v : spins) {
        const Eigen::Vector3d e(v[0], v[1], v[2]);
        m += e * e.transpose();
    }
    m /= static_cast<double>(spins.size());
    return Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(m, Eigen::EigenvaluesOnly).eigenvalues()[0];
}

}  // namespace

double solid_angle(const Vec3& a, const Vec3& b, const Vec3& c) {
    const double num = dot3(a, cross3(b, c));
    const double den = 1.0 + dot3(a, b) + dot3(b, c) + dot3(c, a);
    // Coplanar triples subtend no area. Testing this first avoids the
    // +-2 pi ambiguity of atan2(+-0, negative) for flat textures.
    if (std::fabs(num) <= kDegenerate) {
        if (std::fabs(den) <= kDegenerate) throw DegenerateTriangleError("antipodal spin triple");
        return 0.0;
    }
    return 2.0 * std::atan2(num, den);
}

ChernResult chern_sum(const std::vector<Vec3>& spins, int length) {
    if (length <= 0 || spins.size() != static_cast<std::size_t>(length) * length)
        throw ConfigError("spin grid does not match its length");
    const auto site = [&](int i, int j) -> const Vec3& {
        return spins[static_cast<std::size_t>(i % length) * length + (j % length)];
    };
    // A texture confined to a great circle covers no area, so its degree is
    // zero. Summing triangles would instead pick arbitrary branches at the
    // antipodal bonds that planar vortices have around their cores.
    if (off_plane(spins) <= kPlanar) {
        ChernResult flat;
        flat.planar = true;
        return flat;
    }
    std::vector<double> omega(spins.size());
    int degenerate = 0;
    for (int i = 0; i < length; ++i) {
        for (int j = 0; j < length; ++j) {
            const Vec3& n1 = site(i, j);
            const Vec3& n2 = site(i, j + 1);
            const Vec3& n3 = site(i + 1, j + 1);
            const Vec3& n4 = site(i + 1, j);
            omega[static_cast<std::size_t>(i) * length + j] =
                lattice_angle(n1, n2, n3, degenerate) + lattice_angle(n1, n3, n4, degenerate);
        }
    }
    ChernResult r;
    r.raw = pairwise_sum(omega) / (4.0 * std::numbers::pi);
    r.chern = static_cast<int>(std::lround(r.raw));
    r.residual = std::fabs(r.raw - r.chern);
    r.degenerate = degenerate;
    return r;
}

ChernResult chern_number(const std::vector<Vec3>& spins, int length) {
    ChernResult r = chern_sum(spins, length);
    if (r.residual > kResidualLimit)
        throw IllConditionedError("Chern sum " + std::to_string(r.raw) + " is not near an integer",
                                  r.residual);
    return r;
}

ChernResult chern_number(const SpinTexture& t) { return chern_number(t.spins, t.length); }

double min_gap(const HField& h) { return 2.0 * h.min_norm(); }

}  // namespace qtopo
