#pragma once

#include <array>
#include <cmath>

#include "qtopo/errors.hpp"

namespace qtopo {

// Components are (r, a, b, c) for r + a i + b j + c k.
template <class T>
struct BasicQuaternion {
    T r{}, a{}, b{}, c{};

    constexpr BasicQuaternion operator+(const BasicQuaternion& o) const {
        return {r + o.r, a + o.a, b + o.b, c + o.c};
    }
    constexpr BasicQuaternion operator-(const BasicQuaternion& o) const {
        return {r - o.r, a - o.a, b - o.b, c - o.c};
    }
    constexpr BasicQuaternion operator-() const { return {-r, -a, -b, -c}; }
    constexpr bool operator==(const BasicQuaternion&) const = default;
};

using Quaternion = BasicQuaternion<double>;
using QuatMatrix = std::array<std::array<double, 4>, 4>;
using Vec3 = std::array<double, 3>;

template <class T>
constexpr BasicQuaternion<T> qmul(const BasicQuaternion<T>& p, const BasicQuaternion<T>& q) {
    return {p.r * q.r - p.a * q.a - p.b * q.b - p.c * q.c,
            p.r * q.a + p.a * q.r + p.b * q.c - p.c * q.b,
            p.r * q.b - p.a * q.c + p.b * q.r + p.c * q.a,
            p.r * q.c + p.a * q.b - p.b * q.a + p.c * q.r};
}

template <class T>
constexpr BasicQuaternion<T> conj(const BasicQuaternion<T>& q) {
    return {q.r, -q.a, -q.b, -q.c};
}

constexpr Quaternion operator*(const Quaternion& p, const Quaternion& q) { return qmul(p, q); }
constexpr Quaternion operator*(double s, const Quaternion& q) {
    return {s * q.r, s * q.a, s * q.b, s * q.c};
}

constexpr double dot(const Quaternion& p, const Quaternion& q) {
    return p.r * q.r + p.a * q.a + p.b * q.b + p.c * q.c;
}

inline double norm(const Quaternion& q) { return std::sqrt(dot(q, q)); }

inline Quaternion inverse(const Quaternion& q) {
    const double n2 = dot(q, q);
    if (n2 == 0.0) throw DomainError("inverse of zero quaternion");
    return (1.0 / n2) * conj(q);
}

constexpr bool is_pure(const Quaternion& q) { return q.r == 0.0; }

inline constexpr Quaternion kOne{1, 0, 0, 0};
inline constexpr Quaternion kI{0, 1, 0, 0};
inline constexpr Quaternion kJ{0, 0, 1, 0};
inline constexpr Quaternion kK{0, 0, 0, 1};

// Left multiplication: to_matrix(p) * column(q) = column(p q).
constexpr QuatMatrix to_matrix(const Quaternion& q) {
    return {{{q.r, -q.a, -q.b, -q.c},
             {q.a, q.r, -q.c, q.b},
             {q.b, q.c, q.r, -q.a},
             {q.c, -q.b, q.a, q.r}}};
}

// Right multiplication: right_matrix(q) * column(p) = column(p q).
constexpr QuatMatrix right_matrix(const Quaternion& q) {
    return {{{q.r, -q.a, -q.b, -q.c},
             {q.a, q.r, q.c, -q.b},
             {q.b, -q.c, q.r, q.a},
             {q.c, q.b, -q.a, q.r}}};
}

constexpr std::array<double, 4> column(const Quaternion& q) { return {q.r, q.a, q.b, q.c}; }

constexpr std::array<double, 4> apply(const QuatMatrix& m, const std::array<double, 4>& v) {
    std::array<double, 4> out{};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) out[i] += m[i][j] * v[j];
    return out;
}

constexpr QuatMatrix matmul(const QuatMatrix& x, const QuatMatrix& y) {
    QuatMatrix out{};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 4; ++k) out[i][j] += x[i][k] * y[k][j];
    return out;
}

inline constexpr QuatMatrix kIdentity4{{{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}}};

// Inverse of to_matrix. Entries are compared with the reconstructed matrix
// using an absolute tolerance scaled by the largest entry.
inline Quaternion from_matrix(const QuatMatrix& m, double tol = 1e-12) {
    const Quaternion q{(m[0][0] + m[1][1] + m[2][2] + m[3][3]) / 4.0,
                       (m[1][0] - m[0][1] + m[3][2] - m[2][3]) / 4.0,
                       (m[2][0] - m[0][2] + m[1][3] - m[3][1]) / 4.0,
                       (m[3][0] - m[0][3] + m[2][1] - m[1][2]) / 4.0};
    const QuatMatrix back = to_matrix(q);
    double scale = 1.0;
    for (const auto& row : m)
        for (double x : row) scale = std::fmax(scale, std::fabs(x));
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            if (!(std::fabs(back[i][j] - m[i][j]) <= tol * scale))
                throw StructureError("matrix is not a quaternion representation");
    return q;
}

// Rotates v by the unit quaternion q via q v q*.
inline Vec3 rotate(const Quaternion& q, const Vec3& v) {
    const Quaternion p{0.0, v[0], v[1], v[2]};
    const Quaternion out = qmul(qmul(q, p), conj(q));
    return {out.a, out.b, out.c};
}

}  // namespace qtopo
