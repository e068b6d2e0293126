#include "qtopo/nn/tensor.hpp"

#include <cmath>

#include "qtopo/errors.hpp"

namespace qtopo::nn {

std::string Shape::str() const {
    return "(" + std::to_string(d) + "," + std::to_string(h) + "," + std::to_string(w) + "," +
           std::to_string(c) + ")";
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor periodic_pad(const Tensor& x, int ph, int pw) {
    if (ph < 0 || pw < 0 || ph >= x.shape.h || pw >= x.shape.w)
        throw ConfigError("padding must be smaller than the spatial extent");
    Shape s = x.shape;
    s.h += ph;
    s.w += pw;
    Tensor out(x.n, s);
    const int c = s.c;
    for (int b = 0; b < x.n; ++b)
        for (int z = 0; z < s.d; ++z)
            for (int y = 0; y < s.h; ++y) {
                const int sy = y % x.shape.h;
                for (int xx = 0; xx < s.w; ++xx) {
                    const int sx = xx % x.shape.w;
                    const double* src = &x.data[x.index(b, z, sy, sx, 0)];
                    double* dst = &out.data[out.index(b, z, y, xx, 0)];
                    for (int ch = 0; ch < c; ++ch) dst[ch] = src[ch];
                }
            }
    return out;
}

}  // namespace qtopo::nn
