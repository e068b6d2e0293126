#include "qtopo/nn/layers.hpp"

#include <Eigen/Dense>
#include <bit>
#include <cmath>
#include <cstdint>

#include "qtopo/errors.hpp"
#include "qtopo/quaternion.hpp"

namespace qtopo::nn {

namespace {

using RMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<RMat>;
using CMapR = Eigen::Map<const RMat>;

int out_extent(int in, int k, int s) { return (in - k) / s + 1; }

void check_window(const Shape& in, const LayerSpec& s, const char* what) {
    if (in.h < s.kh || in.w < s.kw)
        throw ConfigError(std::string(what) + " kernel larger than input " + in.str());
    if (in.c != s.cin)
        throw ConfigError(std::string(what) + " expects " + std::to_string(s.cin) + " channels, got " +
                          in.str());
}

// Rows are (image, oy, ox); columns are (ky, kx, channel).
void im2col(const double* img, int h, int w, int c, const LayerSpec& s, int ho, int wo, double* cols) {
    const std::size_t row_len = static_cast<std::size_t>(s.kh) * s.kw * c;
    for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
            double* row = cols + (static_cast<std::size_t>(oy) * wo + ox) * row_len;
            for (int ky = 0; ky < s.kh; ++ky) {
                const double* src = img + ((static_cast<std::size_t>(oy) * s.sh + ky) * w + ox * s.sw) * c;
                for (std::size_t t = 0; t < static_cast<std::size_t>(s.kw) * c; ++t) *row++ = src[t];
            }
        }
    (void)h;
}

void col2im(const double* cols, int h, int w, int c, const LayerSpec& s, int ho, int wo, double* img) {
    const std::size_t row_len = static_cast<std::size_t>(s.kh) * s.kw * c;
    for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
            const double* row = cols + (static_cast<std::size_t>(oy) * wo + ox) * row_len;
            for (int ky = 0; ky < s.kh; ++ky) {
                double* dst = img + ((static_cast<std::size_t>(oy) * s.sh + ky) * w + ox * s.sw) * c;
                for (std::size_t t = 0; t < static_cast<std::size_t>(s.kw) * c; ++t) dst[t] += *row++;
            }
        }
    (void)h;
}

// Branch-free arctan and tanh so the activation loops vectorize. Both are
// rational approximations accurate to a few ulp; this file is compiled
// with -fno-trapping-math so the selects below become blends.
inline double vec_atan(double v) {
    const double ax = std::fabs(v);
    const bool big = ax > 2.41421356237309504880;  // tan(3 pi / 8)
    const bool mid = !big && ax > 0.66;
    const double x = (big ? -1.0 : (mid ? ax - 1.0 : ax)) / (big ? ax : (mid ? ax + 1.0 : 1.0));
    const double base = big ? 1.57079632679489661923 : (mid ? 0.78539816339744830962 : 0.0);
    const double tail = big ? 6.123233995736765886130e-17 : (mid ? 3.061616997868382943065e-17 : 0.0);
    const double z = x * x;
    const double p = (((-8.750608600031904122785e-1 * z - 1.615753718733365076637e1) * z -
                       7.500855792314704667340e1) * z - 1.228866684490136173410e2) * z -
                     6.485021904942025371773e1;
    const double q = ((((z + 2.485846490142306297962e1) * z + 1.650270098316988542046e2) * z +
                       4.328810604912902668951e2) * z + 4.853903996359136964868e2) * z +
                     1.945506571482613964425e2;
    return std::copysign(base + (x * (z * p / q) + x + tail), v);
}

// exp(y) for 0 <= y <= 40.
inline double vec_exp(double y) {
    const double n = std::floor(1.4426950408889634073599 * y + 0.5);
    double x = y - n * 6.93145751953125e-1;
    x -= n * 1.42860682030941723212e-6;
    const double xx = x * x;
    const double px = x * ((1.26177193074810590878e-4 * xx + 3.02994407707441961300e-2) * xx +
                           9.99999999999999999910e-1);
    const double qx = ((3.00198505138664455042e-6 * xx + 2.52448340349684104192e-3) * xx +
                       2.27265548208155028766e-1) * xx + 2.00000000000000000009e0;
    const double r = 1.0 + 2.0 * (px / (qx - px));
    // 2^n from the exponent bits of n + 1023 + 2^52.
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(n + (1023.0 + 4503599627370496.0)) << 52;
    return r * std::bit_cast<double>(bits);
}

inline double vec_tanh(double v) {
    const double ax = std::min(std::fabs(v), 20.0);
    const double z = ax * ax;
    const double small = ax + ax * z *
                                  (((-9.64399179425052238628e-1 * z - 9.92877231001918586564e1) * z -
                                    1.61468768441708447952e3) /
                                   (((z + 1.12811678491632931402e2) * z + 2.23548839060100448583e3) * z +
                                    4.84406305325125486048e3));
    const double large = 1.0 - 2.0 / (vec_exp(2.0 * ax) + 1.0);
    return std::copysign(ax < 0.625 ? small : large, v);
}

void glorot(Buffer& w, double fan_in, double fan_out, Rng& rng) {
    const double s = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : w) v = rng.uniform(-s, s);
}

class PadLayer final : public Layer {
public:
    using Layer::Layer;
    Shape output_shape(const Shape& in) const override {
        Shape s = in;
        s.h += spec_.kh;
        s.w += spec_.kw;
        return s;
    }
    Tensor forward(Tensor x, Context&) override {
        in_shape_ = x.shape;
        return periodic_pad(x, spec_.kh, spec_.kw);
    }
    Tensor backward(Tensor g, bool need_input_grad) override {
        if (!need_input_grad) return {};
        Tensor out(g.n, in_shape_);
        for (int b = 0; b < g.n; ++b)
            for (int z = 0; z < g.shape.d; ++z)
                for (int y = 0; y < g.shape.h; ++y)
                    for (int x = 0; x < g.shape.w; ++x)
                        for (int ch = 0; ch < g.shape.c; ++ch)
                            out.at(b, z, y % in_shape_.h, x % in_shape_.w, ch) += g.at(b, z, y, x, ch);
        return out;
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<PadLayer>(*this); }

private:
    Shape in_shape_;
};

// Convolution applied to every depth slice with shared kernels.
class ConvLayer final : public Layer {
public:
    explicit ConvLayer(LayerSpec s)
        : Layer(s),
          w_(static_cast<std::size_t>(s.kh) * s.kw * s.cin * s.cout),
          b_(s.cout),
          gw_(w_.size()),
          gb_(b_.size()) {}
    Shape output_shape(const Shape& in) const override {
        check_window(in, spec_, "conv");
        return {in.d, out_extent(in.h, spec_.kh, spec_.sh), out_extent(in.w, spec_.kw, spec_.sw), spec_.cout};
    }
    Tensor forward(Tensor x, Context&) override {
        in_shape_ = x.shape;
        const Shape os = output_shape(x.shape);
        const int images = x.n * x.shape.d;
        const std::size_t rows = static_cast<std::size_t>(images) * os.h * os.w;
        const std::size_t k = static_cast<std::size_t>(spec_.kh) * spec_.kw * spec_.cin;
        cols_.resize(rows * k);
        const std::size_t img_in = static_cast<std::size_t>(x.shape.h) * x.shape.w * x.shape.c;
        const std::size_t img_rows = static_cast<std::size_t>(os.h) * os.w;
        for (int i = 0; i < images; ++i)
            im2col(x.data.data() + i * img_in, x.shape.h, x.shape.w, x.shape.c, spec_, os.h, os.w,
                   cols_.data() + i * img_rows * k);
        Tensor out(x.n, os);
        MapR o(out.data.data(), static_cast<Eigen::Index>(rows), spec_.cout);
        o.noalias() = CMapR(cols_.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(k)) *
                      CMapR(w_.data(), static_cast<Eigen::Index>(k), spec_.cout);
        o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b_.data(), spec_.cout);
        return out;
    }
    Tensor backward(Tensor g, bool need_input_grad) override {
        const Shape os = g.shape;
        const int images = g.n * os.d;
        const auto rows = static_cast<Eigen::Index>(static_cast<std::size_t>(images) * os.h * os.w);
        const auto k = static_cast<Eigen::Index>(spec_.kh * spec_.kw * spec_.cin);
        CMapR go(g.data.data(), rows, spec_.cout);
        CMapR cols(cols_.data(), rows, k);
        MapR(gw_.data(), k, spec_.cout).noalias() += cols.transpose() * go;
        Eigen::Map<Eigen::RowVectorXd>(gb_.data(), spec_.cout) += go.colwise().sum();
        if (!need_input_grad) return {};
        const std::size_t img_in = in_shape_.size() / in_shape_.d;
        const std::size_t img_rows = static_cast<std::size_t>(os.h) * os.w;
        const auto R = static_cast<Eigen::Index>(img_rows);
        Buffer dcols(img_rows * k);
        Tensor out(g.n, in_shape_);
        for (int i = 0; i < images; ++i) {
            MapR(dcols.data(), R, k).noalias() =
                CMapR(g.data.data() + i * img_rows * spec_.cout, R, spec_.cout) *
                CMapR(w_.data(), k, spec_.cout).transpose();
            col2im(dcols.data(), in_shape_.h, in_shape_.w, in_shape_.c, spec_, os.h, os.w,
                   out.data.data() + i * img_in);
        }
        return out;
    }
    std::vector<ParamRef> params() override {
        return {{"weight", w_.data(), gw_.data(), w_.size()}, {"bias", b_.data(), gb_.data(), b_.size()}};
    }
    void initialize(Rng& rng) override {
        const double area = static_cast<double>(spec_.kh) * spec_.kw;
        glorot(w_, area * spec_.cin, area * spec_.cout, rng);
        std::fill(b_.begin(), b_.end(), 0.0);
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<ConvLayer>(*this); }

private:
    Buffer w_, b_, gw_, gb_, cols_;
    Shape in_shape_;
};

// Quaternion convolution: kernels are quaternions K[ky][kx][ci][co] and each
// tap contributes the Hamilton product x * K.
class QConvLayer final : public Layer {
public:
    explicit QConvLayer(LayerSpec s)
        : Layer(s),
          k_(static_cast<std::size_t>(s.kh) * s.kw * s.cin * s.cout * 4),
          b_(static_cast<std::size_t>(s.cout) * 4),
          gk_(k_.size()),
          gb_(b_.size()) {}
    Shape output_shape(const Shape& in) const override {
        if (in.d != 4) throw ConfigError("qconv needs input depth 4, got " + in.str());
        check_window(in, spec_, "qconv");
        return {4, out_extent(in.h, spec_.kh, spec_.sh), out_extent(in.w, spec_.kw, spec_.sw), spec_.cout};
    }
    Tensor forward(Tensor x, Context&) override {
        in_shape_ = x.shape;
        const Shape os = output_shape(x.shape);
        const int cin = spec_.cin, cout = spec_.cout;
        const std::size_t plane = static_cast<std::size_t>(x.shape.h) * x.shape.w;
        const std::size_t img_rows = static_cast<std::size_t>(os.h) * os.w;
        const std::size_t k = static_cast<std::size_t>(spec_.kh) * spec_.kw * cin * 4;
        const auto R = static_cast<Eigen::Index>(img_rows);
        const auto K = static_cast<Eigen::Index>(k);
        cols_.resize(x.n * img_rows * k);
        build_full();
        LayerSpec s4 = spec_;
        s4.cin = cin * 4;
        Buffer inter(plane * cin * 4);
        Buffer om(img_rows * 4 * cout);
        Tensor out(x.n, os);
        for (int b = 0; b < x.n; ++b) {
            // Interleave depth into channels: [y][x][ci][d].
            const double* src = x.sample(b);
            for (int d = 0; d < 4; ++d)
                for (std::size_t p = 0; p < plane; ++p)
                    for (int ci = 0; ci < cin; ++ci)
                        inter[(p * cin + ci) * 4 + d] = src[(d * plane + p) * cin + ci];
            double* cols = cols_.data() + b * img_rows * k;
            im2col(inter.data(), x.shape.h, x.shape.w, cin * 4, s4, os.h, os.w, cols);
            MapR(om.data(), R, 4 * cout).noalias() = CMapR(cols, R, K) * CMapR(full_.data(), K, 4 * cout);
            double* dst = out.sample(b);
            for (int s = 0; s < 4; ++s)
                for (std::size_t p = 0; p < img_rows; ++p)
                    for (int co = 0; co < cout; ++co)
                        dst[(s * img_rows + p) * cout + co] = om[p * 4 * cout + s * cout + co] + b_[co * 4 + s];
        }
        return out;
    }
    Tensor backward(Tensor g, bool need_input_grad) override {
        const int cin = spec_.cin, cout = spec_.cout;
        const std::size_t img_rows = static_cast<std::size_t>(g.shape.h) * g.shape.w;
        const std::size_t k = static_cast<std::size_t>(spec_.kh) * spec_.kw * cin * 4;
        const auto R = static_cast<Eigen::Index>(img_rows);
        const auto K = static_cast<Eigen::Index>(k);
        const Shape& is = in_shape_;
        const std::size_t plane = static_cast<std::size_t>(is.h) * is.w;
        LayerSpec s4 = spec_;
        s4.cin = cin * 4;
        Buffer gm(img_rows * 4 * cout);
        Buffer dcols, inter;
        RMat gfull = RMat::Zero(K, 4 * cout);
        Tensor out;
        if (need_input_grad) {
            out = Tensor(g.n, is);
            dcols.resize(img_rows * k);
            inter.resize(plane * cin * 4);
        }
        for (int b = 0; b < g.n; ++b) {
            const double* src = g.sample(b);
            for (int s = 0; s < 4; ++s)
                for (std::size_t p = 0; p < img_rows; ++p)
                    for (int co = 0; co < cout; ++co) {
                        const double v = src[(s * img_rows + p) * cout + co];
                        gm[p * 4 * cout + s * cout + co] = v;
                        gb_[co * 4 + s] += v;
                    }
            CMapR gmat(gm.data(), R, 4 * cout);
            gfull.noalias() += CMapR(cols_.data() + b * img_rows * k, R, K).transpose() * gmat;
            if (!need_input_grad) continue;
            MapR(dcols.data(), R, K).noalias() = gmat * CMapR(full_.data(), K, 4 * cout).transpose();
            std::fill(inter.begin(), inter.end(), 0.0);
            col2im(dcols.data(), is.h, is.w, cin * 4, s4, g.shape.h, g.shape.w, inter.data());
            double* dst = out.sample(b);
            for (int d = 0; d < 4; ++d)
                for (std::size_t p = 0; p < plane; ++p)
                    for (int ci = 0; ci < cin; ++ci)
                        dst[(d * plane + p) * cin + ci] = inter[(p * cin + ci) * 4 + d];
        }
        // Fold the full weight gradient back onto the quaternion kernels.
        const std::size_t taps = static_cast<std::size_t>(spec_.kh) * spec_.kw * cin;
        for (std::size_t t = 0; t < taps; ++t)
            for (int d = 0; d < 4; ++d)
                for (int s = 0; s < 4; ++s)
                    for (int co = 0; co < cout; ++co)
                        gk_[(t * cout + co) * 4 + kQuatIndex[s][d]] +=
                            kQuatSign[s][d] * gfull(static_cast<Eigen::Index>(t * 4 + d), s * cout + co);
        return out;
    }
    std::vector<ParamRef> params() override {
        return {{"kernel", k_.data(), gk_.data(), k_.size()}, {"bias", b_.data(), gb_.data(), b_.size()}};
    }
    void initialize(Rng& rng) override {
        const double area = static_cast<double>(spec_.kh) * spec_.kw;
        glorot(k_, area * spec_.cin * 4, area * spec_.cout * 4, rng);
        std::fill(b_.begin(), b_.end(), 0.0);
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<QConvLayer>(*this); }

private:
    // Row (tap, d), column (s, co) holds sign[s][d] * K[tap][co][index[s][d]].
    void build_full() {
        const int cout = spec_.cout;
        const std::size_t taps = static_cast<std::size_t>(spec_.kh) * spec_.kw * spec_.cin;
        full_.resize(taps * 4 * 4 * cout);
        for (std::size_t t = 0; t < taps; ++t)
            for (int d = 0; d < 4; ++d)
                for (int s = 0; s < 4; ++s)
                    for (int co = 0; co < cout; ++co)
                        full_[(t * 4 + d) * 4 * cout + s * cout + co] =
                            kQuatSign[s][d] * k_[(t * cout + co) * 4 + kQuatIndex[s][d]];
    }

    Buffer k_, b_, gk_, gb_, cols_, full_;
    Shape in_shape_;
};

// Mixes the four depth slices into one: out[c'] = sum_{d,c} W[d][c][c'] x[d][c] + b[c'].
class DepthMixLayer final : public Layer {
public:
    explicit DepthMixLayer(LayerSpec s)
        : Layer(s), w_(static_cast<std::size_t>(4) * s.cin * s.cout), b_(s.cout), gw_(w_.size()), gb_(b_.size()) {}
    Shape output_shape(const Shape& in) const override {
        if (in.d != 4) throw ConfigError("depthmix needs input depth 4, got " + in.str());
        if (in.c != spec_.cin) throw ConfigError("depthmix channel mismatch, got " + in.str());
        return {1, in.h, in.w, spec_.cout};
    }
    Tensor forward(Tensor x, Context&) override {
        in_shape_ = x.shape;
        const Shape os = output_shape(x.shape);
        const std::size_t plane = static_cast<std::size_t>(x.shape.h) * x.shape.w;
        const int cin = spec_.cin;
        const std::size_t rows = static_cast<std::size_t>(x.n) * plane;
        gathered_.resize(rows * 4 * cin);
        for (int b = 0; b < x.n; ++b)
            for (int d = 0; d < 4; ++d)
                for (std::size_t p = 0; p < plane; ++p)
                    for (int ci = 0; ci < cin; ++ci)
                        gathered_[((static_cast<std::size_t>(b) * plane + p) * 4 + d) * cin + ci] =
                            x.data[((static_cast<std::size_t>(b) * 4 + d) * plane + p) * cin + ci];
        Tensor out(x.n, os);
        MapR o(out.data.data(), static_cast<Eigen::Index>(rows), spec_.cout);
        o.noalias() = CMapR(gathered_.data(), static_cast<Eigen::Index>(rows), 4 * cin) *
                      CMapR(w_.data(), 4 * cin, spec_.cout);
        o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b_.data(), spec_.cout);
        return out;
    }
    Tensor backward(Tensor g, bool need_input_grad) override {
        const int cin = spec_.cin;
        const std::size_t plane = static_cast<std::size_t>(in_shape_.h) * in_shape_.w;
        const auto rows = static_cast<Eigen::Index>(static_cast<std::size_t>(g.n) * plane);
        CMapR go(g.data.data(), rows, spec_.cout);
        CMapR in(gathered_.data(), rows, 4 * cin);
        MapR(gw_.data(), 4 * cin, spec_.cout).noalias() += in.transpose() * go;
        Eigen::Map<Eigen::RowVectorXd>(gb_.data(), spec_.cout) += go.colwise().sum();
        if (!need_input_grad) return {};
        RMat gin = go * CMapR(w_.data(), 4 * cin, spec_.cout).transpose();
        Tensor out(g.n, in_shape_);
        for (int b = 0; b < g.n; ++b)
            for (int d = 0; d < 4; ++d)
                for (std::size_t p = 0; p < plane; ++p)
                    for (int ci = 0; ci < cin; ++ci)
                        out.data[((static_cast<std::size_t>(b) * 4 + d) * plane + p) * cin + ci] =
                            gin(static_cast<Eigen::Index>(b * plane + p), d * cin + ci);
        return out;
    }
    std::vector<ParamRef> params() override {
        return {{"weight", w_.data(), gw_.data(), w_.size()}, {"bias", b_.data(), gb_.data(), b_.size()}};
    }
    void initialize(Rng& rng) override {
        glorot(w_, 4.0 * spec_.cin, 4.0 * spec_.cout, rng);
        std::fill(b_.begin(), b_.end(), 0.0);
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<DepthMixLayer>(*this); }

private:
    Buffer w_, b_, gw_, gb_, gathered_;
    Shape in_shape_;
};

class DenseLayer final : public Layer {
public:
    explicit DenseLayer(LayerSpec s)
        : Layer(s), w_(static_cast<std::size_t>(s.cin) * s.cout), b_(s.cout), gw_(w_.size()), gb_(b_.size()) {}
    Shape output_shape(const Shape& in) const override {
        if (static_cast<int>(in.size()) != spec_.cin)
            throw ConfigError("dense expects " + std::to_string(spec_.cin) + " inputs, got " + in.str());
        return {1, 1, 1, spec_.cout};
    }
    Tensor forward(Tensor x, Context&) override {
        input_ = std::move(x);
        const Tensor& in = input_;
        Tensor out(in.n, output_shape(in.shape));
        MapR o(out.data.data(), in.n, spec_.cout);
        o.noalias() = CMapR(in.data.data(), in.n, spec_.cin) * CMapR(w_.data(), spec_.cin, spec_.cout);
        o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b_.data(), spec_.cout);
        return out;
    }
    Tensor backward(Tensor g, bool need_input_grad) override {
        CMapR go(g.data.data(), g.n, spec_.cout);
        MapR(gw_.data(), spec_.cin, spec_.cout).noalias() +=
            CMapR(input_.data.data(), g.n, spec_.cin).transpose() * go;
        Eigen::Map<Eigen::RowVectorXd>(gb_.data(), spec_.cout) += go.colwise().sum();
        if (!need_input_grad) return {};
        Tensor out(g.n, input_.shape);
        MapR(out.data.data(), g.n, spec_.cin).noalias() = go * CMapR(w_.data(), spec_.cin, spec_.cout).transpose();
        return out;
    }
    std::vector<ParamRef> params() override {
        return {{"weight", w_.data(), gw_.data(), w_.size()}, {"bias", b_.data(), gb_.data(), b_.size()}};
    }
    void initialize(Rng& rng) override {
        glorot(w_, spec_.cin, spec_.cout, rng);
        std::fill(b_.begin(), b_.end(), 0.0);
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<DenseLayer>(*this); }

private:
    Buffer w_, b_, gw_, gb_;
    Tensor input_;
};

class ActivationLayer final : public Layer {
public:
    using Layer::Layer;
    Shape output_shape(const Shape& in) const override { return in; }
    Tensor forward(Tensor x, Context&) override {
        Tensor y(x.n, x.shape);
        const std::size_t n = x.data.size();
        const double* in = x.data.data();
        double* out = y.data.data();
        switch (spec_.activation) {
            case Activation::arctan:
                for (std::size_t i = 0; i < n; ++i) out[i] = vec_atan(in[i]);
                input_ = std::move(x);
                break;
            case Activation::tanh:
                for (std::size_t i = 0; i < n; ++i) out[i] = vec_tanh(in[i]);
                input_ = y;
                break;
            case Activation::relu:
                for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
                input_ = std::move(x);
                break;
            case Activation::none:
                return x;
        }
        return y;
    }
    Tensor backward(Tensor g, bool need_input_grad) override {
        if (!need_input_grad) return {};
        Tensor out = std::move(g);
        const Buffer& c = input_.data;
        switch (spec_.activation) {
            case Activation::arctan:
                for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] /= 1.0 + c[i] * c[i];
                break;
            case Activation::tanh:
                for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= 1.0 - c[i] * c[i];
                break;
            case Activation::relu:
                for (std::size_t i = 0; i < out.data.size(); ++i)
                    if (!(c[i] > 0.0)) out.data[i] = 0.0;
                break;
            case Activation::none:
                break;
        }
        return out;
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<ActivationLayer>(*this); }

private:
    Tensor input_;  // pre-activation, or output for tanh
};

// Inverted dropout: kept units are scaled by 1/(1-rate) during training.
class DropoutLayer final : public Layer {
public:
    using Layer::Layer;
    Shape output_shape(const Shape& in) const override { return in; }
    Tensor forward(Tensor x, Context& ctx) override {
        active_ = ctx.training && spec_.rate > 0.0;
        if (!active_) return x;
        if (!ctx.rng) throw ConfigError("dropout in training mode needs a random stream");
        const double keep = 1.0 / (1.0 - spec_.rate);
        mask_.resize(x.data.size());
        Tensor y = std::move(x);
        for (std::size_t i = 0; i < y.data.size(); ++i) {
            mask_[i] = ctx.rng->uniform() < spec_.rate ? 0.0 : keep;
            y.data[i] *= mask_[i];
        }
        return y;
    }
    Tensor backward(Tensor g, bool need_input_grad) override {
        if (!need_input_grad) return {};
        Tensor out = std::move(g);
        if (active_)
            for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= mask_[i];
        return out;
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<DropoutLayer>(*this); }

private:
    bool active_ = false;
    Buffer mask_;
};

class SoftmaxLayer final : public Layer {
public:
    using Layer::Layer;
    Shape output_shape(const Shape& in) const override { return in; }
    Tensor forward(Tensor x, Context&) override {
        Tensor y = std::move(x);
        const std::size_t k = y.shape.size();
        for (int b = 0; b < y.n; ++b) {
            double* p = y.sample(b);
            double top = p[0];
            for (std::size_t i = 1; i < k; ++i) top = std::max(top, p[i]);
            double sum = 0.0;
            for (std::size_t i = 0; i < k; ++i) sum += p[i] = std::exp(p[i] - top);
            for (std::size_t i = 0; i < k; ++i) p[i] /= sum;
        }
        output_ = y;
        return y;
    }
    Tensor backward(Tensor g, bool need_input_grad) override {
        if (!need_input_grad) return {};
        Tensor out = g;
        const std::size_t k = g.shape.size();
        for (int b = 0; b < g.n; ++b) {
            const double* p = output_.sample(b);
            const double* gp = g.sample(b);
            double dot = 0.0;
            for (std::size_t i = 0; i < k; ++i) dot += p[i] * gp[i];
            double* o = out.sample(b);
            for (std::size_t i = 0; i < k; ++i) o[i] = p[i] * (gp[i] - dot);
        }
        return out;
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<SoftmaxLayer>(*this); }

private:
    Tensor output_;
};

}  // namespace

std::string_view kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::pad: return "pad";
        case LayerKind::qconv: return "qconv";
        case LayerKind::conv: return "conv";
        case LayerKind::depthmix: return "depthmix";
        case LayerKind::dense: return "dense";
        case LayerKind::activation: return "activation";
        case LayerKind::dropout: return "dropout";
        case LayerKind::softmax: return "softmax";
    }
    return "unknown";
}

std::string_view activation_name(Activation a) {
    switch (a) {
        case Activation::none: return "none";
        case Activation::arctan: return "arctan";
        case Activation::tanh: return "tanh";
        case Activation::relu: return "relu";
    }
    return "unknown";
}

Activation parse_activation(std::string_view s) {
    if (s == "arctan") return Activation::arctan;
    if (s == "tanh") return Activation::tanh;
    if (s == "relu") return Activation::relu;
    if (s == "none") return Activation::none;
    throw ConfigError("unknown activation " + std::string(s));
}

LayerSpec LayerSpec::pad(int p) {
    LayerSpec s;
    s.kind = LayerKind::pad;
    s.kh = s.kw = p;
    return s;
}

LayerSpec LayerSpec::qconv(int k, int stride, int cin, int cout) {
    LayerSpec s;
    s.kind = LayerKind::qconv;
    s.kh = s.kw = k;
    s.sh = s.sw = stride;
    s.cin = cin;
    s.cout = cout;
    return s;
}

LayerSpec LayerSpec::conv(int k, int stride, int cin, int cout) {
    LayerSpec s = qconv(k, stride, cin, cout);
    s.kind = LayerKind::conv;
    return s;
}

LayerSpec LayerSpec::depthmix(int cin, int cout) {
    LayerSpec s;
    s.kind = LayerKind::depthmix;
    s.kh = 4;
    s.cin = cin;
    s.cout = cout;
    return s;
}

LayerSpec LayerSpec::dense(int in, int out) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.cin = in;
    s.cout = out;
    return s;
}

LayerSpec LayerSpec::act(Activation a) {
    LayerSpec s;
    s.kind = LayerKind::activation;
    s.activation = a;
    return s;
}

LayerSpec LayerSpec::dropout(double rate) {
    LayerSpec s;
    s.kind = LayerKind::dropout;
    s.rate = rate;
    return s;
}

LayerSpec LayerSpec::softmax() {
    LayerSpec s;
    s.kind = LayerKind::softmax;
    return s;
}

std::size_t Layer::param_count() {
    std::size_t n = 0;
    for (const auto& p : params()) n += p.size;
    return n;
}

std::unique_ptr<Layer> make_layer(const LayerSpec& spec) {
    const bool windowed = spec.kind == LayerKind::qconv || spec.kind == LayerKind::conv;
    if (windowed && (spec.kh < 1 || spec.kw < 1 || spec.sh < 1 || spec.sw < 1 || spec.cin < 1 || spec.cout < 1))
        throw ConfigError("bad convolution spec");
    switch (spec.kind) {
        case LayerKind::pad:
            if (spec.kh < 0 || spec.kw < 0) throw ConfigError("negative padding");
            return std::make_unique<PadLayer>(spec);
        case LayerKind::qconv: return std::make_unique<QConvLayer>(spec);
        case LayerKind::conv: return std::make_unique<ConvLayer>(spec);
        case LayerKind::depthmix:
            if (spec.cin < 1 || spec.cout < 1) throw ConfigError("bad depthmix spec");
            return std::make_unique<DepthMixLayer>(spec);
        case LayerKind::dense:
            if (spec.cin < 1 || spec.cout < 1) throw ConfigError("bad dense spec");
            return std::make_unique<DenseLayer>(spec);
        case LayerKind::activation: return std::make_unique<ActivationLayer>(spec);
        case LayerKind::dropout:
            if (!(spec.rate >= 0.0 && spec.rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
            return std::make_unique<DropoutLayer>(spec);
        case LayerKind::softmax: return std::make_unique<SoftmaxLayer>(spec);
    }
    throw ConfigError("unknown layer kind");
}

Tensor conv_reference(const Tensor& x, const std::vector<double>& w, const std::vector<double>& b,
                      const LayerSpec& s) {
    const int ho = out_extent(x.shape.h, s.kh, s.sh), wo = out_extent(x.shape.w, s.kw, s.sw);
    Tensor out(x.n, {x.shape.d, ho, wo, s.cout});
    for (int n = 0; n < x.n; ++n)
        for (int z = 0; z < x.shape.d; ++z)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox)
                    for (int co = 0; co < s.cout; ++co) {
                        double acc = b[co];
                        for (int ky = 0; ky < s.kh; ++ky)
                            for (int kx = 0; kx < s.kw; ++kx)
                                for (int ci = 0; ci < s.cin; ++ci)
                                    acc += x.at(n, z, oy * s.sh + ky, ox * s.sw + kx, ci) *
                                           w[((static_cast<std::size_t>(ky) * s.kw + kx) * s.cin + ci) * s.cout + co];
                        out.at(n, z, oy, ox, co) = acc;
                    }
    return out;
}

Tensor qconv_reference(const Tensor& x, const std::vector<double>& k, const std::vector<double>& b,
                       const LayerSpec& s) {
    const int ho = out_extent(x.shape.h, s.kh, s.sh), wo = out_extent(x.shape.w, s.kw, s.sw);
    Tensor out(x.n, {4, ho, wo, s.cout});
    for (int n = 0; n < x.n; ++n)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox)
                for (int co = 0; co < s.cout; ++co) {
                    Quaternion acc{b[co * 4 + 0], b[co * 4 + 1], b[co * 4 + 2], b[co * 4 + 3]};
                    for (int ky = 0; ky < s.kh; ++ky)
                        for (int kx = 0; kx < s.kw; ++kx)
                            for (int ci = 0; ci < s.cin; ++ci) {
                                const int y = oy * s.sh + ky, xx = ox * s.sw + kx;
                                const Quaternion q{x.at(n, 0, y, xx, ci), x.at(n, 1, y, xx, ci),
                                                   x.at(n, 2, y, xx, ci), x.at(n, 3, y, xx, ci)};
                                const std::size_t base =
                                    (((static_cast<std::size_t>(ky) * s.kw + kx) * s.cin + ci) * s.cout + co) * 4;
                                const Quaternion kq{k[base], k[base + 1], k[base + 2], k[base + 3]};
                                acc = acc + qmul(q, kq);
                            }
                    out.at(n, 0, oy, ox, co) = acc.r;
                    out.at(n, 1, oy, ox, co) = acc.a;
                    out.at(n, 2, oy, ox, co) = acc.b;
                    out.at(n, 3, oy, ox, co) = acc.c;
                }
    return out;
}

Tensor depthmix_reference(const Tensor& x, const std::vector<double>& w, const std::vector<double>& b,
                          const LayerSpec& s) {
    Tensor out(x.n, {1, x.shape.h, x.shape.w, s.cout});
    for (int n = 0; n < x.n; ++n)
        for (int y = 0; y < x.shape.h; ++y)
            for (int xx = 0; xx < x.shape.w; ++xx)
                for (int co = 0; co < s.cout; ++co) {
                    double acc = b[co];
                    for (int d = 0; d < 4; ++d)
                        for (int ci = 0; ci < s.cin; ++ci)
                            acc += x.at(n, d, y, xx, ci) * w[(static_cast<std::size_t>(d) * s.cin + ci) * s.cout + co];
                    out.at(n, 0, y, xx, co) = acc;
                }
    return out;
}

}  // namespace qtopo::nn
