#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

#include "qtopo/dataset.hpp"
#include "qtopo/errors.hpp"
#include "qtopo/nn/checkpoint.hpp"
#include "qtopo/nn/network.hpp"
#include "qtopo/nn/train.hpp"
#include "qtopo/quaternion.hpp"

using namespace qtopo;
using namespace qtopo::nn;

namespace {

Tensor random_tensor(int n, Shape s, Rng& rng) {
    Tensor t(n, s);
    for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
    return t;
}

void randomize(Layer& layer, Rng& rng) {
    for (const ParamRef& p : layer.params())
        for (std::size_t i = 0; i < p.size; ++i) p.value[i] = rng.uniform(-1.0, 1.0);
}

std::vector<double> values_of(const ParamRef& p) { return {p.value, p.value + p.size}; }

double max_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.data.size() == b.data.size());
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

double relative_error(double analytic, double numeric) {
    return std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), 1e-7});
}

// Loss sum(r * y) of a single layer; checks its input gradient and five
// entries of every parameter tensor against central differences.
void check_layer_gradients(Layer& layer, const Tensor& x, Rng& rng) {
    Context ctx;
    const Tensor y0 = layer.forward(x, ctx);
    const Tensor r = random_tensor(y0.n, y0.shape, rng);
    const auto loss = [&](const Tensor& in) {
        Context c;
        const Tensor y = layer.forward(in, c);
        double s = 0.0;
        for (std::size_t i = 0; i < y.data.size(); ++i) s += r.data[i] * y.data[i];
        return s;
    };
    for (const ParamRef& p : layer.params()) std::fill(p.grad, p.grad + p.size, 0.0);
    layer.forward(x, ctx);
    const Tensor gx = layer.backward(r, true);
    const double h = 1e-5;
    for (int t = 0; t < 5; ++t) {
        const std::size_t i = rng.below(x.data.size());
        Tensor xp = x, xm = x;
        xp.data[i] += h;
        xm.data[i] -= h;
        CHECK(relative_error(gx.data[i], (loss(xp) - loss(xm)) / (2 * h)) < 1e-4);
    }
    for (const ParamRef& p : layer.params())
        for (int t = 0; t < 5; ++t) {
            const std::size_t i = rng.below(p.size);
            const double keep = p.value[i];
            p.value[i] = keep + h;
            const double up = loss(x);
            p.value[i] = keep - h;
            const double down = loss(x);
            p.value[i] = keep;
            CHECK(relative_error(p.grad[i], (up - down) / (2 * h)) < 1e-4);
        }
}

ModelConfig small_config(const std::string& arch, Activation act = Activation::arctan) {
    ModelConfig cfg;
    cfg.arch = arch;
    cfg.activation = act;
    cfg.length = 4;
    cfg.seed = 9;
    return cfg;
}

// 4x4 lattice version of the shipped skeleton.
std::vector<LayerSpec> small_specs(const std::string& arch, Activation act) {
    std::vector<LayerSpec> s;
    s.push_back(LayerSpec::pad(1));
    s.push_back(arch == "qcnn" ? LayerSpec::qconv(2, 1, 1, 3) : LayerSpec::conv(2, 1, 3, 3));
    s.push_back(LayerSpec::act(act));
    s.push_back(LayerSpec::conv(2, 2, 3, 4));
    s.push_back(LayerSpec::act(Activation::tanh));
    s.push_back(LayerSpec::conv(2, 2, 4, 2));
    s.push_back(LayerSpec::act(Activation::tanh));
    s.push_back(LayerSpec::dropout(0.2));
    s.push_back(arch == "qcnn" ? LayerSpec::depthmix(2, kClasses) : LayerSpec::dense(2, kClasses));
    s.push_back(LayerSpec::softmax());
    return s;
}

SpinTexture toy_texture(int c, double m, std::uint64_t seed) {
    SpinTexture t = texture(c, m, 8);
    return rotate(t, random_rotation(seed));
}

}  // namespace

TEST_CASE("periodic padding") {
    Rng rng(1);
    const Tensor x = random_tensor(2, {4, 5, 6, 2}, rng);
    const Tensor p = periodic_pad(x, 1, 2);
    CHECK(p.shape == Shape{4, 6, 8, 2});
    for (int b = 0; b < 2; ++b)
        for (int z = 0; z < 4; ++z)
            for (int y = 0; y < 6; ++y)
                for (int xx = 0; xx < 8; ++xx)
                    for (int c = 0; c < 2; ++c) CHECK(p.at(b, z, y, xx, c) == x.at(b, z, y % 5, xx % 6, c));
    CHECK(periodic_pad(x, 0, 0).data == x.data);
    CHECK_THROWS_AS(periodic_pad(x, 5, 0), ConfigError);
    // 2x2 stride-1 kernel after pad 1 keeps a 40x40 grid.
    auto conv = make_layer(LayerSpec::qconv(2, 1, 1, 1));
    CHECK(conv->output_shape({4, 41, 41, 1}) == Shape{4, 40, 40, 1});
}

TEST_CASE("convolutions match reference loops") {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const int k = 1 + static_cast<int>(rng.below(3));
        const int stride = rng.below(2) ? k : 1;
        const int h = k + static_cast<int>(rng.below(9 - k)), w = k + static_cast<int>(rng.below(9 - k));
        const int cin = 1 + static_cast<int>(rng.below(3)), cout = 1 + static_cast<int>(rng.below(4));
        {
            const LayerSpec s = LayerSpec::conv(k, stride, cin, cout);
            auto layer = make_layer(s);
            randomize(*layer, rng);
            const Tensor x = random_tensor(2, {1 + static_cast<int>(rng.below(4)), h, w, cin}, rng);
            Context ctx;
            const auto ps = layer->params();
            CHECK(max_diff(layer->forward(x, ctx), conv_reference(x, values_of(ps[0]), values_of(ps[1]), s)) <
                  1e-12);
        }
        {
            const LayerSpec s = LayerSpec::qconv(k, stride, cin, cout);
            auto layer = make_layer(s);
            randomize(*layer, rng);
            const Tensor x = random_tensor(2, {4, h, w, cin}, rng);
            Context ctx;
            const auto ps = layer->params();
            CHECK(max_diff(layer->forward(x, ctx), qconv_reference(x, values_of(ps[0]), values_of(ps[1]), s)) <
                  1e-12);
        }
        {
            const LayerSpec s = LayerSpec::depthmix(cin, cout);
            auto layer = make_layer(s);
            randomize(*layer, rng);
            const Tensor x = random_tensor(2, {4, h, w, cin}, rng);
            Context ctx;
            const auto ps = layer->params();
            const Tensor y = layer->forward(x, ctx);
            CHECK(y.shape.d == 1);
            CHECK(max_diff(y, depthmix_reference(x, values_of(ps[0]), values_of(ps[1]), s)) < 1e-12);
        }
    }
    // Non-overlapping 2x2 over 4x4 gives 2x2.
    CHECK(make_layer(LayerSpec::conv(2, 2, 1, 1))->output_shape({1, 4, 4, 1}) == Shape{1, 2, 2, 1});
    CHECK_THROWS_AS(make_layer(LayerSpec::conv(2, 2, 1, 1))->output_shape({1, 4, 4, 2}), ConfigError);
    CHECK_THROWS_AS(make_layer(LayerSpec::qconv(2, 1, 1, 1))->output_shape({1, 4, 4, 1}), ConfigError);
}

TEST_CASE("1x1 conv with unit kernel is the identity") {
    auto layer = make_layer(LayerSpec::conv(1, 1, 1, 1));
    layer->params()[0].value[0] = 1.0;
    Rng rng(3);
    const Tensor x = random_tensor(1, {1, 5, 5, 1}, rng);
    Context ctx;
    CHECK(layer->forward(x, ctx).data == x.data);
}

TEST_CASE("1x1 qconv is the Hamilton product") {
    Rng rng(4);
    auto layer = make_layer(LayerSpec::qconv(1, 1, 1, 1));
    const ParamRef k = layer->params()[0];
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const Quaternion q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        const Quaternion kq{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        k.value[0] = kq.r, k.value[1] = kq.a, k.value[2] = kq.b, k.value[3] = kq.c;
        Tensor x(1, {4, 1, 1, 1});
        x.data = {q.r, q.a, q.b, q.c};
        Context ctx;
        const Tensor y = layer->forward(x, ctx);
        const Quaternion want = qmul(q, kq);
        worst = std::max({worst, std::fabs(y.data[0] - want.r), std::fabs(y.data[1] - want.a),
                          std::fabs(y.data[2] - want.b), std::fabs(y.data[3] - want.c)});
    }
    CHECK(worst < 1e-12);
    // Identity kernel passes the input through.
    k.value[0] = 1, k.value[1] = k.value[2] = k.value[3] = 0;
    Tensor x(1, {4, 1, 1, 1});
    x.data = {0.1, 0.2, 0.3, 0.4};
    Context ctx;
    CHECK(layer->forward(x, ctx).data == x.data);
}

TEST_CASE("pure input and pure kernel give minus the dot product") {
    Rng rng(5);
    const LayerSpec s = LayerSpec::qconv(2, 1, 2, 1);
    auto layer = make_layer(s);
    randomize(*layer, rng);
    const ParamRef k = layer->params()[0];
    for (std::size_t i = 0; i < k.size; i += 4) k.value[i] = 0.0;
    std::fill(layer->params()[1].value, layer->params()[1].value + 4, 0.0);
    Tensor x = random_tensor(1, {4, 3, 3, 2}, rng);
    for (int y = 0; y < 3; ++y)
        for (int xx = 0; xx < 3; ++xx)
            for (int c = 0; c < 2; ++c) x.at(0, 0, y, xx, c) = 0.0;
    Context ctx;
    const Tensor out = layer->forward(x, ctx);
    for (int oy = 0; oy < 2; ++oy)
        for (int ox = 0; ox < 2; ++ox) {
            double want = 0.0;
            for (int ky = 0; ky < 2; ++ky)
                for (int kx = 0; kx < 2; ++kx)
                    for (int c = 0; c < 2; ++c) {
                        const std::size_t base = ((ky * 2 + kx) * 2 + c) * 4;
                        for (int d = 1; d < 4; ++d) want -= x.at(0, d, oy + ky, ox + kx, c) * k.value[base + d];
                    }
            CHECK(std::fabs(out.at(0, 0, oy, ox, 0) - want) < 1e-12);
        }
}

TEST_CASE("depth mixing selects a slice") {
    auto layer = make_layer(LayerSpec::depthmix(1, 1));
    layer->params()[0].value[0] = 1.0;
    Rng rng(6);
    const Tensor x = random_tensor(1, {4, 3, 3, 1}, rng);
    Context ctx;
    const Tensor y = layer->forward(x, ctx);
    for (int i = 0; i < 9; ++i) CHECK(y.data[i] == x.data[i]);
}

TEST_CASE("conv layers keep depth slices independent") {
    Rng rng(7);
    auto layer = make_layer(LayerSpec::conv(2, 2, 3, 2));
    randomize(*layer, rng);
    std::fill(layer->params()[1].value, layer->params()[1].value + 2, 0.0);
    Tensor x = random_tensor(1, {4, 4, 4, 3}, rng);
    Context ctx;
    const Tensor before = layer->forward(x, ctx);
    for (int y = 0; y < 4; ++y)
        for (int xx = 0; xx < 4; ++xx)
            for (int c = 0; c < 3; ++c) x.at(0, 2, y, xx, c) = 0.0;
    const Tensor after = layer->forward(x, ctx);
    for (int z = 0; z < 4; ++z)
        for (int y = 0; y < 2; ++y)
            for (int xx = 0; xx < 2; ++xx)
                for (int c = 0; c < 2; ++c) {
                    if (z == 2)
                        CHECK(after.at(0, z, y, xx, c) == 0.0);
                    else
                        CHECK(after.at(0, z, y, xx, c) == before.at(0, z, y, xx, c));
                }
}

TEST_CASE("activations") {
    const auto apply = [](Activation a, double v) {
        auto layer = make_layer(LayerSpec::act(a));
        Tensor x(1, {1, 1, 1, 1});
        x.data[0] = v;
        Context ctx;
        return layer->forward(x, ctx).data[0];
    };
    CHECK(apply(Activation::arctan, 0.0) == 0.0);
    CHECK(std::fabs(apply(Activation::arctan, 1e300) - std::numbers::pi / 2) < 1e-15);
    CHECK(std::fabs(apply(Activation::arctan, -1e300) + std::numbers::pi / 2) < 1e-15);
    CHECK(apply(Activation::tanh, 0.0) == 0.0);
    CHECK(apply(Activation::relu, -2.0) == 0.0);
    Rng rng(8);
    for (int i = 0; i < 2000; ++i) {
        const double v = rng.normal() * 4.0;
        CHECK(std::fabs(apply(Activation::arctan, v) - std::atan(v)) <= 4e-16 * std::fabs(std::atan(v)));
        CHECK(std::fabs(apply(Activation::tanh, v) - std::tanh(v)) <= 4e-16 * std::max(std::fabs(std::tanh(v)), 1e-300));
    }
    for (Activation a : {Activation::arctan, Activation::tanh, Activation::relu}) {
        auto layer = make_layer(LayerSpec::act(a));
        Tensor x = random_tensor(1, {1, 1, 1, 50}, rng);
        for (double& v : x.data) v *= 3.0;
        Context ctx;
        layer->forward(x, ctx);
        Tensor ones(1, x.shape);
        std::fill(ones.data.begin(), ones.data.end(), 1.0);
        const Tensor g = layer->backward(ones, true);
        const double h = 1e-6;
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            if (a == Activation::relu && std::fabs(x.data[i]) < 1e-3) continue;
            const double num = (apply(a, x.data[i] + h) - apply(a, x.data[i] - h)) / (2 * h);
            CHECK(relative_error(g.data[i], num) < 1e-6);
        }
    }
}

TEST_CASE("layer gradients match finite differences") {
    Rng rng(9);
    SUBCASE("qconv") {
        auto l = make_layer(LayerSpec::qconv(2, 1, 2, 3));
        randomize(*l, rng);
        check_layer_gradients(*l, random_tensor(2, {4, 4, 5, 2}, rng), rng);
    }
    SUBCASE("qconv strided") {
        auto l = make_layer(LayerSpec::qconv(2, 2, 1, 2));
        randomize(*l, rng);
        check_layer_gradients(*l, random_tensor(2, {4, 4, 4, 1}, rng), rng);
    }
    SUBCASE("conv") {
        auto l = make_layer(LayerSpec::conv(3, 3, 2, 3));
        randomize(*l, rng);
        check_layer_gradients(*l, random_tensor(2, {4, 6, 6, 2}, rng), rng);
    }
    SUBCASE("conv overlapping") {
        auto l = make_layer(LayerSpec::conv(2, 1, 3, 2));
        randomize(*l, rng);
        check_layer_gradients(*l, random_tensor(2, {1, 4, 4, 3}, rng), rng);
    }
    SUBCASE("depthmix") {
        auto l = make_layer(LayerSpec::depthmix(3, 4));
        randomize(*l, rng);
        check_layer_gradients(*l, random_tensor(2, {4, 2, 2, 3}, rng), rng);
    }
    SUBCASE("dense") {
        auto l = make_layer(LayerSpec::dense(6, 4));
        randomize(*l, rng);
        check_layer_gradients(*l, random_tensor(3, {1, 1, 2, 3}, rng), rng);
    }
    SUBCASE("pad") {
        auto l = make_layer(LayerSpec::pad(1));
        check_layer_gradients(*l, random_tensor(2, {4, 3, 3, 2}, rng), rng);
    }
    SUBCASE("softmax") {
        auto l = make_layer(LayerSpec::softmax());
        check_layer_gradients(*l, random_tensor(2, {1, 1, 1, 9}, rng), rng);
    }
    SUBCASE("activations") {
        for (Activation a : {Activation::arctan, Activation::tanh, Activation::relu}) {
            auto l = make_layer(LayerSpec::act(a));
            check_layer_gradients(*l, random_tensor(2, {2, 3, 3, 2}, rng), rng);
        }
    }
}

TEST_CASE("dropout masks in training only") {
    auto layer = make_layer(LayerSpec::dropout(0.25));
    Rng rng(10);
    const Tensor x = random_tensor(1, {1, 1, 1, 4000}, rng);
    Context eval;
    CHECK(layer->forward(x, eval).data == x.data);
    Rng masks(11);
    Context train{true, &masks};
    const Tensor y = layer->forward(x, train);
    int dropped = 0;
    for (std::size_t i = 0; i < y.data.size(); ++i) {
        if (y.data[i] == 0.0)
            ++dropped;
        else
            CHECK(std::fabs(y.data[i] - x.data[i] / 0.75) < 1e-15);
    }
    CHECK(std::abs(dropped - 1000) < 120);
    // The backward pass reuses the mask.
    Tensor ones(1, x.shape);
    std::fill(ones.data.begin(), ones.data.end(), 1.0);
    const Tensor g = layer->backward(ones, true);
    for (std::size_t i = 0; i < g.data.size(); ++i) CHECK((g.data[i] == 0.0) == (y.data[i] == 0.0));
    Context missing{true, nullptr};
    CHECK_THROWS_AS(layer->forward(x, missing), ConfigError);
}

TEST_CASE("whole-network gradients match finite differences") {
    for (const std::string arch : {"qcnn", "cnn"})
        for (Activation act : {Activation::arctan, Activation::tanh, Activation::relu}) {
            CAPTURE(arch);
            Network net(small_config(arch, act), small_specs(arch, act));
            Rng rng(12);
            for (auto& p : net.parameters())
                for (std::size_t i = 0; i < p.size; ++i) p.value[i] = rng.uniform(-1.0, 1.0);
            std::vector<SpinTexture> ts;
            for (int i = 0; i < 3; ++i) ts.push_back(rotate(texture(1 + i, 1.0, 4), random_rotation(rng.bits())));
            const Tensor x = encode_batch({&ts[0], &ts[1], &ts[2]}, arch == "qcnn");
            const std::vector<int> labels{1, 4, 7};
            Context ctx;
            net.zero_grad();
            const Tensor p = net.forward(x, ctx);
            net.backward(p, labels);
            const auto loss = [&] {
                Context c;
                return cross_entropy(net.forward(x, c), labels);
            };
            const double h = 1e-5;
            for (auto& par : net.parameters())
                for (int t = 0; t < 5; ++t) {
                    const std::size_t i = rng.below(par.size);
                    const double keep = par.value[i];
                    par.value[i] = keep + h;
                    const double up = loss();
                    par.value[i] = keep - h;
                    const double down = loss();
                    par.value[i] = keep;
                    CAPTURE(par.name);
                    if (act == Activation::relu && std::fabs(up + down - 2 * loss()) > 1e-6) continue;  // kink
                    CHECK(relative_error(par.grad[i], (up - down) / (2 * h)) < 1e-4);
                }
        }
}

TEST_CASE("softmax and loss") {
    Network net(ModelConfig{});
    const SpinTexture t = rotate(texture(2, 1.0), random_rotation(5));
    Context ctx;
    const Tensor p = net.forward(encode_pure(t), ctx);
    double s = 0.0;
    for (double v : p.data) s += v;
    CHECK(std::fabs(s - 1.0) < 1e-9);
    CHECK(cross_entropy(p, {3}) >= 0.0);
    Tensor uniform(1, {1, 1, 1, 9});
    std::fill(uniform.data.begin(), uniform.data.end(), 1.0 / 9);
    CHECK(std::fabs(cross_entropy(uniform, {0}) - std::log(9.0)) < 1e-15);
    CHECK_THROWS_AS(cross_entropy(uniform, {0, 1}), ConfigError);
}

TEST_CASE("encodings") {
    const SpinTexture fm = fm_texture(1, 5);
    const Tensor q = encode_pure(fm);
    CHECK(q.shape == Shape{4, 5, 5, 1});
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) {
            CHECK(q.at(0, 0, y, x, 0) == 0.0);
            CHECK(q.at(0, 3, y, x, 0) == 1.0);
        }
    const SpinTexture t = texture(1, 1.0, 6);
    const Tensor a = encode_pure(t), b = encode_plain(t);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) {
            double n2 = 0.0;
            for (int d = 0; d < 4; ++d) n2 += a.at(0, d, y, x, 0) * a.at(0, d, y, x, 0);
            CHECK(std::fabs(n2 - 1.0) < 1e-12);
            for (int c = 0; c < 3; ++c) CHECK(a.at(0, c + 1, y, x, 0) == b.at(0, 0, y, x, c));
        }
}

TEST_CASE("non-finite values name the layer") {
    Network net(small_config("qcnn"), small_specs("qcnn", Activation::arctan));
    net.layer(3).params()[0].value[0] = std::numeric_limits<double>::quiet_NaN();
    const SpinTexture t = texture(1, 1.0, 4);
    Context ctx;
    try {
        net.forward(encode_pure(t), ctx);
        FAIL("expected a numerical error");
    } catch (const NumericalError& e) {
        CHECK(e.layer() == 3);
    }
}

TEST_CASE("parameter counts") {
    ModelConfig q, c;
    c.arch = "cnn";
    Network qn(q), cn(c);
    const auto nq = static_cast<double>(qn.param_count()), nc = static_cast<double>(cn.param_count());
    CHECK(nq < nc);
    CHECK(std::fabs(nq / 19350.0 - 1.0) <= 0.2);
    CHECK(std::fabs(nc / 24252.0 - 1.0) <= 0.2);
    CHECK(qn.input_shape() == Shape{4, 40, 40, 1});
    CHECK(cn.input_shape() == Shape{1, 40, 40, 3});
}

TEST_CASE("config text round trip") {
    ModelConfig cfg;
    cfg.arch = "cnn";
    cfg.activation = Activation::relu;
    cfg.widths = {3, 4, 5, 6};
    cfg.learning_rate = 0.00123;
    cfg.seed = 77;
    cfg.schedule = "constant";
    const ModelConfig back = ModelConfig::from_text(cfg.to_text());
    CHECK(back.to_text() == cfg.to_text());
    CHECK(back.schedule == "constant");
    CHECK_THROWS_AS(ModelConfig::from_text("schedule=step\n"), ConfigError);
    CHECK_THROWS_AS(ModelConfig::from_text("colour=blue\n"), ConfigError);
    CHECK_THROWS_AS(ModelConfig::from_text("epochs=ten\n"), ConfigError);
    CHECK_THROWS_AS(ModelConfig::from_text("arch=mlp\n"), ConfigError);
}

TEST_CASE("learning rate schedule") {
    ModelConfig cfg;
    cfg.epochs = 10;
    cfg.learning_rate = 0.01;
    cfg.schedule = "constant";
    CHECK(learning_rate_at(cfg, 7) == 0.01);
    cfg.schedule = "cosine";
    CHECK(learning_rate_at(cfg, 1) == doctest::Approx(0.01));
    CHECK(learning_rate_at(cfg, 6) == doctest::Approx(0.005));
    CHECK(learning_rate_at(cfg, 10) > 0.0);
    for (int e = 1; e < 10; ++e) CHECK(learning_rate_at(cfg, e + 1) < learning_rate_at(cfg, e));
}

TEST_CASE("optimizer") {
    ModelConfig cfg = small_config("qcnn");
    cfg.learning_rate = 0.0;
    Network net(cfg, small_specs("qcnn", Activation::arctan));
    std::vector<std::vector<double>> before;
    for (auto& p : net.parameters()) before.push_back(values_of(p));
    Adam adam(cfg);
    const SpinTexture t = texture(1, 1.0, 4);
    for (int step = 0; step < 3; ++step) {
        net.zero_grad();
        Context ctx;
        net.backward(net.forward(encode_pure(t), ctx), {5});
        adam.step(net.parameters());
    }
    std::size_t k = 0;
    for (auto& p : net.parameters()) CHECK(values_of(p) == before[k++]);
}

TEST_CASE("a single sample is fitted") {
    ModelConfig cfg;
    Network net(cfg);
    Adam adam(cfg);
    const SpinTexture t = rotate(texture(3, -1.0), random_rotation(8));
    const Tensor x = encode_pure(t);
    double loss = 0.0;
    Rng drop(1);
    for (int step = 0; step < 200; ++step) {
        net.zero_grad();
        Context ctx{true, &drop};
        loss = net.backward(net.forward(x, ctx), {class_index(-3)});
        adam.step(net.parameters());
    }
    Context ctx;
    CHECK(cross_entropy(net.forward(x, ctx), {class_index(-3)}) < 1e-2);
    CHECK(loss < 0.1);
}

TEST_CASE("training fits a toy set and is reproducible") {
    Dataset toy;
    toy.length = 8;
    Rng rng(14);
    for (int i = 0; i < 20; ++i) {
        const int c = 1 + i % 4;
        const double m = (i % 8 < 4 ? -1.0 : 1.0) * (i % 3 == 0 ? 3.0 : 1.0);
        LabeledSample s;
        s.texture = toy_texture(c, m, rng.bits());
        toy.samples.push_back(s);
    }
    std::vector<LabeledSample> v(toy.samples.begin(), toy.samples.begin() + 4);
    Dataset val;
    val.length = 8;
    val.samples = v;
    ModelConfig cfg;
    cfg.length = 8;
    cfg.widths = {8, 8, 8, 9};
    cfg.epochs = 200;
    cfg.batch_size = 5;
    cfg.learning_rate = 3e-3;
    cfg.seed = 3;
    const auto specs = [&] {
        std::vector<LayerSpec> s;
        s.push_back(LayerSpec::pad(1));
        s.push_back(LayerSpec::qconv(2, 1, 1, 8));
        s.push_back(LayerSpec::act(Activation::arctan));
        s.push_back(LayerSpec::conv(2, 2, 8, 8));
        s.push_back(LayerSpec::act(Activation::tanh));
        s.push_back(LayerSpec::conv(2, 2, 8, 8));
        s.push_back(LayerSpec::act(Activation::tanh));
        s.push_back(LayerSpec::conv(2, 2, 8, 9));
        s.push_back(LayerSpec::act(Activation::tanh));
        s.push_back(LayerSpec::dropout(0.2));
        s.push_back(LayerSpec::depthmix(9, kClasses));
        s.push_back(LayerSpec::softmax());
        return s;
    }();
    Network a(cfg, specs);
    const auto curve = train(a, toy, val);
    REQUIRE(curve.size() == 200);
    const EvalResult r = evaluate(a, toy);
    CHECK(r.accuracy() == 1.0);
    const auto counts = toy.class_counts();
    for (int k = 0; k < kClasses; ++k) {
        int row = 0;
        for (int p = 0; p < kClasses; ++p) row += r.confusion[k][p];
        CHECK(row == counts[k]);
    }
    // A second run with the same seed reproduces every record bit for bit.
    cfg.epochs = 5;
    Network b(cfg, specs), c(cfg, specs);
    const auto cb = train(b, toy, val), cc = train(c, toy, val);
    for (std::size_t e = 0; e < cb.size(); ++e) {
        CHECK(cb[e].train_loss == cc[e].train_loss);
        CHECK(cb[e].val_loss == cc[e].val_loss);
        CHECK(cb[e].train_acc == cc[e].train_acc);
    }
    auto pb = b.parameters(), pc = c.parameters();
    for (std::size_t k = 0; k < pb.size(); ++k) CHECK(values_of(pb[k]) == values_of(pc[k]));
}

TEST_CASE("checkpoint round trip") {
    ModelConfig cfg;
    cfg.arch = "cnn";
    cfg.seed = 5;
    Network net(cfg);
    const auto bytes = serialize_checkpoint(net);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "QNN1");
    Network back = deserialize_checkpoint(bytes);
    CHECK(back.config().to_text() == cfg.to_text());
    CHECK(serialize_checkpoint(back) == bytes);
    const SpinTexture t = texture(2, -1.0);
    Context c1, c2;
    CHECK(net.forward(encode_plain(t), c1).data == back.forward(encode_plain(t), c2).data);
    for (std::size_t cut : {std::size_t{3}, std::size_t{30}, bytes.size() - 1}) {
        std::vector<std::uint8_t> shorter(bytes.begin(), bytes.begin() + static_cast<long>(cut));
        CHECK_THROWS_AS(deserialize_checkpoint(shorter), FormatError);
    }
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(deserialize_checkpoint(bad), FormatError);
    auto longer = bytes;
    longer.push_back(0);
    CHECK_THROWS_AS(deserialize_checkpoint(longer), FormatError);
}
