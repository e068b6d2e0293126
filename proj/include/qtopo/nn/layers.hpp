#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "qtopo/nn/tensor.hpp"
#include "qtopo/rng.hpp"

namespace qtopo::nn {

enum class LayerKind : std::uint8_t {
    pad = 0,
    qconv = 1,
    conv = 2,
    depthmix = 3,
    dense = 4,
    activation = 5,
    dropout = 6,
    softmax = 7,
};

enum class Activation : std::uint8_t { none = 0, arctan = 1, tanh = 2, relu = 3 };

std::string_view kind_name(LayerKind k);
std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view s);

struct LayerSpec {
    LayerKind kind = LayerKind::activation;
    int kh = 1, kw = 1;  // kernel extent, or padding for pad layers
    int sh = 1, sw = 1;  // stride
    int cin = 0, cout = 0;
    Activation activation = Activation::none;
    double rate = 0.0;  // dropout rate

    static LayerSpec pad(int p);
    static LayerSpec qconv(int k, int stride, int cin, int cout);
    static LayerSpec conv(int k, int stride, int cin, int cout);
    static LayerSpec depthmix(int cin, int cout);
    static LayerSpec dense(int in, int out);
    static LayerSpec act(Activation a);
    static LayerSpec dropout(double rate);
    static LayerSpec softmax();
};

struct ParamRef {
    std::string name;
    double* value;
    double* grad;
    std::size_t size;
};

struct Context {
    bool training = false;
    Rng* rng = nullptr;  // dropout masks
};

class Layer {
public:
    explicit Layer(LayerSpec spec) : spec_(spec) {}
    virtual ~Layer() = default;

    const LayerSpec& spec() const { return spec_; }
    virtual Shape output_shape(const Shape& in) const = 0;
    virtual Tensor forward(Tensor x, Context& ctx) = 0;
    // Uses the input cached by the last forward; accumulates parameter
    // gradients. The input gradient is skipped when need_input_grad is false.
    virtual Tensor backward(Tensor grad_out, bool need_input_grad) = 0;
    virtual std::vector<ParamRef> params() { return {}; }
    // Glorot-uniform weights, zero biases.
    virtual void initialize(Rng&) {}
    virtual std::unique_ptr<Layer> clone() const = 0;

    std::size_t param_count();

protected:
    LayerSpec spec_;
};

std::unique_ptr<Layer> make_layer(const LayerSpec& spec);

// R(q) block of the q-conv weight: out_s = sum_d sign[s][d] * K[index[s][d]] * x_d,
// which is the Hamilton product x K.
inline constexpr int kQuatIndex[4][4] = {{0, 1, 2, 3}, {1, 0, 3, 2}, {2, 3, 0, 1}, {3, 2, 1, 0}};
inline constexpr double kQuatSign[4][4] = {{1, -1, -1, -1}, {1, 1, 1, -1}, {1, -1, 1, 1}, {1, 1, -1, 1}};

// Reference loops used by the tests.
Tensor conv_reference(const Tensor& x, const std::vector<double>& w, const std::vector<double>& b,
                      const LayerSpec& spec);
Tensor qconv_reference(const Tensor& x, const std::vector<double>& k, const std::vector<double>& b,
                       const LayerSpec& spec);
Tensor depthmix_reference(const Tensor& x, const std::vector<double>& w, const std::vector<double>& b,
                          const LayerSpec& spec);

}  // namespace qtopo::nn
