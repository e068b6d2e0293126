#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "qtopo/nn/layers.hpp"
#include "qtopo/spin_models.hpp"

namespace qtopo::nn {

inline constexpr int kClasses = 9;

// Everything needed to rebuild and retrain a model. Serialized as
// key=value lines inside checkpoints.
struct ModelConfig {
    std::string arch = "qcnn";  // qcnn or cnn
    Activation activation = Activation::arctan;  // first layer
    std::vector<int> widths;     // channel widths; empty means the arch default
    int length = kDefaultLength;
    double dropout = 0.2;
    std::string optimizer = "adam";
    double learning_rate = 1e-3;
    std::string schedule = "cosine";  // constant or cosine (per epoch, down to zero)
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int epochs = 120;
    int batch_size = 32;
    std::uint64_t seed = 42;

    std::string to_text() const;
    static ModelConfig from_text(std::string_view text);
    std::vector<int> resolved_widths() const;
    bool quaternion_input() const { return arch == "qcnn"; }
};

std::vector<int> default_widths(std::string_view arch);
// Learning rate used throughout the given 1-based epoch.
double learning_rate_at(const ModelConfig& cfg, int epoch);
std::vector<LayerSpec> architecture(const ModelConfig& cfg);

class Network {
public:
    explicit Network(const ModelConfig& cfg);
    Network(const ModelConfig& cfg, const std::vector<LayerSpec>& specs);
    Network(const Network& other);
    Network& operator=(const Network& other);
    Network(Network&&) = default;
    Network& operator=(Network&&) = default;

    const ModelConfig& config() const { return config_; }
    Shape input_shape() const { return input_; }
    std::size_t layer_count() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return *layers_[i]; }

    // Probabilities over the nine classes. Throws NumericalError on NaN/Inf.
    Tensor forward(const Tensor& x, Context& ctx);
    // Mean cross-entropy gradient of the last forward pass, accumulated into
    // the parameter gradients. Returns the loss.
    double backward(const Tensor& probs, const std::vector<int>& labels);
    void zero_grad();
    std::vector<ParamRef> parameters();
    std::size_t param_count();

private:
    void build(const std::vector<LayerSpec>& specs);

    ModelConfig config_;
    Shape input_;
    std::vector<std::unique_ptr<Layer>> layers_;
};

// Mean of -log p[label] over the batch; labels are class indices 0..8.
double cross_entropy(const Tensor& probs, const std::vector<int>& labels);

// (4, L, L, 1) with depth slices (0, nx, ny, nz).
Tensor encode_pure(const SpinTexture& t);
// (1, L, L, 3) channel layout for the plain CNN.
Tensor encode_plain(const SpinTexture& t);
Tensor encode_batch(const std::vector<const SpinTexture*>& batch, bool quaternion);

class Adam {
public:
    explicit Adam(const ModelConfig& cfg) : cfg_(cfg) {}
    void step(const std::vector<ParamRef>& params);
    void set_learning_rate(double lr) { cfg_.learning_rate = lr; }
    long steps() const { return t_; }

private:
    ModelConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

}  // namespace qtopo::nn
