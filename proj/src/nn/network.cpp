#include "qtopo/nn/network.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <sstream>

#include "qtopo/errors.hpp"
#include "qtopo/rng.hpp"

namespace qtopo::nn {

namespace {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("bad value for " + key + ": " + v);
    }
}

long long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long long d = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("bad value for " + key + ": " + v);
    }
}

}  // namespace

std::vector<int> default_widths(std::string_view arch) {
    if (arch == "qcnn") return {16, 32, 12, 9};
    if (arch == "cnn") return {24, 32, 8, 9};
    throw ConfigError("unknown architecture " + std::string(arch));
}

double learning_rate_at(const ModelConfig& cfg, int epoch) {
    if (cfg.schedule != "cosine" || cfg.epochs <= 0) return cfg.learning_rate;
    const double t = static_cast<double>(epoch - 1) / cfg.epochs;
    return 0.5 * cfg.learning_rate * (1.0 + std::cos(std::numbers::pi * t));
}

std::vector<int> ModelConfig::resolved_widths() const {
    return widths.empty() ? default_widths(arch) : widths;
}

std::string ModelConfig::to_text() const {
    std::ostringstream out;
    out << "arch=" << arch << '\n' << "activation=" << activation_name(activation) << '\n' << "widths=";
    const auto w = resolved_widths();
    for (std::size_t i = 0; i < w.size(); ++i) out << (i ? "," : "") << w[i];
    out << '\n'
        << "length=" << length << '\n'
        << "dropout=" << format_double(dropout) << '\n'
        << "optimizer=" << optimizer << '\n'
        << "learning_rate=" << format_double(learning_rate) << '\n'
        << "schedule=" << schedule << '\n'
        << "beta1=" << format_double(beta1) << '\n'
        << "beta2=" << format_double(beta2) << '\n'
        << "epsilon=" << format_double(epsilon) << '\n'
        << "epochs=" << epochs << '\n'
        << "batch_size=" << batch_size << '\n'
        << "seed=" << seed << '\n';
    return out.str();
}

ModelConfig ModelConfig::from_text(std::string_view text) {
    ModelConfig cfg;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError("config line without '=': " + t);
        const std::string key = trim(t.substr(0, eq));
        const std::string val = trim(t.substr(eq + 1));
        if (key == "arch") {
            default_widths(val);
            cfg.arch = val;
        } else if (key == "activation") {
            cfg.activation = parse_activation(val);
        } else if (key == "widths") {
            cfg.widths.clear();
            std::istringstream ws(val);
            std::string item;
            while (std::getline(ws, item, ',')) cfg.widths.push_back(static_cast<int>(parse_int(key, trim(item))));
        } else if (key == "length") {
            cfg.length = static_cast<int>(parse_int(key, val));
        } else if (key == "dropout") {
            cfg.dropout = parse_double(key, val);
        } else if (key == "optimizer") {
            if (val != "adam") throw ConfigError("unsupported optimizer " + val);
            cfg.optimizer = val;
        } else if (key == "learning_rate") {
            cfg.learning_rate = parse_double(key, val);
        } else if (key == "schedule") {
            if (val != "constant" && val != "cosine") throw ConfigError("unknown schedule " + val);
            cfg.schedule = val;
        } else if (key == "beta1") {
            cfg.beta1 = parse_double(key, val);
        } else if (key == "beta2") {
            cfg.beta2 = parse_double(key, val);
        } else if (key == "epsilon") {
            cfg.epsilon = parse_double(key, val);
        } else if (key == "epochs") {
            cfg.epochs = static_cast<int>(parse_int(key, val));
        } else if (key == "batch_size") {
            cfg.batch_size = static_cast<int>(parse_int(key, val));
        } else if (key == "seed") {
            cfg.seed = static_cast<std::uint64_t>(parse_int(key, val));
        } else {
            throw ConfigError("unknown config key " + key);
        }
    }
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be positive");
    if (cfg.epochs < 0) throw ConfigError("epochs must be non-negative");
    return cfg;
}

std::vector<LayerSpec> architecture(const ModelConfig& cfg) {
    const auto w = cfg.resolved_widths();
    if (w.size() != 4) throw ConfigError("expected four channel widths");
    std::vector<LayerSpec> s;
    s.push_back(LayerSpec::pad(1));
    if (cfg.arch == "qcnn")
        s.push_back(LayerSpec::qconv(2, 1, 1, w[0]));
    else
        s.push_back(LayerSpec::conv(2, 1, 3, w[0]));
    s.push_back(LayerSpec::act(cfg.activation));
    s.push_back(LayerSpec::conv(5, 5, w[0], w[1]));
    s.push_back(LayerSpec::act(Activation::tanh));
    s.push_back(LayerSpec::conv(4, 4, w[1], w[2]));
    s.push_back(LayerSpec::act(Activation::tanh));
    s.push_back(LayerSpec::conv(2, 2, w[2], w[3]));
    s.push_back(LayerSpec::act(Activation::tanh));
    s.push_back(LayerSpec::dropout(cfg.dropout));
    if (cfg.arch == "qcnn")
        s.push_back(LayerSpec::depthmix(w[3], kClasses));
    else
        s.push_back(LayerSpec::dense(w[3], kClasses));
    s.push_back(LayerSpec::softmax());
    return s;
}

Network::Network(const ModelConfig& cfg) : Network(cfg, architecture(cfg)) {}

Network::Network(const ModelConfig& cfg, const std::vector<LayerSpec>& specs) : config_(cfg) {
    input_ = cfg.quaternion_input() ? Shape{4, cfg.length, cfg.length, 1} : Shape{1, cfg.length, cfg.length, 3};
    build(specs);
}

Network::Network(const Network& other) : config_(other.config_), input_(other.input_) {
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Network& Network::operator=(const Network& other) {
    if (this != &other) {
        Network copy(other);
        *this = std::move(copy);
    }
    return *this;
}

void Network::build(const std::vector<LayerSpec>& specs) {
    Shape s = input_;
    Rng rng(derive_seed(config_.seed, Stream::init));
    for (const auto& spec : specs) {
        layers_.push_back(make_layer(spec));
        s = layers_.back()->output_shape(s);
        layers_.back()->initialize(rng);
    }
    if (s.size() != static_cast<std::size_t>(kClasses))
        throw ConfigError("network output shape " + s.str() + " is not nine classes");
    if (specs.empty() || specs.back().kind != LayerKind::softmax)
        throw ConfigError("network must end with softmax");
}

Tensor Network::forward(const Tensor& x, Context& ctx) {
    if (!(x.shape == input_)) throw ConfigError("input shape " + x.shape.str() + " expected " + input_.str());
    Tensor h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        h = layers_[i]->forward(std::move(h), ctx);
        if (!h.all_finite())
            throw NumericalError("non-finite value after layer " + std::to_string(i) + " (" +
                                     std::string(kind_name(layers_[i]->spec().kind)) + ")",
                                 static_cast<int>(i));
    }
    return h;
}

double cross_entropy(const Tensor& probs, const std::vector<int>& labels) {
    if (static_cast<std::size_t>(probs.n) != labels.size()) throw ConfigError("label count mismatch");
    double loss = 0.0;
    for (int b = 0; b < probs.n; ++b) {
        const double p = probs.sample(b)[labels[b]];
        loss -= std::log(std::max(p, 1e-300));
    }
    return probs.n ? loss / probs.n : 0.0;
}

double Network::backward(const Tensor& probs, const std::vector<int>& labels) {
    const double loss = cross_entropy(probs, labels);
    // Softmax and cross-entropy combine to (p - onehot) / N at the logits.
    Tensor g = probs;
    for (int b = 0; b < g.n; ++b) {
        double* row = g.sample(b);
        row[labels[b]] -= 1.0;
        for (std::size_t i = 0; i < g.shape.size(); ++i) row[i] /= g.n;
    }
    std::size_t first_param = layers_.size();
    for (std::size_t i = 0; i < layers_.size(); ++i)
        if (layers_[i]->param_count() > 0) {
            first_param = i;
            break;
        }
    for (std::size_t i = layers_.size() - 1; i-- > 0;) {
        if (i < first_param) break;
        g = layers_[i]->backward(std::move(g), i > first_param);
    }
    return loss;
}

void Network::zero_grad() {
    for (auto& p : parameters()) std::fill(p.grad, p.grad + p.size, 0.0);
}

std::vector<ParamRef> Network::parameters() {
    std::vector<ParamRef> out;
    for (std::size_t i = 0; i < layers_.size(); ++i)
        for (auto p : layers_[i]->params()) {
            p.name = std::to_string(i) + "." + std::string(kind_name(layers_[i]->spec().kind)) + "." + p.name;
            out.push_back(p);
        }
    return out;
}

std::size_t Network::param_count() {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l->param_count();
    return n;
}

Tensor encode_pure(const SpinTexture& t) {
    return encode_batch({&t}, true);
}

Tensor encode_plain(const SpinTexture& t) {
    return encode_batch({&t}, false);
}

Tensor encode_batch(const std::vector<const SpinTexture*>& batch, bool quaternion) {
    if (batch.empty()) return {};
    const int L = batch.front()->length;
    Tensor out(static_cast<int>(batch.size()), quaternion ? Shape{4, L, L, 1} : Shape{1, L, L, 3});
    for (int b = 0; b < out.n; ++b) {
        const SpinTexture& t = *batch[b];
        if (t.length != L) throw ConfigError("mixed lattice sizes in one batch");
        for (int i = 0; i < L; ++i)
            for (int j = 0; j < L; ++j) {
                const Vec3& v = t.at(i, j);
                for (int comp = 0; comp < 3; ++comp) {
                    if (quaternion)
                        out.at(b, comp + 1, i, j, 0) = v[comp];
                    else
                        out.at(b, 0, i, j, comp) = v[comp];
                }
            }
    }
    return out;
}

void Adam::step(const std::vector<ParamRef>& params) {
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.emplace_back(p.size, 0.0);
            v_.emplace_back(p.size, 0.0);
        }
    }
    if (m_.size() != params.size()) throw ConfigError("optimizer state does not match parameters");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        const ParamRef& p = params[k];
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < p.size; ++i) {
            const double g = p.grad[i];
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            p.value[i] -= cfg_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.epsilon);
        }
    }
}

}  // namespace qtopo::nn
