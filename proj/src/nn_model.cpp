#include "eegcsr/nn.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace eegcsr::nn {

// ---------------------------------------------------------------------------
// Model

Layer& Model::add(std::unique_ptr<Layer> layer) {
    if (layer == nullptr) throw std::invalid_argument("cannot add a null layer");
    for (const auto& l : layers_) {
        if (l->name() == layer->name())
            throw std::invalid_argument("duplicate layer name '" + layer->name() + "'");
    }
    layers_.push_back(std::move(layer));
    return *layers_.back();
}

Tensor Model::forward(const Tensor& x, const RunContext& ctx) {
    if (layers_.empty()) throw std::logic_error("forward on an empty model");
    Tensor cur = x;
    for (auto& layer : layers_) cur = layer->forward(cur, ctx);
    forward_done_ = true;
    return cur;
}

Tensor Model::backward(const Tensor& grad_out) {
    if (!forward_done_)
        throw std::logic_error("model backward called without a preceding forward pass");
    Tensor g = grad_out;
    for (std::size_t i = layers_.size(); i-- > 0;) {
        if (layers_[i]->frozen()) {
            // Propagate the input gradient but discard parameter gradients.
            std::vector<ParamRef> ps = layers_[i]->params();
            std::vector<Tensor> saved;
            saved.reserve(ps.size());
            for (ParamRef& p : ps) saved.push_back(*p.grad);
            g = layers_[i]->backward(g);
            for (std::size_t k = 0; k < ps.size(); ++k) *ps[k].grad = saved[k];
        } else {
            g = layers_[i]->backward(g);
        }
    }
    forward_done_ = false;
    return g;
}

void Model::zero_grads() {
    for (auto& layer : layers_) layer->zero_grads();
}

void Model::scale_grads(double factor) {
    for (auto& layer : layers_) {
        for (ParamRef& p : layer->params()) {
            for (double& v : p.grad->values()) v *= factor;
        }
    }
}

std::vector<ParamRef> Model::trainable_params() {
    std::vector<ParamRef> out;
    for (auto& layer : layers_) {
        if (layer->frozen()) continue;
        for (ParamRef& p : layer->params()) out.push_back(p);
    }
    return out;
}

std::vector<ParamRef> Model::all_params() {
    std::vector<ParamRef> out;
    for (auto& layer : layers_) {
        for (ParamRef& p : layer->params()) {
            p.trainable = !layer->frozen();
            out.push_back(p);
        }
    }
    return out;
}

std::vector<StateRef> Model::all_state() {
    std::vector<StateRef> out;
    for (auto& layer : layers_) {
        for (StateRef& s : layer->state()) out.push_back(s);
    }
    return out;
}

Layer& Model::layer_at(std::size_t i) {
    if (i >= layers_.size())
        throw std::out_of_range("layer index " + std::to_string(i) + " out of range");
    return *layers_[i];
}

const Layer& Model::layer_at(std::size_t i) const {
    if (i >= layers_.size())
        throw std::out_of_range("layer index " + std::to_string(i) + " out of range");
    return *layers_[i];
}

Layer& Model::layer(const std::string& name) {
    for (auto& l : layers_) {
        if (l->name() == name) return *l;
    }
    throw std::out_of_range("no layer named '" + name + "'");
}

bool Model::has_layer(const std::string& name) const {
    for (const auto& l : layers_) {
        if (l->name() == name) return true;
    }
    return false;
}

// ---------------------------------------------------------------------------
// Adam

AdamOptimizer::AdamOptimizer(double lr, double beta1, double beta2, double epsilon)
    : lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
    if (!(lr > 0.0)) throw std::invalid_argument("adam learning rate must be > 0");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw std::invalid_argument("adam betas must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("adam epsilon must be > 0");
}

void AdamOptimizer::step(Model& model) {
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (ParamRef& p : model.trainable_params()) {
        const std::string key = p.qualified();
        auto mit = m_.find(key);
        if (mit == m_.end()) {
            mit = m_.emplace(key, Tensor(p.value->shape())).first;
            v_.emplace(key, Tensor(p.value->shape()));
        }
        Tensor& m = mit->second;
        Tensor& v = v_.at(key);
        if (!m.same_shape(*p.value))
            throw std::invalid_argument("adam moment shape mismatch for " + key);
        for (std::size_t i = 0; i < p.value->size(); ++i) {
            const double g = (*p.grad)[i];
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            (*p.value)[i] -= lr_ * mhat / (std::sqrt(vhat) + epsilon_);
        }
    }
}

// ---------------------------------------------------------------------------
// Builders

Model build_regression_model(std::size_t d_in, std::size_t d_out, Rng& rng) {
    Model m;
    m.add(std::make_unique<Gru>("gru128", d_in, 128, &rng));
    m.add(std::make_unique<Dropout>("drop1", 0.1));
    m.add(std::make_unique<Gru>("gru64", 128, 64, &rng));
    m.add(std::make_unique<Dropout>("drop2", 0.1));
    m.add(std::make_unique<Dense>("dense", 64, d_out, &rng));
    return m;
}

Model build_ctc_model(std::size_t d_in, std::size_t vocab_plus_blank, CtcVariant variant,
                      bool batchnorm, Rng& rng) {
    if (vocab_plus_blank < 2)
        throw std::invalid_argument("ctc model needs at least 2 output classes, got " +
                                    std::to_string(vocab_plus_blank));
    Model m;
    m.add(std::make_unique<Gru>("gru128", d_in, 128, &rng, 0.1));
    m.add(std::make_unique<Gru>("gru64", 128, 64, &rng, 0.1));
    if (variant == CtcVariant::kExtended) {
        Layer& e1 = m.add(std::make_unique<Gru>("gru128_ext", 64, 128, &rng));
        Layer& e2 = m.add(std::make_unique<Gru>("gru64_ext", 128, 64, &rng));
        e1.set_frozen(true);
        e2.set_frozen(true);
    }
    // The TCN dropout configuration rides with the batchnorm flag (the two are
    // enabled together for the noisier-data setting).
    m.add(std::make_unique<TcnBlock>("tcn32", 64, 32, &rng, std::vector<std::size_t>{1, 2, 4, 8},
                                     batchnorm, batchnorm ? 0.1 : 0.0));
    m.add(std::make_unique<Dense>("dense", 32, vocab_plus_blank, &rng));
    m.add(std::make_unique<Softmax>("softmax"));
    return m;
}

Model build_articulatory_model(std::size_t d_in, std::size_t d_out, Rng& rng) {
    Model m;
    m.add(std::make_unique<TcnBlock>("tcn128", d_in, 128, &rng));
    m.add(std::make_unique<Dropout>("drop", 0.2));
    m.add(std::make_unique<Dense>("dense", 128, d_out, &rng));
    return m;
}

namespace {

std::vector<Gru*> gru_layers(Model& m) {
    std::vector<Gru*> out;
    for (std::size_t i = 0; i < m.layer_count(); ++i) {
        if (auto* g = dynamic_cast<Gru*>(&m.layer_at(i))) out.push_back(g);
    }
    return out;
}

} // namespace

void transplant_gru_weights(Model& source, Model& target) {
    std::vector<Gru*> src = gru_layers(source);
    std::vector<Gru*> dst = gru_layers(target);
    if (src.size() < 2 || dst.size() < 2)
        throw std::invalid_argument("transplant needs two GRU layers on each side (source has " +
                                    std::to_string(src.size()) + ", target has " +
                                    std::to_string(dst.size()) + ")");
    for (int i = 0; i < 2; ++i) {
        std::vector<ParamRef> sp = src[i]->params();
        std::vector<ParamRef> dp = dst[i]->params();
        for (std::size_t k = 0; k < sp.size(); ++k) {
            if (!sp[k].value->same_shape(*dp[k].value))
                throw std::invalid_argument("transplant shape mismatch at " + dp[k].qualified() +
                                            ": source " + sp[k].value->shape_str() + " vs target " +
                                            dp[k].value->shape_str());
        }
        for (std::size_t k = 0; k < sp.size(); ++k) *dp[k].value = *sp[k].value;
    }
}

int seed_extended_layers(Model& donor, Model& target) {
    std::vector<Gru*> src = gru_layers(donor);
    if (src.size() < 2)
        throw std::invalid_argument("extended-layer donor must contain two GRU layers");
    Gru* dst[2];
    dst[0] = dynamic_cast<Gru*>(&target.layer("gru128_ext"));
    dst[1] = dynamic_cast<Gru*>(&target.layer("gru64_ext"));
    int copied = 0;
    for (int i = 0; i < 2; ++i) {
        std::vector<ParamRef> sp = src[static_cast<std::size_t>(i)]->params();
        std::vector<ParamRef> dp = dst[i]->params();
        for (std::size_t k = 0; k < sp.size(); ++k) {
            if (sp[k].value->same_shape(*dp[k].value)) {
                *dp[k].value = *sp[k].value;
                ++copied;
            }
        }
    }
    return copied;
}

// ---------------------------------------------------------------------------
// Descriptor round-trip

namespace {

struct Descriptor {
    std::string kind;
    std::map<std::string, std::string> attrs;
};

Descriptor parse_descriptor(const std::string& text) {
    std::istringstream is(text);
    Descriptor d;
    if (!(is >> d.kind)) throw std::runtime_error("empty layer descriptor");
    std::string tok;
    while (is >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("malformed descriptor token '" + tok + "' in '" + text + "'");
        d.attrs[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    return d;
}

std::size_t attr_size(const Descriptor& d, const std::string& key) {
    auto it = d.attrs.find(key);
    if (it == d.attrs.end())
        throw std::runtime_error("layer descriptor missing attribute '" + key + "'");
    return static_cast<std::size_t>(std::stoul(it->second));
}

double attr_real(const Descriptor& d, const std::string& key, double fallback) {
    auto it = d.attrs.find(key);
    if (it == d.attrs.end()) return fallback;
    return std::stod(it->second);
}

} // namespace

std::unique_ptr<Layer> layer_from_descriptor(const std::string& name,
                                             const std::string& descriptor) {
    Descriptor d = parse_descriptor(descriptor);
    if (d.kind == "dense") {
        return std::make_unique<Dense>(name, attr_size(d, "in"), attr_size(d, "out"), nullptr);
    }
    if (d.kind == "gru") {
        return std::make_unique<Gru>(name, attr_size(d, "in"), attr_size(d, "hidden"), nullptr,
                                     attr_real(d, "dropout", 0.0));
    }
    if (d.kind == "tcn") {
        auto it = d.attrs.find("dilations");
        if (it == d.attrs.end()) throw std::runtime_error("tcn descriptor missing dilations");
        std::vector<std::size_t> dil;
        std::istringstream ds(it->second);
        std::string piece;
        while (std::getline(ds, piece, ',')) dil.push_back(std::stoul(piece));
        const bool bn = attr_size(d, "batchnorm") != 0;
        return std::make_unique<TcnBlock>(name, attr_size(d, "in"), attr_size(d, "out"), nullptr,
                                          dil, bn, attr_real(d, "dropout", 0.0));
    }
    if (d.kind == "batchnorm") {
        return std::make_unique<BatchNorm>(name, attr_size(d, "channels"));
    }
    if (d.kind == "dropout") {
        return std::make_unique<Dropout>(name, attr_real(d, "rate", 0.0));
    }
    if (d.kind == "softmax") {
        return std::make_unique<Softmax>(name);
    }
    throw std::runtime_error("unknown layer kind '" + d.kind + "'");
}

} // namespace eegcsr::nn
