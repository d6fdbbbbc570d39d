#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "eegcsr/rng.hpp"
#include "eegcsr/tensor.hpp"

namespace eegcsr::nn {

enum class Mode { kTrain, kInfer };

// Passed through forward passes: mode selects dropout/batch-norm behaviour,
// rng supplies dropout masks (required in train mode when any dropout is live).
struct RunContext {
    Mode mode = Mode::kInfer;
    Rng* rng = nullptr;
};

struct ParamRef {
    std::string layer;
    std::string param;
    Tensor* value = nullptr;
    Tensor* grad = nullptr;
    bool trainable = true;

    std::string qualified() const { return layer + "." + param; }
};

// Named persistent (non-gradient) state, e.g. batch-norm running statistics.
struct StateRef {
    std::string layer;
    std::string param;
    Tensor* value = nullptr;

    std::string qualified() const { return layer + "." + param; }
};

// Sequence layers map [T x D_in] to [T x D_out]. forward caches whatever
// backward needs; backward accumulates into the layer-held gradient tensors
// and returns the input gradient. Calling backward without a preceding
// forward is a state error.
class Layer {
public:
    explicit Layer(std::string name) : name_(std::move(name)) {}
    virtual ~Layer() = default;

    const std::string& name() const { return name_; }
    bool frozen() const { return frozen_; }
    void set_frozen(bool f) { frozen_ = f; }

    virtual Tensor forward(const Tensor& x, const RunContext& ctx) = 0;
    virtual Tensor backward(const Tensor& grad_out) = 0;

    // Trainable parameters paired with their gradient accumulators.
    virtual std::vector<ParamRef> params() { return {}; }
    // Additional tensors that must persist in checkpoints (never trained).
    virtual std::vector<StateRef> state() { return {}; }

    virtual std::size_t output_dim(std::size_t input_dim) const = 0;

    // "kind key=value ..." string sufficient to reconstruct the layer via
    // layer_from_descriptor (parameter values travel separately).
    virtual std::string descriptor() const = 0;

    void zero_grads();

protected:
    void require_cache(const char* op) const;
    bool has_cache_ = false;

private:
    std::string name_;
    bool frozen_ = false;
};

// y_t = W x_t + b, linear activation.
class Dense : public Layer {
public:
    Dense(std::string name, std::size_t d_in, std::size_t d_out, Rng* rng);

    Tensor forward(const Tensor& x, const RunContext& ctx) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<ParamRef> params() override;
    std::size_t output_dim(std::size_t input_dim) const override;
    std::string descriptor() const override;

    Tensor& weight() { return w_; }
    Tensor& bias() { return b_; }

private:
    std::size_t d_in_, d_out_;
    Tensor w_, b_, gw_, gb_;
    Tensor x_cache_;
};

// Gated recurrent unit, h0 = 0:
//   z = sigmoid(W_z x + U_z h + b_z)
//   r = sigmoid(W_r x + U_r h + b_r)
//   hcand = tanh(W_h x + U_h (r*h) + b_h)
//   h' = (1-z)*h + z*hcand
// An optional inverted-dropout mask on the emitted hidden sequence (not the
// recurrence) implements the in-layer dropout configuration.
class Gru : public Layer {
public:
    Gru(std::string name, std::size_t d_in, std::size_t hidden, Rng* rng,
        double output_dropout = 0.0);

    Tensor forward(const Tensor& x, const RunContext& ctx) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<ParamRef> params() override;
    std::size_t output_dim(std::size_t input_dim) const override;
    std::string descriptor() const override;

    std::size_t hidden() const { return hidden_; }
    std::size_t input_dim() const { return d_in_; }

private:
    std::size_t d_in_, hidden_;
    double dropout_rate_;
    Tensor wz_, wr_, wh_, uz_, ur_, uh_, bz_, br_, bh_;
    Tensor gwz_, gwr_, gwh_, guz_, gur_, guh_, gbz_, gbr_, gbh_;
    Tensor x_cache_, z_cache_, r_cache_, hc_cache_, h_cache_, mask_cache_;
    bool mask_active_ = false;
};

// Per-channel batch normalization over the time axis, shared between the
// standalone layer and the TCN block.
struct BnUnit {
    explicit BnUnit(std::size_t channels);

    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& grad_out);

    std::size_t channels = 0;
    double momentum = 0.99;
    double epsilon = 1e-5;
    Tensor gamma, beta, ggamma, gbeta;
    Tensor running_mean, running_var;
    Tensor trained_flag; // [1], 0 until the first train-mode pass

    Tensor xhat_cache;
    Tensor inv_std_cache; // [C], train-mode batch inv std (or running in infer)
    Mode cached_mode = Mode::kInfer;
    bool has_cache = false;
};

class BatchNorm : public Layer {
public:
    BatchNorm(std::string name, std::size_t channels);

    Tensor forward(const Tensor& x, const RunContext& ctx) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<ParamRef> params() override;
    std::vector<StateRef> state() override;
    std::size_t output_dim(std::size_t input_dim) const override;
    std::string descriptor() const override;

private:
    BnUnit bn_;
};

// Inverted dropout: train mode zeroes each element with probability rate and
// scales survivors by 1/(1-rate); infer mode is the identity.
class Dropout : public Layer {
public:
    Dropout(std::string name, double rate);

    Tensor forward(const Tensor& x, const RunContext& ctx) override;
    Tensor backward(const Tensor& grad_out) override;
    std::size_t output_dim(std::size_t input_dim) const override;
    std::string descriptor() const override;

private:
    double rate_;
    Tensor mask_cache_;
    bool mask_active_ = false;
};

// One causal residual stack: width-2 dilated convolutions (dilations
// configurable, default 1,2,4,8) with linear activations, optional batch norm
// and dropout after each convolution, plus a residual connection (1x1
// projection when channel counts differ, identity otherwise).
class TcnBlock : public Layer {
public:
    TcnBlock(std::string name, std::size_t c_in, std::size_t c_out, Rng* rng,
             std::vector<std::size_t> dilations = {1, 2, 4, 8}, bool batchnorm = false,
             double dropout = 0.0);

    Tensor forward(const Tensor& x, const RunContext& ctx) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<ParamRef> params() override;
    std::vector<StateRef> state() override;
    std::size_t output_dim(std::size_t input_dim) const override;
    std::string descriptor() const override;

private:
    struct Conv {
        Tensor past, present, bias;      // past/present taps [C_out x C_in]
        Tensor gpast, gpresent, gbias;
        std::size_t dilation = 1;
        Tensor in_cache;                 // input sequence to this conv
        Tensor mask_cache;               // dropout mask, when active
        bool mask_active_ = false;
    };

    std::size_t c_in_, c_out_;
    bool batchnorm_;
    double dropout_rate_;
    std::vector<Conv> convs_;
    std::vector<BnUnit> bns_;
    bool has_projection_;
    Tensor proj_, gproj_;
    Tensor x_cache_;
};

// Rowwise exp-normalization with max subtraction.
class Softmax : public Layer {
public:
    explicit Softmax(std::string name);

    Tensor forward(const Tensor& x, const RunContext& ctx) override;
    Tensor backward(const Tensor& grad_out) override;
    std::size_t output_dim(std::size_t input_dim) const override;
    std::string descriptor() const override;

private:
    Tensor y_cache_;
};

// Mean over all elements of squared error; gradient 2(pred-target)/count.
struct MseResult {
    double loss = 0.0;
    Tensor grad;
};
MseResult mse_loss(const Tensor& pred, const Tensor& target);

// An ordered stack of named layers.
class Model {
public:
    Model() = default;
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;

    Layer& add(std::unique_ptr<Layer> layer);

    Tensor forward(const Tensor& x, const RunContext& ctx);
    // Returns the input gradient; parameter gradients accumulate in-layer.
    Tensor backward(const Tensor& grad_out);

    void zero_grads();
    void scale_grads(double factor);

    // Gradients of trainable parameters in frozen layers are excluded; frozen
    // layers still propagate input gradients through backward.
    std::vector<ParamRef> trainable_params();
    std::vector<ParamRef> all_params();
    std::vector<StateRef> all_state();

    std::size_t layer_count() const { return layers_.size(); }
    Layer& layer_at(std::size_t i);
    const Layer& layer_at(std::size_t i) const;
    Layer& layer(const std::string& name);
    bool has_layer(const std::string& name) const;

private:
    std::vector<std::unique_ptr<Layer>> layers_;
    bool forward_done_ = false;
};

// Adam with bias correction. Moments are keyed by qualified parameter name,
// so freezing/unfreezing between steps keeps existing moments intact.
class AdamOptimizer {
public:
    explicit AdamOptimizer(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                           double epsilon = 1e-8);

    void step(Model& model);

    long steps_taken() const { return step_; }

private:
    double lr_, beta1_, beta2_, epsilon_;
    long step_ = 0;
    std::map<std::string, Tensor> m_, v_;
};

// Regression network: gru128 -> drop1(0.1) -> gru64 -> drop2(0.1) -> dense.
Model build_regression_model(std::size_t d_in, std::size_t d_out, Rng& rng);

enum class CtcVariant { kBase, kExtended };

// Transcription network: gru128 -> gru64 -> tcn32 -> dense -> softmax, with
// dropout 0.1 inside both GRUs. The extended variant inserts a frozen
// gru128_ext -> gru64_ext pair between gru64 and tcn32. When batchnorm is set
// the TCN block also runs dropout 0.1 after each convolution.
Model build_ctc_model(std::size_t d_in, std::size_t vocab_plus_blank, CtcVariant variant,
                      bool batchnorm, Rng& rng);

// Articulatory regressor: tcn128 -> drop(0.2) -> dense.
Model build_articulatory_model(std::size_t d_in, std::size_t d_out, Rng& rng);

// Copy the first two GRU layers' parameters from source into target by value;
// shapes must match exactly (error names the offending layer/parameter).
void transplant_gru_weights(Model& source, Model& target);

// Seed the frozen gru128_ext/gru64_ext pair of an extended model from the
// donor's first two GRU layers. Donor tensors whose shapes match are copied;
// shape-incompatible ones (the donor's input weights when the donor consumed
// a different feature dimension) keep their fresh initialization. Returns the
// number of tensors copied.
int seed_extended_layers(Model& donor, Model& target);

// Rebuild a layer from its descriptor string (zero/default-initialized
// parameters; used by checkpoint loading).
std::unique_ptr<Layer> layer_from_descriptor(const std::string& name,
                                             const std::string& descriptor);

} // namespace eegcsr::nn
