#ifndef LYMPHNET_MODEL_HPP
#define LYMPHNET_MODEL_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "lymphnet/dataset.hpp"
#include "lymphnet/layers.hpp"
#include "lymphnet/tensor.hpp"

namespace lymphnet {

enum class LayerKind { conv, pool, flatten, dense };
enum class Activation { none, tanh, softmax };

struct LayerSpec {
    LayerKind kind = LayerKind::flatten;
    std::size_t maps = 0, kernel = 0;    // conv (square kernel)
    std::size_t window = 0, stride = 0;  // pool
    std::size_t units = 0;               // dense
    Activation act = Activation::none;   // conv/dense only
};

struct ArchitectureSpec {
    std::vector<std::size_t> input_shape;  // [C,H,W]
    std::vector<LayerSpec> layers;
};

// conv(5x5,20,tanh) -> pool(3,3) -> conv(5x5,50,tanh) -> pool(3,3)
// -> flatten -> dense(500,tanh) -> dense(4,softmax) on a 1x40x40 input.
ArchitectureSpec default_arch();

// Small configuration for finite-difference checking: 1x12x12 input,
// conv(3x3,2,tanh) -> pool(2,2) -> flatten -> dense(8,tanh) -> dense(4,softmax).
ArchitectureSpec toy_arch();

// Output shape of every layer in order. Throws ShapeError naming the first
// layer whose input does not compose.
std::vector<std::vector<std::size_t>> shape_chain(const ArchitectureSpec& spec);

template <typename T>
using ParamBlock = std::variant<ConvLayerParams<T>, DenseLayerParams<T>>;

// One block per parameterized layer, in architecture order.
template <typename T>
struct NetworkParams {
    std::vector<ParamBlock<T>> blocks;
};

// Visits every parameter tensor in serialization order: per block,
// kernels/weights first, then bias.
template <typename T, typename Fn>
void for_each_param(NetworkParams<T>& p, Fn&& fn) {
    for (auto& block : p.blocks)
        std::visit(
            [&](auto& b) {
                if constexpr (requires { b.kernels; }) {
                    fn(b.kernels);
                    fn(b.bias);
                } else {
                    fn(b.weights);
                    fn(b.bias);
                }
            },
            block);
}

template <typename T, typename Fn>
void for_each_param(const NetworkParams<T>& p, Fn&& fn) {
    for_each_param(const_cast<NetworkParams<T>&>(p), [&](Tensor<T>& t) {
        fn(static_cast<const Tensor<T>&>(t));
    });
}

// Gradients in the same block layout as the parameters, plus the gradient
// with respect to the network input.
template <typename T>
struct NetworkGrads {
    NetworkParams<T> params;
    Tensor<T> input;
};

// Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases; draws
// come from a single seeded engine in block order.
template <typename T>
NetworkParams<T> build_network(const ArchitectureSpec& spec, std::uint64_t seed);

template <typename T>
class Network {
public:
    Network(ArchitectureSpec spec, NetworkParams<T> params);

    const ArchitectureSpec& spec() const { return spec_; }
    const std::vector<std::vector<std::size_t>>& chain() const { return chain_; }
    NetworkParams<T>& params() { return params_; }
    const NetworkParams<T>& params() const { return params_; }

    // Everything backward needs: x[0] is the sample, x[i+1] the output of
    // layer i after its activation — except the final layer, which stores
    // pre-activation logits (softmax is fused into the loss).
    struct Trace {
        std::vector<Tensor<T>> x;
        std::vector<ArgmaxMap> pool_maps;  // indexed by layer, empty unless pool
    };

    // Final activated output (class probabilities for a softmax head).
    Tensor<T> forward(const Tensor<T>& sample) const;
    // Final pre-activation output; fills the trace when given.
    Tensor<T> forward_logits(const Tensor<T>& sample, Trace* trace = nullptr) const;
    // Row b of the result holds forward_logits of batch[b]; batch is [B,C,H,W].
    Tensor<T> forward_batch(const Tensor<T>& batch) const;

    // Exact partials of the scalar whose gradient at the logits is grad_logits.
    NetworkGrads<T> backward(const Trace& trace, const Tensor<T>& grad_logits) const;

private:
    ArchitectureSpec spec_;
    NetworkParams<T> params_;
    std::vector<std::vector<std::size_t>> chain_;
};

// Momentum buffers, one per parameter tensor, zero-initialized.
template <typename T>
struct MomentumState {
    NetworkParams<T> blocks;
};

template <typename T>
MomentumState<T> make_momentum_state(const NetworkParams<T>& params);

// v = mu*v - lr*g; w += v, elementwise across all blocks.
template <typename T>
void sgd_update(NetworkParams<T>& params, MomentumState<T>& momentum,
                const NetworkParams<T>& grads, T lr, T mu);

struct TrainConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::size_t batch_size = 32;
    std::size_t epochs = 30;
    std::uint64_t seed = 42;
    double lr_decay = 0.5;          // multiplier applied every lr_decay_every epochs
    std::size_t lr_decay_every = 10;  // 0 disables decay
    unsigned threads = 1;
};

struct EpochStats {
    double train_loss = 0, train_accuracy = 0;
    double val_loss = 0, val_accuracy = 0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
};

template <typename T>
struct TrainResult {
    NetworkParams<T> params;  // from the epoch with best validation accuracy
    TrainHistory history;
};

// Minibatch SGD with momentum on softmax cross-entropy. Seeded per-epoch
// shuffles; a short final batch is averaged over its actual size; returns
// the parameters of the best-validation-accuracy epoch (earliest on ties).
// Per-sample gradient work may run on cfg.threads threads; the reduction
// order is fixed, so results do not depend on the thread count. Non-finite
// loss aborts with DivergenceError naming epoch and batch.
template <typename T>
TrainResult<T> train(const ArchitectureSpec& spec, const TrainConfig& cfg,
                     const std::vector<PatchRecord>& train_data,
                     const std::vector<PatchRecord>& val_data);

void write_history(const std::string& path, const TrainHistory& history);

struct GradCheckBlock {
    std::string name;  // conv1.kernels, dense2.bias, ..., input
    double max_rel_err = 0;
    std::size_t worst_index = 0;
    double analytic = 0, numeric = 0;  // at the worst coordinate
};

struct GradCheckReport {
    double max_rel_err = 0;
    bool pass = false;
    double epsilon = 0, tolerance = 0;
    std::vector<GradCheckBlock> blocks;
};

// Central-difference comparison of every parameter block and the input
// gradient on one (params, input, label) instance. Always binary64.
// Relative error uses |a-n| / max(1, |a|, |n|).
GradCheckReport grad_check_instance(const ArchitectureSpec& spec,
                                    const NetworkParams<double>& params,
                                    const Tensor<double>& input, std::size_t label,
                                    double epsilon, double tolerance);

// Seeded instance: Glorot params, uniform(-1,1) input, derived label.
GradCheckReport grad_check(const ArchitectureSpec& spec, std::uint64_t seed, double epsilon,
                           double tolerance);

// Model file: magic "LYMF", u32 version, u32 parameterized-layer count, then
// per layer a 1-byte tag (1=conv, 2=dense), u32 dims (conv F,C,Kh,Kw;
// dense out,in), and binary32 payload, kernels/weights before bias. All
// integers and floats little-endian.
template <typename T>
void save_model(const NetworkParams<T>& params, const ArchitectureSpec& spec, std::ostream& out);

template <typename T>
void save_model_file(const std::string& path, const NetworkParams<T>& params,
                     const ArchitectureSpec& spec);

struct LoadedModel {
    NetworkParams<float> params;
    ArchitectureSpec spec;
};

// The stream stores only parameterized layers, so the surrounding
// architecture is rebuilt from the default family: each conv is followed by
// pool(3,3)/stride 3 and tanh, flatten sits before the first dense, hidden
// dense layers are tanh, the last is softmax, and the input is
// [C_first_conv, 40, 40]. Rejects bad magic/version/tags, absurd dims,
// truncation, trailing bytes, and payloads that do not compose.
LoadedModel load_model(std::istream& in);
LoadedModel load_model_file(const std::string& path);

}  // namespace lymphnet

#endif
