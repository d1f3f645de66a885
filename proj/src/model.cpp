#include "lymphnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "lymphnet/errors.hpp"
#include "lymphnet/parallel.hpp"
#include "lymphnet/rng.hpp"

namespace lymphnet {

namespace {

const char* kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::conv: return "conv";
        case LayerKind::pool: return "pool";
        case LayerKind::flatten: return "flatten";
        case LayerKind::dense: return "dense";
    }
    return "?";
}

std::string layer_label(std::size_t i, const LayerSpec& l) {
    std::string s = "layer " + std::to_string(i + 1) + " (" + kind_name(l.kind);
    if (l.kind == LayerKind::conv)
        s += " " + std::to_string(l.kernel) + "x" + std::to_string(l.kernel);
    else if (l.kind == LayerKind::pool)
        s += " " + std::to_string(l.window) + "x" + std::to_string(l.window) + "/" +
             std::to_string(l.stride);
    else if (l.kind == LayerKind::dense)
        s += " " + std::to_string(l.units);
    return s + ")";
}

template <typename T>
std::size_t argmax_idx(const Tensor<T>& t) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < t.numel(); ++i)
        if (t[i] > t[best]) best = i;
    return best;
}

}  // namespace

ArchitectureSpec default_arch() {
    ArchitectureSpec s;
    s.input_shape = {1, kPatchSide, kPatchSide};
    s.layers = {
        {LayerKind::conv, 20, 5, 0, 0, 0, Activation::tanh},
        {LayerKind::pool, 0, 0, 3, 3, 0, Activation::none},
        {LayerKind::conv, 50, 5, 0, 0, 0, Activation::tanh},
        {LayerKind::pool, 0, 0, 3, 3, 0, Activation::none},
        {LayerKind::flatten, 0, 0, 0, 0, 0, Activation::none},
        {LayerKind::dense, 0, 0, 0, 0, 500, Activation::tanh},
        {LayerKind::dense, 0, 0, 0, 0, 4, Activation::softmax},
    };
    return s;
}

ArchitectureSpec toy_arch() {
    ArchitectureSpec s;
    s.input_shape = {1, 12, 12};
    s.layers = {
        {LayerKind::conv, 2, 3, 0, 0, 0, Activation::tanh},
        {LayerKind::pool, 0, 0, 2, 2, 0, Activation::none},
        {LayerKind::flatten, 0, 0, 0, 0, 0, Activation::none},
        {LayerKind::dense, 0, 0, 0, 0, 8, Activation::tanh},
        {LayerKind::dense, 0, 0, 0, 0, 4, Activation::softmax},
    };
    return s;
}

std::vector<std::vector<std::size_t>> shape_chain(const ArchitectureSpec& spec) {
    if (spec.input_shape.size() != 3)
        throw ShapeError("shape_chain: input shape must be [C,H,W], got " +
                         shape_str(spec.input_shape));
    for (auto e : spec.input_shape)
        if (e == 0) throw ShapeError("shape_chain: zero extent in input " +
                                     shape_str(spec.input_shape));
    std::vector<std::vector<std::size_t>> chain;
    std::vector<std::size_t> cur = spec.input_shape;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        const std::string at = layer_label(i, l);
        switch (l.kind) {
            case LayerKind::conv: {
                if (cur.size() != 3)
                    throw ShapeError(at + ": input " + shape_str(cur) + " is not [C,H,W]");
                if (l.maps == 0 || l.kernel == 0)
                    throw ShapeError(at + ": maps and kernel must be >= 1");
                if (cur[1] < l.kernel || cur[2] < l.kernel)
                    throw ShapeError(at + ": input " + shape_str(cur) +
                                     " smaller than kernel window");
                cur = {l.maps, cur[1] - l.kernel + 1, cur[2] - l.kernel + 1};
                break;
            }
            case LayerKind::pool: {
                if (cur.size() != 3)
                    throw ShapeError(at + ": input " + shape_str(cur) + " is not [C,H,W]");
                if (l.window == 0 || l.stride == 0)
                    throw ShapeError(at + ": window and stride must be >= 1");
                if (cur[1] < l.window || cur[2] < l.window)
                    throw ShapeError(at + ": input " + shape_str(cur) + " smaller than window");
                cur = {cur[0], (cur[1] - l.window) / l.stride + 1,
                       (cur[2] - l.window) / l.stride + 1};
                break;
            }
            case LayerKind::flatten: {
                std::size_t n = 1;
                for (auto e : cur) n *= e;
                cur = {n};
                break;
            }
            case LayerKind::dense: {
                if (cur.size() != 1)
                    throw ShapeError(at + ": input " + shape_str(cur) +
                                     " not flattened before dense");
                if (l.units == 0) throw ShapeError(at + ": units must be >= 1");
                cur = {l.units};
                break;
            }
        }
        chain.push_back(cur);
    }
    return chain;
}

template <typename T>
NetworkParams<T> build_network(const ArchitectureSpec& spec, std::uint64_t seed) {
    shape_chain(spec);  // reject non-composing specs up front
    NetworkParams<T> p;
    auto eng = rng::make_engine(seed);
    std::vector<std::size_t> cur = spec.input_shape;
    auto chain = shape_chain(spec);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        if (l.kind == LayerKind::conv) {
            const std::size_t C = cur[0], F = l.maps, K = l.kernel;
            const double limit = std::sqrt(6.0 / static_cast<double>(C * K * K + F * K * K));
            ConvLayerParams<T> b{Tensor<T>({F, C, K, K}), Tensor<T>({F})};
            for (auto& w : b.kernels) w = static_cast<T>(rng::uniform(eng, -limit, limit));
            p.blocks.emplace_back(std::move(b));
        } else if (l.kind == LayerKind::dense) {
            const std::size_t in = cur[0], out = l.units;
            const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
            DenseLayerParams<T> b{Tensor<T>({out, in}), Tensor<T>({out})};
            for (auto& w : b.weights) w = static_cast<T>(rng::uniform(eng, -limit, limit));
            p.blocks.emplace_back(std::move(b));
        }
        cur = chain[i];
    }
    return p;
}

template <typename T>
Network<T>::Network(ArchitectureSpec spec, NetworkParams<T> params)
    : spec_(std::move(spec)), params_(std::move(params)), chain_(shape_chain(spec_)) {
    std::size_t block_i = 0;
    std::vector<std::size_t> cur = spec_.input_shape;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        const LayerSpec& l = spec_.layers[i];
        const std::string at = layer_label(i, l);
        if (l.kind == LayerKind::conv) {
            if (block_i >= params_.blocks.size())
                throw ShapeError(at + ": missing parameter block");
            auto* b = std::get_if<ConvLayerParams<T>>(&params_.blocks[block_i]);
            if (!b) throw ShapeError(at + ": parameter block is not convolutional");
            const std::vector<std::size_t> want{l.maps, cur[0], l.kernel, l.kernel};
            if (b->kernels.shape() != want)
                throw ShapeError(at + ": kernels " + shape_str(b->kernels.shape()) +
                                 ", expected " + shape_str(want));
            if (b->bias.shape() != std::vector<std::size_t>{l.maps})
                throw ShapeError(at + ": bias " + shape_str(b->bias.shape()) + ", expected [" +
                                 std::to_string(l.maps) + "]");
            ++block_i;
        } else if (l.kind == LayerKind::dense) {
            if (block_i >= params_.blocks.size())
                throw ShapeError(at + ": missing parameter block");
            auto* b = std::get_if<DenseLayerParams<T>>(&params_.blocks[block_i]);
            if (!b) throw ShapeError(at + ": parameter block is not dense");
            const std::vector<std::size_t> want{l.units, cur[0]};
            if (b->weights.shape() != want)
                throw ShapeError(at + ": weights " + shape_str(b->weights.shape()) +
                                 ", expected " + shape_str(want));
            if (b->bias.shape() != std::vector<std::size_t>{l.units})
                throw ShapeError(at + ": bias " + shape_str(b->bias.shape()) + ", expected [" +
                                 std::to_string(l.units) + "]");
            ++block_i;
        }
        cur = chain_[i];
    }
    if (block_i != params_.blocks.size())
        throw ShapeError("network has " + std::to_string(params_.blocks.size()) +
                         " parameter blocks but the architecture uses " +
                         std::to_string(block_i));
}

template <typename T>
Tensor<T> Network<T>::forward_logits(const Tensor<T>& sample, Trace* trace) const {
    if (sample.shape() != spec_.input_shape)
        throw ShapeError("forward: sample " + shape_str(sample.shape()) +
                         " does not match network input " + shape_str(spec_.input_shape));
    Trace local;
    Trace& tr = trace ? *trace : local;
    tr.x.clear();
    tr.pool_maps.assign(spec_.layers.size(), {});
    tr.x.push_back(sample);

    std::size_t block_i = 0;
    const std::size_t last = spec_.layers.size() - 1;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        const LayerSpec& l = spec_.layers[i];
        const Tensor<T>& in = tr.x.back();
        Tensor<T> out;
        switch (l.kind) {
            case LayerKind::conv:
                out = conv2d_valid(in, std::get<ConvLayerParams<T>>(params_.blocks[block_i++]));
                break;
            case LayerKind::pool: {
                auto r = maxpool(in, l.window, l.stride);
                out = std::move(r.output);
                tr.pool_maps[i] = std::move(r.map);
                break;
            }
            case LayerKind::flatten:
                out = Tensor<T>({in.numel()}, std::vector<T>(in.begin(), in.end()));
                break;
            case LayerKind::dense:
                out = dense(in, std::get<DenseLayerParams<T>>(params_.blocks[block_i++]));
                break;
        }
        if (l.act == Activation::tanh) out = tanh_map(out);
        // softmax on the last layer stays fused with the loss; this path
        // returns pre-activation logits.
        if (l.act == Activation::softmax && i != last) out = softmax(out);
        if (out.shape() != chain_[i])
            throw ShapeError(layer_label(i, l) + ": produced " + shape_str(out.shape()) +
                             ", chain expects " + shape_str(chain_[i]));
        tr.x.push_back(std::move(out));
    }
    return tr.x.back();
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& sample) const {
    Tensor<T> logits = forward_logits(sample);
    if (!spec_.layers.empty() && spec_.layers.back().act == Activation::softmax)
        return softmax(logits);
    return logits;
}

template <typename T>
Tensor<T> Network<T>::forward_batch(const Tensor<T>& batch) const {
    if (batch.rank() != spec_.input_shape.size() + 1)
        throw ShapeError("forward_batch: batch " + shape_str(batch.shape()) +
                         " must add a leading batch dimension to " +
                         shape_str(spec_.input_shape));
    const std::size_t B = batch.extent(0);
    const std::size_t sn = batch.numel() / B;
    const std::size_t out_n = chain_.back()[0];
    Tensor<T> logits({B, out_n});
    for (std::size_t b = 0; b < B; ++b) {
        Tensor<T> sample(spec_.input_shape,
                         std::vector<T>(batch.data() + b * sn, batch.data() + (b + 1) * sn));
        Tensor<T> row = forward_logits(sample);
        std::copy(row.begin(), row.end(), logits.data() + b * out_n);
    }
    return logits;
}

template <typename T>
NetworkGrads<T> Network<T>::backward(const Trace& trace, const Tensor<T>& grad_logits) const {
    if (trace.x.size() != spec_.layers.size() + 1)
        throw ShapeError("backward: trace does not match this architecture");
    NetworkGrads<T> out;
    out.params.blocks.resize(params_.blocks.size());

    Tensor<T> g = grad_logits;
    std::size_t block_i = params_.blocks.size();
    const std::size_t last = spec_.layers.size() - 1;
    for (std::size_t ri = spec_.layers.size(); ri-- > 0;) {
        const LayerSpec& l = spec_.layers[ri];
        const Tensor<T>& in = trace.x[ri];
        const Tensor<T>& y = trace.x[ri + 1];
        if (l.act == Activation::tanh) g = tanh_backward(y, g);
        if (l.act == Activation::softmax && ri != last)
            throw std::logic_error("backward: softmax is only supported on the final layer");
        switch (l.kind) {
            case LayerKind::conv: {
                --block_i;
                auto dg = conv2d_backward(in, std::get<ConvLayerParams<T>>(params_.blocks[block_i]), g);
                out.params.blocks[block_i] =
                    ConvLayerParams<T>{std::move(dg.kernels), std::move(dg.bias)};
                g = std::move(dg.input);
                break;
            }
            case LayerKind::pool:
                g = maxpool_backward(trace.pool_maps[ri], g);
                break;
            case LayerKind::flatten:
                g = Tensor<T>(in.shape(), std::vector<T>(g.begin(), g.end()));
                break;
            case LayerKind::dense: {
                --block_i;
                auto dg = dense_backward(in, std::get<DenseLayerParams<T>>(params_.blocks[block_i]), g);
                out.params.blocks[block_i] =
                    DenseLayerParams<T>{std::move(dg.weights), std::move(dg.bias)};
                g = std::move(dg.input);
                break;
            }
        }
    }
    out.input = std::move(g);
    return out;
}

template <typename T>
MomentumState<T> make_momentum_state(const NetworkParams<T>& params) {
    MomentumState<T> m;
    for (const auto& block : params.blocks)
        std::visit(
            [&](const auto& b) {
                using B = std::decay_t<decltype(b)>;
                if constexpr (std::is_same_v<B, ConvLayerParams<T>>)
                    m.blocks.blocks.emplace_back(
                        ConvLayerParams<T>{Tensor<T>(b.kernels.shape()), Tensor<T>(b.bias.shape())});
                else
                    m.blocks.blocks.emplace_back(
                        DenseLayerParams<T>{Tensor<T>(b.weights.shape()), Tensor<T>(b.bias.shape())});
            },
            block);
    return m;
}

namespace {

template <typename T>
std::vector<Tensor<T>*> param_tensors(NetworkParams<T>& p) {
    std::vector<Tensor<T>*> v;
    for_each_param(p, [&](Tensor<T>& t) { v.push_back(&t); });
    return v;
}

template <typename T>
std::vector<const Tensor<T>*> param_tensors(const NetworkParams<T>& p) {
    std::vector<const Tensor<T>*> v;
    for_each_param(p, [&](const Tensor<T>& t) { v.push_back(&t); });
    return v;
}

template <typename T>
void add_params(NetworkParams<T>& acc, const NetworkParams<T>& g) {
    auto a = param_tensors(acc);
    auto b = param_tensors(g);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[i]->numel(); ++j) (*a[i])[j] += (*b[i])[j];
}

template <typename T>
void scale_params(NetworkParams<T>& p, T s) {
    for_each_param(p, [&](Tensor<T>& t) {
        for (auto& v : t) v *= s;
    });
}

}  // namespace

template <typename T>
void sgd_update(NetworkParams<T>& params, MomentumState<T>& momentum,
                const NetworkParams<T>& grads, T lr, T mu) {
    auto w = param_tensors(params);
    auto v = param_tensors(momentum.blocks);
    auto g = param_tensors(grads);
    if (w.size() != v.size() || w.size() != g.size())
        throw ShapeError("sgd_update: mismatched block structure");
    for (std::size_t i = 0; i < w.size(); ++i) {
        if constexpr (std::is_same_v<T, float>)
            kernels::active_backend().sgd_momentum(w[i]->data(), v[i]->data(), g[i]->data(),
                                                   w[i]->numel(), lr, mu);
        else
            kernels::sgd_momentum_ref(w[i]->data(), v[i]->data(), g[i]->data(), w[i]->numel(),
                                      lr, mu);
    }
}

template <typename T>
TrainResult<T> train(const ArchitectureSpec& spec, const TrainConfig& cfg,
                     const std::vector<PatchRecord>& train_data,
                     const std::vector<PatchRecord>& val_data) {
    if (train_data.empty() || val_data.empty())
        throw std::invalid_argument("train: training and validation sets must be nonempty");
    if (!(cfg.learning_rate > 0))
        throw std::invalid_argument("train: learning_rate must be > 0");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");

    const std::size_t n_train = train_data.size(), n_val = val_data.size();
    std::vector<Tensor<T>> tx, vx;
    std::vector<std::size_t> ty, vy;
    tx.reserve(n_train);
    vx.reserve(n_val);
    for (const auto& r : train_data) {
        tx.push_back(normalize<T>(r));
        ty.push_back(r.label);
    }
    for (const auto& r : val_data) {
        vx.push_back(normalize<T>(r));
        vy.push_back(r.label);
    }

    Network<T> net(spec, build_network<T>(spec, rng::derive(cfg.seed, 0xA11)));
    auto momentum = make_momentum_state(net.params());
    auto shuffle_eng = rng::make_engine(rng::derive(cfg.seed, 0x5E));
    double lr = cfg.learning_rate;

    std::vector<std::size_t> order(n_train);
    for (std::size_t i = 0; i < n_train; ++i) order[i] = i;

    TrainResult<T> result;
    result.params = net.params();
    double best_val = -1.0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        if (epoch > 1 && cfg.lr_decay_every != 0 && (epoch - 1) % cfg.lr_decay_every == 0)
            lr *= cfg.lr_decay;
        rng::shuffle(order, shuffle_eng);

        double loss_sum = 0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
            const std::size_t bn = std::min(cfg.batch_size, n_train - start);
            std::vector<NetworkParams<T>> grads(bn);
            std::vector<double> losses(bn);
            std::vector<char> hit(bn);
            parallel_for(bn, cfg.threads, [&](std::size_t i) {
                const std::size_t s = order[start + i];
                typename Network<T>::Trace tr;
                Tensor<T> logits = net.forward_logits(tx[s], &tr);
                auto xr = softmax_xent(logits, ty[s]);
                losses[i] = static_cast<double>(xr.loss);
                hit[i] = argmax_idx(logits) == ty[s];
                grads[i] = net.backward(tr, xr.grad_logits).params;
            });
            double batch_loss = 0;
            for (std::size_t i = 0; i < bn; ++i) batch_loss += losses[i];
            if (!std::isfinite(batch_loss)) {
                char msg[128];
                std::snprintf(msg, sizeof msg,
                              "training diverged: non-finite loss at epoch %zu, batch %zu",
                              epoch, start / cfg.batch_size + 1);
                throw DivergenceError(msg);
            }
            loss_sum += batch_loss;
            for (std::size_t i = 0; i < bn; ++i) correct += hit[i] != 0;

            NetworkParams<T> sum = std::move(grads[0]);
            for (std::size_t i = 1; i < bn; ++i) add_params(sum, grads[i]);
            scale_params(sum, T(1) / static_cast<T>(bn));
            sgd_update(net.params(), momentum, sum, static_cast<T>(lr),
                       static_cast<T>(cfg.momentum));
        }

        std::vector<double> vloss(n_val);
        std::vector<char> vhit(n_val);
        parallel_for(n_val, cfg.threads, [&](std::size_t i) {
            Tensor<T> logits = net.forward_logits(vx[i]);
            vloss[i] = static_cast<double>(softmax_xent(logits, vy[i]).loss);
            vhit[i] = argmax_idx(logits) == vy[i];
        });
        double vsum = 0;
        std::size_t vcorrect = 0;
        for (std::size_t i = 0; i < n_val; ++i) {
            vsum += vloss[i];
            vcorrect += vhit[i] != 0;
        }

        EpochStats st;
        st.train_loss = loss_sum / static_cast<double>(n_train);
        st.train_accuracy = static_cast<double>(correct) / static_cast<double>(n_train);
        st.val_loss = vsum / static_cast<double>(n_val);
        st.val_accuracy = static_cast<double>(vcorrect) / static_cast<double>(n_val);
        result.history.epochs.push_back(st);

        if (st.val_accuracy > best_val) {
            best_val = st.val_accuracy;
            result.params = net.params();
        }
    }
    return result;
}

void write_history(const std::string& path, const TrainHistory& history) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "epoch\ttrain_loss\ttrain_accuracy\tval_loss\tval_accuracy\n";
    char buf[160];
    for (std::size_t i = 0; i < history.epochs.size(); ++i) {
        const auto& e = history.epochs[i];
        std::snprintf(buf, sizeof buf, "%zu\t%.6f\t%.6f\t%.6f\t%.6f\n", i + 1, e.train_loss,
                      e.train_accuracy, e.val_loss, e.val_accuracy);
        out << buf;
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

namespace {

std::vector<std::string> block_names(const ArchitectureSpec& spec) {
    std::vector<std::string> names;
    std::size_t conv_i = 0, dense_i = 0;
    for (const auto& l : spec.layers) {
        if (l.kind == LayerKind::conv) {
            const std::string base = "conv" + std::to_string(++conv_i);
            names.push_back(base + ".kernels");
            names.push_back(base + ".bias");
        } else if (l.kind == LayerKind::dense) {
            const std::string base = "dense" + std::to_string(++dense_i);
            names.push_back(base + ".weights");
            names.push_back(base + ".bias");
        }
    }
    return names;
}

double rel_err(double a, double n) {
    return std::fabs(a - n) / std::max({1.0, std::fabs(a), std::fabs(n)});
}

}  // namespace

GradCheckReport grad_check_instance(const ArchitectureSpec& spec,
                                    const NetworkParams<double>& params,
                                    const Tensor<double>& input, std::size_t label,
                                    double epsilon, double tolerance) {
    Network<double> net(spec, params);
    Network<double>::Trace tr;
    Tensor<double> logits = net.forward_logits(input, &tr);
    auto xr = softmax_xent(logits, label);
    NetworkGrads<double> analytic = net.backward(tr, xr.grad_logits);

    auto loss_with = [&](const Tensor<double>& x) {
        return softmax_xent(net.forward_logits(x), label).loss;
    };

    GradCheckReport report;
    report.epsilon = epsilon;
    report.tolerance = tolerance;

    auto check_array = [&](const std::string& name, Tensor<double>* live,
                           const Tensor<double>& grad, const Tensor<double>* as_input) {
        GradCheckBlock blk;
        blk.name = name;
        for (std::size_t i = 0; i < grad.numel(); ++i) {
            double numeric;
            if (as_input) {
                Tensor<double> x = *as_input;
                x[i] = (*as_input)[i] + epsilon;
                const double up = loss_with(x);
                x[i] = (*as_input)[i] - epsilon;
                const double dn = loss_with(x);
                numeric = (up - dn) / (2 * epsilon);
            } else {
                const double keep = (*live)[i];
                (*live)[i] = keep + epsilon;
                const double up = loss_with(input);
                (*live)[i] = keep - epsilon;
                const double dn = loss_with(input);
                (*live)[i] = keep;
                numeric = (up - dn) / (2 * epsilon);
            }
            const double e = rel_err(grad[i], numeric);
            if (e >= blk.max_rel_err) {
                blk.max_rel_err = e;
                blk.worst_index = i;
                blk.analytic = grad[i];
                blk.numeric = numeric;
            }
        }
        report.blocks.push_back(blk);
        report.max_rel_err = std::max(report.max_rel_err, blk.max_rel_err);
    };

    const auto names = block_names(spec);
    auto live = param_tensors(net.params());
    auto grads = param_tensors(analytic.params);
    for (std::size_t i = 0; i < live.size(); ++i)
        check_array(names[i], live[i], *grads[i], nullptr);
    check_array("input", nullptr, analytic.input, &input);

    report.pass = report.max_rel_err < tolerance;
    return report;
}

GradCheckReport grad_check(const ArchitectureSpec& spec, std::uint64_t seed, double epsilon,
                           double tolerance) {
    NetworkParams<double> params = build_network<double>(spec, rng::derive(seed, 1));
    Tensor<double> input(spec.input_shape);
    auto eng = rng::make_engine(rng::derive(seed, 2));
    for (auto& v : input) v = rng::uniform(eng, -1.0, 1.0);
    const std::size_t n_out = shape_chain(spec).back()[0];
    const std::size_t label = static_cast<std::size_t>(rng::derive(seed, 3) % n_out);
    return grad_check_instance(spec, params, input, label, epsilon, tolerance);
}

namespace {

void put_bytes(std::ostream& out, const unsigned char* b, std::size_t n) {
    out.write(reinterpret_cast<const char*>(b), static_cast<std::streamsize>(n));
}

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    put_bytes(out, b, 4);
}

void put_f32(std::ostream& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
}

void get_bytes(std::istream& in, unsigned char* b, std::size_t n) {
    in.read(reinterpret_cast<char*>(b), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw ParseError("truncated model file");
}

std::uint8_t get_u8(std::istream& in) {
    unsigned char b;
    get_bytes(in, &b, 1);
    return b;
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    get_bytes(in, b, 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

float get_f32(std::istream& in) {
    const std::uint32_t bits = get_u32(in);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

constexpr std::uint32_t kModelVersion = 1;
constexpr std::uint32_t kMaxLayerCount = 256;
constexpr std::uint32_t kMaxDim = 1u << 16;
constexpr std::uint64_t kMaxTotalParams = 1ull << 28;

}  // namespace

template <typename T>
void save_model(const NetworkParams<T>& params, const ArchitectureSpec& spec, std::ostream& out) {
    Network<T> validate(spec, params);  // refuse to serialize inconsistent blocks
    put_bytes(out, reinterpret_cast<const unsigned char*>("LYMF"), 4);
    put_u32(out, kModelVersion);
    put_u32(out, static_cast<std::uint32_t>(params.blocks.size()));
    for (const auto& block : params.blocks) {
        std::visit(
            [&](const auto& b) {
                using B = std::decay_t<decltype(b)>;
                if constexpr (std::is_same_v<B, ConvLayerParams<T>>) {
                    put_bytes(out, reinterpret_cast<const unsigned char*>("\x01"), 1);
                    for (std::size_t d = 0; d < 4; ++d)
                        put_u32(out, static_cast<std::uint32_t>(b.kernels.extent(d)));
                    for (const auto v : b.kernels) put_f32(out, static_cast<float>(v));
                    for (const auto v : b.bias) put_f32(out, static_cast<float>(v));
                } else {
                    put_bytes(out, reinterpret_cast<const unsigned char*>("\x02"), 1);
                    put_u32(out, static_cast<std::uint32_t>(b.weights.extent(0)));
                    put_u32(out, static_cast<std::uint32_t>(b.weights.extent(1)));
                    for (const auto v : b.weights) put_f32(out, static_cast<float>(v));
                    for (const auto v : b.bias) put_f32(out, static_cast<float>(v));
                }
            },
            block);
    }
}

template <typename T>
void save_model_file(const std::string& path, const NetworkParams<T>& params,
                     const ArchitectureSpec& spec) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    save_model(params, spec, out);
    if (!out) throw IoError("write failed for '" + path + "'");
}

LoadedModel load_model(std::istream& in) {
    unsigned char magic[4];
    get_bytes(in, magic, 4);
    if (std::memcmp(magic, "LYMF", 4) != 0) throw ParseError("model file: bad magic");
    const std::uint32_t version = get_u32(in);
    if (version != kModelVersion)
        throw ParseError("model file: unsupported version " + std::to_string(version));
    const std::uint32_t count = get_u32(in);
    if (count < 1 || count > kMaxLayerCount)
        throw ParseError("model file: layer count " + std::to_string(count) + " out of range 1-" +
                         std::to_string(kMaxLayerCount));

    NetworkParams<float> params;
    std::uint64_t total = 0;
    std::size_t n_conv = 0, n_dense = 0;
    std::size_t first_conv_channels = 0;
    for (std::uint32_t li = 0; li < count; ++li) {
        const std::uint8_t tag = get_u8(in);
        if (tag == 1) {
            if (n_dense > 0)
                throw ParseError("model file: convolutional layer after a dense layer");
            std::uint32_t d[4];
            for (auto& v : d) {
                v = get_u32(in);
                if (v < 1 || v > kMaxDim)
                    throw ParseError("model file: dimension " + std::to_string(v) +
                                     " out of range");
            }
            if (d[2] != d[3]) throw ParseError("model file: non-square kernel");
            total += static_cast<std::uint64_t>(d[0]) * d[1] * d[2] * d[3] + d[0];
            if (total > kMaxTotalParams) throw ParseError("model file: parameter count too large");
            ConvLayerParams<float> b{Tensor<float>({d[0], d[1], d[2], d[3]}),
                                     Tensor<float>({d[0]})};
            for (auto& v : b.kernels) v = get_f32(in);
            for (auto& v : b.bias) v = get_f32(in);
            if (n_conv == 0) first_conv_channels = d[1];
            ++n_conv;
            params.blocks.emplace_back(std::move(b));
        } else if (tag == 2) {
            const std::uint32_t out_n = get_u32(in);
            const std::uint32_t in_n = get_u32(in);
            if (out_n < 1 || out_n > kMaxDim || in_n < 1 || in_n > kMaxDim)
                throw ParseError("model file: dimension out of range");
            total += static_cast<std::uint64_t>(out_n) * in_n + out_n;
            if (total > kMaxTotalParams) throw ParseError("model file: parameter count too large");
            DenseLayerParams<float> b{Tensor<float>({out_n, in_n}), Tensor<float>({out_n})};
            for (auto& v : b.weights) v = get_f32(in);
            for (auto& v : b.bias) v = get_f32(in);
            ++n_dense;
            params.blocks.emplace_back(std::move(b));
        } else {
            throw ParseError("model file: unknown layer tag " + std::to_string(tag));
        }
    }
    if (in.peek() != std::istream::traits_type::eof())
        throw ParseError("model file: trailing bytes after payload");
    if (n_conv == 0 || n_dense == 0)
        throw ParseError("model file: need at least one conv and one dense layer");

    LoadedModel m;
    m.params = std::move(params);
    m.spec.input_shape = {first_conv_channels, kPatchSide, kPatchSide};
    for (const auto& block : m.params.blocks) {
        if (const auto* c = std::get_if<ConvLayerParams<float>>(&block)) {
            m.spec.layers.push_back(
                {LayerKind::conv, c->kernels.extent(0), c->kernels.extent(2), 0, 0, 0,
                 Activation::tanh});
            m.spec.layers.push_back({LayerKind::pool, 0, 0, 3, 3, 0, Activation::none});
        }
    }
    m.spec.layers.push_back({LayerKind::flatten, 0, 0, 0, 0, 0, Activation::none});
    std::size_t dense_seen = 0;
    for (const auto& block : m.params.blocks) {
        if (const auto* d = std::get_if<DenseLayerParams<float>>(&block)) {
            ++dense_seen;
            m.spec.layers.push_back({LayerKind::dense, 0, 0, 0, 0, d->weights.extent(0),
                                     dense_seen == n_dense ? Activation::softmax
                                                           : Activation::tanh});
        }
    }
    try {
        Network<float> validate(m.spec, m.params);
    } catch (const ShapeError& e) {
        throw ParseError(std::string("model file: payload does not compose: ") + e.what());
    }
    return m;
}

LoadedModel load_model_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    try {
        return load_model(in);
    } catch (const ParseError& e) {
        throw ParseError("'" + path + "': " + e.what());
    }
}

template NetworkParams<float> build_network<float>(const ArchitectureSpec&, std::uint64_t);
template NetworkParams<double> build_network<double>(const ArchitectureSpec&, std::uint64_t);
template class Network<float>;
template class Network<double>;
template MomentumState<float> make_momentum_state<float>(const NetworkParams<float>&);
template MomentumState<double> make_momentum_state<double>(const NetworkParams<double>&);
template void sgd_update<float>(NetworkParams<float>&, MomentumState<float>&,
                                const NetworkParams<float>&, float, float);
template void sgd_update<double>(NetworkParams<double>&, MomentumState<double>&,
                                 const NetworkParams<double>&, double, double);
template TrainResult<float> train<float>(const ArchitectureSpec&, const TrainConfig&,
                                         const std::vector<PatchRecord>&,
                                         const std::vector<PatchRecord>&);
template TrainResult<double> train<double>(const ArchitectureSpec&, const TrainConfig&,
                                           const std::vector<PatchRecord>&,
                                           const std::vector<PatchRecord>&);
template void save_model<float>(const NetworkParams<float>&, const ArchitectureSpec&,
                                std::ostream&);
template void save_model<double>(const NetworkParams<double>&, const ArchitectureSpec&,
                                 std::ostream&);
template void save_model_file<float>(const std::string&, const NetworkParams<float>&,
                                     const ArchitectureSpec&);
template void save_model_file<double>(const std::string&, const NetworkParams<double>&,
                                      const ArchitectureSpec&);

}  // namespace lymphnet
