#ifndef LYMPHNET_LAYERS_HPP
#define LYMPHNET_LAYERS_HPP

#include <cmath>
#include <cstdint>
#include <type_traits>
#include <vector>

#include "lymphnet/kernels.hpp"
#include "lymphnet/tensor.hpp"

// Forward and backward forms of every layer operation the network needs.
// Convolution and the dense products run through the runtime-dispatched
// float kernels (scalar or avx2); double always takes the scalar reference,
// which is what gradient checking runs on.

namespace lymphnet {

template <typename T>
struct ConvLayerParams {
    Tensor<T> kernels;  // [F, C, Kh, Kw]
    Tensor<T> bias;     // [F]
};

template <typename T>
struct DenseLayerParams {
    Tensor<T> weights;  // [out, in]
    Tensor<T> bias;     // [out]
};

namespace detail {

template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K,
             const T* A, const T* B, T* C, bool acc) {
    if constexpr (std::is_same_v<T, float>)
        kernels::active_backend().gemm_nn(M, N, K, A, B, C, acc);
    else
        kernels::gemm_nn_ref(M, N, K, A, B, C, acc);
}

template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K,
             const T* A, const T* B, T* C, bool acc) {
    if constexpr (std::is_same_v<T, float>)
        kernels::active_backend().gemm_nt(M, N, K, A, B, C, acc);
    else
        kernels::gemm_nt_ref(M, N, K, A, B, C, acc);
}

template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K,
             const T* A, const T* B, T* C, bool acc) {
    if constexpr (std::is_same_v<T, float>)
        kernels::active_backend().gemm_tn(M, N, K, A, B, C, acc);
    else
        kernels::gemm_tn_ref(M, N, K, A, B, C, acc);
}

// col[(c*Kh + a)*Kw + b][i*OW + j] = input[c][i+a][j+b]
template <typename T>
void im2col(const Tensor<T>& input, std::size_t Kh, std::size_t Kw, T* col) {
    const std::size_t C = input.extent(0), H = input.extent(1), W = input.extent(2);
    const std::size_t OH = H - Kh + 1, OW = W - Kw + 1;
    const T* in = input.data();
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t a = 0; a < Kh; ++a) {
            for (std::size_t b = 0; b < Kw; ++b) {
                T* row = col + ((c * Kh + a) * Kw + b) * (OH * OW);
                for (std::size_t i = 0; i < OH; ++i) {
                    const T* src = in + (c * H + i + a) * W + b;
                    T* dst = row + i * OW;
                    for (std::size_t j = 0; j < OW; ++j) dst[j] = src[j];
                }
            }
        }
    }
}

// Scatter-add transpose of im2col.
template <typename T>
void col2im(const T* col, std::size_t C, std::size_t H, std::size_t W,
            std::size_t Kh, std::size_t Kw, Tensor<T>& out) {
    const std::size_t OH = H - Kh + 1, OW = W - Kw + 1;
    T* o = out.data();
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t a = 0; a < Kh; ++a) {
            for (std::size_t b = 0; b < Kw; ++b) {
                const T* row = col + ((c * Kh + a) * Kw + b) * (OH * OW);
                for (std::size_t i = 0; i < OH; ++i) {
                    T* dst = o + (c * H + i + a) * W + b;
                    const T* src = row + i * OW;
                    for (std::size_t j = 0; j < OW; ++j) dst[j] += src[j];
                }
            }
        }
    }
}

template <typename T>
void check_conv_shapes(const Tensor<T>& input, const ConvLayerParams<T>& p) {
    if (input.rank() != 3)
        throw ShapeError("conv2d: input must be [C,H,W], got " + shape_str(input.shape()));
    if (p.kernels.rank() != 4)
        throw ShapeError("conv2d: kernels must be [F,C,Kh,Kw], got " + shape_str(p.kernels.shape()));
    const std::size_t C = input.extent(0), H = input.extent(1), W = input.extent(2);
    const std::size_t Kc = p.kernels.extent(1), Kh = p.kernels.extent(2), Kw = p.kernels.extent(3);
    if (Kc != C)
        throw ShapeError("conv2d: channel mismatch, input has " + std::to_string(C) +
                         " channels but kernels expect " + std::to_string(Kc));
    if (H < Kh || W < Kw)
        throw ShapeError("conv2d: input " + shape_str(input.shape()) +
                         " smaller than kernel window " + std::to_string(Kh) + "x" +
                         std::to_string(Kw));
    if (p.bias.rank() != 1 || p.bias.extent(0) != p.kernels.extent(0))
        throw ShapeError("conv2d: bias shape " + shape_str(p.bias.shape()) +
                         " does not match " + std::to_string(p.kernels.extent(0)) + " maps");
}

}  // namespace detail

// Valid (unpadded) convolution via im2col + GEMM. Output [F, H-Kh+1, W-Kw+1].
template <typename T>
Tensor<T> conv2d_valid(const Tensor<T>& input, const ConvLayerParams<T>& p) {
    detail::check_conv_shapes(input, p);
    const std::size_t H = input.extent(1), W = input.extent(2);
    const std::size_t F = p.kernels.extent(0), C = p.kernels.extent(1);
    const std::size_t Kh = p.kernels.extent(2), Kw = p.kernels.extent(3);
    const std::size_t OH = H - Kh + 1, OW = W - Kw + 1;
    const std::size_t ckk = C * Kh * Kw, ohw = OH * OW;

    std::vector<T> col(ckk * ohw);
    detail::im2col(input, Kh, Kw, col.data());

    Tensor<T> out({F, OH, OW});
    detail::gemm_nn(F, ohw, ckk, p.kernels.data(), col.data(), out.data(), false);
    for (std::size_t f = 0; f < F; ++f) {
        const T b = p.bias[f];
        T* row = out.data() + f * ohw;
        for (std::size_t x = 0; x < ohw; ++x) row[x] += b;
    }
    return out;
}

// Naive quadruple-loop form, kept as the correctness oracle for the
// GEMM-lowered path above.
template <typename T>
Tensor<T> conv2d_valid_reference(const Tensor<T>& input, const ConvLayerParams<T>& p) {
    detail::check_conv_shapes(input, p);
    const std::size_t H = input.extent(1), W = input.extent(2);
    const std::size_t F = p.kernels.extent(0), C = p.kernels.extent(1);
    const std::size_t Kh = p.kernels.extent(2), Kw = p.kernels.extent(3);
    const std::size_t OH = H - Kh + 1, OW = W - Kw + 1;

    Tensor<T> out({F, OH, OW});
    for (std::size_t f = 0; f < F; ++f) {
        for (std::size_t i = 0; i < OH; ++i) {
            for (std::size_t j = 0; j < OW; ++j) {
                T acc = p.bias[f];
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t a = 0; a < Kh; ++a)
                        for (std::size_t b = 0; b < Kw; ++b)
                            acc += input.at(c, i + a, j + b) * p.kernels.at(f, c, a, b);
                out.at(f, i, j) = acc;
            }
        }
    }
    return out;
}

template <typename T>
struct ConvGrads {
    Tensor<T> input;    // same shape as forward input
    Tensor<T> kernels;  // same shape as p.kernels
    Tensor<T> bias;     // same shape as p.bias
};

// Exact partials of sum(grad_out * conv2d_valid(input, p)).
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const ConvLayerParams<T>& p,
                             const Tensor<T>& grad_out) {
    detail::check_conv_shapes(input, p);
    const std::size_t C = input.extent(0), H = input.extent(1), W = input.extent(2);
    const std::size_t F = p.kernels.extent(0);
    const std::size_t Kh = p.kernels.extent(2), Kw = p.kernels.extent(3);
    const std::size_t OH = H - Kh + 1, OW = W - Kw + 1;
    if (grad_out.shape() != std::vector<std::size_t>{F, OH, OW})
        throw ShapeError("conv2d_backward: grad_out " + shape_str(grad_out.shape()) +
                         " does not match output [" + std::to_string(F) + "x" +
                         std::to_string(OH) + "x" + std::to_string(OW) + "]");
    const std::size_t ckk = C * Kh * Kw, ohw = OH * OW;

    ConvGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(p.kernels.shape()),
                   Tensor<T>(p.bias.shape())};

    for (std::size_t f = 0; f < F; ++f) {
        T acc = T(0);
        const T* row = grad_out.data() + f * ohw;
        for (std::size_t x = 0; x < ohw; ++x) acc += row[x];
        g.bias[f] = acc;
    }

    std::vector<T> col(ckk * ohw);
    detail::im2col(input, Kh, Kw, col.data());
    // dK[F x CKK] = grad_out[F x OHW] * col^T
    detail::gemm_nt(F, ckk, ohw, grad_out.data(), col.data(), g.kernels.data(), false);

    // dcol[CKK x OHW] = K^T * grad_out, then scatter back to the input.
    std::vector<T> dcol(ckk * ohw);
    detail::gemm_tn(ckk, ohw, F, p.kernels.data(), grad_out.data(), dcol.data(), false);
    detail::col2im(dcol.data(), C, H, W, Kh, Kw, g.input);
    return g;
}

// One winning input position per output cell; ties go to the first maximum
// in row-major window order.
struct ArgmaxMap {
    std::vector<std::size_t> input_shape;
    std::vector<std::size_t> output_shape;
    std::vector<std::uint32_t> index;  // flat input index per output cell
};

template <typename T>
struct PoolResult {
    Tensor<T> output;
    ArgmaxMap map;
};

template <typename T>
PoolResult<T> maxpool(const Tensor<T>& input, std::size_t window, std::size_t stride) {
    if (input.rank() != 3)
        throw ShapeError("maxpool: input must be [C,H,W], got " + shape_str(input.shape()));
    if (window == 0 || stride == 0) throw ShapeError("maxpool: window and stride must be >= 1");
    const std::size_t C = input.extent(0), H = input.extent(1), W = input.extent(2);
    if (H < window || W < window)
        throw ShapeError("maxpool: window " + std::to_string(window) + " larger than input " +
                         shape_str(input.shape()));
    const std::size_t OH = (H - window) / stride + 1;
    const std::size_t OW = (W - window) / stride + 1;

    PoolResult<T> r{Tensor<T>({C, OH, OW}), {}};
    r.map.input_shape = input.shape();
    r.map.output_shape = r.output.shape();
    r.map.index.resize(C * OH * OW);

    const T* in = input.data();
    std::size_t cell = 0;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t i = 0; i < OH; ++i) {
            for (std::size_t j = 0; j < OW; ++j, ++cell) {
                const std::size_t r0 = i * stride, c0 = j * stride;
                std::size_t best = (c * H + r0) * W + c0;
                T best_v = in[best];
                for (std::size_t a = 0; a < window; ++a) {
                    for (std::size_t b = 0; b < window; ++b) {
                        const std::size_t idx = (c * H + r0 + a) * W + c0 + b;
                        if (in[idx] > best_v) {
                            best_v = in[idx];
                            best = idx;
                        }
                    }
                }
                r.output[cell] = best_v;
                r.map.index[cell] = static_cast<std::uint32_t>(best);
            }
        }
    }
    return r;
}

template <typename T>
Tensor<T> maxpool_backward(const ArgmaxMap& map, const Tensor<T>& grad_out) {
    if (grad_out.shape() != map.output_shape)
        throw ShapeError("maxpool_backward: grad_out " + shape_str(grad_out.shape()) +
                         " does not match pooled shape " + shape_str(map.output_shape));
    Tensor<T> g(map.input_shape);
    for (std::size_t cell = 0; cell < map.index.size(); ++cell)
        g[map.index[cell]] += grad_out[cell];
    return g;
}

// out = W*x + b
template <typename T>
Tensor<T> dense(const Tensor<T>& input, const DenseLayerParams<T>& p) {
    const std::size_t out_n = p.weights.extent(0), in_n = p.weights.extent(1);
    if (input.numel() != in_n)
        throw ShapeError("dense: input length " + std::to_string(input.numel()) +
                         " does not match weights [" + std::to_string(out_n) + "x" +
                         std::to_string(in_n) + "]");
    Tensor<T> out({out_n});
    // y^T = x^T * W^T: dot of x with each weight row.
    detail::gemm_nt(1, out_n, in_n, input.data(), p.weights.data(), out.data(), false);
    for (std::size_t i = 0; i < out_n; ++i) out[i] += p.bias[i];
    return out;
}

template <typename T>
struct DenseGrads {
    Tensor<T> input;
    Tensor<T> weights;
    Tensor<T> bias;
};

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& input, const DenseLayerParams<T>& p,
                             const Tensor<T>& grad_out) {
    const std::size_t out_n = p.weights.extent(0), in_n = p.weights.extent(1);
    if (input.numel() != in_n || grad_out.numel() != out_n)
        throw ShapeError("dense_backward: got input " + std::to_string(input.numel()) +
                         ", grad_out " + std::to_string(grad_out.numel()) + " for weights [" +
                         std::to_string(out_n) + "x" + std::to_string(in_n) + "]");
    DenseGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(p.weights.shape()),
                    Tensor<T>(p.bias.shape())};
    // dW = g x^T (outer product)
    detail::gemm_nn(out_n, in_n, 1, grad_out.data(), input.data(), g.weights.data(), false);
    // dx^T = g^T W
    detail::gemm_nn(1, in_n, out_n, grad_out.data(), p.weights.data(), g.input.data(), false);
    for (std::size_t i = 0; i < out_n; ++i) g.bias[i] = grad_out[i];
    return g;
}

template <typename T>
Tensor<T> tanh_map(const Tensor<T>& input) {
    Tensor<T> out(input.shape());
    const T* x = input.data();
    T* y = out.data();
    for (std::size_t i = 0; i < input.numel(); ++i) y[i] = std::tanh(x[i]);
    return out;
}

// grad_in = (1 - y^2) * grad_out, with y the forward output.
template <typename T>
Tensor<T> tanh_backward(const Tensor<T>& output, const Tensor<T>& grad_out) {
    if (!output.same_shape(grad_out))
        throw ShapeError("tanh_backward: output " + shape_str(output.shape()) +
                         " vs grad_out " + shape_str(grad_out.shape()));
    Tensor<T> g(output.shape());
    const T* y = output.data();
    const T* d = grad_out.data();
    T* o = g.data();
    for (std::size_t i = 0; i < g.numel(); ++i) o[i] = (T(1) - y[i] * y[i]) * d[i];
    return g;
}

// Max-shifted softmax; outputs are strictly positive and sum to 1.
template <typename T>
Tensor<T> softmax(const Tensor<T>& input) {
    if (input.numel() == 0) throw ShapeError("softmax: empty input");
    Tensor<T> out(input.shape());
    const T* x = input.data();
    T* y = out.data();
    T m = x[0];
    for (std::size_t i = 1; i < input.numel(); ++i)
        if (x[i] > m) m = x[i];
    T sum = T(0);
    for (std::size_t i = 0; i < input.numel(); ++i) {
        y[i] = std::exp(x[i] - m);
        sum += y[i];
    }
    for (std::size_t i = 0; i < input.numel(); ++i) y[i] /= sum;
    return out;
}

template <typename T>
struct XentResult {
    T loss;
    Tensor<T> grad_logits;  // softmax(logits) - onehot(label)
};

// loss = -ln softmax(logits)[label], computed in log-sum-exp form.
template <typename T>
XentResult<T> softmax_xent(const Tensor<T>& logits, std::size_t label) {
    if (label >= logits.numel())
        throw ShapeError("softmax_xent: label " + std::to_string(label) + " out of range [0," +
                         std::to_string(logits.numel()) + ")");
    const T* x = logits.data();
    const std::size_t n = logits.numel();
    T m = x[0];
    for (std::size_t i = 1; i < n; ++i)
        if (x[i] > m) m = x[i];
    T sum = T(0);
    XentResult<T> r{T(0), Tensor<T>(logits.shape())};
    T* g = r.grad_logits.data();
    for (std::size_t i = 0; i < n; ++i) {
        g[i] = std::exp(x[i] - m);
        sum += g[i];
    }
    r.loss = std::log(sum) + m - x[label];
    for (std::size_t i = 0; i < n; ++i) g[i] /= sum;
    g[label] -= T(1);
    return r;
}

}  // namespace lymphnet

#endif
