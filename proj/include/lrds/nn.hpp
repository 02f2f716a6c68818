#pragma once

// Layer primitives with explicit forward/backward passes. Parameters carry
// their gradient buffers; forward passes never touch gradients, so concurrent
// forwards against frozen parameters are safe. Updates are single-writer.

#include <cmath>
#include <string>
#include <vector>

#include "lrds/rng.hpp"
#include "lrds/tensor.hpp"

namespace lrds::nn {

struct Param {
    Tensor value;
    Tensor grad;

    void resize(std::vector<int> shape) {
        value = Tensor(shape);
        grad = Tensor(std::move(shape));
    }
    void zero_grad() { grad.zero(); }
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
void fan_in_init(Param& p, int fan_in, Rng& rng);
// Kaiming-uniform for relu conv stacks: Uniform(+-sqrt(6/fan_in)) keeps the
// activation scale through the layers.
void he_uniform_init(Param& p, int fan_in, Rng& rng);

struct Conv2d {
    int in_ch = 0, out_ch = 0, ksize = 3, stride = 1, pad = 1;
    Param weight;  // [out, in, k, k]
    Param bias;    // [out]

    void build(int in_channels, int out_channels, int k, int s, int p, Rng& rng);
    std::vector<int> out_shape(const std::vector<int>& in) const;
    Tensor forward(const Tensor& x) const;
    // Accumulates parameter gradients and returns grad w.r.t. x.
    Tensor backward(const Tensor& x, const Tensor& grad_out);
};

struct Linear {
    int in_dim = 0, out_dim = 0;
    Param weight;  // [out, in]
    Param bias;    // [out]

    void build(int in, int out, Rng& rng);
    Tensor forward(const Tensor& x) const;
    Tensor backward(const Tensor& x, const Tensor& grad_out);
};

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);

// Parameter-free per-channel spatial normalization: (x - mean) / sqrt(var + eps)
// over each channel's H x W plane. Keeps activation scale stable through deep
// stacks so the reference learning rate works without batch statistics.
Tensor instance_norm(const Tensor& chw, double eps = 1e-5);
Tensor instance_norm_backward(const Tensor& chw, const Tensor& grad_out, double eps = 1e-5);

// Same normalization over a rank-1 tensor (layer norm without affine).
Tensor layer_norm(const Tensor& vec, double eps = 1e-5);
Tensor layer_norm_backward(const Tensor& vec, const Tensor& grad_out, double eps = 1e-5);

Tensor global_avg_pool(const Tensor& chw);  // [C]
Tensor global_avg_pool_backward(const std::vector<int>& chw_shape, const Tensor& grad_pooled);

// Scalar losses over one sample. Gradients are written only when the output
// pointer is non-null; the gradient of the loss w.r.t. logits is ADDED with
// the given scale.
double softmax_cross_entropy(const Tensor& logits, int label, Tensor* dlogits, double scale);
double sigmoid_bce_sum(const Tensor& logits, const std::vector<std::uint8_t>& bits,
                       Tensor* dlogits, double scale);
double smooth_l1_sum(const Tensor& pred, const Tensor& target, Tensor* dpred, double scale);

// SGD with momentum; velocity buffers live here keyed by parameter order.
class SgdMomentum {
public:
    SgdMomentum(std::vector<Param*> params, double momentum, double weight_decay);
    void step(double lr);
    void zero_grad();
    std::vector<Tensor>& velocity() { return velocity_; }
    const std::vector<Tensor>& velocity() const { return velocity_; }

private:
    std::vector<Param*> params_;
    std::vector<Tensor> velocity_;
    double momentum_;
    double weight_decay_;
};

}  // namespace lrds::nn
