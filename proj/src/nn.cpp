#include "lrds/nn.hpp"

#include <algorithm>
#include <cmath>

#include "lrds/error.hpp"

namespace lrds {

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

namespace nn {

void fan_in_init(Param& p, int fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
    for (double& v : p.value.data) v = rng.uniform(-bound, bound);
    p.grad.zero();
}

void he_uniform_init(Param& p, int fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(std::max(fan_in, 1)));
    for (double& v : p.value.data) v = rng.uniform(-bound, bound);
    p.grad.zero();
}

void Conv2d::build(int in_channels, int out_channels, int k, int s, int p, Rng& rng) {
    in_ch = in_channels;
    out_ch = out_channels;
    ksize = k;
    stride = s;
    pad = p;
    weight.resize({out_ch, in_ch, ksize, ksize});
    bias.resize({out_ch});
    he_uniform_init(weight, in_ch * ksize * ksize, rng);
    fan_in_init(bias, in_ch * ksize * ksize, rng);
}

std::vector<int> Conv2d::out_shape(const std::vector<int>& in) const {
    const int oh = (in[1] + 2 * pad - ksize) / stride + 1;
    const int ow = (in[2] + 2 * pad - ksize) / stride + 1;
    return {out_ch, oh, ow};
}

Tensor Conv2d::forward(const Tensor& x) const {
    check(x.shape.size() == 3 && x.dim(0) == in_ch, "conv: input has ", x.dim(0), " channels, expected ",
          in_ch);
    const int ih = x.dim(1), iw = x.dim(2);
    Tensor out(out_shape(x.shape));
    const int oh = out.dim(1), ow = out.dim(2);
    for (int oc = 0; oc < out_ch; ++oc) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double acc = bias.value[static_cast<std::size_t>(oc)];
                for (int ic = 0; ic < in_ch; ++ic) {
                    for (int ky = 0; ky < ksize; ++ky) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= ih) continue;
                        for (int kx = 0; kx < ksize; ++kx) {
                            const int ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= iw) continue;
                            acc += weight.value[((static_cast<std::size_t>(oc) * in_ch + ic) * ksize + ky) *
                                                    ksize +
                                                kx] *
                                   x.at3(ic, iy, ix);
                        }
                    }
                }
                out.at3(oc, oy, ox) = acc;
            }
        }
    }
    return out;
}

Tensor Conv2d::backward(const Tensor& x, const Tensor& grad_out) {
    const int ih = x.dim(1), iw = x.dim(2);
    const int oh = grad_out.dim(1), ow = grad_out.dim(2);
    Tensor grad_x(x.shape);
    for (int oc = 0; oc < out_ch; ++oc) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const double g = grad_out.at3(oc, oy, ox);
                if (g == 0.0) continue;
                bias.grad[static_cast<std::size_t>(oc)] += g;
                for (int ic = 0; ic < in_ch; ++ic) {
                    for (int ky = 0; ky < ksize; ++ky) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= ih) continue;
                        for (int kx = 0; kx < ksize; ++kx) {
                            const int ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= iw) continue;
                            const std::size_t wi =
                                ((static_cast<std::size_t>(oc) * in_ch + ic) * ksize + ky) * ksize + kx;
                            weight.grad[wi] += g * x.at3(ic, iy, ix);
                            grad_x.at3(ic, iy, ix) += g * weight.value[wi];
                        }
                    }
                }
            }
        }
    }
    return grad_x;
}

void Linear::build(int in, int out, Rng& rng) {
    in_dim = in;
    out_dim = out;
    weight.resize({out_dim, in_dim});
    bias.resize({out_dim});
    fan_in_init(weight, in_dim, rng);
    fan_in_init(bias, in_dim, rng);
}

Tensor Linear::forward(const Tensor& x) const {
    check(x.numel() == in_dim, "linear: input size ", x.numel(), ", expected ", in_dim);
    Tensor out({out_dim});
    for (int o = 0; o < out_dim; ++o) {
        double acc = bias.value[static_cast<std::size_t>(o)];
        const double* w = &weight.value.data[static_cast<std::size_t>(o) * in_dim];
        for (int i = 0; i < in_dim; ++i) acc += w[i] * x.data[static_cast<std::size_t>(i)];
        out[static_cast<std::size_t>(o)] = acc;
    }
    return out;
}

Tensor Linear::backward(const Tensor& x, const Tensor& grad_out) {
    Tensor grad_x(std::vector<int>{in_dim});
    for (int o = 0; o < out_dim; ++o) {
        const double g = grad_out[static_cast<std::size_t>(o)];
        if (g == 0.0) continue;
        bias.grad[static_cast<std::size_t>(o)] += g;
        double* wg = &weight.grad.data[static_cast<std::size_t>(o) * in_dim];
        const double* w = &weight.value.data[static_cast<std::size_t>(o) * in_dim];
        for (int i = 0; i < in_dim; ++i) {
            wg[i] += g * x.data[static_cast<std::size_t>(i)];
            grad_x.data[static_cast<std::size_t>(i)] += g * w[i];
        }
    }
    return grad_x;
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data) v = std::max(v, 0.0);
    return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
    Tensor g = grad_out;
    for (std::size_t i = 0; i < g.data.size(); ++i)
        if (x.data[i] <= 0.0) g.data[i] = 0.0;
    return g;
}

Tensor instance_norm(const Tensor& chw, double eps) {
    const int c = chw.dim(0);
    const std::size_t plane = static_cast<std::size_t>(chw.dim(1)) * chw.dim(2);
    Tensor out = chw;
    for (int ch = 0; ch < c; ++ch) {
        double* p = &out.data[static_cast<std::size_t>(ch) * plane];
        double mean = 0;
        for (std::size_t i = 0; i < plane; ++i) mean += p[i];
        mean /= static_cast<double>(plane);
        double var = 0;
        for (std::size_t i = 0; i < plane; ++i) var += (p[i] - mean) * (p[i] - mean);
        var /= static_cast<double>(plane);
        const double r = 1.0 / std::sqrt(var + eps);
        for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - mean) * r;
    }
    return out;
}

Tensor instance_norm_backward(const Tensor& chw, const Tensor& grad_out, double eps) {
    const int c = chw.dim(0);
    const std::size_t plane = static_cast<std::size_t>(chw.dim(1)) * chw.dim(2);
    Tensor grad = grad_out;
    for (int ch = 0; ch < c; ++ch) {
        const double* x = &chw.data[static_cast<std::size_t>(ch) * plane];
        double* g = &grad.data[static_cast<std::size_t>(ch) * plane];
        double mean = 0;
        for (std::size_t i = 0; i < plane; ++i) mean += x[i];
        mean /= static_cast<double>(plane);
        double var = 0;
        for (std::size_t i = 0; i < plane; ++i) var += (x[i] - mean) * (x[i] - mean);
        var /= static_cast<double>(plane);
        const double r = 1.0 / std::sqrt(var + eps);
        double gsum = 0, gysum = 0;
        for (std::size_t i = 0; i < plane; ++i) {
            gsum += g[i];
            gysum += g[i] * (x[i] - mean) * r;
        }
        gsum /= static_cast<double>(plane);
        gysum /= static_cast<double>(plane);
        for (std::size_t i = 0; i < plane; ++i) {
            const double y = (x[i] - mean) * r;
            g[i] = r * (g[i] - gsum - y * gysum);
        }
    }
    return grad;
}

namespace {
Tensor norm_flat(const Tensor& x, double eps) {
    Tensor out = x;
    double mean = 0;
    for (double v : x.data) mean += v;
    mean /= static_cast<double>(x.data.size());
    double var = 0;
    for (double v : x.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.data.size());
    const double r = 1.0 / std::sqrt(var + eps);
    for (double& v : out.data) v = (v - mean) * r;
    return out;
}

Tensor norm_flat_backward(const Tensor& x, const Tensor& grad_out, double eps) {
    const std::size_t n = x.data.size();
    double mean = 0;
    for (double v : x.data) mean += v;
    mean /= static_cast<double>(n);
    double var = 0;
    for (double v : x.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double r = 1.0 / std::sqrt(var + eps);
    double gsum = 0, gysum = 0;
    for (std::size_t i = 0; i < n; ++i) {
        gsum += grad_out.data[i];
        gysum += grad_out.data[i] * (x.data[i] - mean) * r;
    }
    gsum /= static_cast<double>(n);
    gysum /= static_cast<double>(n);
    Tensor g = grad_out;
    for (std::size_t i = 0; i < n; ++i) {
        const double y = (x.data[i] - mean) * r;
        g.data[i] = r * (grad_out.data[i] - gsum - y * gysum);
    }
    return g;
}
}  // namespace

Tensor layer_norm(const Tensor& vec, double eps) { return norm_flat(vec, eps); }
Tensor layer_norm_backward(const Tensor& vec, const Tensor& grad_out, double eps) {
    return norm_flat_backward(vec, grad_out, eps);
}

Tensor global_avg_pool(const Tensor& chw) {
    const int c = chw.dim(0);
    const double inv = 1.0 / (static_cast<double>(chw.dim(1)) * chw.dim(2));
    Tensor out({c});
    for (int ch = 0; ch < c; ++ch) {
        double acc = 0;
        for (int y = 0; y < chw.dim(1); ++y)
            for (int x = 0; x < chw.dim(2); ++x) acc += chw.at3(ch, y, x);
        out[static_cast<std::size_t>(ch)] = acc * inv;
    }
    return out;
}

Tensor global_avg_pool_backward(const std::vector<int>& chw_shape, const Tensor& grad_pooled) {
    Tensor g(chw_shape);
    const double inv = 1.0 / (static_cast<double>(chw_shape[1]) * chw_shape[2]);
    for (int ch = 0; ch < chw_shape[0]; ++ch) {
        const double v = grad_pooled[static_cast<std::size_t>(ch)] * inv;
        for (int y = 0; y < chw_shape[1]; ++y)
            for (int x = 0; x < chw_shape[2]; ++x) g.at3(ch, y, x) = v;
    }
    return g;
}

double softmax_cross_entropy(const Tensor& logits, int label, Tensor* dlogits, double scale) {
    const int n = static_cast<int>(logits.numel());
    check(label >= 0 && label < n, "cross entropy: label ", label, " outside vocabulary of ", n);
    double max_logit = logits[0];
    for (int i = 1; i < n; ++i) max_logit = std::max(max_logit, logits[static_cast<std::size_t>(i)]);
    double sum = 0;
    for (int i = 0; i < n; ++i) sum += std::exp(logits[static_cast<std::size_t>(i)] - max_logit);
    const double log_sum = std::log(sum) + max_logit;
    const double loss = log_sum - logits[static_cast<std::size_t>(label)];
    if (dlogits) {
        for (int i = 0; i < n; ++i) {
            const double p = std::exp(logits[static_cast<std::size_t>(i)] - log_sum);
            dlogits->data[static_cast<std::size_t>(i)] +=
                scale * (p - (i == label ? 1.0 : 0.0));
        }
    }
    return loss;
}

double sigmoid_bce_sum(const Tensor& logits, const std::vector<std::uint8_t>& bits, Tensor* dlogits,
                       double scale) {
    check(logits.numel() == static_cast<std::int64_t>(bits.size()), "bce: ", logits.numel(),
          " logits vs ", bits.size(), " targets");
    double loss = 0;
    for (std::size_t i = 0; i < bits.size(); ++i) {
        const double z = logits[i];
        const double t = bits[i] ? 1.0 : 0.0;
        // log(1 + exp(-|z|)) + max(z, 0) - t*z, numerically stable
        loss += std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0) - t * z;
        if (dlogits) {
            const double p = 1.0 / (1.0 + std::exp(-z));
            dlogits->data[i] += scale * (p - t);
        }
    }
    return loss;
}

double smooth_l1_sum(const Tensor& pred, const Tensor& target, Tensor* dpred, double scale) {
    check(pred.numel() == target.numel(), "smooth_l1: size mismatch");
    double loss = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double d = pred.data[i] - target.data[i];
        if (std::abs(d) < 1.0) {
            loss += 0.5 * d * d;
            if (dpred) dpred->data[i] += scale * d;
        } else {
            loss += std::abs(d) - 0.5;
            if (dpred) dpred->data[i] += scale * (d > 0 ? 1.0 : -1.0);
        }
    }
    return loss;
}

SgdMomentum::SgdMomentum(std::vector<Param*> params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
    velocity_.reserve(params_.size());
    for (Param* p : params_) velocity_.emplace_back(p->value.shape);
}

void SgdMomentum::step(double lr) {
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Param& p = *params_[k];
        Tensor& v = velocity_[k];
        for (std::size_t i = 0; i < p.value.data.size(); ++i) {
            const double g = p.grad.data[i] + weight_decay_ * p.value.data[i];
            v.data[i] = momentum_ * v.data[i] + g;
            p.value.data[i] -= lr * v.data[i];
        }
    }
}

void SgdMomentum::zero_grad() {
    for (Param* p : params_) p->zero_grad();
}

}  // namespace nn
}  // namespace lrds
