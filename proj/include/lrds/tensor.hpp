#pragma once

// Minimal dense double tensor. Feature maps are laid out C x H x W row-major;
// vectors are rank 1. Everything in the training stack is 64-bit so gradient
// checks against central finite differences are meaningful.

#include <cassert>
#include <cstddef>
#include <vector>

namespace lrds {

struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(static_cast<std::size_t>(numel_of(shape)), 0.0);
    }

    static std::int64_t numel_of(const std::vector<int>& s) {
        std::int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }
    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }

    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    double& at3(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    double at3(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
    }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    Tensor& operator+=(const Tensor& other) {
        assert(same_shape(other));
        for (std::size_t i = 0; i < data.size(); ++i) data[i] += other.data[i];
        return *this;
    }
    Tensor& scale(double a) {
        for (double& v : data) v *= a;
        return *this;
    }
    void zero() { std::fill(data.begin(), data.end(), 0.0); }

    bool all_finite() const;
};

inline Tensor flatten(const Tensor& t) {
    Tensor out;
    out.shape = {static_cast<int>(t.data.size())};
    out.data = t.data;
    return out;
}

inline Tensor reshape(const Tensor& t, std::vector<int> shape) {
    assert(Tensor::numel_of(shape) == t.numel());
    Tensor out;
    out.shape = std::move(shape);
    out.data = t.data;
    return out;
}

}  // namespace lrds
