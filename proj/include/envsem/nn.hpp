// SPDX-License-Identifier: Apache-2.0
//
// Minimal layer library with hand-written backpropagation. Templated on the
// scalar so a float model can be shadowed in double for gradient checks.
// Activations are NCHW; dense activations use h = w = 1.

#pragma once

#include "envsem/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace envsem::nn {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
struct Tensor {
    int n = 0, c = 0, h = 1, w = 1;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int n_, int c_, int h_ = 1, int w_ = 1)
        : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, T(0)) {}

    std::size_t size() const { return data.size(); }
    int features() const { return c * h * w; }
    T* sample(int i) { return data.data() + static_cast<std::size_t>(i) * features(); }
    const T* sample(int i) const { return data.data() + static_cast<std::size_t>(i) * features(); }
    bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

template <class T>
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;
    /// False for running statistics: stored and copied, never optimised.
    bool trainable = true;

    Param() = default;
    Param(std::string name_, std::vector<int> shape_, bool trainable_ = true);
    std::size_t size() const { return value.size(); }
};

/// Per-call switches. Dropout draws from `rng` when active.
struct Context {
    bool batch_stats = false; ///< BatchNorm normalises with batch statistics
    bool dropout = false;
    Rng* rng = nullptr;

    static Context eval() { return {}; }
    static Context train(Rng& rng) { return {true, true, &rng}; }
};

template <class T>
class Layer {
  public:
    virtual ~Layer() = default;
    virtual Tensor<T> forward(const Tensor<T>& x, const Context& ctx) = 0;
    /// Accumulates parameter gradients and returns d loss / d input.
    virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
    virtual void collect(std::vector<Param<T>*>&) {}
    /// Appends the 0/1 pattern of every ReLU from the latest forward.
    virtual void relu_pattern(std::vector<std::uint8_t>&) const {}
};

template <class T>
class Linear : public Layer<T> {
  public:
    Linear(const std::string& name, int in, int out, Rng& rng);
    Tensor<T> forward(const Tensor<T>& x, const Context& ctx) override;
    Tensor<T> backward(const Tensor<T>& dy) override;
    void collect(std::vector<Param<T>*>& out) override;
    int in_features() const { return in_; }
    int out_features() const { return out_; }

  private:
    int in_, out_;
    Param<T> weight_, bias_;
    Tensor<T> input_;
};

template <class T>
class Conv2d : public Layer<T> {
  public:
    Conv2d(const std::string& name, int in, int out, int kernel, int stride, int pad, Rng& rng);
    Tensor<T> forward(const Tensor<T>& x, const Context& ctx) override;
    Tensor<T> backward(const Tensor<T>& dy) override;
    void collect(std::vector<Param<T>*>& out) override;

  private:
    int in_, out_, k_, stride_, pad_;
    Param<T> weight_, bias_;
    int ih_ = 0, iw_ = 0, oh_ = 0, ow_ = 0;
    std::vector<RowMat<T>> cols_;
};

template <class T>
class BatchNorm : public Layer<T> {
  public:
    BatchNorm(const std::string& name, int channels, double momentum = 0.1, double eps = 1e-5);
    Tensor<T> forward(const Tensor<T>& x, const Context& ctx) override;
    Tensor<T> backward(const Tensor<T>& dy) override;
    void collect(std::vector<Param<T>*>& out) override;

  private:
    int channels_;
    double momentum_, eps_;
    Param<T> gamma_, beta_, running_mean_, running_var_;
    Tensor<T> xhat_;
    std::vector<T> invstd_;
    bool used_batch_ = false;
};

template <class T>
class ReLU : public Layer<T> {
  public:
    Tensor<T> forward(const Tensor<T>& x, const Context& ctx) override;
    Tensor<T> backward(const Tensor<T>& dy) override;
    void relu_pattern(std::vector<std::uint8_t>& out) const override;

  private:
    std::vector<std::uint8_t> mask_;
};

/// Average pooling that counts padded cells (divisor kernel^2).
template <class T>
class AvgPool : public Layer<T> {
  public:
    AvgPool(int kernel, int stride, int pad) : k_(kernel), stride_(stride), pad_(pad) {}
    Tensor<T> forward(const Tensor<T>& x, const Context& ctx) override;
    Tensor<T> backward(const Tensor<T>& dy) override;

  private:
    int k_, stride_, pad_;
    int ih_ = 0, iw_ = 0;
};

/// Inverted dropout.
template <class T>
class Dropout : public Layer<T> {
  public:
    explicit Dropout(double p) : p_(p) {}
    Tensor<T> forward(const Tensor<T>& x, const Context& ctx) override;
    Tensor<T> backward(const Tensor<T>& dy) override;

  private:
    double p_;
    std::vector<T> scale_;
};

template <class T>
class Sequential : public Layer<T> {
  public:
    template <class L, class... Args>
    L& add(Args&&... args) {
        auto p = std::make_unique<L>(std::forward<Args>(args)...);
        L& ref = *p;
        layers_.push_back(std::move(p));
        return ref;
    }
    Tensor<T> forward(const Tensor<T>& x, const Context& ctx) override;
    Tensor<T> backward(const Tensor<T>& dy) override;
    void collect(std::vector<Param<T>*>& out) override;
    void relu_pattern(std::vector<std::uint8_t>& out) const override;
    bool empty() const { return layers_.empty(); }

  private:
    std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// relu(main(x) + skip(x)); skip is the identity when empty.
template <class T>
class Residual : public Layer<T> {
  public:
    Sequential<T>& main() { return main_; }
    Sequential<T>& skip() { return skip_; }
    Tensor<T> forward(const Tensor<T>& x, const Context& ctx) override;
    Tensor<T> backward(const Tensor<T>& dy) override;
    void collect(std::vector<Param<T>*>& out) override;
    void relu_pattern(std::vector<std::uint8_t>& out) const override;

  private:
    Sequential<T> main_, skip_;
    ReLU<T> out_;
};

/// Adam on every trainable parameter, in collection order.
template <class T>
class Adam {
  public:
    Adam(std::vector<Param<T>*> params, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8);
    void zero_grad();
    void step();

  private:
    std::vector<Param<T>*> params_;
    double lr_, beta1_, beta2_, eps_;
    long step_count_ = 0;
    std::vector<std::vector<T>> m_, v_;
};

int conv_output_size(int in, int kernel, int stride, int pad);

} // namespace envsem::nn
