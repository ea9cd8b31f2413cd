// SPDX-License-Identifier: Apache-2.0

#include "envsem/nn.hpp"
#include "envsem/common.hpp"

#include <algorithm>
#include <cmath>

namespace envsem::nn {

namespace {

template <class T>
using CMap = Eigen::Map<const RowMat<T>>;
template <class T>
using MMap = Eigen::Map<RowMat<T>>;

template <class T>
void he_uniform(Param<T>& p, int fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / fan_in);
    for (auto& v : p.value) v = static_cast<T>(rng.uniform(-bound, bound));
}

} // namespace

int conv_output_size(int in, int kernel, int stride, int pad) {
    const int out = (in + 2 * pad - kernel) / stride + 1;
    if (out < 1) throw ConfigError("layer input too small for its kernel and stride");
    return out;
}

template <class T>
Param<T>::Param(std::string name_, std::vector<int> shape_, bool trainable_)
    : name(std::move(name_)), shape(std::move(shape_)), trainable(trainable_) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    value.assign(n, T(0));
    grad.assign(n, T(0));
}

// ---- Linear ----------------------------------------------------------------

template <class T>
Linear<T>::Linear(const std::string& name, int in, int out, Rng& rng)
    : in_(in), out_(out), weight_(name + ".weight", {out, in}), bias_(name + ".bias", {out}) {
    he_uniform(weight_, in, rng);
}

template <class T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x, const Context&) {
    if (x.features() != in_) throw ConfigError("linear layer: input width mismatch");
    input_ = x;
    Tensor<T> y(x.n, out_);
    CMap<T> X(x.data.data(), x.n, in_);
    CMap<T> W(weight_.value.data(), out_, in_);
    MMap<T> Y(y.data.data(), x.n, out_);
    Y.noalias() = X * W.transpose();
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias_.value.data(), out_);
    Y.rowwise() += b;
    return y;
}

template <class T>
Tensor<T> Linear<T>::backward(const Tensor<T>& dy) {
    CMap<T> dY(dy.data.data(), dy.n, out_);
    CMap<T> X(input_.data.data(), input_.n, in_);
    MMap<T> dW(weight_.grad.data(), out_, in_);
    dW.noalias() += dY.transpose() * X;
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(bias_.grad.data(), out_);
    db += dY.colwise().sum();
    Tensor<T> dx(input_.n, input_.c, input_.h, input_.w);
    MMap<T> dX(dx.data.data(), input_.n, in_);
    CMap<T> W(weight_.value.data(), out_, in_);
    dX.noalias() = dY * W;
    return dx;
}

template <class T>
void Linear<T>::collect(std::vector<Param<T>*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
}

// ---- Conv2d ----------------------------------------------------------------

template <class T>
Conv2d<T>::Conv2d(const std::string& name, int in, int out, int kernel, int stride, int pad, Rng& rng)
    : in_(in), out_(out), k_(kernel), stride_(stride), pad_(pad),
      weight_(name + ".weight", {out, in, kernel, kernel}), bias_(name + ".bias", {out}) {
    he_uniform(weight_, in * kernel * kernel, rng);
}

template <class T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, const Context&) {
    if (x.c != in_) throw ConfigError("conv layer: channel mismatch");
    ih_ = x.h;
    iw_ = x.w;
    oh_ = conv_output_size(x.h, k_, stride_, pad_);
    ow_ = conv_output_size(x.w, k_, stride_, pad_);
    const int rows = in_ * k_ * k_;
    const int cols = oh_ * ow_;
    cols_.assign(static_cast<std::size_t>(x.n), RowMat<T>());
    Tensor<T> y(x.n, out_, oh_, ow_);
    CMap<T> W(weight_.value.data(), out_, rows);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias_.value.data(), out_);
    for (int i = 0; i < x.n; ++i) {
        RowMat<T>& col = cols_[static_cast<std::size_t>(i)];
        col.setZero(rows, cols);
        const T* xs = x.sample(i);
        for (int ci = 0; ci < in_; ++ci)
            for (int ky = 0; ky < k_; ++ky)
                for (int kx = 0; kx < k_; ++kx) {
                    T* row = col.data() + static_cast<std::size_t>((ci * k_ + ky) * k_ + kx) * cols;
                    for (int oy = 0; oy < oh_; ++oy) {
                        const int iy = oy * stride_ - pad_ + ky;
                        if (iy < 0 || iy >= ih_) continue;
                        const T* src = xs + (static_cast<std::size_t>(ci) * ih_ + iy) * iw_;
                        for (int ox = 0; ox < ow_; ++ox) {
                            const int ix = ox * stride_ - pad_ + kx;
                            if (ix >= 0 && ix < iw_) row[oy * ow_ + ox] = src[ix];
                        }
                    }
                }
        MMap<T> Y(y.sample(i), out_, cols);
        Y.noalias() = W * col;
        Y.colwise() += b;
    }
    return y;
}

template <class T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& dy) {
    const int rows = in_ * k_ * k_;
    const int cols = oh_ * ow_;
    MMap<T> dW(weight_.grad.data(), out_, rows);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(bias_.grad.data(), out_);
    CMap<T> W(weight_.value.data(), out_, rows);
    Tensor<T> dx(dy.n, in_, ih_, iw_);
    RowMat<T> dcol(rows, cols);
    for (int i = 0; i < dy.n; ++i) {
        CMap<T> dY(dy.sample(i), out_, cols);
        const RowMat<T>& col = cols_[static_cast<std::size_t>(i)];
        dW.noalias() += dY * col.transpose();
        db += dY.rowwise().sum();
        dcol.noalias() = W.transpose() * dY;
        T* xs = dx.sample(i);
        for (int ci = 0; ci < in_; ++ci)
            for (int ky = 0; ky < k_; ++ky)
                for (int kx = 0; kx < k_; ++kx) {
                    const T* row = dcol.data() + static_cast<std::size_t>((ci * k_ + ky) * k_ + kx) * cols;
                    for (int oy = 0; oy < oh_; ++oy) {
                        const int iy = oy * stride_ - pad_ + ky;
                        if (iy < 0 || iy >= ih_) continue;
                        T* dst = xs + (static_cast<std::size_t>(ci) * ih_ + iy) * iw_;
                        for (int ox = 0; ox < ow_; ++ox) {
                            const int ix = ox * stride_ - pad_ + kx;
                            if (ix >= 0 && ix < iw_) dst[ix] += row[oy * ow_ + ox];
                        }
                    }
                }
    }
    return dx;
}

template <class T>
void Conv2d<T>::collect(std::vector<Param<T>*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
}

// ---- BatchNorm ---------------------------------------------------------------

template <class T>
BatchNorm<T>::BatchNorm(const std::string& name, int channels, double momentum, double eps)
    : channels_(channels), momentum_(momentum), eps_(eps), gamma_(name + ".gamma", {channels}),
      beta_(name + ".beta", {channels}), running_mean_(name + ".running_mean", {channels}, false),
      running_var_(name + ".running_var", {channels}, false) {
    std::fill(gamma_.value.begin(), gamma_.value.end(), T(1));
    std::fill(running_var_.value.begin(), running_var_.value.end(), T(1));
}

template <class T>
Tensor<T> BatchNorm<T>::forward(const Tensor<T>& x, const Context& ctx) {
    if (x.c != channels_) throw ConfigError("batch norm: channel mismatch");
    const int plane = x.h * x.w;
    const std::size_t count = static_cast<std::size_t>(x.n) * plane;
    used_batch_ = ctx.batch_stats;
    if (used_batch_ && count < 2) throw ConfigError("batch norm needs at least two values per channel");
    xhat_ = Tensor<T>(x.n, x.c, x.h, x.w);
    invstd_.assign(static_cast<std::size_t>(channels_), T(0));
    Tensor<T> y(x.n, x.c, x.h, x.w);
    for (int ch = 0; ch < channels_; ++ch) {
        double mean, var;
        if (used_batch_) {
            double s = 0.0;
            for (int i = 0; i < x.n; ++i) {
                const T* p = x.sample(i) + static_cast<std::size_t>(ch) * plane;
                for (int q = 0; q < plane; ++q) s += p[q];
            }
            mean = s / static_cast<double>(count);
            double ss = 0.0;
            for (int i = 0; i < x.n; ++i) {
                const T* p = x.sample(i) + static_cast<std::size_t>(ch) * plane;
                for (int q = 0; q < plane; ++q) {
                    const double d = p[q] - mean;
                    ss += d * d;
                }
            }
            var = ss / static_cast<double>(count);
            auto& rm = running_mean_.value[static_cast<std::size_t>(ch)];
            auto& rv = running_var_.value[static_cast<std::size_t>(ch)];
            rm = static_cast<T>((1.0 - momentum_) * rm + momentum_ * mean);
            rv = static_cast<T>((1.0 - momentum_) * rv +
                                momentum_ * ss / static_cast<double>(count - 1));
        } else {
            mean = running_mean_.value[static_cast<std::size_t>(ch)];
            var = running_var_.value[static_cast<std::size_t>(ch)];
        }
        const T inv = static_cast<T>(1.0 / std::sqrt(var + eps_));
        invstd_[static_cast<std::size_t>(ch)] = inv;
        const T g = gamma_.value[static_cast<std::size_t>(ch)];
        const T b = beta_.value[static_cast<std::size_t>(ch)];
        const T m = static_cast<T>(mean);
        for (int i = 0; i < x.n; ++i) {
            const std::size_t off = static_cast<std::size_t>(ch) * plane;
            const T* p = x.sample(i) + off;
            T* xh = xhat_.sample(i) + off;
            T* out = y.sample(i) + off;
            for (int q = 0; q < plane; ++q) {
                xh[q] = (p[q] - m) * inv;
                out[q] = g * xh[q] + b;
            }
        }
    }
    return y;
}

template <class T>
Tensor<T> BatchNorm<T>::backward(const Tensor<T>& dy) {
    const int plane = dy.h * dy.w;
    const double count = static_cast<double>(dy.n) * plane;
    Tensor<T> dx(dy.n, dy.c, dy.h, dy.w);
    for (int ch = 0; ch < channels_; ++ch) {
        const std::size_t off = static_cast<std::size_t>(ch) * plane;
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int i = 0; i < dy.n; ++i) {
            const T* d = dy.sample(i) + off;
            const T* xh = xhat_.sample(i) + off;
            for (int q = 0; q < plane; ++q) {
                sum_dy += d[q];
                sum_dy_xhat += static_cast<double>(d[q]) * xh[q];
            }
        }
        gamma_.grad[static_cast<std::size_t>(ch)] += static_cast<T>(sum_dy_xhat);
        beta_.grad[static_cast<std::size_t>(ch)] += static_cast<T>(sum_dy);
        const T g = gamma_.value[static_cast<std::size_t>(ch)];
        const T inv = invstd_[static_cast<std::size_t>(ch)];
        const T mean_dy = static_cast<T>(sum_dy / count);
        const T mean_dy_xhat = static_cast<T>(sum_dy_xhat / count);
        for (int i = 0; i < dy.n; ++i) {
            const T* d = dy.sample(i) + off;
            const T* xh = xhat_.sample(i) + off;
            T* out = dx.sample(i) + off;
            if (used_batch_) {
                for (int q = 0; q < plane; ++q)
                    out[q] = g * inv * (d[q] - mean_dy - xh[q] * mean_dy_xhat);
            } else {
                for (int q = 0; q < plane; ++q) out[q] = g * inv * d[q];
            }
        }
    }
    return dx;
}

template <class T>
void BatchNorm<T>::collect(std::vector<Param<T>*>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
    out.push_back(&running_mean_);
    out.push_back(&running_var_);
}

// ---- ReLU --------------------------------------------------------------------

template <class T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x, const Context&) {
    Tensor<T> y = x;
    mask_.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        mask_[i] = x.data[i] > T(0);
        if (!mask_[i]) y.data[i] = T(0);
    }
    return y;
}

template <class T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& dy) {
    Tensor<T> dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i)
        if (!mask_[i]) dx.data[i] = T(0);
    return dx;
}

template <class T>
void ReLU<T>::relu_pattern(std::vector<std::uint8_t>& out) const {
    out.insert(out.end(), mask_.begin(), mask_.end());
}

// ---- AvgPool -----------------------------------------------------------------

template <class T>
Tensor<T> AvgPool<T>::forward(const Tensor<T>& x, const Context&) {
    ih_ = x.h;
    iw_ = x.w;
    const int oh = conv_output_size(x.h, k_, stride_, pad_);
    const int ow = conv_output_size(x.w, k_, stride_, pad_);
    const T inv = T(1) / static_cast<T>(k_ * k_);
    Tensor<T> y(x.n, x.c, oh, ow);
    for (int i = 0; i < x.n; ++i)
        for (int ch = 0; ch < x.c; ++ch) {
            const T* src = x.sample(i) + static_cast<std::size_t>(ch) * ih_ * iw_;
            T* dst = y.sample(i) + static_cast<std::size_t>(ch) * oh * ow;
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    T s = T(0);
                    for (int ky = 0; ky < k_; ++ky) {
                        const int iy = oy * stride_ - pad_ + ky;
                        if (iy < 0 || iy >= ih_) continue;
                        for (int kx = 0; kx < k_; ++kx) {
                            const int ix = ox * stride_ - pad_ + kx;
                            if (ix >= 0 && ix < iw_) s += src[iy * iw_ + ix];
                        }
                    }
                    dst[oy * ow + ox] = s * inv;
                }
        }
    return y;
}

template <class T>
Tensor<T> AvgPool<T>::backward(const Tensor<T>& dy) {
    const int oh = dy.h, ow = dy.w;
    const T inv = T(1) / static_cast<T>(k_ * k_);
    Tensor<T> dx(dy.n, dy.c, ih_, iw_);
    for (int i = 0; i < dy.n; ++i)
        for (int ch = 0; ch < dy.c; ++ch) {
            const T* src = dy.sample(i) + static_cast<std::size_t>(ch) * oh * ow;
            T* dst = dx.sample(i) + static_cast<std::size_t>(ch) * ih_ * iw_;
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    const T g = src[oy * ow + ox] * inv;
                    for (int ky = 0; ky < k_; ++ky) {
                        const int iy = oy * stride_ - pad_ + ky;
                        if (iy < 0 || iy >= ih_) continue;
                        for (int kx = 0; kx < k_; ++kx) {
                            const int ix = ox * stride_ - pad_ + kx;
                            if (ix >= 0 && ix < iw_) dst[iy * iw_ + ix] += g;
                        }
                    }
                }
        }
    return dx;
}

// ---- Dropout -----------------------------------------------------------------

template <class T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& x, const Context& ctx) {
    if (!ctx.dropout || p_ <= 0.0) {
        scale_.assign(x.size(), T(1));
        return x;
    }
    if (ctx.rng == nullptr) throw ConfigError("dropout in training mode needs a random stream");
    const T keep = static_cast<T>(1.0 / (1.0 - p_));
    scale_.resize(x.size());
    Tensor<T> y = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        scale_[i] = ctx.rng->uniform() < p_ ? T(0) : keep;
        y.data[i] *= scale_[i];
    }
    return y;
}

template <class T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& dy) {
    Tensor<T> dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= scale_[i];
    return dx;
}

// ---- Sequential / Residual ---------------------------------------------------

template <class T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x, const Context& ctx) {
    Tensor<T> cur = x;
    for (auto& l : layers_) cur = l->forward(cur, ctx);
    return cur;
}

template <class T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& dy) {
    Tensor<T> cur = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
    return cur;
}

template <class T>
void Sequential<T>::collect(std::vector<Param<T>*>& out) {
    for (auto& l : layers_) l->collect(out);
}

template <class T>
void Sequential<T>::relu_pattern(std::vector<std::uint8_t>& out) const {
    for (const auto& l : layers_) l->relu_pattern(out);
}

template <class T>
Tensor<T> Residual<T>::forward(const Tensor<T>& x, const Context& ctx) {
    Tensor<T> a = main_.forward(x, ctx);
    const Tensor<T> s = skip_.empty() ? x : skip_.forward(x, ctx);
    if (!a.same_shape(s)) throw ConfigError("residual block: branch shapes differ");
    for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += s.data[i];
    return out_.forward(a, ctx);
}

template <class T>
Tensor<T> Residual<T>::backward(const Tensor<T>& dy) {
    const Tensor<T> d = out_.backward(dy);
    Tensor<T> dx = main_.backward(d);
    const Tensor<T> ds = skip_.empty() ? d : skip_.backward(d);
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += ds.data[i];
    return dx;
}

template <class T>
void Residual<T>::collect(std::vector<Param<T>*>& out) {
    main_.collect(out);
    skip_.collect(out);
}

template <class T>
void Residual<T>::relu_pattern(std::vector<std::uint8_t>& out) const {
    main_.relu_pattern(out);
    skip_.relu_pattern(out);
    out_.relu_pattern(out);
}

// ---- Adam --------------------------------------------------------------------

template <class T>
Adam<T>::Adam(std::vector<Param<T>*> params, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto* p : params)
        if (p->trainable) params_.push_back(p);
    for (auto* p : params_) {
        m_.emplace_back(p->size(), T(0));
        v_.emplace_back(p->size(), T(0));
    }
}

template <class T>
void Adam<T>::zero_grad() {
    for (auto* p : params_) std::fill(p->grad.begin(), p->grad.end(), T(0));
}

template <class T>
void Adam<T>::step() {
    ++step_count_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
    const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
    const T step = static_cast<T>(lr_ / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(eps_);
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto& p = *params_[k];
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const T g = p.grad[i];
            m[i] = b1 * m[i] + (T(1) - b1) * g;
            v[i] = b2 * v[i] + (T(1) - b2) * g * g;
            p.value[i] -= step * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
        }
    }
}

#define ENVSEM_INSTANTIATE(T)                                                                  \
    template struct Param<T>;                                                                  \
    template class Linear<T>;                                                                  \
    template class Conv2d<T>;                                                                  \
    template class BatchNorm<T>;                                                               \
    template class ReLU<T>;                                                                    \
    template class AvgPool<T>;                                                                 \
    template class Dropout<T>;                                                                 \
    template class Sequential<T>;                                                              \
    template class Residual<T>;                                                                \
    template class Adam<T>;

ENVSEM_INSTANTIATE(float)
ENVSEM_INSTANTIATE(double)

#undef ENVSEM_INSTANTIATE

} // namespace envsem::nn
