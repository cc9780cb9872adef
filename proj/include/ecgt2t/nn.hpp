#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "ecgt2t/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ecgt2t::nn {

// Sets the worker count for the parallel loops below. All parallel loops
// partition independent output elements and keep every reduction in a fixed
// serial order, so results are bit-identical for any thread count.
void set_threads(int n);
int get_threads();

// Dense buffer of shape (batch, channels, length); rank-2 tensors (batch,
// features) set length = 1. Training runs in float; the finite-difference
// gradient checks instantiate everything in double.
template <class T>
struct Tensor {
    int d0 = 1, d1 = 1, d2 = 1;
    int rank = 3;
    std::vector<T> v;
    std::vector<T> g;
    bool requires_grad = false;

    static std::shared_ptr<Tensor<T>> make(int b, int c, int l, bool rg = false) {
        auto t = std::make_shared<Tensor<T>>();
        t->d0 = b;
        t->d1 = c;
        t->d2 = l;
        t->rank = 3;
        t->v.assign(static_cast<size_t>(b) * c * l, T(0));
        t->requires_grad = rg;
        return t;
    }

    static std::shared_ptr<Tensor<T>> make2(int b, int f, bool rg = false) {
        auto t = make(b, f, 1, rg);
        t->rank = 2;
        return t;
    }

    static std::shared_ptr<Tensor<T>> make1(int n, bool rg = false) {
        auto t = make(n, 1, 1, rg);
        t->rank = 1;
        return t;
    }

    size_t size() const { return v.size(); }

    T& at(int b, int c, int l) { return v[(static_cast<size_t>(b) * d1 + c) * d2 + l]; }
    const T& at(int b, int c, int l) const {
        return v[(static_cast<size_t>(b) * d1 + c) * d2 + l];
    }

    void ensure_grad() {
        if (g.size() != v.size()) g.assign(v.size(), T(0));
    }
    void zero_grad() {
        if (!g.empty()) std::fill(g.begin(), g.end(), T(0));
    }
    bool same_shape(const Tensor<T>& o) const {
        return d0 == o.d0 && d1 == o.d1 && d2 == o.d2;
    }
};

template <class T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

// Reverse-mode tape. Ops append a backward closure as they run; backward()
// replays them in reverse. A null tape means inference.
template <class T>
class Tape {
public:
    void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }

    // Seeds d(loss)/d(loss) = 1 and propagates.
    void backward(const TensorPtr<T>& loss) {
        require(loss->size() == 1, Err::ShapeMismatch, "backward needs a scalar loss");
        loss->ensure_grad();
        loss->g[0] = T(1);
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    }

    size_t size() const { return ops_.size(); }
    void clear() { ops_.clear(); }

private:
    std::vector<std::function<void()>> ops_;
};

namespace detail {

template <class T>
bool want_grad(const TensorPtr<T>& t) {
    return t && t->requires_grad;
}

template <class T>
void check_finite(const TensorPtr<T>& t, const char* what) {
#ifndef NDEBUG
    for (T x : t->v) {
        if (!std::isfinite(static_cast<double>(x))) fail(Err::NonFiniteLoss, what);
    }
#else
    (void)t;
    (void)what;
#endif
}

}  // namespace detail

// ---- primitive ops ------------------------------------------------------

// Cross-correlation along the last axis: weights (Cout, Cin, K), bias (Cout).
template <class T>
TensorPtr<T> conv1d(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& w,
                    const TensorPtr<T>& bias, int stride, int pad);

// y = x W^T + b for x (B, Fin), W (Fout, Fin), b (Fout).
template <class T>
TensorPtr<T> linear(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& w,
                    const TensorPtr<T>& bias);

template <class T>
TensorPtr<T> leaky_relu(Tape<T>* tape, const TensorPtr<T>& x, T slope = T(0.2));

// Per (batch, channel) normalization over length: (x - mu) / sqrt(var + 1e-5).
template <class T>
TensorPtr<T> instance_norm(Tape<T>* tape, const TensorPtr<T>& x);

// scale (B, C) and shift (B, C) broadcast over length.
template <class T>
TensorPtr<T> channel_affine(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& scale,
                            const TensorPtr<T>& shift);

// adain(x, s, b) = s * instance_norm(x) + b. Exactly instance_norm when
// s = 1, b = 0.
template <class T>
TensorPtr<T> adain(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& scale,
                   const TensorPtr<T>& shift) {
    return channel_affine(tape, instance_norm(tape, x), scale, shift);
}

template <class T>
TensorPtr<T> add(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b);

template <class T>
TensorPtr<T> add_scalar(Tape<T>* tape, const TensorPtr<T>& x, T c);

template <class T>
TensorPtr<T> upsample2(Tape<T>* tape, const TensorPtr<T>& x);  // nearest, factor 2

template <class T>
TensorPtr<T> global_avg_pool(Tape<T>* tape, const TensorPtr<T>& x);  // (B,C,L) -> (B,C)

template <class T>
TensorPtr<T> concat_channels(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b);

// Column slice of a rank-2 tensor: y = x[:, from:to).
template <class T>
TensorPtr<T> slice_cols(Tape<T>* tape, const TensorPtr<T>& x, int from, int to);

// Per-row selection from per-head outputs: y[b, :] = options[which[b]][b, :].
template <class T>
TensorPtr<T> select_rows(Tape<T>* tape, const std::vector<TensorPtr<T>>& options,
                         const std::vector<int>& which);

// Per-row column pick: y[b, 0] = x[b, which[b]].
template <class T>
TensorPtr<T> select_col(Tape<T>* tape, const TensorPtr<T>& x, const std::vector<int>& which);

// Value copy that drops gradient flow.
template <class T>
TensorPtr<T> detach(const TensorPtr<T>& x) {
    auto y = Tensor<T>::make(x->d0, x->d1, x->d2);
    y->rank = x->rank;
    y->v = x->v;
    return y;
}

// ---- scalar reductions ---------------------------------------------------

template <class T>
TensorPtr<T> mse(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b);

template <class T>
TensorPtr<T> mae(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b);

// -mean(log sigmoid(z)) with probabilities clamped to [1e-7, 1 - 1e-7].
template <class T>
TensorPtr<T> bce_real(Tape<T>* tape, const TensorPtr<T>& logits);

// -mean(log(1 - sigmoid(z))), same clamping.
template <class T>
TensorPtr<T> bce_fake(Tape<T>* tape, const TensorPtr<T>& logits);

template <class T>
TensorPtr<T> weighted_sum(Tape<T>* tape,
                          const std::vector<std::pair<T, TensorPtr<T>>>& terms);

template <class T>
TensorPtr<T> softmax_rows(Tape<T>* tape, const TensorPtr<T>& x);

// Mean over the batch of -alpha * (1 - p_true)^gamma * log(p_true), with
// p_true clamped to [1e-7, 1 - 1e-7]. Rows must sum to 1 within 1e-5.
template <class T>
TensorPtr<T> focal_loss(Tape<T>* tape, const TensorPtr<T>& probs,
                        const std::vector<int>& labels, T alpha, T gamma);

// ---- optimizer ------------------------------------------------------------

template <class T>
struct AdamConfig {
    T lr = T(1e-3);
    T weight_decay = T(0);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
};

// Adam with decoupled weight decay: params are shrunk by lr*wd*param before
// the bias-corrected moment update. Missing gradients count as zero.
template <class T>
class Adam {
public:
    Adam() = default;
    Adam(std::vector<TensorPtr<T>> params, AdamConfig<T> cfg)
        : params_(std::move(params)), cfg_(cfg) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i]->size(), T(0));
            v_[i].assign(params_[i]->size(), T(0));
        }
    }

    void step();
    void zero_grad() {
        for (auto& p : params_) p->zero_grad();
    }
    long step_count() const { return t_; }
    const AdamConfig<T>& config() const { return cfg_; }

private:
    std::vector<TensorPtr<T>> params_;
    std::vector<std::vector<T>> m_, v_;
    AdamConfig<T> cfg_;
    long t_ = 0;
};

template <class T>
void Adam<T>::step() {
    ++t_;
    const T bc1 = T(1) - std::pow(cfg_.beta1, static_cast<T>(t_));
    const T bc2 = T(1) - std::pow(cfg_.beta2, static_cast<T>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        auto& p = *params_[i];
        const bool has_g = p.g.size() == p.v.size();
        auto& m = m_[i];
        auto& v = v_[i];
        for (size_t k = 0; k < p.v.size(); ++k) {
            const T g = has_g ? p.g[k] : T(0);
            if (cfg_.weight_decay != T(0)) p.v[k] -= cfg_.lr * cfg_.weight_decay * p.v[k];
            m[k] = cfg_.beta1 * m[k] + (T(1) - cfg_.beta1) * g;
            v[k] = cfg_.beta2 * v[k] + (T(1) - cfg_.beta2) * g * g;
            const T mhat = m[k] / bc1;
            const T vhat = v[k] / bc2;
            p.v[k] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

extern template struct Tensor<float>;
extern template struct Tensor<double>;

}  // namespace ecgt2t::nn

#include "ecgt2t/nn_ops.inl"
