// Implementation of the tape ops declared in nn.hpp. Loops are written so
// the innermost axis is contiguous and every parallel region partitions
// disjoint output elements; reductions stay in fixed serial order, keeping
// results independent of the thread count.

namespace ecgt2t::nn {

namespace detail {

inline long long floor_div(long long a, long long b) {
    long long q = a / b;
    return (a % b != 0 && ((a < 0) != (b < 0))) ? q - 1 : q;
}

inline long long ceil_div(long long a, long long b) { return -floor_div(-a, b); }

}  // namespace detail

#ifdef _OPENMP
#define ECGT2T_PRAGMA(x) _Pragma(#x)
#define ECGT2T_PAR_FOR _Pragma("omp parallel for schedule(static)")
#define ECGT2T_SIMD _Pragma("omp simd")
#define ECGT2T_SIMD_REDUX(var) ECGT2T_PRAGMA(omp simd reduction(+ : var))
#else
#define ECGT2T_PRAGMA(x)
#define ECGT2T_PAR_FOR
#define ECGT2T_SIMD
#define ECGT2T_SIMD_REDUX(var)
#endif

template <class T>
TensorPtr<T> conv1d(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& w,
                    const TensorPtr<T>& bias, int stride, int pad) {
    require(x->rank == 3, Err::ShapeMismatch, "conv1d input must be rank 3");
    const int B = x->d0, Cin = x->d1, L = x->d2;
    const int Cout = w->d0, K = w->d2;
    require(w->d1 == Cin, Err::ShapeMismatch, "conv1d weight channel mismatch");
    require(bias->size() == static_cast<size_t>(Cout), Err::ShapeMismatch,
            "conv1d bias size mismatch");
    require(stride >= 1 && pad >= 0, Err::ShapeMismatch, "bad conv1d stride/pad");
    const int Lout = (L + 2 * pad - K) / stride + 1;
    require(L + 2 * pad >= K && Lout >= 1, Err::ShapeMismatch, "conv1d output is empty");

    auto y = Tensor<T>::make(B, Cout, Lout);
    y->requires_grad = detail::want_grad(x) || detail::want_grad(w) || detail::want_grad(bias);

    // Core region where every kernel tap stays in range: one fused pass per
    // input channel instead of one pass per tap.
    const int core0 =
        static_cast<int>(std::min<long long>(Lout, detail::ceil_div(pad, stride)));
    const int core1 = static_cast<int>(std::max<long long>(
        core0 - 1, std::min<long long>(Lout - 1, detail::floor_div(L - K + pad, stride))));

    ECGT2T_PAR_FOR
    for (int bc = 0; bc < B * Cout; ++bc) {
        const int b = bc / Cout, co = bc % Cout;
        T* yo = &y->at(b, co, 0);
        const T bv = bias->v[co];
        for (int lo = 0; lo < Lout; ++lo) yo[lo] = bv;
        for (int ci = 0; ci < Cin; ++ci) {
            const T* xr = &x->at(b, ci, 0);
            const T* wr = &w->at(co, ci, 0);
            auto edge = [&](int lo_a, int lo_b) {
                for (int lo = lo_a; lo < lo_b; ++lo) {
                    T acc = T(0);
                    for (int k = 0; k < K; ++k) {
                        const int xi = lo * stride + k - pad;
                        if (xi >= 0 && xi < L) acc += wr[k] * xr[xi];
                    }
                    yo[lo] += acc;
                }
            };
            edge(0, core0);
            edge(core1 + 1, Lout);
            const T* xs = xr - pad;
            if (K == 3 && stride == 1) {
                const T w0 = wr[0], w1 = wr[1], w2 = wr[2];
                ECGT2T_SIMD
                for (int lo = core0; lo <= core1; ++lo) {
                    yo[lo] += w0 * xs[lo] + w1 * xs[lo + 1] + w2 * xs[lo + 2];
                }
            } else if (K == 3) {
                const T w0 = wr[0], w1 = wr[1], w2 = wr[2];
                ECGT2T_SIMD
                for (int lo = core0; lo <= core1; ++lo) {
                    const int xi = lo * stride;
                    yo[lo] += w0 * xs[xi] + w1 * xs[xi + 1] + w2 * xs[xi + 2];
                }
            } else if (K == 1) {
                const T w0 = wr[0];
                ECGT2T_SIMD
                for (int lo = core0; lo <= core1; ++lo) yo[lo] += w0 * xs[lo * stride];
            } else {
                for (int lo = core0; lo <= core1; ++lo) {
                    const int xi = lo * stride;
                    T acc = T(0);
                    ECGT2T_SIMD_REDUX(acc)
                    for (int k = 0; k < K; ++k) acc += wr[k] * xs[xi + k];
                    yo[lo] += acc;
                }
            }
        }
    }
    detail::check_finite(y, "conv1d forward produced non-finite values");

    if (tape && y->requires_grad) {
        tape->record([x, w, bias, y, stride, pad]() {
            if (y->g.empty()) return;
            const int B = x->d0, Cin = x->d1, L = x->d2;
            const int Cout = w->d0, K = w->d2, Lout = y->d2;
            if (bias->requires_grad) {
                bias->ensure_grad();
                ECGT2T_PAR_FOR
                for (int co = 0; co < Cout; ++co) {
                    T acc = T(0);
                    for (int b = 0; b < B; ++b) {
                        const T* gy = &y->g[(static_cast<size_t>(b) * Cout + co) * Lout];
                        for (int lo = 0; lo < Lout; ++lo) acc += gy[lo];
                    }
                    bias->g[co] += acc;
                }
            }
            if (w->requires_grad) {
                w->ensure_grad();
                ECGT2T_PAR_FOR
                for (int cc = 0; cc < Cout * Cin; ++cc) {
                    const int co = cc / Cin, ci = cc % Cin;
                    T* gw = &w->g[(static_cast<size_t>(co) * Cin + ci) * K];
                    for (int k = 0; k < K; ++k) {
                        const int off = k - pad;
                        const int lo0 = static_cast<int>(
                            std::max<long long>(0, detail::ceil_div(-off, stride)));
                        const int lo1 = static_cast<int>(std::min<long long>(
                            Lout - 1, detail::floor_div(L - 1 - off, stride)));
                        T acc = T(0);
                        for (int b = 0; b < B; ++b) {
                            const T* gy =
                                &y->g[(static_cast<size_t>(b) * Cout + co) * Lout];
                            const T* xs = &x->at(b, ci, 0) + off;
                            if (stride == 1) {
                                ECGT2T_SIMD_REDUX(acc)
                                for (int lo = lo0; lo <= lo1; ++lo) {
                                    acc += gy[lo] * xs[lo];
                                }
                            } else {
                                ECGT2T_SIMD_REDUX(acc)
                                for (int lo = lo0; lo <= lo1; ++lo) {
                                    acc += gy[lo] * xs[lo * stride];
                                }
                            }
                        }
                        gw[k] += acc;
                    }
                }
            }
            if (x->requires_grad) {
                x->ensure_grad();
                // stride 1: transposed correlation with the flipped kernel,
                // fused over taps inside the all-taps-valid region
                const int xc0 = std::min(L, std::max(0, K - 1 - pad));
                const int xc1 = std::max(xc0 - 1, std::min(L - 1, Lout - 1 - pad + 0));
                ECGT2T_PAR_FOR
                for (int bc = 0; bc < B * Cin; ++bc) {
                    const int b = bc / Cin, ci = bc % Cin;
                    T* gx = &x->g[(static_cast<size_t>(b) * Cin + ci) * L];
                    for (int co = 0; co < Cout; ++co) {
                        const T* gy = &y->g[(static_cast<size_t>(b) * Cout + co) * Lout];
                        const T* wr = &w->at(co, ci, 0);
                        if (stride == 1) {
                            auto edge = [&](int xa, int xb) {
                                for (int xi = xa; xi < xb; ++xi) {
                                    T acc = T(0);
                                    for (int k = 0; k < K; ++k) {
                                        const int lo = xi + pad - k;
                                        if (lo >= 0 && lo < Lout) acc += wr[k] * gy[lo];
                                    }
                                    gx[xi] += acc;
                                }
                            };
                            edge(0, xc0);
                            edge(xc1 + 1, L);
                            const T* gs = gy + pad;
                            if (K == 3) {
                                const T w0 = wr[0], w1 = wr[1], w2 = wr[2];
                                ECGT2T_SIMD
                                for (int xi = xc0; xi <= xc1; ++xi) {
                                    gx[xi] += w0 * gs[xi] + w1 * gs[xi - 1] + w2 * gs[xi - 2];
                                }
                            } else if (K == 1) {
                                const T w0 = wr[0];
                                ECGT2T_SIMD
                                for (int xi = xc0; xi <= xc1; ++xi) gx[xi] += w0 * gs[xi];
                            } else {
                                for (int xi = xc0; xi <= xc1; ++xi) {
                                    T acc = T(0);
                                    ECGT2T_SIMD_REDUX(acc)
                                    for (int k = 0; k < K; ++k) acc += wr[k] * gs[xi - k];
                                    gx[xi] += acc;
                                }
                            }
                        } else {
                            for (int k = 0; k < K; ++k) {
                                const int off = k - pad;
                                const T wv = wr[k];
                                if (wv == T(0)) continue;
                                const int lo0 = static_cast<int>(
                                    std::max<long long>(0, detail::ceil_div(-off, stride)));
                                const int lo1 = static_cast<int>(std::min<long long>(
                                    Lout - 1, detail::floor_div(L - 1 - off, stride)));
                                T* gs = gx + off;
                                for (int lo = lo0; lo <= lo1; ++lo) {
                                    gs[lo * stride] += wv * gy[lo];
                                }
                            }
                        }
                    }
                }
            }
        });
    }
    return y;
}

template <class T>
TensorPtr<T> linear(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& w,
                    const TensorPtr<T>& bias) {
    require(x->rank == 2, Err::ShapeMismatch, "linear input must be rank 2");
    const int B = x->d0, Fin = x->d1;
    const int Fout = w->d0;
    require(w->d1 == Fin && w->rank == 2, Err::ShapeMismatch, "linear weight shape mismatch");
    require(bias->size() == static_cast<size_t>(Fout), Err::ShapeMismatch,
            "linear bias size mismatch");

    auto y = Tensor<T>::make2(B, Fout);
    y->requires_grad = detail::want_grad(x) || detail::want_grad(w) || detail::want_grad(bias);

    ECGT2T_PAR_FOR
    for (int bo = 0; bo < B * Fout; ++bo) {
        const int b = bo / Fout, o = bo % Fout;
        const T* xr = &x->v[static_cast<size_t>(b) * Fin];
        const T* wr = &w->v[static_cast<size_t>(o) * Fin];
        T acc = T(0);
        ECGT2T_SIMD_REDUX(acc)
        for (int i = 0; i < Fin; ++i) acc += xr[i] * wr[i];
        y->v[static_cast<size_t>(b) * Fout + o] = acc + bias->v[o];
    }
    detail::check_finite(y, "linear forward produced non-finite values");

    if (tape && y->requires_grad) {
        tape->record([x, w, bias, y]() {
            if (y->g.empty()) return;
            const int B = x->d0, Fin = x->d1, Fout = w->d0;
            if (bias->requires_grad) {
                bias->ensure_grad();
                for (int b = 0; b < B; ++b) {
                    const T* gy = &y->g[static_cast<size_t>(b) * Fout];
                    for (int o = 0; o < Fout; ++o) bias->g[o] += gy[o];
                }
            }
            if (w->requires_grad) {
                w->ensure_grad();
                ECGT2T_PAR_FOR
                for (int o = 0; o < Fout; ++o) {
                    T* gw = &w->g[static_cast<size_t>(o) * Fin];
                    for (int b = 0; b < B; ++b) {
                        const T gv = y->g[static_cast<size_t>(b) * Fout + o];
                        if (gv == T(0)) continue;
                        const T* xr = &x->v[static_cast<size_t>(b) * Fin];
                        for (int i = 0; i < Fin; ++i) gw[i] += gv * xr[i];
                    }
                }
            }
            if (x->requires_grad) {
                x->ensure_grad();
                ECGT2T_PAR_FOR
                for (int b = 0; b < B; ++b) {
                    T* gx = &x->g[static_cast<size_t>(b) * Fin];
                    const T* gy = &y->g[static_cast<size_t>(b) * Fout];
                    for (int o = 0; o < Fout; ++o) {
                        const T gv = gy[o];
                        if (gv == T(0)) continue;
                        const T* wr = &w->v[static_cast<size_t>(o) * Fin];
                        for (int i = 0; i < Fin; ++i) gx[i] += gv * wr[i];
                    }
                }
            }
        });
    }
    return y;
}

template <class T>
TensorPtr<T> leaky_relu(Tape<T>* tape, const TensorPtr<T>& x, T slope) {
    auto y = Tensor<T>::make(x->d0, x->d1, x->d2);
    y->rank = x->rank;
    y->requires_grad = detail::want_grad(x);
    const size_t n = x->size();
    ECGT2T_PAR_FOR
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        const T v = x->v[i];
        y->v[i] = v > T(0) ? v : slope * v;
    }
    if (tape && y->requires_grad) {
        tape->record([x, y, slope]() {
            if (y->g.empty()) return;
            x->ensure_grad();
            const size_t n = x->size();
            ECGT2T_PAR_FOR
            for (long long i = 0; i < static_cast<long long>(n); ++i) {
                x->g[i] += y->g[i] * (x->v[i] > T(0) ? T(1) : slope);
            }
        });
    }
    return y;
}

template <class T>
TensorPtr<T> instance_norm(Tape<T>* tape, const TensorPtr<T>& x) {
    require(x->rank == 3 && x->d2 >= 2, Err::ShapeMismatch,
            "instance_norm needs rank 3 with length >= 2");
    const int B = x->d0, C = x->d1, L = x->d2;
    const T eps = T(1e-5);

    auto y = Tensor<T>::make(B, C, L);
    y->requires_grad = detail::want_grad(x);
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(B) * C);

    ECGT2T_PAR_FOR
    for (int bc = 0; bc < B * C; ++bc) {
        const T* xr = &x->v[static_cast<size_t>(bc) * L];
        T* yr = &y->v[static_cast<size_t>(bc) * L];
        double mean = 0.0;
        ECGT2T_SIMD_REDUX(mean)
        for (int l = 0; l < L; ++l) mean += static_cast<double>(xr[l]);
        mean /= L;
        double var = 0.0;
        ECGT2T_SIMD_REDUX(var)
        for (int l = 0; l < L; ++l) {
            const double d = static_cast<double>(xr[l]) - mean;
            var += d * d;
        }
        var /= L;
        const T s = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
        const T m = static_cast<T>(mean);
        (*inv_std)[bc] = s;
        for (int l = 0; l < L; ++l) yr[l] = (xr[l] - m) * s;
    }

    if (tape && y->requires_grad) {
        tape->record([x, y, inv_std]() {
            if (y->g.empty()) return;
            x->ensure_grad();
            const int B = x->d0, C = x->d1, L = x->d2;
            ECGT2T_PAR_FOR
            for (int bc = 0; bc < B * C; ++bc) {
                const T* gy = &y->g[static_cast<size_t>(bc) * L];
                const T* yr = &y->v[static_cast<size_t>(bc) * L];
                T* gx = &x->g[static_cast<size_t>(bc) * L];
                const T s = (*inv_std)[bc];
                T m1 = T(0), m2 = T(0);
                for (int l = 0; l < L; ++l) {
                    m1 += gy[l];
                    m2 += gy[l] * yr[l];
                }
                m1 /= static_cast<T>(L);
                m2 /= static_cast<T>(L);
                for (int l = 0; l < L; ++l) {
                    gx[l] += s * (gy[l] - m1 - yr[l] * m2);
                }
            }
        });
    }
    return y;
}

template <class T>
TensorPtr<T> channel_affine(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& scale,
                            const TensorPtr<T>& shift) {
    const int B = x->d0, C = x->d1, L = x->d2;
    require(scale->d0 == B && scale->d1 == C && scale->d2 == 1, Err::ShapeMismatch,
            "channel_affine scale must be (B, C)");
    require(shift->d0 == B && shift->d1 == C && shift->d2 == 1, Err::ShapeMismatch,
            "channel_affine shift must be (B, C)");

    auto y = Tensor<T>::make(B, C, L);
    y->requires_grad =
        detail::want_grad(x) || detail::want_grad(scale) || detail::want_grad(shift);

    ECGT2T_PAR_FOR
    for (int bc = 0; bc < B * C; ++bc) {
        const T s = scale->v[bc];
        const T t = shift->v[bc];
        const T* xr = &x->v[static_cast<size_t>(bc) * L];
        T* yr = &y->v[static_cast<size_t>(bc) * L];
        for (int l = 0; l < L; ++l) yr[l] = s * xr[l] + t;
    }

    if (tape && y->requires_grad) {
        tape->record([x, scale, shift, y]() {
            if (y->g.empty()) return;
            const int B = x->d0, C = x->d1, L = x->d2;
            if (x->requires_grad) x->ensure_grad();
            if (scale->requires_grad) scale->ensure_grad();
            if (shift->requires_grad) shift->ensure_grad();
            ECGT2T_PAR_FOR
            for (int bc = 0; bc < B * C; ++bc) {
                const T* gy = &y->g[static_cast<size_t>(bc) * L];
                const T* xr = &x->v[static_cast<size_t>(bc) * L];
                if (x->requires_grad) {
                    const T s = scale->v[bc];
                    T* gx = &x->g[static_cast<size_t>(bc) * L];
                    for (int l = 0; l < L; ++l) gx[l] += s * gy[l];
                }
                if (scale->requires_grad) {
                    T acc = T(0);
                    for (int l = 0; l < L; ++l) acc += gy[l] * xr[l];
                    scale->g[bc] += acc;
                }
                if (shift->requires_grad) {
                    T acc = T(0);
                    for (int l = 0; l < L; ++l) acc += gy[l];
                    shift->g[bc] += acc;
                }
            }
        });
    }
    return y;
}

template <class T>
TensorPtr<T> add(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    require(a->same_shape(*b), Err::ShapeMismatch, "add shape mismatch");
    auto y = Tensor<T>::make(a->d0, a->d1, a->d2);
    y->rank = a->rank;
    y->requires_grad = detail::want_grad(a) || detail::want_grad(b);
    const size_t n = a->size();
    ECGT2T_PAR_FOR
    for (long long i = 0; i < static_cast<long long>(n); ++i) y->v[i] = a->v[i] + b->v[i];
    if (tape && y->requires_grad) {
        tape->record([a, b, y]() {
            if (y->g.empty()) return;
            const size_t n = y->size();
            if (a->requires_grad) {
                a->ensure_grad();
                for (size_t i = 0; i < n; ++i) a->g[i] += y->g[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (size_t i = 0; i < n; ++i) b->g[i] += y->g[i];
            }
        });
    }
    return y;
}

template <class T>
TensorPtr<T> add_scalar(Tape<T>* tape, const TensorPtr<T>& x, T c) {
    auto y = Tensor<T>::make(x->d0, x->d1, x->d2);
    y->rank = x->rank;
    y->requires_grad = detail::want_grad(x);
    for (size_t i = 0; i < x->size(); ++i) y->v[i] = x->v[i] + c;
    if (tape && y->requires_grad) {
        tape->record([x, y]() {
            if (y->g.empty()) return;
            x->ensure_grad();
            for (size_t i = 0; i < x->size(); ++i) x->g[i] += y->g[i];
        });
    }
    return y;
}

template <class T>
TensorPtr<T> upsample2(Tape<T>* tape, const TensorPtr<T>& x) {
    require(x->rank == 3, Err::ShapeMismatch, "upsample2 input must be rank 3");
    const int B = x->d0, C = x->d1, L = x->d2;
    auto y = Tensor<T>::make(B, C, 2 * L);
    y->requires_grad = detail::want_grad(x);
    ECGT2T_PAR_FOR
    for (int bc = 0; bc < B * C; ++bc) {
        const T* xr = &x->v[static_cast<size_t>(bc) * L];
        T* yr = &y->v[static_cast<size_t>(bc) * 2 * L];
        for (int l = 0; l < L; ++l) {
            yr[2 * l] = xr[l];
            yr[2 * l + 1] = xr[l];
        }
    }
    if (tape && y->requires_grad) {
        tape->record([x, y]() {
            if (y->g.empty()) return;
            const int B = x->d0, C = x->d1, L = x->d2;
            x->ensure_grad();
            ECGT2T_PAR_FOR
            for (int bc = 0; bc < B * C; ++bc) {
                const T* gy = &y->g[static_cast<size_t>(bc) * 2 * L];
                T* gx = &x->g[static_cast<size_t>(bc) * L];
                for (int l = 0; l < L; ++l) gx[l] += gy[2 * l] + gy[2 * l + 1];
            }
        });
    }
    return y;
}

template <class T>
TensorPtr<T> global_avg_pool(Tape<T>* tape, const TensorPtr<T>& x) {
    require(x->rank == 3, Err::ShapeMismatch, "global_avg_pool input must be rank 3");
    const int B = x->d0, C = x->d1, L = x->d2;
    auto y = Tensor<T>::make2(B, C);
    y->requires_grad = detail::want_grad(x);
    ECGT2T_PAR_FOR
    for (int bc = 0; bc < B * C; ++bc) {
        const T* xr = &x->v[static_cast<size_t>(bc) * L];
        T acc = T(0);
        for (int l = 0; l < L; ++l) acc += xr[l];
        y->v[bc] = acc / static_cast<T>(L);
    }
    if (tape && y->requires_grad) {
        tape->record([x, y]() {
            if (y->g.empty()) return;
            const int B = x->d0, C = x->d1, L = x->d2;
            x->ensure_grad();
            ECGT2T_PAR_FOR
            for (int bc = 0; bc < B * C; ++bc) {
                const T gv = y->g[bc] / static_cast<T>(L);
                T* gx = &x->g[static_cast<size_t>(bc) * L];
                for (int l = 0; l < L; ++l) gx[l] += gv;
            }
        });
    }
    return y;
}

template <class T>
TensorPtr<T> concat_channels(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    require(a->rank == 3 && b->rank == 3 && a->d0 == b->d0 && a->d2 == b->d2,
            Err::ShapeMismatch, "concat_channels batch/length mismatch");
    const int B = a->d0, Ca = a->d1, Cb = b->d1, L = a->d2;
    auto y = Tensor<T>::make(B, Ca + Cb, L);
    y->requires_grad = detail::want_grad(a) || detail::want_grad(b);
    for (int bi = 0; bi < B; ++bi) {
        std::copy_n(&a->at(bi, 0, 0), static_cast<size_t>(Ca) * L, &y->at(bi, 0, 0));
        std::copy_n(&b->at(bi, 0, 0), static_cast<size_t>(Cb) * L, &y->at(bi, Ca, 0));
    }
    if (tape && y->requires_grad) {
        tape->record([a, b, y]() {
            if (y->g.empty()) return;
            const int B = a->d0, Ca = a->d1, Cb = b->d1, L = a->d2;
            for (int bi = 0; bi < B; ++bi) {
                if (a->requires_grad) {
                    a->ensure_grad();
                    const T* gy = &y->g[(static_cast<size_t>(bi) * (Ca + Cb)) * L];
                    T* ga = &a->g[static_cast<size_t>(bi) * Ca * L];
                    for (size_t i = 0; i < static_cast<size_t>(Ca) * L; ++i) ga[i] += gy[i];
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    const T* gy = &y->g[(static_cast<size_t>(bi) * (Ca + Cb) + Ca) * L];
                    T* gb = &b->g[static_cast<size_t>(bi) * Cb * L];
                    for (size_t i = 0; i < static_cast<size_t>(Cb) * L; ++i) gb[i] += gy[i];
                }
            }
        });
    }
    return y;
}

template <class T>
TensorPtr<T> slice_cols(Tape<T>* tape, const TensorPtr<T>& x, int from, int to) {
    require(x->rank == 2 && 0 <= from && from < to && to <= x->d1, Err::ShapeMismatch,
            "slice_cols bounds");
    const int B = x->d0, F = x->d1, W = to - from;
    auto y = Tensor<T>::make2(B, W);
    y->requires_grad = detail::want_grad(x);
    for (int b = 0; b < B; ++b) {
        std::copy_n(&x->v[static_cast<size_t>(b) * F + from], W,
                    &y->v[static_cast<size_t>(b) * W]);
    }
    if (tape && y->requires_grad) {
        tape->record([x, y, from]() {
            if (y->g.empty()) return;
            x->ensure_grad();
            const int B = x->d0, F = x->d1, W = y->d1;
            for (int b = 0; b < B; ++b) {
                const T* gy = &y->g[static_cast<size_t>(b) * W];
                T* gx = &x->g[static_cast<size_t>(b) * F + from];
                for (int i = 0; i < W; ++i) gx[i] += gy[i];
            }
        });
    }
    return y;
}

template <class T>
TensorPtr<T> select_rows(Tape<T>* tape, const std::vector<TensorPtr<T>>& options,
                         const std::vector<int>& which) {
    require(!options.empty(), Err::ShapeMismatch, "select_rows needs options");
    const int B = options[0]->d0, F = options[0]->d1;
    require(static_cast<int>(which.size()) == B, Err::ShapeMismatch,
            "select_rows index count mismatch");
    bool rg = false;
    for (const auto& o : options) {
        require(o->rank == 2 && o->d0 == B && o->d1 == F, Err::ShapeMismatch,
                "select_rows option shape mismatch");
        rg = rg || detail::want_grad(o);
    }
    auto y = Tensor<T>::make2(B, F);
    y->requires_grad = rg;
    for (int b = 0; b < B; ++b) {
        const int o = which[b];
        require(o >= 0 && o < static_cast<int>(options.size()), Err::ShapeMismatch,
                "select_rows index out of range");
        std::copy_n(&options[o]->v[static_cast<size_t>(b) * F], F,
                    &y->v[static_cast<size_t>(b) * F]);
    }
    if (tape && rg) {
        auto idx = which;
        tape->record([options, idx, y]() {
            if (y->g.empty()) return;
            const int B = y->d0, F = y->d1;
            for (int b = 0; b < B; ++b) {
                auto& opt = options[idx[b]];
                if (!opt->requires_grad) continue;
                opt->ensure_grad();
                const T* gy = &y->g[static_cast<size_t>(b) * F];
                T* go = &opt->g[static_cast<size_t>(b) * F];
                for (int i = 0; i < F; ++i) go[i] += gy[i];
            }
        });
    }
    return y;
}

template <class T>
TensorPtr<T> select_col(Tape<T>* tape, const TensorPtr<T>& x, const std::vector<int>& which) {
    require(x->rank == 2, Err::ShapeMismatch, "select_col input must be rank 2");
    const int B = x->d0, F = x->d1;
    require(static_cast<int>(which.size()) == B, Err::ShapeMismatch,
            "select_col index count mismatch");
    auto y = Tensor<T>::make2(B, 1);
    y->requires_grad = detail::want_grad(x);
    for (int b = 0; b < B; ++b) {
        const int c = which[b];
        require(c >= 0 && c < F, Err::ShapeMismatch, "select_col index out of range");
        y->v[b] = x->v[static_cast<size_t>(b) * F + c];
    }
    if (tape && y->requires_grad) {
        auto idx = which;
        tape->record([x, idx, y]() {
            if (y->g.empty()) return;
            x->ensure_grad();
            const int B = x->d0, F = x->d1;
            for (int b = 0; b < B; ++b) {
                x->g[static_cast<size_t>(b) * F + idx[b]] += y->g[b];
            }
        });
    }
    return y;
}

template <class T>
TensorPtr<T> mse(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    require(a->same_shape(*b), Err::ShapeMismatch, "mse shape mismatch");
    const size_t n = a->size();
    auto y = Tensor<T>::make2(1, 1);
    y->requires_grad = detail::want_grad(a) || detail::want_grad(b);
    double acc = 0.0;  // reductions accumulate in double at either precision
    for (size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(a->v[i]) - static_cast<double>(b->v[i]);
        acc += d * d;
    }
    y->v[0] = static_cast<T>(acc / static_cast<double>(n));
    if (tape && y->requires_grad) {
        tape->record([a, b, y]() {
            if (y->g.empty()) return;
            const size_t n = a->size();
            const T scale = y->g[0] * T(2) / static_cast<T>(n);
            if (a->requires_grad) a->ensure_grad();
            if (b->requires_grad) b->ensure_grad();
            for (size_t i = 0; i < n; ++i) {
                const T d = scale * (a->v[i] - b->v[i]);
                if (a->requires_grad) a->g[i] += d;
                if (b->requires_grad) b->g[i] -= d;
            }
        });
    }
    return y;
}

template <class T>
TensorPtr<T> mae(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    require(a->same_shape(*b), Err::ShapeMismatch, "mae shape mismatch");
    const size_t n = a->size();
    auto y = Tensor<T>::make2(1, 1);
    y->requires_grad = detail::want_grad(a) || detail::want_grad(b);
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        acc += std::abs(static_cast<double>(a->v[i]) - static_cast<double>(b->v[i]));
    }
    y->v[0] = static_cast<T>(acc / static_cast<double>(n));
    if (tape && y->requires_grad) {
        tape->record([a, b, y]() {
            if (y->g.empty()) return;
            const size_t n = a->size();
            const T scale = y->g[0] / static_cast<T>(n);
            if (a->requires_grad) a->ensure_grad();
            if (b->requires_grad) b->ensure_grad();
            for (size_t i = 0; i < n; ++i) {
                const T d = a->v[i] - b->v[i];
                const T s = d > T(0) ? scale : (d < T(0) ? -scale : T(0));
                if (a->requires_grad) a->g[i] += s;
                if (b->requires_grad) b->g[i] -= s;
            }
        });
    }
    return y;
}

namespace detail {

template <class T>
T sigmoid(T z) {
    if (z >= T(0)) {
        return T(1) / (T(1) + std::exp(-z));
    }
    const T e = std::exp(z);
    return e / (T(1) + e);
}

inline constexpr double kProbClamp = 1e-7;

}  // namespace detail

template <class T>
TensorPtr<T> bce_real(Tape<T>* tape, const TensorPtr<T>& logits) {
    const size_t n = logits->size();
    require(n >= 1, Err::ShapeMismatch, "bce_real needs at least one logit");
    auto y = Tensor<T>::make2(1, 1);
    y->requires_grad = detail::want_grad(logits);
    const double lo = detail::kProbClamp, hi = 1.0 - detail::kProbClamp;
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double p =
            std::clamp(detail::sigmoid(static_cast<double>(logits->v[i])), lo, hi);
        acc -= std::log(p);
    }
    y->v[0] = static_cast<T>(acc / static_cast<double>(n));
    if (tape && y->requires_grad) {
        tape->record([logits, y, lo, hi]() {
            if (y->g.empty()) return;
            logits->ensure_grad();
            const size_t n = logits->size();
            const T scale = y->g[0] / static_cast<T>(n);
            for (size_t i = 0; i < n; ++i) {
                const double p = detail::sigmoid(static_cast<double>(logits->v[i]));
                if (p <= lo || p >= hi) continue;  // clamped: flat
                logits->g[i] += scale * static_cast<T>(p - 1.0);
            }
        });
    }
    return y;
}

template <class T>
TensorPtr<T> bce_fake(Tape<T>* tape, const TensorPtr<T>& logits) {
    const size_t n = logits->size();
    require(n >= 1, Err::ShapeMismatch, "bce_fake needs at least one logit");
    auto y = Tensor<T>::make2(1, 1);
    y->requires_grad = detail::want_grad(logits);
    const double lo = detail::kProbClamp, hi = 1.0 - detail::kProbClamp;
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double p =
            std::clamp(detail::sigmoid(static_cast<double>(logits->v[i])), lo, hi);
        acc -= std::log(1.0 - p);
    }
    y->v[0] = static_cast<T>(acc / static_cast<double>(n));
    if (tape && y->requires_grad) {
        tape->record([logits, y, lo, hi]() {
            if (y->g.empty()) return;
            logits->ensure_grad();
            const size_t n = logits->size();
            const T scale = y->g[0] / static_cast<T>(n);
            for (size_t i = 0; i < n; ++i) {
                const double p = detail::sigmoid(static_cast<double>(logits->v[i]));
                if (p <= lo || p >= hi) continue;
                logits->g[i] += scale * static_cast<T>(p);
            }
        });
    }
    return y;
}

template <class T>
TensorPtr<T> weighted_sum(Tape<T>* tape,
                          const std::vector<std::pair<T, TensorPtr<T>>>& terms) {
    require(!terms.empty(), Err::ShapeMismatch, "weighted_sum needs terms");
    auto y = Tensor<T>::make2(1, 1);
    double acc = 0.0;
    bool rg = false;
    for (const auto& [wv, t] : terms) {
        require(t->size() == 1, Err::ShapeMismatch, "weighted_sum terms must be scalars");
        acc += static_cast<double>(wv) * static_cast<double>(t->v[0]);
        rg = rg || detail::want_grad(t);
    }
    y->v[0] = static_cast<T>(acc);
    y->requires_grad = rg;
    if (tape && rg) {
        tape->record([terms, y]() {
            if (y->g.empty()) return;
            for (const auto& [wv, t] : terms) {
                if (!t->requires_grad) continue;
                t->ensure_grad();
                t->g[0] += wv * y->g[0];
            }
        });
    }
    return y;
}

template <class T>
TensorPtr<T> softmax_rows(Tape<T>* tape, const TensorPtr<T>& x) {
    require(x->rank == 2, Err::ShapeMismatch, "softmax_rows input must be rank 2");
    const int B = x->d0, K = x->d1;
    auto y = Tensor<T>::make2(B, K);
    y->requires_grad = detail::want_grad(x);
    for (int b = 0; b < B; ++b) {
        const T* xr = &x->v[static_cast<size_t>(b) * K];
        T* yr = &y->v[static_cast<size_t>(b) * K];
        T mx = xr[0];
        for (int k = 1; k < K; ++k) mx = std::max(mx, xr[k]);
        T z = T(0);
        for (int k = 0; k < K; ++k) {
            yr[k] = std::exp(xr[k] - mx);
            z += yr[k];
        }
        for (int k = 0; k < K; ++k) yr[k] /= z;
    }
    if (tape && y->requires_grad) {
        tape->record([x, y]() {
            if (y->g.empty()) return;
            x->ensure_grad();
            const int B = x->d0, K = x->d1;
            for (int b = 0; b < B; ++b) {
                const T* gy = &y->g[static_cast<size_t>(b) * K];
                const T* yr = &y->v[static_cast<size_t>(b) * K];
                T* gx = &x->g[static_cast<size_t>(b) * K];
                T dot = T(0);
                for (int k = 0; k < K; ++k) dot += gy[k] * yr[k];
                for (int k = 0; k < K; ++k) gx[k] += yr[k] * (gy[k] - dot);
            }
        });
    }
    return y;
}

template <class T>
TensorPtr<T> focal_loss(Tape<T>* tape, const TensorPtr<T>& probs,
                        const std::vector<int>& labels, T alpha, T gamma) {
    require(probs->rank == 2, Err::ShapeMismatch, "focal_loss probs must be rank 2");
    const int B = probs->d0, K = probs->d1;
    require(static_cast<int>(labels.size()) == B, Err::ShapeMismatch,
            "focal_loss label count mismatch");
    for (int b = 0; b < B; ++b) {
        T row = T(0);
        for (int k = 0; k < K; ++k) row += probs->v[static_cast<size_t>(b) * K + k];
        require(std::abs(static_cast<double>(row) - 1.0) <= 1e-5, Err::InvalidProbability,
                "focal_loss rows must sum to 1");
        require(labels[b] >= 0 && labels[b] < K, Err::InvalidArgument,
                "focal_loss label out of range");
    }
    const double lo = detail::kProbClamp, hi = 1.0 - detail::kProbClamp;
    auto y = Tensor<T>::make2(1, 1);
    y->requires_grad = detail::want_grad(probs);
    double acc = 0.0;
    for (int b = 0; b < B; ++b) {
        const double p = std::clamp(
            static_cast<double>(probs->v[static_cast<size_t>(b) * K + labels[b]]), lo, hi);
        acc += -static_cast<double>(alpha) * std::pow(1.0 - p, static_cast<double>(gamma)) *
               std::log(p);
    }
    y->v[0] = static_cast<T>(acc / static_cast<double>(B));
    if (tape && y->requires_grad) {
        auto lab = labels;
        tape->record([probs, lab, y, alpha, gamma, lo, hi]() {
            if (y->g.empty()) return;
            probs->ensure_grad();
            const int B = probs->d0, K = probs->d1;
            const T scale = y->g[0] / static_cast<T>(B);
            for (int b = 0; b < B; ++b) {
                const size_t idx = static_cast<size_t>(b) * K + lab[b];
                const T praw = probs->v[idx];
                if (praw <= lo || praw >= hi) continue;
                const T q = T(1) - praw;
                T d;
                if (gamma == T(0)) {
                    d = -alpha / praw;
                } else {
                    d = alpha * gamma * std::pow(q, gamma - T(1)) * std::log(praw) -
                        alpha * std::pow(q, gamma) / praw;
                }
                probs->g[idx] += scale * d;
            }
        });
    }
    return y;
}

#undef ECGT2T_PRAGMA
#undef ECGT2T_PAR_FOR
#undef ECGT2T_SIMD
#undef ECGT2T_SIMD_REDUX

}  // namespace ecgt2t::nn
