#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ecgt2t/nn.hpp"
#include "ecgt2t/rng.hpp"
#include "ecgt2t/signal.hpp"

namespace ecgt2t {

// Style vectors are 512-dimensional for every target lead.
inline constexpr int kStyleDim = 512;

namespace net {

using nn::Tape;
using nn::Tensor;
using nn::TensorPtr;

inline constexpr float kLeakySlope = 0.2f;

template <class T>
using NamedParams = std::vector<std::pair<std::string, TensorPtr<T>>>;

// Weights draw from N(0, sqrt(2 / fan_in)); biases start at zero.
template <class T>
TensorPtr<T> init_weight(Rng& rng, int d0, int d1, int d2, int fan_in) {
    auto t = Tensor<T>::make(d0, d1, d2, /*rg=*/true);
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : t->v) v = static_cast<T>(stddev * rng.normal());
    return t;
}

template <class T>
struct Conv1dLayer {
    TensorPtr<T> w, b;
    int stride = 1, pad = 0;

    void init(Rng& rng, int cin, int cout, int k, int stride_, int pad_) {
        w = init_weight<T>(rng, cout, cin, k, cin * k);
        b = Tensor<T>::make1(cout, /*rg=*/true);
        stride = stride_;
        pad = pad_;
    }
    TensorPtr<T> fwd(Tape<T>* tape, const TensorPtr<T>& x) const {
        return nn::conv1d(tape, x, w, b, stride, pad);
    }
    void named(const std::string& prefix, NamedParams<T>& out) const {
        out.emplace_back(prefix + ".w", w);
        out.emplace_back(prefix + ".b", b);
    }
};

template <class T>
struct LinearLayer {
    TensorPtr<T> w, b;

    void init(Rng& rng, int fin, int fout) {
        w = init_weight<T>(rng, fout, fin, 1, fin);
        w->rank = 2;
        b = Tensor<T>::make1(fout, /*rg=*/true);
    }
    TensorPtr<T> fwd(Tape<T>* tape, const TensorPtr<T>& x) const {
        return nn::linear(tape, x, w, b);
    }
    void named(const std::string& prefix, NamedParams<T>& out) const {
        out.emplace_back(prefix + ".w", w);
        out.emplace_back(prefix + ".b", b);
    }
};

// conv -> norm -> act -> conv -> norm -> act, plus a shortcut that is the
// identity unless channels change or the block downsamples.
template <class T>
struct ResBlock {
    Conv1dLayer<T> c1, c2;
    std::optional<Conv1dLayer<T>> sc;

    void init(Rng& rng, int cin, int cout, int stride) {
        c1.init(rng, cin, cout, 3, stride, 1);
        c2.init(rng, cout, cout, 3, 1, 1);
        if (cin != cout || stride != 1) {
            sc.emplace();
            sc->init(rng, cin, cout, 1, stride, 0);
        }
    }
    TensorPtr<T> fwd(Tape<T>* tape, const TensorPtr<T>& x) const {
        auto a = nn::leaky_relu(tape, nn::instance_norm(tape, c1.fwd(tape, x)),
                                T(kLeakySlope));
        a = nn::leaky_relu(tape, nn::instance_norm(tape, c2.fwd(tape, a)), T(kLeakySlope));
        return nn::add(tape, a, sc ? sc->fwd(tape, x) : x);
    }
    void named(const std::string& prefix, NamedParams<T>& out) const {
        c1.named(prefix + ".c1", out);
        c2.named(prefix + ".c2", out);
        if (sc) sc->named(prefix + ".sc", out);
    }
};

// Residual block whose normalization is AdaIN: each conv is followed by
// scale/shift projected from the 512-d style code. Optionally upsamples
// (nearest x2) before the convolutions and the shortcut.
template <class T>
struct AdainBlock {
    Conv1dLayer<T> c1, c2;
    LinearLayer<T> st1, st2;
    std::optional<Conv1dLayer<T>> sc;
    bool up = false;
    int cout = 0;

    void init(Rng& rng, int cin, int cout_, bool up_) {
        cout = cout_;
        up = up_;
        c1.init(rng, cin, cout, 3, 1, 1);
        c2.init(rng, cout, cout, 3, 1, 1);
        st1.init(rng, kStyleDim, 2 * cout);
        st2.init(rng, kStyleDim, 2 * cout);
        if (cin != cout) {
            sc.emplace();
            sc->init(rng, cin, cout, 1, 1, 0);
        }
    }

    TensorPtr<T> style_norm(Tape<T>* tape, const TensorPtr<T>& a,
                            const LinearLayer<T>& proj, const TensorPtr<T>& code) const {
        auto p = proj.fwd(tape, code);
        auto scale = nn::add_scalar(tape, nn::slice_cols(tape, p, 0, cout), T(1));
        auto shift = nn::slice_cols(tape, p, cout, 2 * cout);
        return nn::adain(tape, a, scale, shift);
    }

    TensorPtr<T> fwd(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& code) const {
        auto h = up ? nn::upsample2(tape, x) : x;
        auto a = nn::leaky_relu(tape, style_norm(tape, c1.fwd(tape, h), st1, code),
                                T(kLeakySlope));
        a = nn::leaky_relu(tape, style_norm(tape, c2.fwd(tape, a), st2, code),
                           T(kLeakySlope));
        return nn::add(tape, a, sc ? sc->fwd(tape, h) : h);
    }
    void named(const std::string& prefix, NamedParams<T>& out) const {
        c1.named(prefix + ".c1", out);
        c2.named(prefix + ".c2", out);
        st1.named(prefix + ".st1", out);
        st2.named(prefix + ".st2", out);
        if (sc) sc->named(prefix + ".sc", out);
    }
};

// fc -> act -> fc -> act + x, used by the mapping network.
template <class T>
struct FcResBlock {
    LinearLayer<T> fc1, fc2;

    void init(Rng& rng, int dim) {
        fc1.init(rng, dim, dim);
        fc2.init(rng, dim, dim);
    }
    TensorPtr<T> fwd(Tape<T>* tape, const TensorPtr<T>& x) const {
        auto h = nn::leaky_relu(tape, fc1.fwd(tape, x), T(kLeakySlope));
        h = nn::leaky_relu(tape, fc2.fwd(tape, h), T(kLeakySlope));
        return nn::add(tape, h, x);
    }
    void named(const std::string& prefix, NamedParams<T>& out) const {
        fc1.named(prefix + ".fc1", out);
        fc2.named(prefix + ".fc2", out);
    }
};

// Shared conv trunk over the (one- or two-channel) input windows, global
// average pooling, then one 512-d head per generated lead.
template <class T>
struct StyleNet {
    Conv1dLayer<T> stem;
    std::vector<ResBlock<T>> blocks;
    LinearLayer<T> shared;
    std::vector<LinearLayer<T>> heads;

    void init(Rng& rng, int in_ch, int base, int n_heads) {
        stem.init(rng, in_ch, base, 7, 1, 3);
        const int widths[5] = {base, 2 * base, 4 * base, 8 * base, 8 * base};
        blocks.resize(4);
        for (int i = 0; i < 4; ++i) blocks[i].init(rng, widths[i], widths[i + 1], 2);
        shared.init(rng, 8 * base, 8 * base);
        heads.resize(n_heads);
        for (auto& h : heads) h.init(rng, 8 * base, kStyleDim);
    }

    TensorPtr<T> trunk(Tape<T>* tape, const TensorPtr<T>& x) const {
        auto h = stem.fwd(tape, x);
        for (const auto& b : blocks) h = b.fwd(tape, h);
        auto feat = nn::global_avg_pool(tape, h);
        return nn::leaky_relu(tape, shared.fwd(tape, feat), T(kLeakySlope));
    }

    // codes[b, :] = heads[which[b]](feat[b, :])
    TensorPtr<T> heads_select(Tape<T>* tape, const TensorPtr<T>& feat,
                              const std::vector<int>& which) const {
        std::vector<TensorPtr<T>> outs;
        outs.reserve(heads.size());
        for (const auto& h : heads) outs.push_back(h.fwd(tape, feat));
        return nn::select_rows(tape, outs, which);
    }

    TensorPtr<T> encode(Tape<T>* tape, const TensorPtr<T>& x,
                        const std::vector<int>& which) const {
        return heads_select(tape, trunk(tape, x), which);
    }

    void named(NamedParams<T>& out) const {
        stem.named("S/stem", out);
        for (size_t i = 0; i < blocks.size(); ++i) {
            blocks[i].named("S/blk" + std::to_string(i), out);
        }
        shared.named("S/shared", out);
        for (size_t i = 0; i < heads.size(); ++i) {
            heads[i].named("S/head" + std::to_string(i), out);
        }
    }
};

template <class T>
struct MapNet {
    LinearLayer<T> input;
    std::vector<FcResBlock<T>> blocks;
    std::vector<LinearLayer<T>> heads;

    void init(Rng& rng, int z_dim, int n_heads) {
        input.init(rng, z_dim, kStyleDim);
        blocks.resize(2);
        for (auto& b : blocks) b.init(rng, kStyleDim);
        heads.resize(n_heads);
        for (auto& h : heads) h.init(rng, kStyleDim, kStyleDim);
    }

    TensorPtr<T> map(Tape<T>* tape, const TensorPtr<T>& z,
                     const std::vector<int>& which) const {
        auto h = nn::leaky_relu(tape, input.fwd(tape, z), T(kLeakySlope));
        for (const auto& b : blocks) h = b.fwd(tape, h);
        std::vector<TensorPtr<T>> outs;
        outs.reserve(heads.size());
        for (const auto& hd : heads) outs.push_back(hd.fwd(tape, h));
        return nn::select_rows(tape, outs, which);
    }

    void named(NamedParams<T>& out) const {
        input.named("M/in", out);
        for (size_t i = 0; i < blocks.size(); ++i) {
            blocks[i].named("M/blk" + std::to_string(i), out);
        }
        for (size_t i = 0; i < heads.size(); ++i) {
            heads[i].named("M/head" + std::to_string(i), out);
        }
    }
};

// Encoder-decoder generator: 4 downsampling plain blocks, 4 AdaIN blocks at
// the bottleneck, 4 upsampling AdaIN blocks, 1-channel output. Fully
// convolutional, so any input length divisible by 16 works.
template <class T>
struct GenNet {
    Conv1dLayer<T> stem;
    std::vector<ResBlock<T>> down;
    std::vector<AdainBlock<T>> mid, up;
    Conv1dLayer<T> out;

    void init(Rng& rng, int base) {
        stem.init(rng, 1, base, 7, 1, 3);
        const int widths[5] = {base, 2 * base, 4 * base, 8 * base, 8 * base};
        down.resize(4);
        for (int i = 0; i < 4; ++i) down[i].init(rng, widths[i], widths[i + 1], 2);
        mid.resize(4);
        for (auto& b : mid) b.init(rng, 8 * base, 8 * base, false);
        up.resize(4);
        for (int i = 0; i < 4; ++i) up[i].init(rng, widths[4 - i], widths[3 - i], true);
        out.init(rng, base, 1, 7, 1, 3);
    }

    TensorPtr<T> generate(Tape<T>* tape, const TensorPtr<T>& src,
                          const TensorPtr<T>& code) const {
        require(src->d1 == 1 && src->d2 % 16 == 0 && src->d2 >= 16, Err::ShapeMismatch,
                "generator input length must be a positive multiple of 16");
        auto h = stem.fwd(tape, src);
        for (const auto& b : down) h = b.fwd(tape, h);
        for (const auto& b : mid) h = b.fwd(tape, h, code);
        for (const auto& b : up) h = b.fwd(tape, h, code);
        return out.fwd(tape, h);
    }

    void named(NamedParams<T>& out_params) const {
        stem.named("G/stem", out_params);
        for (size_t i = 0; i < down.size(); ++i) {
            down[i].named("G/down" + std::to_string(i), out_params);
        }
        for (size_t i = 0; i < mid.size(); ++i) {
            mid[i].named("G/mid" + std::to_string(i), out_params);
        }
        for (size_t i = 0; i < up.size(); ++i) {
            up[i].named("G/up" + std::to_string(i), out_params);
        }
        out.named("G/out", out_params);
    }
};

// Downsampling trunk with one scalar logit per generated lead.
template <class T>
struct DiscNet {
    Conv1dLayer<T> stem;
    std::vector<ResBlock<T>> blocks;
    LinearLayer<T> shared, head;

    void init(Rng& rng, int base, int n_leads) {
        stem.init(rng, 1, base, 7, 1, 3);
        const int widths[5] = {base, 2 * base, 4 * base, 8 * base, 8 * base};
        blocks.resize(4);
        for (int i = 0; i < 4; ++i) blocks[i].init(rng, widths[i], widths[i + 1], 2);
        shared.init(rng, 8 * base, 8 * base);
        head.init(rng, 8 * base, n_leads);
    }

    // (B, 1) logit of the per-element lead head.
    TensorPtr<T> logits(Tape<T>* tape, const TensorPtr<T>& x,
                        const std::vector<int>& which) const {
        auto h = stem.fwd(tape, x);
        for (const auto& b : blocks) h = b.fwd(tape, h);
        auto feat = nn::leaky_relu(tape, shared.fwd(tape, nn::global_avg_pool(tape, h)),
                                   T(kLeakySlope));
        return nn::select_col(tape, head.fwd(tape, feat), which);
    }

    void named(NamedParams<T>& out) const {
        stem.named("D/stem", out);
        for (size_t i = 0; i < blocks.size(); ++i) {
            blocks[i].named("D/blk" + std::to_string(i), out);
        }
        shared.named("D/shared", out);
        head.named("D/head", out);
    }
};

template <class T>
struct Networks {
    Mode mode = Mode::T2T;
    int base = 8;
    int z_dim = 64;
    int in_ch = 2;
    int n_gen = 10;
    bool trained = false;
    long trained_steps = 0;

    StyleNet<T> S;
    MapNet<T> M;
    GenNet<T> G;
    DiscNet<T> D;

    static Networks init(Mode mode, int base, int z_dim, uint64_t seed) {
        Networks n;
        n.mode = mode;
        n.base = base;
        n.z_dim = z_dim;
        n.in_ch = mode == Mode::T2T ? 2 : 1;
        n.n_gen = static_cast<int>(generated_leads(mode).size());
        Rng rng = Rng::fork(seed, 4);
        n.S.init(rng, n.in_ch, base, n.n_gen);
        n.M.init(rng, z_dim, n.n_gen);
        n.G.init(rng, base);
        n.D.init(rng, base, n.n_gen);
        return n;
    }

    NamedParams<T> named_params() const {
        NamedParams<T> out;
        S.named(out);
        M.named(out);
        G.named(out);
        D.named(out);
        return out;
    }

    std::vector<TensorPtr<T>> params_of(char which) const {
        NamedParams<T> all;
        switch (which) {
            case 'S': S.named(all); break;
            case 'M': M.named(all); break;
            case 'G': G.named(all); break;
            case 'D': D.named(all); break;
        }
        std::vector<TensorPtr<T>> out;
        out.reserve(all.size());
        for (auto& [name, t] : all) out.push_back(t);
        return out;
    }
};

// One assembled training batch, already windowed and normalized. Source
// windows are z-scored by their own stats; real/target windows are scaled
// into the source window's frame so generated output maps back to mV.
template <class T>
struct GanBatch {
    TensorPtr<T> pair_input;  // (B, in_ch, W) for the style network
    TensorPtr<T> src_i;       // (B, 1, W) normalized lead I
    TensorPtr<T> src_ii;      // (B, 1, W) normalized lead II; null in s2e
    TensorPtr<T> real_adv;    // (B, 1, W) true lead-i windows
    TensorPtr<T> rec_src;     // (B, 1, W) alternating source window
    TensorPtr<T> rec_target;  // (B, 1, W) true lead-j windows
    TensorPtr<T> z;           // (B, z_dim)
    std::vector<int> adv_idx, rec_idx;  // generated-set indices per element
};

template <class T>
struct Lambdas {
    T adv = T(1), rec = T(2), con = T(1), sty = T(1);
};

// Discriminator objective: -(mean log D(real) + mean log(1 - D(fake))),
// fake built without gradient flow into G or S.
template <class T>
TensorPtr<T> build_d_loss(Tape<T>* tape, const Networks<T>& nets, const GanBatch<T>& batch) {
    auto code = nets.S.encode(nullptr, batch.pair_input, batch.adv_idx);
    auto fake = nets.G.generate(nullptr, batch.src_i, code);
    auto real_logits = nets.D.logits(tape, batch.real_adv, batch.adv_idx);
    auto fake_logits = nets.D.logits(tape, fake, batch.adv_idx);
    return nn::weighted_sum(
        tape, {{T(1), nn::bce_real(tape, real_logits)}, {T(1), nn::bce_fake(tape, fake_logits)}});
}

template <class T>
struct GenLosses {
    TensorPtr<T> g_adv, l_rec, l_con, l_sty, total;
};

// Generator-side objectives. The adversarial term is the non-saturating
// form -mean log D(fake); reconstruction and consistency are MSE; style is
// the MAE between mapped and encoded codes.
template <class T>
GenLosses<T> build_gen_losses(Tape<T>* tape, const Networks<T>& nets,
                              const GanBatch<T>& batch, const Lambdas<T>& lam) {
    GenLosses<T> out;
    auto feat = nets.S.trunk(tape, batch.pair_input);
    auto c_i = nets.S.heads_select(tape, feat, batch.adv_idx);
    auto c_j = nets.S.heads_select(tape, feat, batch.rec_idx);

    auto fake_from_i = nets.G.generate(tape, batch.src_i, c_i);
    out.g_adv = nn::bce_real(tape, nets.D.logits(tape, fake_from_i, batch.adv_idx));
    out.l_rec = nn::mse(tape, nets.G.generate(tape, batch.rec_src, c_j), batch.rec_target);
    if (batch.src_ii) {
        out.l_con = nn::mse(tape, fake_from_i, nets.G.generate(tape, batch.src_ii, c_i));
    } else {
        out.l_con = Tensor<T>::make2(1, 1);  // single-input mode has no second branch
    }
    out.l_sty = nn::mae(tape, nets.M.map(tape, batch.z, batch.adv_idx), c_i);
    out.total = nn::weighted_sum(tape, {{lam.adv, out.g_adv},
                                        {lam.rec, out.l_rec},
                                        {lam.con, out.l_con},
                                        {lam.sty, out.l_sty}});
    return out;
}

}  // namespace net

}  // namespace ecgt2t
