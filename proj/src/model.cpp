#include "ecgt2t/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "ecgt2t/checkpoint.hpp"

namespace ecgt2t {

using net::GanBatch;
using net::Networks;
using nn::Tensor;
using nn::TensorPtr;

void TrainConfig::validate() const {
    require(lambda_adv >= 0 && lambda_rec >= 0 && lambda_con >= 0 && lambda_sty >= 0,
            Err::InvalidArgument, "loss weights must be non-negative");
    require(lr_s > 0 && lr_m > 0 && lr_g > 0 && lr_d > 0, Err::InvalidArgument,
            "learning rates must be positive");
    require(weight_decay >= 0, Err::InvalidArgument, "weight decay must be non-negative");
    require(z_dim >= 1 && batch_size >= 1 && steps >= 0, Err::InvalidArgument,
            "z_dim, batch_size and steps must be positive");
    require(window_len >= 16 && window_len % 16 == 0, Err::InvalidArgument,
            "window_len must be a positive multiple of 16");
    require(delay_s >= 0, Err::InvalidArgument, "delay must be non-negative");
    require(base_width >= 1 && eval_every >= 1, Err::InvalidArgument,
            "base_width and eval_every must be positive");
}

NetworkBundle make_bundle(const TrainConfig& cfg) {
    cfg.validate();
    NetworkBundle b;
    b.cfg = cfg;
    b.nets = Networks<float>::init(cfg.mode, cfg.base_width, cfg.z_dim, cfg.seed);
    nn::AdamConfig<float> base{0.0f, cfg.weight_decay};
    auto make_opt = [&](char which, float lr) {
        auto c = base;
        c.lr = lr;
        return nn::Adam<float>(b.nets.params_of(which), c);
    };
    b.opt_s = make_opt('S', cfg.lr_s);
    b.opt_m = make_opt('M', cfg.lr_m);
    b.opt_g = make_opt('G', cfg.lr_g);
    b.opt_d = make_opt('D', cfg.lr_d);
    return b;
}

namespace {

// Copies a normalized double window into row (b, c) of a tensor.
void fill_row(TensorPtr<float>& t, int b, int c, const std::vector<double>& win) {
    float* dst = &t->at(b, c, 0);
    for (size_t i = 0; i < win.size(); ++i) dst[i] = static_cast<float>(win[i]);
}

std::vector<const EcgRecord*> usable_records(const std::vector<EcgRecord>& records,
                                             const TrainConfig& cfg) {
    const auto& targets = generated_leads(cfg.mode);
    std::vector<const EcgRecord*> out;
    for (const auto& r : records) {
        if (!r.has(LeadId::I) || !r.has(LeadId::II)) continue;
        bool all = true;
        for (LeadId t : targets) all = all && r.has(t);
        if (!all) continue;
        const long long need =
            std::llround(cfg.delay_s * r.fs) + cfg.window_len;
        if (static_cast<long long>(r.length()) < need) continue;
        out.push_back(&r);
    }
    return out;
}

}  // namespace

GanBatch<float> make_gan_batch(const std::vector<const EcgRecord*>& records,
                               const TrainConfig& cfg, Rng& rng, long parity) {
    require(!records.empty(), Err::EmptyDataset, "no usable records for batching");
    const int B = cfg.batch_size;
    const int W = cfg.window_len;
    const bool t2t = cfg.mode == Mode::T2T;
    const auto& targets = generated_leads(cfg.mode);
    const int n_gen = static_cast<int>(targets.size());

    GanBatch<float> batch;
    batch.pair_input = Tensor<float>::make(B, t2t ? 2 : 1, W);
    batch.src_i = Tensor<float>::make(B, 1, W);
    if (t2t) batch.src_ii = Tensor<float>::make(B, 1, W);
    batch.real_adv = Tensor<float>::make(B, 1, W);
    batch.rec_src = Tensor<float>::make(B, 1, W);
    batch.rec_target = Tensor<float>::make(B, 1, W);
    batch.z = Tensor<float>::make2(B, cfg.z_dim);
    batch.adv_idx.resize(B);
    batch.rec_idx.resize(B);

    for (int e = 0; e < B; ++e) {
        const EcgRecord& rec = *records[rng.bounded(records.size())];
        const long long delay_samp = std::llround(cfg.delay_s * rec.fs);
        const long long max_t0 =
            static_cast<long long>(rec.length()) - delay_samp - W;
        require(max_t0 >= 0, Err::OutOfBounds,
                "record " + rec.record_id + " is shorter than delay + window");
        const long long i0 = static_cast<long long>(rng.bounded(max_t0 + 1));
        const long long i1 = i0 + delay_samp;

        auto window = [&](LeadId lead, long long start) {
            const auto& src = rec[lead];
            return std::span<const float>(src.data() + start, static_cast<size_t>(W));
        };

        WindowStats stats_i, stats_ii;
        auto norm_i = normalize_window(window(LeadId::I, i0), &stats_i);
        fill_row(batch.src_i, e, 0, norm_i);
        fill_row(batch.pair_input, e, 0, norm_i);
        std::vector<double> norm_ii;
        if (t2t) {
            norm_ii = normalize_window(window(LeadId::II, i1), &stats_ii);
            fill_row(batch.src_ii, e, 0, norm_ii);
            fill_row(batch.pair_input, e, 1, norm_ii);
        }

        const int ai = static_cast<int>(rng.bounded(n_gen));
        const int ri = static_cast<int>(rng.bounded(n_gen));
        batch.adv_idx[e] = ai;
        batch.rec_idx[e] = ri;

        fill_row(batch.real_adv, e, 0, normalize_with(window(targets[ai], i0), stats_i));

        const bool use_ii = t2t && (parity % 2 == 1);
        if (use_ii) {
            fill_row(batch.rec_src, e, 0, norm_ii);
            fill_row(batch.rec_target, e, 0,
                     normalize_with(window(targets[ri], i1), stats_ii));
        } else {
            fill_row(batch.rec_src, e, 0, norm_i);
            fill_row(batch.rec_target, e, 0,
                     normalize_with(window(targets[ri], i0), stats_i));
        }

        for (int k = 0; k < cfg.z_dim; ++k) {
            batch.z->v[static_cast<size_t>(e) * cfg.z_dim + k] =
                static_cast<float>(rng.normal());
        }
    }
    return batch;
}

std::pair<float, float> loss_adv(const NetworkBundle& b, const GanBatch<float>& batch) {
    auto d = net::build_d_loss<float>(nullptr, b.nets, batch);
    net::Lambdas<float> lam{b.cfg.lambda_adv, b.cfg.lambda_rec, b.cfg.lambda_con,
                            b.cfg.lambda_sty};
    auto g = net::build_gen_losses<float>(nullptr, b.nets, batch, lam);
    return {d->v[0], g.g_adv->v[0]};
}

float loss_rec(const NetworkBundle& b, const GanBatch<float>& batch) {
    net::Lambdas<float> lam;
    return net::build_gen_losses<float>(nullptr, b.nets, batch, lam).l_rec->v[0];
}

float loss_con(const NetworkBundle& b, const GanBatch<float>& batch) {
    net::Lambdas<float> lam;
    return net::build_gen_losses<float>(nullptr, b.nets, batch, lam).l_con->v[0];
}

float loss_sty(const NetworkBundle& b, const GanBatch<float>& batch) {
    net::Lambdas<float> lam;
    return net::build_gen_losses<float>(nullptr, b.nets, batch, lam).l_sty->v[0];
}

namespace {

struct ParamSnapshot {
    std::vector<std::vector<float>> values;

    static ParamSnapshot take(const Networks<float>& nets) {
        ParamSnapshot s;
        for (auto& [name, t] : nets.named_params()) s.values.push_back(t->v);
        return s;
    }
    void restore(Networks<float>& nets) const {
        auto named = nets.named_params();
        for (size_t i = 0; i < named.size(); ++i) named[i].second->v = values[i];
    }
};

void zero_all(NetworkBundle& b) {
    b.opt_s.zero_grad();
    b.opt_m.zero_grad();
    b.opt_g.zero_grad();
    b.opt_d.zero_grad();
}

}  // namespace

TrainResult train(const std::vector<EcgRecord>& train_records,
                  const std::vector<EcgRecord>& val_records, const TrainConfig& cfg,
                  const NetworkBundle* resume_from) {
    cfg.validate();

    TrainResult result;
    if (resume_from) {
        require(resume_from->nets.mode == cfg.mode, Err::ModeMismatch,
                "resume checkpoint mode differs from the requested mode");
        result.bundle = make_bundle(cfg);
        ParamSnapshot::take(resume_from->nets).restore(result.bundle.nets);
        result.bundle.nets.trained_steps = resume_from->nets.trained_steps;
    } else {
        result.bundle = make_bundle(cfg);
    }
    NetworkBundle& b = result.bundle;
    const long step_base = b.nets.trained_steps;

    auto train_ptrs = usable_records(train_records, cfg);
    require(!train_ptrs.empty(), Err::EmptyDataset,
            "no training records with the required leads and length");
    auto val_ptrs = usable_records(val_records, cfg);
    if (val_ptrs.empty()) val_ptrs = train_ptrs;  // degenerate corpora still get a monitor

    Rng rng_data = Rng::fork(cfg.seed, 10);
    Rng rng_val = Rng::fork(cfg.seed, 12);
    const auto val_batch = make_gan_batch(val_ptrs, cfg, rng_val, 0);

    net::Lambdas<float> lam{cfg.lambda_adv, cfg.lambda_rec, cfg.lambda_con, cfg.lambda_sty};

    float best = std::numeric_limits<float>::infinity();
    long best_step = step_base;
    ParamSnapshot best_params = ParamSnapshot::take(b.nets);

    auto evaluate = [&](long step) {
        auto gl = net::build_gen_losses<float>(nullptr, b.nets, val_batch, lam);
        ValHistoryRow row{step, gl.total->v[0], gl.g_adv->v[0], gl.l_rec->v[0],
                          gl.l_con->v[0], gl.l_sty->v[0]};
        require(std::isfinite(row.g_total), Err::NonFiniteLoss,
                "validation loss is non-finite at step " + std::to_string(step));
        result.val_history.push_back(row);
        if (row.g_total < best) {
            best = row.g_total;
            best_step = step;
            best_params = ParamSnapshot::take(b.nets);
        }
    };

    evaluate(step_base);

    for (long s = 1; s <= cfg.steps; ++s) {
        const long step = step_base + s;
        auto batch = make_gan_batch(train_ptrs, cfg, rng_data, step);

        zero_all(b);
        nn::Tape<float> tape_d;
        auto d_loss = net::build_d_loss(&tape_d, b.nets, batch);
        tape_d.backward(d_loss);
        b.opt_d.step();

        zero_all(b);
        nn::Tape<float> tape_g;
        auto gl = net::build_gen_losses(&tape_g, b.nets, batch, lam);
        tape_g.backward(gl.total);
        b.opt_g.step();
        b.opt_s.step();
        b.opt_m.step();

        TrainHistoryRow row{step, d_loss->v[0], gl.g_adv->v[0], gl.l_rec->v[0],
                            gl.l_con->v[0], gl.l_sty->v[0]};
        const bool finite = std::isfinite(row.d_loss) && std::isfinite(row.g_adv) &&
                            std::isfinite(row.l_rec) && std::isfinite(row.l_con) &&
                            std::isfinite(row.l_sty);
        require(finite, Err::NonFiniteLoss,
                "non-finite loss at step " + std::to_string(step));
        result.history.push_back(row);

        if (s % cfg.eval_every == 0 || s == cfg.steps) evaluate(step);
    }

    best_params.restore(b.nets);
    b.nets.trained = true;
    b.nets.trained_steps = step_base + cfg.steps;
    result.best_step = best_step;
    result.best_val_total = best;
    return result;
}

namespace {

TensorPtr<float> pair_tensor(const AsyncLeadPair& pair, Mode mode, WindowStats* stats_i) {
    const int W = pair.window_len;
    require(static_cast<int>(pair.lead_i.size()) == W, Err::ShapeMismatch,
            "pair lead I window length mismatch");
    auto norm_i = normalize_window(std::span<const float>(pair.lead_i), stats_i);
    auto x = Tensor<float>::make(1, mode == Mode::T2T ? 2 : 1, W);
    fill_row(x, 0, 0, norm_i);
    if (mode == Mode::T2T) {
        require(static_cast<int>(pair.lead_ii.size()) == W, Err::ShapeMismatch,
                "pair lead II window length mismatch");
        auto norm_ii = normalize_window(std::span<const float>(pair.lead_ii), nullptr);
        fill_row(x, 0, 1, norm_ii);
    }
    return x;
}

}  // namespace

StyleCode style_encode(const AsyncLeadPair& pair, LeadId target, const NetworkBundle& b) {
    const int idx = generated_index(b.nets.mode, target);
    auto x = pair_tensor(pair, b.nets.mode, nullptr);
    auto code = b.nets.S.encode(nullptr, x, {idx});
    StyleCode out;
    out.target_lead = target;
    out.values = code->v;
    return out;
}

StyleCode map_latent(std::span<const float> z, LeadId target, const NetworkBundle& b) {
    const int idx = generated_index(b.nets.mode, target);
    require(static_cast<int>(z.size()) == b.nets.z_dim, Err::ShapeMismatch,
            "latent size must equal z_dim");
    auto zt = Tensor<float>::make2(1, b.nets.z_dim);
    std::copy(z.begin(), z.end(), zt->v.begin());
    auto code = b.nets.M.map(nullptr, zt, {idx});
    StyleCode out;
    out.target_lead = target;
    out.values = code->v;
    return out;
}

std::vector<float> generate_lead(std::span<const float> source_norm, const StyleCode& code,
                                 const NetworkBundle& b) {
    require(static_cast<int>(code.values.size()) == kStyleDim, Err::ShapeMismatch,
            "style code must have 512 entries");
    const int W = static_cast<int>(source_norm.size());
    auto src = Tensor<float>::make(1, 1, W);
    std::copy(source_norm.begin(), source_norm.end(), src->v.begin());
    auto ct = Tensor<float>::make2(1, kStyleDim);
    ct->v = code.values;
    auto y = b.nets.G.generate(nullptr, src, ct);
    return y->v;
}

namespace {

// Batches all target leads into one generator pass from a shared source
// window; returns the de-normalized signals in generated-set order.
std::vector<std::vector<float>> generate_all(const NetworkBundle& b,
                                             const std::vector<double>& src_norm,
                                             const TensorPtr<float>& style_input,
                                             const WindowStats& stats_i) {
    const auto& targets = generated_leads(b.nets.mode);
    const int n = static_cast<int>(targets.size());
    const int W = static_cast<int>(src_norm.size());

    std::vector<int> all_idx(n);
    for (int i = 0; i < n; ++i) all_idx[i] = i;

    // replicate the style input across the batch dimension
    auto rep = Tensor<float>::make(n, style_input->d1, W);
    for (int i = 0; i < n; ++i) {
        std::copy(style_input->v.begin(), style_input->v.end(),
                  rep->v.begin() + static_cast<size_t>(i) * style_input->d1 * W);
    }
    auto codes = b.nets.S.encode(nullptr, rep, all_idx);

    auto src = Tensor<float>::make(n, 1, W);
    for (int i = 0; i < n; ++i) {
        float* dst = &src->at(i, 0, 0);
        for (int k = 0; k < W; ++k) dst[k] = static_cast<float>(src_norm[k]);
    }
    auto gen = b.nets.G.generate(nullptr, src, codes);

    std::vector<std::vector<float>> out(n);
    for (int i = 0; i < n; ++i) {
        std::span<const float> row(&gen->at(i, 0, 0), static_cast<size_t>(W));
        out[i] = denormalize_with(row, stats_i);
    }
    return out;
}

}  // namespace

EcgRecord synthesize_twelve(const AsyncLeadPair& pair, const NetworkBundle& b) {
    require(b.nets.trained, Err::UntrainedModel, "networks are not trained");
    require(b.nets.mode == Mode::T2T, Err::ModeMismatch,
            "synthesize_twelve needs a t2t checkpoint");
    require(pair.fs > 0, Err::InvalidArgument, "pair has no sampling rate");

    WindowStats stats_i;
    auto style_input = pair_tensor(pair, Mode::T2T, &stats_i);
    auto norm_i = normalize_window(std::span<const float>(pair.lead_i), nullptr);
    auto generated = generate_all(b, norm_i, style_input, stats_i);

    EcgRecord out;
    out.fs = pair.fs;
    out.record_id = "synth-t2t";
    out[LeadId::I] = pair.lead_i;
    out[LeadId::II] = pair.lead_ii;
    const auto& targets = generated_leads(Mode::T2T);
    for (size_t i = 0; i < targets.size(); ++i) out[targets[i]] = std::move(generated[i]);
    return out;
}

EcgRecord synthesize_from_one(std::span<const float> lead_i_window, int fs,
                              const NetworkBundle& b) {
    require(b.nets.trained, Err::UntrainedModel, "networks are not trained");
    require(b.nets.mode == Mode::S2E, Err::ModeMismatch,
            "synthesize_from_one needs an s2e checkpoint");
    require(fs > 0, Err::InvalidArgument, "fs must be positive");

    const int W = static_cast<int>(lead_i_window.size());
    WindowStats stats_i;
    auto norm_i = normalize_window(lead_i_window, &stats_i);
    auto style_input = Tensor<float>::make(1, 1, W);
    fill_row(style_input, 0, 0, norm_i);
    auto generated = generate_all(b, norm_i, style_input, stats_i);

    EcgRecord out;
    out.fs = fs;
    out.record_id = "synth-s2e";
    out[LeadId::I].assign(lead_i_window.begin(), lead_i_window.end());
    const auto& targets = generated_leads(Mode::S2E);
    for (size_t i = 0; i < targets.size(); ++i) out[targets[i]] = std::move(generated[i]);
    return out;
}

void save_gan_checkpoint(const std::filesystem::path& path, const NetworkBundle& b) {
    nlohmann::json meta;
    meta["kind"] = "gan";
    meta["mode"] = mode_name(b.nets.mode);
    meta["base_width"] = b.nets.base;
    meta["z_dim"] = b.nets.z_dim;
    meta["style_dim"] = kStyleDim;
    meta["window_len"] = b.cfg.window_len;
    meta["delay_s"] = b.cfg.delay_s;
    meta["trained_steps"] = b.nets.trained_steps;
    nn::save_checkpoint(path, meta, b.nets.named_params());
}

NetworkBundle load_gan_checkpoint(const std::filesystem::path& path) {
    auto ck = nn::load_checkpoint(path);
    require(ck.meta.value("kind", "") == "gan", Err::FormatError,
            "checkpoint is not a gan checkpoint");
    TrainConfig cfg;
    const std::string mode = ck.meta.at("mode").get<std::string>();
    cfg.mode = mode == "t2t" ? Mode::T2T : Mode::S2E;
    cfg.base_width = ck.meta.at("base_width").get<int>();
    cfg.z_dim = ck.meta.at("z_dim").get<int>();
    cfg.window_len = ck.meta.value("window_len", 512);
    cfg.delay_s = ck.meta.value("delay_s", kDefaultDelaySeconds);
    require(ck.meta.value("style_dim", kStyleDim) == kStyleDim, Err::FormatError,
            "unsupported style dimension");

    NetworkBundle b = make_bundle(cfg);
    auto named = b.nets.named_params();
    require(named.size() == ck.tensors.size(), Err::FormatError,
            "checkpoint tensor count mismatch");
    for (auto& [name, t] : named) {
        auto it = ck.tensors.find(name);
        require(it != ck.tensors.end(), Err::FormatError,
                "checkpoint is missing tensor " + name);
        require(it->second.second.size() == t->size(), Err::FormatError,
                "checkpoint tensor size mismatch for " + name);
        t->v = it->second.second;
    }
    b.nets.trained = true;
    b.nets.trained_steps = ck.meta.value("trained_steps", 0L);
    return b;
}

void save_history_json(const std::filesystem::path& path,
                       const std::vector<TrainHistoryRow>& history,
                       const std::vector<ValHistoryRow>& val_history) {
    nlohmann::json doc;
    doc["steps"] = nlohmann::json::array();
    for (const auto& r : history) {
        doc["steps"].push_back({{"step", r.step},
                                {"d_loss", r.d_loss},
                                {"g_adv", r.g_adv},
                                {"l_rec", r.l_rec},
                                {"l_con", r.l_con},
                                {"l_sty", r.l_sty}});
    }
    doc["validation"] = nlohmann::json::array();
    for (const auto& r : val_history) {
        doc["validation"].push_back({{"step", r.step},
                                     {"g_total", r.g_total},
                                     {"g_adv", r.g_adv},
                                     {"l_rec", r.l_rec},
                                     {"l_con", r.l_con},
                                     {"l_sty", r.l_sty}});
    }
    std::ofstream out(path, std::ios::trunc);
    require(out.good(), Err::IoError, "cannot open " + path.string() + " for writing");
    out << doc.dump(2) << "\n";
    require(out.good(), Err::IoError, "short write to " + path.string());
}

}  // namespace ecgt2t
