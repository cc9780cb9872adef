#include "ecgt2t/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ecgt2t/checkpoint.hpp"

namespace ecgt2t {

using nn::Tensor;
using nn::TensorPtr;

const char* variant_name(LeadVariant v) {
    switch (v) {
        case LeadVariant::Original: return "original";
        case LeadVariant::T2T: return "t2t";
        case LeadVariant::S2E: return "s2e";
        case LeadVariant::TwoLeads: return "two";
        case LeadVariant::SingleLead: return "single";
    }
    return "?";
}

LeadVariant variant_from_name(const std::string& name) {
    if (name == "original") return LeadVariant::Original;
    if (name == "t2t") return LeadVariant::T2T;
    if (name == "s2e") return LeadVariant::S2E;
    if (name == "two") return LeadVariant::TwoLeads;
    if (name == "single") return LeadVariant::SingleLead;
    fail(Err::InvalidArgument, "unknown lead variant '" + name + "'");
}

int variant_channels(LeadVariant v) {
    switch (v) {
        case LeadVariant::Original:
        case LeadVariant::T2T:
        case LeadVariant::S2E: return 12;
        case LeadVariant::TwoLeads: return 2;
        case LeadVariant::SingleLead: return 1;
    }
    return 0;
}

void ClassifierConfig::validate() const {
    require(lr > 0 && weight_decay >= 0, Err::InvalidArgument, "bad optimizer settings");
    require(alpha > 0 && gamma >= 0, Err::InvalidArgument, "bad focal loss settings");
    require(epochs >= 0 && batch_size >= 1, Err::InvalidArgument, "bad schedule");
    require(window_len >= 16 && window_len % 16 == 0, Err::InvalidArgument,
            "window_len must be a positive multiple of 16");
}

VariantDataset build_variant_dataset(
    const std::vector<std::pair<const EcgRecord*, Split>>& records, LeadVariant variant,
    const NetworkBundle* gan, int window_len, double delay_s) {
    if (variant == LeadVariant::T2T || variant == LeadVariant::S2E) {
        require(gan != nullptr, Err::MissingCheckpoint,
                "generated variants need a GAN checkpoint");
        const Mode want = variant == LeadVariant::T2T ? Mode::T2T : Mode::S2E;
        require(gan->nets.mode == want, Err::ModeMismatch,
                "checkpoint mode does not match the requested variant");
    }

    VariantDataset out;
    out.variant = variant;
    out.window_len = window_len;

    for (const auto& [rec, split] : records) {
        require(rec->fs > 0, Err::InvalidArgument, "record without sampling rate");
        if (out.fs == 0) out.fs = rec->fs;
        require(rec->fs == out.fs, Err::RateMismatch, "mixed sampling rates in dataset");

        VariantSample sample;
        sample.id = rec->record_id;
        sample.split = split;
        sample.label = rec->label == Condition::Normal ? 0 : 1;

        auto window = [&](LeadId lead, long long start) {
            require(rec->has(lead), Err::MissingLead,
                    std::string("record lacks lead ") + lead_name(lead));
            require(start + window_len <= static_cast<long long>(rec->length()),
                    Err::OutOfBounds, "record shorter than the variant window");
            const auto& src = (*rec)[lead];
            return std::vector<float>(src.begin() + start, src.begin() + start + window_len);
        };

        switch (variant) {
            case LeadVariant::Original: {
                for (int i = 0; i < kNumLeads; ++i) {
                    sample.channels.push_back(window(static_cast<LeadId>(i), 0));
                }
                break;
            }
            case LeadVariant::SingleLead: {
                sample.channels.push_back(window(LeadId::I, 0));
                break;
            }
            case LeadVariant::TwoLeads: {
                const long long d = std::llround(delay_s * rec->fs);
                sample.channels.push_back(window(LeadId::I, 0));
                sample.channels.push_back(window(LeadId::II, d));
                break;
            }
            case LeadVariant::T2T: {
                auto pair = extract_async_pair(*rec, 0.0, delay_s, window_len);
                EcgRecord synth = synthesize_twelve(pair, *gan);
                for (int i = 0; i < kNumLeads; ++i) {
                    sample.channels.push_back(synth.leads[i]);
                }
                break;
            }
            case LeadVariant::S2E: {
                auto lead_i = window(LeadId::I, 0);
                EcgRecord synth = synthesize_from_one(lead_i, rec->fs, *gan);
                for (int i = 0; i < kNumLeads; ++i) {
                    sample.channels.push_back(synth.leads[i]);
                }
                break;
            }
        }
        out.samples.push_back(std::move(sample));
    }
    return out;
}

ResNet1d ResNet1d::init(int in_ch, int base, int n_classes, uint64_t seed) {
    ResNet1d m;
    m.in_ch = in_ch;
    m.base = base;
    m.n_classes = n_classes;
    Rng rng = Rng::fork(seed, 5);
    m.stem.init(rng, in_ch, base, 7, 2, 3);
    // stages [2,2,2,2], widths base..8*base, first block of stages 2-4
    // downsamples
    const int stage_width[4] = {base, 2 * base, 4 * base, 8 * base};
    int cin = base;
    for (int s = 0; s < 4; ++s) {
        for (int k = 0; k < 2; ++k) {
            net::ResBlock<float> blk;
            const int stride = (k == 0 && s > 0) ? 2 : 1;
            blk.init(rng, cin, stage_width[s], stride);
            cin = stage_width[s];
            m.blocks.push_back(std::move(blk));
        }
    }
    m.fc.init(rng, 8 * base, n_classes);
    return m;
}

TensorPtr<float> ResNet1d::probs(nn::Tape<float>* tape, const TensorPtr<float>& x) const {
    auto h = stem.fwd(tape, x);
    for (const auto& b : blocks) h = b.fwd(tape, h);
    auto feat = nn::global_avg_pool(tape, h);
    return nn::softmax_rows(tape, fc.fwd(tape, feat));
}

std::vector<TensorPtr<float>> ResNet1d::params() const {
    auto named = named_params();
    std::vector<TensorPtr<float>> out;
    out.reserve(named.size());
    for (auto& [n, t] : named) out.push_back(t);
    return out;
}

net::NamedParams<float> ResNet1d::named_params() const {
    net::NamedParams<float> out;
    stem.named("C/stem", out);
    for (size_t i = 0; i < blocks.size(); ++i) {
        blocks[i].named("C/blk" + std::to_string(i), out);
    }
    fc.named("C/fc", out);
    return out;
}

namespace {

// Per-channel z-score at tensor assembly; the classifier always sees
// normalized windows regardless of the variant's mV scales.
TensorPtr<float> to_input_tensor(const VariantDataset& ds, const std::vector<int>& idx) {
    const int B = static_cast<int>(idx.size());
    const int C = static_cast<int>(ds.samples[idx[0]].channels.size());
    const int W = ds.window_len;
    auto x = Tensor<float>::make(B, C, W);
    for (int b = 0; b < B; ++b) {
        const auto& s = ds.samples[idx[b]];
        for (int c = 0; c < C; ++c) {
            auto norm = normalize_window(std::span<const float>(s.channels[c]), nullptr);
            float* dst = &x->at(b, c, 0);
            for (int k = 0; k < W; ++k) dst[k] = static_cast<float>(norm[k]);
        }
    }
    return x;
}

std::vector<int> split_indices(const VariantDataset& ds, Split split) {
    std::vector<int> out;
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        if (ds.samples[i].split == split) out.push_back(static_cast<int>(i));
    }
    return out;
}

template <class T>
void shuffle_vec(std::vector<T>& v, Rng& rng) {
    for (size_t i = v.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rng.bounded(i));
        std::swap(v[i - 1], v[j]);
    }
}

struct ClfSnapshot {
    std::vector<std::vector<float>> values;
    static ClfSnapshot take(const ResNet1d& net) {
        ClfSnapshot s;
        for (auto& [n, t] : net.named_params()) s.values.push_back(t->v);
        return s;
    }
    void restore(ResNet1d& net) const {
        auto named = net.named_params();
        for (size_t i = 0; i < named.size(); ++i) named[i].second->v = values[i];
    }
};

}  // namespace

ClassifierTrainResult train_classifier(const VariantDataset& dataset,
                                       const ClassifierConfig& cfg) {
    cfg.validate();
    require(!dataset.samples.empty(), Err::EmptyDataset, "variant dataset is empty");

    auto train_idx = split_indices(dataset, Split::Train);
    auto val_idx = split_indices(dataset, Split::Val);
    require(!train_idx.empty(), Err::EmptyDataset, "no training samples");
    {
        bool has0 = false, has1 = false;
        for (int i : train_idx) (dataset.samples[i].label == 0 ? has0 : has1) = true;
        require(has0 && has1, Err::SingleClassDataset,
                "training split needs both classes");
    }
    if (val_idx.empty()) val_idx = train_idx;

    const int C = static_cast<int>(dataset.samples[train_idx[0]].channels.size());

    ClassifierTrainResult result;
    result.model.cfg = cfg;
    result.model.net = ResNet1d::init(C, cfg.base_width, 2, cfg.seed);
    ResNet1d& net = result.model.net;

    nn::AdamConfig<float> ocfg{cfg.lr, cfg.weight_decay};
    nn::Adam<float> opt(net.params(), ocfg);

    Rng rng = Rng::fork(cfg.seed, 6);

    auto eval_loss = [&](const std::vector<int>& idx) {
        float total = 0.0f;
        size_t done = 0;
        while (done < idx.size()) {
            const size_t take = std::min<size_t>(cfg.batch_size, idx.size() - done);
            std::vector<int> chunk(idx.begin() + done, idx.begin() + done + take);
            std::vector<int> labels;
            for (int i : chunk) labels.push_back(dataset.samples[i].label);
            auto probs = net.probs(nullptr, to_input_tensor(dataset, chunk));
            auto loss = nn::focal_loss<float>(nullptr, probs, labels, cfg.alpha, cfg.gamma);
            total += loss->v[0] * static_cast<float>(take);
            done += take;
        }
        return total / static_cast<float>(idx.size());
    };

    float best_val = std::numeric_limits<float>::infinity();
    ClfSnapshot best = ClfSnapshot::take(net);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        auto order = train_idx;
        shuffle_vec(order, rng);
        float epoch_loss = 0.0f;
        size_t done = 0;
        while (done < order.size()) {
            const size_t take = std::min<size_t>(cfg.batch_size, order.size() - done);
            std::vector<int> chunk(order.begin() + done, order.begin() + done + take);
            std::vector<int> labels;
            for (int i : chunk) labels.push_back(dataset.samples[i].label);

            auto x = to_input_tensor(dataset, chunk);
            opt.zero_grad();
            nn::Tape<float> tape;
            auto probs = net.probs(&tape, x);
            auto loss = nn::focal_loss<float>(&tape, probs, labels, cfg.alpha, cfg.gamma);
            require(std::isfinite(loss->v[0]), Err::NonFiniteLoss,
                    "non-finite classifier loss at epoch " + std::to_string(epoch));
            tape.backward(loss);
            opt.step();
            epoch_loss += loss->v[0] * static_cast<float>(take);
            done += take;
        }
        epoch_loss /= static_cast<float>(order.size());
        const float val_loss = eval_loss(val_idx);
        result.history.push_back({epoch, epoch_loss, val_loss});
        if (val_loss < best_val) {
            best_val = val_loss;
            best = ClfSnapshot::take(net);
        }
    }
    if (cfg.epochs > 0) best.restore(net);
    result.model.trained = true;
    return result;
}

std::vector<double> classifier_scores(const ClassifierModel& model,
                                      const VariantDataset& dataset, Split split,
                                      std::vector<int>* labels_out) {
    require(model.trained, Err::UntrainedModel, "classifier is not trained");
    auto idx = split_indices(dataset, split);
    std::vector<double> scores;
    if (labels_out) labels_out->clear();
    size_t done = 0;
    while (done < idx.size()) {
        const size_t take = std::min<size_t>(model.cfg.batch_size, idx.size() - done);
        std::vector<int> chunk(idx.begin() + done, idx.begin() + done + take);
        auto probs = model.net.probs(nullptr, to_input_tensor(dataset, chunk));
        for (size_t b = 0; b < take; ++b) {
            scores.push_back(probs->v[b * 2 + 1]);  // positive-class probability
            if (labels_out) labels_out->push_back(dataset.samples[chunk[b]].label);
        }
        done += take;
    }
    return scores;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
    require(scores.size() == labels.size(), Err::LengthMismatch,
            "scores/labels size mismatch");
    const size_t n = scores.size();
    size_t n_pos = 0;
    for (int l : labels) n_pos += l != 0 ? 1 : 0;
    const size_t n_neg = n - n_pos;
    require(n_pos > 0 && n_neg > 0, Err::SingleClass, "auroc needs both classes");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // average ranks over tie groups, then the Mann-Whitney statistic
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (size_t k = i; k <= j; ++k) {
            if (labels[order[k]] != 0) rank_sum_pos += avg_rank;
        }
        i = j + 1;
    }
    const double u = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auprc(std::span<const double> scores, std::span<const int> labels) {
    require(scores.size() == labels.size(), Err::LengthMismatch,
            "scores/labels size mismatch");
    const size_t n = scores.size();
    size_t n_pos = 0;
    for (int l : labels) n_pos += l != 0 ? 1 : 0;
    require(n_pos > 0 && n_pos < n, Err::SingleClass, "auprc needs both classes");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] > scores[b]; });

    // Average precision with tied scores processed as one threshold block:
    // AP = sum over blocks of (positives in block) * precision_after_block,
    // normalized by the positive count.
    double ap = 0.0;
    size_t tp = 0, fp = 0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        size_t block_pos = 0;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            if (labels[order[j]] != 0) ++block_pos;
            ++j;
        }
        const size_t block = j - i;
        tp += block_pos;
        fp += block - block_pos;
        if (block_pos > 0) {
            const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
            ap += static_cast<double>(block_pos) * precision;
        }
        i = j;
    }
    return ap / static_cast<double>(n_pos);
}

std::pair<double, double> bootstrap_ci(std::span<const double> scores,
                                       std::span<const int> labels, const MetricFn& metric,
                                       int n_boot, double level, uint64_t seed) {
    require(scores.size() == labels.size(), Err::LengthMismatch,
            "scores/labels size mismatch");
    const size_t n = scores.size();
    size_t n_pos = 0;
    for (int l : labels) n_pos += l != 0 ? 1 : 0;
    require(n_pos >= 10 && n - n_pos >= 10, Err::InvalidArgument,
            "bootstrap needs at least 10 samples per class");
    require(n_boot >= 2 && level > 0 && level < 1, Err::InvalidArgument,
            "bad bootstrap settings");

    std::vector<double> stats(n_boot);
    for (int bi = 0; bi < n_boot; ++bi) {
        Rng rng = Rng::fork(seed, 100 + static_cast<uint64_t>(bi));
        std::vector<double> s(n);
        std::vector<int> l(n);
        bool ok = false;
        for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
            bool has0 = false, has1 = false;
            for (size_t k = 0; k < n; ++k) {
                const size_t pick = rng.bounded(n);
                s[k] = scores[pick];
                l[k] = labels[pick];
                (l[k] == 0 ? has0 : has1) = true;
            }
            ok = has0 && has1;
        }
        require(ok, Err::DegenerateResampling,
                "resample kept producing a single class after 100 retries");
        stats[bi] = metric(s, l);
    }
    std::sort(stats.begin(), stats.end());

    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(n_boot - 1);
        const size_t lo = static_cast<size_t>(pos);
        const size_t hi = std::min<size_t>(lo + 1, n_boot - 1);
        const double frac = pos - static_cast<double>(lo);
        return stats[lo] * (1.0 - frac) + stats[hi] * frac;
    };

    const double tail = (1.0 - level) / 2.0;
    double lo = quantile(tail);
    double hi = quantile(1.0 - tail);

    const double point = metric(scores, labels);
    lo = std::min(lo, point);
    hi = std::max(hi, point);
    return {lo, hi};
}

nlohmann::json ClassifierReport::to_json() const {
    return nlohmann::json{{"variant", variant},
                          {"task", task},
                          {"auroc", auroc_value},
                          {"auroc_ci", {auroc_ci.first, auroc_ci.second}},
                          {"auprc", auprc_value},
                          {"auprc_ci", {auprc_ci.first, auprc_ci.second}},
                          {"n_test", n_test}};
}

void save_classifier_checkpoint(const std::filesystem::path& path,
                                const ClassifierModel& model) {
    nlohmann::json meta;
    meta["kind"] = "classifier";
    meta["in_ch"] = model.net.in_ch;
    meta["base_width"] = model.net.base;
    meta["n_classes"] = model.net.n_classes;
    meta["window_len"] = model.cfg.window_len;
    nn::save_checkpoint(path, meta, model.net.named_params());
}

ClassifierModel load_classifier_checkpoint(const std::filesystem::path& path) {
    auto ck = nn::load_checkpoint(path);
    require(ck.meta.value("kind", "") == "classifier", Err::FormatError,
            "checkpoint is not a classifier checkpoint");
    ClassifierModel model;
    model.cfg.window_len = ck.meta.value("window_len", 1024);
    model.cfg.base_width = ck.meta.at("base_width").get<int>();
    model.net = ResNet1d::init(ck.meta.at("in_ch").get<int>(), model.cfg.base_width,
                               ck.meta.at("n_classes").get<int>(), 0);
    auto named = model.net.named_params();
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
    model.trained = true;
    return model;
}

}  // namespace ecgt2t
