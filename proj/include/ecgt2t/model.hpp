#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ecgt2t/model_nets.hpp"
#include "ecgt2t/signal.hpp"

namespace ecgt2t {

struct StyleCode {
    std::vector<float> values;  // kStyleDim floats
    LeadId target_lead = LeadId::III;
};

struct TrainConfig {
    Mode mode = Mode::T2T;

    float lambda_adv = 1.0f, lambda_rec = 2.0f, lambda_con = 1.0f, lambda_sty = 1.0f;
    float lr_s = 3e-4f, lr_m = 1e-4f, lr_g = 3e-4f, lr_d = 1e-4f;
    float weight_decay = 1e-4f;
    int z_dim = 64;
    int batch_size = 16;
    long steps = 2000;
    uint64_t seed = 0;

    // Artifact plumbing beyond the published hyperparameters. Windows must
    // be divisible by 16 for the generator's four halving stages; the
    // trained model is fully convolutional and synthesizes at any such
    // length.
    int window_len = 512;
    double delay_s = kDefaultDelaySeconds;
    int base_width = 8;
    int eval_every = 50;

    void validate() const;
};

// The four networks plus their optimizer state.
struct NetworkBundle {
    net::Networks<float> nets;
    nn::Adam<float> opt_s, opt_m, opt_g, opt_d;
    TrainConfig cfg;

    Mode mode() const { return nets.mode; }
};

NetworkBundle make_bundle(const TrainConfig& cfg);

struct TrainHistoryRow {
    long step = 0;
    float d_loss = 0, g_adv = 0, l_rec = 0, l_con = 0, l_sty = 0;
};

struct ValHistoryRow {
    long step = 0;
    float g_total = 0, g_adv = 0, l_rec = 0, l_con = 0, l_sty = 0;
};

struct TrainResult {
    NetworkBundle bundle;
    std::vector<TrainHistoryRow> history;
    std::vector<ValHistoryRow> val_history;
    long best_step = 0;
    float best_val_total = 0;
};

// Alternating adversarial training. Per step: one discriminator update at
// lr_d, then one generator-side update of G, S and M at their own learning
// rates on lambda_adv*g_adv + lambda_rec*L_rec + lambda_con*L_con +
// lambda_sty*L_sty. Keeps the parameters with the lowest generator-side
// total on the validation batch. Deterministic given the seed.
TrainResult train(const std::vector<EcgRecord>& train_records,
                  const std::vector<EcgRecord>& val_records, const TrainConfig& cfg,
                  const NetworkBundle* resume_from = nullptr);

// Batch assembly used by train(); exposed so tests and the acceptance
// harness can evaluate losses on controlled batches. `parity` selects the
// reconstruction source lead (even = I, odd = II).
net::GanBatch<float> make_gan_batch(const std::vector<const EcgRecord*>& records,
                                    const TrainConfig& cfg, Rng& rng, long parity);

// Loss surfaces over an assembled batch (no gradients).
std::pair<float, float> loss_adv(const NetworkBundle& b, const net::GanBatch<float>& batch);
float loss_rec(const NetworkBundle& b, const net::GanBatch<float>& batch);
float loss_con(const NetworkBundle& b, const net::GanBatch<float>& batch);
float loss_sty(const NetworkBundle& b, const net::GanBatch<float>& batch);

StyleCode style_encode(const AsyncLeadPair& pair, LeadId target, const NetworkBundle& b);
StyleCode map_latent(std::span<const float> z, LeadId target, const NetworkBundle& b);

// Runs the generator on a normalized source window; output is in the same
// normalized frame. Length must be a positive multiple of 16.
std::vector<float> generate_lead(std::span<const float> source_norm, const StyleCode& code,
                                 const NetworkBundle& b);

// T2T synthesis: passes the two input windows through bit-identically and
// generates III..V6 from the lead I window, de-normalized back to mV with
// the lead I window statistics.
EcgRecord synthesize_twelve(const AsyncLeadPair& pair, const NetworkBundle& b);

// S2E synthesis: lead I in, II..V6 generated.
EcgRecord synthesize_from_one(std::span<const float> lead_i_window, int fs,
                              const NetworkBundle& b);

void save_gan_checkpoint(const std::filesystem::path& path, const NetworkBundle& b);
NetworkBundle load_gan_checkpoint(const std::filesystem::path& path);

void save_history_json(const std::filesystem::path& path,
                       const std::vector<TrainHistoryRow>& history,
                       const std::vector<ValHistoryRow>& val_history);

}  // namespace ecgt2t
