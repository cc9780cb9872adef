#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecgt2t/dataset.hpp"
#include "ecgt2t/model.hpp"

namespace ecgt2t {

// Lead combinations from the downstream evaluation protocol.
enum class LeadVariant { Original, T2T, S2E, TwoLeads, SingleLead };

const char* variant_name(LeadVariant v);
LeadVariant variant_from_name(const std::string& name);
int variant_channels(LeadVariant v);  // 12, 12, 12, 2, 1

struct ClassifierConfig {
    float lr = 1e-4f;
    float weight_decay = 1e-5f;
    float alpha = 0.5f;
    float gamma = 2.0f;
    int epochs = 40;
    int batch_size = 16;
    uint64_t seed = 0;

    int window_len = 1024;
    double delay_s = kDefaultDelaySeconds;
    int base_width = 32;

    void validate() const;
};

struct VariantSample {
    std::vector<std::vector<float>> channels;  // mV windows, fixed LeadId order
    int label = 0;                             // 0 = normal, 1 = condition
    Split split = Split::Train;
    std::string id;
};

struct VariantDataset {
    LeadVariant variant = LeadVariant::Original;
    int fs = 0;
    int window_len = 0;
    std::vector<VariantSample> samples;
};

// Builds fixed-channel windows for one lead variant. Records are windowed at
// t0 = 0 with the asynchronous delay applied to lead II where the variant
// calls for it; T2T/S2E channels come from the matching GAN checkpoint.
VariantDataset build_variant_dataset(const std::vector<std::pair<const EcgRecord*, Split>>& records,
                                     LeadVariant variant, const NetworkBundle* gan,
                                     int window_len, double delay_s);

// 1-D ResNet18: stem conv stride 2, stages [2,2,2,2] with channel doubling,
// global average pooling and a single fully connected layer to softmax.
struct ResNet1d {
    net::Conv1dLayer<float> stem;
    std::vector<net::ResBlock<float>> blocks;
    net::LinearLayer<float> fc;
    int in_ch = 1, base = 32, n_classes = 2;

    static ResNet1d init(int in_ch, int base, int n_classes, uint64_t seed);
    nn::TensorPtr<float> probs(nn::Tape<float>* tape, const nn::TensorPtr<float>& x) const;
    std::vector<nn::TensorPtr<float>> params() const;
    net::NamedParams<float> named_params() const;
};

struct ClassifierModel {
    ResNet1d net;
    ClassifierConfig cfg;
    bool trained = false;
};

struct ClassifierEpochRow {
    int epoch = 0;
    float train_loss = 0, val_loss = 0;
};

struct ClassifierTrainResult {
    ClassifierModel model;
    std::vector<ClassifierEpochRow> history;
};

ClassifierTrainResult train_classifier(const VariantDataset& dataset,
                                       const ClassifierConfig& cfg);

// Positive-class scores for every sample of one split.
std::vector<double> classifier_scores(const ClassifierModel& model,
                                      const VariantDataset& dataset, Split split,
                                      std::vector<int>* labels_out = nullptr);

// Rank-statistic AUROC with tie correction (equals trapezoidal ROC
// integration and the pairwise oracle).
double auroc(std::span<const double> scores, std::span<const int> labels);

// Average-precision form of AUPRC with tied scores handled per threshold
// block.
double auprc(std::span<const double> scores, std::span<const int> labels);

using MetricFn = std::function<double(std::span<const double>, std::span<const int>)>;

// Percentile bootstrap CI; each resample uses an independent substream of
// `seed`, single-class resamples are redrawn up to 100 times. The interval
// is widened if needed so it always contains the point estimate.
std::pair<double, double> bootstrap_ci(std::span<const double> scores,
                                       std::span<const int> labels, const MetricFn& metric,
                                       int n_boot = 1000, double level = 0.95,
                                       uint64_t seed = 0);

struct ClassifierReport {
    std::string variant, task;
    double auroc_value = 0, auprc_value = 0;
    std::pair<double, double> auroc_ci{0, 0}, auprc_ci{0, 0};
    int n_test = 0;

    nlohmann::json to_json() const;
};

void save_classifier_checkpoint(const std::filesystem::path& path,
                                const ClassifierModel& model);
ClassifierModel load_classifier_checkpoint(const std::filesystem::path& path);

}  // namespace ecgt2t
