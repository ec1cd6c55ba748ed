#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stpc/geometry.hpp"
#include "stpc/layers.hpp"
#include "stpc/metrics.hpp"
#include "stpc/optim.hpp"
#include "stpc/stpc_layer.hpp"

namespace stpc {

struct NetworkConfig {
    std::size_t input_channels = 0;
    std::size_t num_classes = 3;
    std::size_t num_stages = 2;
    std::vector<std::size_t> widths{32, 64};  // one per stage
    std::size_t neighbors = 16;
    std::size_t atoms = 25;
    std::size_t atom_dim = 16;
    double tau = 0.01;
    std::size_t ratio = 4;
    double lambda_dict = 0.1;
    double lr = 0.01;
    double lr_decay = 0.95;
    double dict_lr_scale = 0.01;
    std::size_t epochs = 200;
    std::uint64_t seed = 0;
    std::size_t head_width = 64;
    Aggregation aggregation = Aggregation::Anisotropic;
    FeatureInput feature_input = FeatureInput::Absolute;

    // Five stages, widths 32..512.
    static NetworkConfig full_scale();

    void validate() const;  // throws ConfigError naming the field
    // Flat `key = value` lines; keys match the CLI long flags.
    std::string to_text() const;
    static NetworkConfig from_text(std::string_view text);
};

struct EncoderStage {
    StpcLayerParams layer;
    Affine norm;
};

struct SegModel {
    NetworkConfig config;
    ad::Tensor initial_atoms;  // A^0; undefined for isotropic variants
    std::vector<EncoderStage> encoder;
    std::vector<Linear> decoder;  // decoder[s] produces stage-s resolution features
    Linear head_hidden;
    Linear head_out;

    // Stable order and names; used for optimizer state and checkpoints.
    std::vector<NamedTensor> parameters() const;
    // A^0 and every dictionary update map.
    std::vector<NamedTensor> dictionary_parameters() const;
    std::vector<NamedTensor> network_parameters() const;
    std::size_t parameter_count() const;
};

SegModel build_model(const NetworkConfig& config, std::uint64_t seed);
SegModel build_model(const NetworkConfig& config);

struct ForwardResult {
    ad::Tensor logits;                         // [N, C], one row per input point
    std::vector<ad::Tensor> decorrelation;     // one scalar per anisotropic stage
    std::vector<EncodingCoefficients> coefficients;
};

// `sample_seed` drives the random downsampling between stages.
ForwardResult forward(const SegModel& model, const PointCloud& cloud, std::uint64_t sample_seed);

// cross_entropy + lambda * sum(decorrelation)
ad::Tensor segmentation_loss(const ad::Tensor& logits, std::span<const int> labels,
                             std::span<const ad::Tensor> decorrelation, double lambda_dict, int ignore_label = -1);

std::vector<int> argmax_rows(const ad::Tensor& logits);

// base_lr * decay^epoch
double learning_rate(const NetworkConfig& config, std::size_t epoch);

struct DatasetSplit {
    std::vector<PointCloud> train;
    std::vector<PointCloud> held_out;
};
// Every fifth cloud (index % 5 == 4) is held out.
DatasetSplit split_dataset(std::vector<PointCloud> clouds);

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
    std::optional<Metrics> held_out;
};
std::string format_epoch_record(const EpochRecord& r);

struct TrainState {
    SegModel model;
    ad::AdamState network_opt;
    ad::AdamState dictionary_opt;
    std::size_t epochs_done = 0;
};

TrainState make_train_state(const NetworkConfig& config);

// Runs epochs [state.epochs_done, until_epoch). Deterministic in (config, data).
// Throws std::invalid_argument for an empty training set or out-of-range labels.
void train(TrainState& state, std::span<const PointCloud> train_set, std::span<const PointCloud> held_out,
           std::size_t until_epoch, const std::function<void(const EpochRecord&)>& on_epoch = {});

std::uint64_t eval_sample_seed(const NetworkConfig& config, std::size_t cloud_index);
std::vector<int> predict(const SegModel& model, const PointCloud& cloud, std::uint64_t sample_seed);
ConfusionMatrix confusion(const SegModel& model, std::span<const PointCloud> clouds);
Metrics evaluate(const SegModel& model, std::span<const PointCloud> clouds);

// Binary checkpoint, see docs/checkpoint_format.md.
void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& path);
std::string encode_checkpoint(const TrainState& state);
TrainState decode_checkpoint(std::string_view bytes);

}  // namespace stpc
