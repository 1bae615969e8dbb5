#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kinet/dataset.hpp"
#include "kinet/nn/adam.hpp"
#include "kinet/nn/model.hpp"

namespace kinet {

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    int epochs = 1;  // total epoch count to reach (resume continues up to it)
    int batch_size = 32;
    std::uint64_t seed = 0;
    nn::AdamConfig adam;
    std::filesystem::path checkpoint_dir;  // empty: no checkpoints
    std::filesystem::path metrics_path;    // empty: no metrics file
    bool record_timing = true;             // false writes 0 seconds, for byte-identical reruns
    int jobs = 1;                          // validation parallelism

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
    double seconds = 0.0;
};

std::string metrics_header();
std::string format_record(const EpochRecord& r);
EpochRecord parse_record(const std::string& line);
std::vector<EpochRecord> read_metrics(const std::filesystem::path& path);

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int epoch);
std::filesystem::path optimizer_path(const std::filesystem::path& checkpoint);

/// Return false to stop after the current epoch.
using EpochCallback = std::function<bool(const EpochRecord&, const nn::Model<float>&)>;

struct TrainState {
    nn::Model<float> model;
    nn::AdamState optimizer;
    int epoch = 0;  // epochs completed
    std::uint64_t init_seed = 0;
};

/// Fresh model with the given architecture and zeroed optimizer.
TrainState initial_state(const nn::NetworkSpec& spec, const TrainConfig& cfg);

/// Runs epochs state.epoch + 1 .. cfg.epochs: a shuffled Train pass with
/// dropout active, then a Val evaluation, a checkpoint (weights plus
/// optimizer sidecar) and one metrics record per epoch.
std::vector<EpochRecord> train(TrainState& state, const Manifest& manifest, const TrainConfig& cfg,
                               const EpochCallback& on_epoch = {});

/// Loads a checkpoint and its optimizer sidecar when present. `exact` is set
/// to false when moments had to be re-initialized.
TrainState resume_state(const std::filesystem::path& checkpoint, const TrainConfig& cfg, bool* exact = nullptr);

struct Prediction {
    const ImageSample* sample = nullptr;
    double probability = 0.0;
    int predicted = 0;
};

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
    std::vector<Prediction> predictions;  // manifest order
};

/// Inference over every sample of a split, one image at a time.
EvalResult evaluate(const nn::Model<float>& model, const Manifest& manifest, Split split, int jobs = 1);
EvalResult evaluate(const nn::Model<float>& model, const std::vector<const ImageSample*>& samples, int jobs = 1);

}  // namespace kinet
