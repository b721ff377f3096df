#ifndef MTPOOL_TRAIN_HPP
#define MTPOOL_TRAIN_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "mtpool/dataio.hpp"
#include "mtpool/model.hpp"

namespace mtpool {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First and second moments per parameter plus the step counter.
struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t step = 0;
};

/// Bias-corrected Adam update in place. Every parameter must carry a gradient
/// of matching length (ContractError otherwise).
void adam_step(const ParamList& params, AdamState& state, const AdamConfig& config);

struct ClassCounts {
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
};

struct Metrics {
    double accuracy = 0.0;
    double mean_loss = 0.0;
    std::size_t total = 0;
    std::vector<ClassCounts> per_class;  ///< one-vs-rest counts per class
    std::vector<std::size_t> predictions;
};

/// (TP + TN) / (TP + TN + FP + FN) for a binary problem.
double binary_accuracy(const ClassCounts& c);

/// Top-1 accuracy and one-vs-rest confusion counts from predicted and true labels.
Metrics metrics_from_predictions(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& labels,
                                 std::size_t num_classes);

std::size_t argmax(std::span<const double> values);

/// Eval-mode metrics; samples are scored in parallel against frozen parameters.
Metrics evaluate(MtpoolModel& model, const data::Dataset& dataset);

/// Serial reference for `evaluate`, kept for testing and benchmarking.
Metrics evaluate_serial(MtpoolModel& model, const data::Dataset& dataset);

struct TrainConfig {
    std::size_t epochs = 2000;
    AdamConfig adam;
    /// Datasets up to this size train full-batch; larger ones use `batch_size`.
    std::size_t full_batch_limit = 400;
    std::size_t batch_size = 16;
    std::uint64_t seed = 7;
    /// Fraction of the training set held out for model selection (0 disables).
    double validation_fraction = 0.0;
    /// Stop after this many epochs without validation improvement (0 disables).
    std::size_t patience = 0;
    /// Where the best-by-validation checkpoint goes (empty: not written).
    std::filesystem::path best_checkpoint;
};

struct EpochLog {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double train_accuracy = 0.0;
    std::optional<double> validation_accuracy;
};

struct TrainingLog {
    std::vector<EpochLog> epochs;
    std::optional<double> best_validation_accuracy;
    std::size_t best_epoch = 0;
};

/// Owns the optimizer state for one model; epochs continue across run() calls.
class Trainer {
public:
    Trainer(MtpoolModel& model, TrainConfig config);

    TrainingLog run(const data::Dataset& train, std::function<void(const EpochLog&)> on_epoch = {});

    MtpoolModel& model() { return model_; }
    AdamState& optimizer_state() { return adam_; }
    std::size_t epoch() const { return epoch_; }
    void set_epoch(std::size_t e) { epoch_ = e; }
    double best_metric() const { return best_metric_; }
    void set_best_metric(double b) { best_metric_ = b; }

private:
    MtpoolModel& model_;
    TrainConfig config_;
    ParamList params_;
    AdamState adam_;
    std::size_t epoch_ = 0;
    double best_metric_ = 0.0;
};

/// One-shot training helper.
TrainingLog train(MtpoolModel& model, const data::Dataset& dataset, const TrainConfig& config);

}  // namespace mtpool

#endif  // MTPOOL_TRAIN_HPP
