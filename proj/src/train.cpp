#include "mtpool/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mtpool/checkpoint.hpp"

namespace mtpool {

namespace {

constexpr double kProbabilityFloor = 1e-12;

void check_dataset(const ModelConfig& c, const data::Dataset& ds) {
    if (ds.meta.num_series != c.num_series || ds.meta.series_length != c.series_length)
        throw DimensionError("dataset '" + ds.meta.name + "' has shape [" + std::to_string(ds.meta.num_series) + "x" +
                             std::to_string(ds.meta.series_length) + "], model expects [" +
                             std::to_string(c.num_series) + "x" + std::to_string(c.series_length) + "]");
    if (ds.meta.classes != c.num_classes)
        throw DimensionError("dataset '" + ds.meta.name + "' has " + std::to_string(ds.meta.classes) +
                             " classes, model expects " + std::to_string(c.num_classes));
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
        if (ds.samples[i].series.shape != Shape{c.num_series, c.series_length})
            throw DimensionError("sample " + std::to_string(i) + " of '" + ds.meta.name + "' has shape " +
                                 shape_str(ds.samples[i].series.shape));
}

struct SampleScore {
    std::size_t predicted = 0;
    double loss = 0.0;
};

SampleScore score(MtpoolModel& model, const data::TimeSeriesSample& s) {
    ad::Tape tape;
    auto tr = model.forward(tape, s.series, ad::Mode::eval);
    auto p = tr.probabilities.values();
    return {argmax(p), -std::log(std::max(p[s.label], kProbabilityFloor))};
}

Metrics finish(const std::vector<SampleScore>& scores, const data::Dataset& ds) {
    std::vector<std::size_t> predicted, labels;
    double loss = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        predicted.push_back(scores[i].predicted);
        labels.push_back(ds.samples[i].label);
        loss += scores[i].loss;
    }
    Metrics m = metrics_from_predictions(predicted, labels, ds.meta.classes);
    m.mean_loss = scores.empty() ? 0.0 : loss / static_cast<double>(scores.size());
    return m;
}

}  // namespace

void adam_step(const ParamList& params, AdamState& state, const AdamConfig& config) {
    for (const auto& p : params) {
        if (!p.tensor->grad || p.tensor->grad->size() != p.tensor->size())
            throw ContractError("adam_step: parameter '" + p.name + "' has no gradient");
    }
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), {});
        state.v.assign(params.size(), {});
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& w = *params[i].tensor;
        const auto& g = *w.grad;
        auto& m = state.m[i];
        auto& v = state.v[i];
        if (m.size() != w.size()) {
            m.assign(w.size(), 0.0);
            v.assign(w.size(), 0.0);
        }
        for (std::size_t k = 0; k < w.size(); ++k) {
            m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g[k];
            v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g[k] * g[k];
            const double mhat = m[k] / c1;
            const double vhat = v[k] / c2;
            w.values[k] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
        }
    }
}

double binary_accuracy(const ClassCounts& c) {
    const auto total = c.tp + c.tn + c.fp + c.fn;
    return total ? static_cast<double>(c.tp + c.tn) / static_cast<double>(total) : 0.0;
}

std::size_t argmax(std::span<const double> values) {
    return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

Metrics metrics_from_predictions(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& labels,
                                 std::size_t num_classes) {
    if (predicted.size() != labels.size()) throw DimensionError("prediction and label counts differ");
    Metrics m;
    m.total = labels.size();
    m.predictions = predicted;
    m.per_class.assign(num_classes, {});
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto y = labels[i], p = predicted[i];
        if (y >= num_classes || p >= num_classes) throw DimensionError("label out of range in metrics");
        correct += (y == p);
        for (std::size_t k = 0; k < num_classes; ++k) {
            auto& c = m.per_class[k];
            if (y == k && p == k) ++c.tp;
            else if (y != k && p == k) ++c.fp;
            else if (y == k) ++c.fn;
            else ++c.tn;
        }
    }
    m.accuracy = m.total ? static_cast<double>(correct) / static_cast<double>(m.total) : 0.0;
    return m;
}

Metrics evaluate(MtpoolModel& model, const data::Dataset& dataset) {
    check_dataset(model.config(), dataset);
    std::vector<SampleScore> scores(dataset.size());
    const auto n = static_cast<std::ptrdiff_t>(dataset.size());
#pragma omp parallel for schedule(dynamic) if (n > 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) scores[i] = score(model, dataset.samples[i]);
    return finish(scores, dataset);
}

Metrics evaluate_serial(MtpoolModel& model, const data::Dataset& dataset) {
    check_dataset(model.config(), dataset);
    std::vector<SampleScore> scores;
    for (const auto& s : dataset.samples) scores.push_back(score(model, s));
    return finish(scores, dataset);
}

Trainer::Trainer(MtpoolModel& model, TrainConfig config)
    : model_(model), config_(std::move(config)), params_(model.parameters()) {
    if (config_.batch_size == 0) throw ConfigError("batch size must be positive");
    if (!(config_.validation_fraction >= 0.0 && config_.validation_fraction < 1.0))
        throw ConfigError("validation fraction must lie in [0, 1)");
    if (!(config_.adam.lr > 0.0)) throw ConfigError("learning rate must be positive");
}

TrainingLog Trainer::run(const data::Dataset& dataset, std::function<void(const EpochLog&)> on_epoch) {
    check_dataset(model_.config(), dataset);
    if (dataset.samples.empty()) throw DimensionError("dataset '" + dataset.meta.name + "' has no samples to train on");
    Rng rng(config_.seed);

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    data::Dataset validation;
    if (config_.validation_fraction > 0.0 && dataset.size() > 1) {
        std::shuffle(order.begin(), order.end(), rng.engine());
        auto held = static_cast<std::size_t>(std::lround(config_.validation_fraction * dataset.size()));
        held = std::clamp<std::size_t>(held, 1, dataset.size() - 1);
        validation.meta = dataset.meta;
        for (std::size_t i = dataset.size() - held; i < dataset.size(); ++i)
            validation.samples.push_back(dataset.samples[order[i]]);
        order.resize(dataset.size() - held);
        std::sort(order.begin(), order.end());
    }

    std::vector<Tensor> graph_inputs(dataset.size());
    for (auto i : order) graph_inputs[i] = model_.graph_input(dataset.samples[i].series);

    const bool full_batch = order.size() <= config_.full_batch_limit;
    const std::size_t batch = full_batch ? order.size() : config_.batch_size;

    TrainingLog log;
    std::size_t since_best = 0;
    for (std::size_t e = 0; e < config_.epochs; ++e) {
        if (!full_batch) std::shuffle(order.begin(), order.end(), rng.engine());
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            const double weight = 1.0 / static_cast<double>(end - start);
            model_.zero_grad();
            for (std::size_t b = start; b < end; ++b) {
                const auto& s = dataset.samples[order[b]];
                ad::Tape tape;
                auto tr = model_.forward(tape, s.series, graph_inputs[order[b]], ad::Mode::train);
                auto loss = ad::nll(tr.probabilities, s.label, kProbabilityFloor);
                loss_sum += loss.item();
                correct += argmax(tr.probabilities.values()) == s.label;
                tape.backward(ad::scale(loss, weight));
            }
            adam_step(params_, adam_, config_.adam);
        }
        ++epoch_;
        EpochLog entry{epoch_, loss_sum / static_cast<double>(order.size()),
                       static_cast<double>(correct) / static_cast<double>(order.size()), std::nullopt};
        if (!validation.samples.empty()) {
            entry.validation_accuracy = evaluate(model_, validation).accuracy;
            if (!log.best_validation_accuracy || *entry.validation_accuracy > *log.best_validation_accuracy) {
                log.best_validation_accuracy = entry.validation_accuracy;
                log.best_epoch = epoch_;
                best_metric_ = *entry.validation_accuracy;
                since_best = 0;
                if (!config_.best_checkpoint.empty()) save_checkpoint(config_.best_checkpoint, *this);
            } else {
                ++since_best;
            }
        }
        log.epochs.push_back(entry);
        if (on_epoch) on_epoch(entry);
        if (config_.patience && since_best >= config_.patience) break;
    }
    return log;
}

TrainingLog train(MtpoolModel& model, const data::Dataset& dataset, const TrainConfig& config) {
    Trainer trainer(model, config);
    return trainer.run(dataset);
}

}  // namespace mtpool
