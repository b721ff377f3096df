#include "mtpool/commands.hpp"

#include <chrono>
#include <sstream>

#include "mtpool/checkpoint.hpp"
#include "mtpool/export.hpp"

namespace mtpool {

namespace {

using nlohmann::json;

template <typename F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "data error: " << e.what() << '\n';
        return 2;
    }
}

json confusion_json(const Metrics& m) {
    json out = json::array();
    for (std::size_t k = 0; k < m.per_class.size(); ++k) {
        const auto& c = m.per_class[k];
        out.push_back({{"class", k}, {"tp", c.tp}, {"tn", c.tn}, {"fp", c.fp}, {"fn", c.fn}});
    }
    return out;
}

const data::Dataset& pick(const LoadedData& d, Split split) {
    if (split == Split::train) return d.train;
    if (!d.test) throw std::runtime_error("dataset '" + d.name + "' has no test split");
    return *d.test;
}

const Tensor& sample_at(const data::Dataset& ds, std::size_t index) {
    if (index >= ds.size())
        throw std::runtime_error("sample " + std::to_string(index) + " out of range for '" + ds.meta.name + "' (" +
                                 std::to_string(ds.size()) + " samples)");
    return ds.samples[index].series;
}

std::string training_log_csv(const TrainingLog& log) {
    std::ostringstream csv;
    csv << "epoch,mean_loss,train_accuracy,validation_accuracy\n";
    for (const auto& e : log.epochs) {
        csv << e.epoch << ',' << format_double(e.mean_loss) << ',' << format_double(e.train_accuracy) << ',';
        if (e.validation_accuracy) csv << format_double(*e.validation_accuracy);
        csv << '\n';
    }
    return csv.str();
}

}  // namespace

RunConfig resolve_config(const std::filesystem::path& config_path, const Overrides& o) {
    RunConfig c = config_path.empty() ? run_config_from_json(json::object()) : load_run_config(config_path);
    if (o.out) c.output_dir = *o.out;
    if (o.seed) c.train.seed = c.model.seed = *o.seed;
    if (o.normalize) c.data.normalize = true;
    if (o.epochs) c.train.epochs = *o.epochs;
    if (o.lr) {
        if (!(*o.lr > 0.0)) throw ConfigError("lr must be positive");
        c.train.adam.lr = *o.lr;
    }
    try {
        if (o.pooling) c.model.pooling = pool::parse_pool_kind(*o.pooling);
        if (o.adjacency) c.model.adjacency = graph::parse_adjacency(*o.adjacency);
        if (o.metric) c.model.metric = graph::parse_metric(*o.metric);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    return c;
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "test") return Split::test;
    throw ConfigError("split must be 'train' or 'test', got '" + std::string(name) + "'");
}

json metrics_json(const RunConfig& config, const std::string& dataset, const Metrics& train,
                  const std::optional<Metrics>& test, const TrainingLog& log, std::size_t num_parameters,
                  double wall_seconds) {
    json j;
    j["schema_version"] = 1;
    j["dataset"] = dataset;
    j["train_accuracy"] = train.accuracy;
    j["train_loss"] = train.mean_loss;
    j["test_accuracy"] = test ? json(test->accuracy) : json(nullptr);
    j["test_loss"] = test ? json(test->mean_loss) : json(nullptr);
    j["epochs"] = log.epochs.size();
    j["wall_seconds"] = wall_seconds;
    j["seed"] = config.train.seed;
    j["synthetic_seed"] = config.data.is_synthetic() ? json(config.data.synthetic.seed) : json(nullptr);
    j["num_parameters"] = num_parameters;
    j["best_validation_accuracy"] =
        log.best_validation_accuracy ? json(*log.best_validation_accuracy) : json(nullptr);
    j["best_epoch"] = log.best_validation_accuracy ? json(log.best_epoch) : json(nullptr);
    j["test_confusion"] = test ? confusion_json(*test) : json::array();
    j["config"] = to_json(config);
    return j;
}

int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const auto start = std::chrono::steady_clock::now();
        const auto data = load_data(config.data);
        MtpoolModel model(fit_to(config.model, data.train.meta));
        TrainConfig tc = config.train;
        if (tc.validation_fraction > 0.0) tc.best_checkpoint = config.output_dir / "best.ckpt";
        std::filesystem::create_directories(config.output_dir);
        Trainer trainer(model, tc);
        const auto log = trainer.run(data.train);
        const auto train_metrics = evaluate(model, data.train);
        std::optional<Metrics> test_metrics;
        if (data.test) test_metrics = evaluate(model, *data.test);
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        save_checkpoint(config.output_dir / "model.ckpt", trainer);
        write_file_atomic(config.output_dir / "training_log.csv", training_log_csv(log));
        const auto metrics =
            metrics_json(config, data.name, train_metrics, test_metrics, log, model.parameter_count(), wall);
        write_file_atomic(config.output_dir / "metrics.json", metrics.dump(2) + "\n");
        out << "train_accuracy " << train_metrics.accuracy;
        if (test_metrics) out << " test_accuracy " << test_metrics->accuracy;
        out << " epochs " << log.epochs.size() << " -> " << (config.output_dir / "metrics.json").string() << '\n';
        return 0;
    });
}

int cmd_eval(const std::filesystem::path& checkpoint, const RunConfig& config, Split split, std::ostream& out,
             std::ostream& err) {
    return guarded(err, [&] {
        auto loaded = load_checkpoint(checkpoint);
        const auto data = load_data(config.data);
        const auto m = evaluate(*loaded.model, pick(data, split));
        json j{{"accuracy", m.accuracy}, {"mean_loss", m.mean_loss}, {"total", m.total},
               {"confusion", confusion_json(m)}};
        out << j.dump() << '\n';
        return 0;
    });
}

int cmd_embed(const std::filesystem::path& checkpoint, const RunConfig& config, Split split, std::size_t sample,
              std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        auto loaded = load_checkpoint(checkpoint);
        const auto data = load_data(config.data);
        const auto& ds = pick(data, split);
        const auto& series = sample_at(ds, sample);
        const auto path = config.output_dir / "embeddings.csv";
        export_embeddings(*loaded.model, ds, path);
        out << path.string() << '\n' << pca_path(path).string() << '\n';
        for (const auto& p : export_assignments(*loaded.model, series, config.output_dir / "assignments.csv"))
            out << p.string() << '\n';
        return 0;
    });
}

int cmd_inspect_graph(const std::filesystem::path& checkpoint, const RunConfig& config, Split split,
                      std::size_t sample, const std::filesystem::path& path, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        auto loaded = load_checkpoint(checkpoint);
        const auto data = load_data(config.data);
        const auto& series = sample_at(pick(data, split), sample);
        write_file_atomic(path, adjacency_csv(sample_adjacency(*loaded.model, series)));
        out << path.string() << '\n';
        return 0;
    });
}

int cmd_gen_synth(const data::SyntheticSpec& spec, const std::filesystem::path& dir, std::ostream& out,
                  std::ostream& err) {
    return guarded(err, [&] {
        auto split = data::make_synthetic_split(spec);
        std::filesystem::create_directories(dir);
        const auto train = dir / "Synthetic_TRAIN.ts";
        const auto test = dir / "Synthetic_TEST.ts";
        data::write_ts_file(train, split.train);
        data::write_ts_file(test, split.test);
        out << train.string() << '\n' << test.string() << '\n';
        return 0;
    });
}

}  // namespace mtpool
