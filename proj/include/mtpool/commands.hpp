#ifndef MTPOOL_COMMANDS_HPP
#define MTPOOL_COMMANDS_HPP

// Command implementations behind the `mtpool` executable. Each returns a
// process exit code: 0 success, 1 configuration error, 2 data error (missing
// or malformed files, shape mismatches, unreadable checkpoints). Diagnostics
// go to the given error stream as a single line.
//
// Metrics JSON written by `train` (schema_version 1):
//   schema_version   1
//   dataset          dataset name
//   train_accuracy   final eval-mode accuracy on the training set
//   test_accuracy    accuracy on the test set, null without one
//   train_loss, test_loss   mean cross-entropy (test_loss null without a test set)
//   epochs           epochs actually run
//   wall_seconds     training plus evaluation time
//   seed             run seed (model initialization and batch order)
//   synthetic_seed   data seed, null for file datasets
//   num_parameters   trainable scalar count
//   best_validation_accuracy, best_epoch   null without a validation split
//   test_confusion   per class {class, tp, tn, fp, fn}, empty without a test set
//   config           the full resolved run config

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "json.hpp"
#include "mtpool/run_config.hpp"

namespace mtpool {

/// Command-line values that override the config file when present.
struct Overrides {
    std::optional<std::filesystem::path> out;
    std::optional<std::uint64_t> seed;
    bool normalize = false;
    std::optional<std::size_t> epochs;
    std::optional<double> lr;
    std::optional<std::string> pooling;
    std::optional<std::string> adjacency;
    std::optional<std::string> metric;
};

/// Loads `config_path` (defaults when empty) and applies the overrides.
RunConfig resolve_config(const std::filesystem::path& config_path, const Overrides& overrides);

enum class Split { train, test };
Split parse_split(std::string_view name);

int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Prints {"accuracy", "mean_loss", "total", "confusion"} as JSON.
int cmd_eval(const std::filesystem::path& checkpoint, const RunConfig& config, Split split, std::ostream& out,
             std::ostream& err);

/// Writes embeddings.csv, embeddings_pca.csv and assignments_layer<l>.csv /
/// assignments_unused.csv (for sample `sample`) under `config.output_dir`.
int cmd_embed(const std::filesystem::path& checkpoint, const RunConfig& config, Split split, std::size_t sample,
              std::ostream& out, std::ostream& err);

/// Writes the learned adjacency of one sample to `path` as CSV.
int cmd_inspect_graph(const std::filesystem::path& checkpoint, const RunConfig& config, Split split,
                      std::size_t sample, const std::filesystem::path& path, std::ostream& out, std::ostream& err);

/// Writes `<dir>/Synthetic_TRAIN.ts` and `<dir>/Synthetic_TEST.ts`.
int cmd_gen_synth(const data::SyntheticSpec& spec, const std::filesystem::path& dir, std::ostream& out,
                  std::ostream& err);

/// Metrics JSON for a finished run; `wall_seconds` is the only nondeterministic field.
nlohmann::json metrics_json(const RunConfig& config, const std::string& dataset, const Metrics& train,
                            const std::optional<Metrics>& test, const TrainingLog& log, std::size_t num_parameters,
                            double wall_seconds);

}  // namespace mtpool

#endif  // MTPOOL_COMMANDS_HPP
