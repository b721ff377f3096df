#ifndef MTPOOL_RUN_CONFIG_HPP
#define MTPOOL_RUN_CONFIG_HPP

// Run configuration for the command-line front end.
//
// Text format: one `key = value` per line, grouped under [data], [model],
// [train] and [output] sections. `#` and `;` start comments. Lists are
// comma-separated (`kernel_sizes = 3, 5, 7`). A file whose first non-blank
// character is `{` is read as JSON with the same sections as nested objects.
// Unknown sections and keys are rejected.
//
// [data]
//   train_path      .ts training file                      (unset)
//   test_path       .ts test file, optional with train_path (unset)
//   uea_root        directory holding UEA archives          (unset)
//   uea_name        archive name under uea_root, e.g. Libras (unset)
//   classes         synthetic class count                   3
//   series          synthetic variables per sample          4
//   length          synthetic series length                 64
//   per_class       synthetic samples per class             30
//   synthetic_seed  synthetic data seed                     7
//   normalize       per-variable z-normalization            false
// When neither train_path nor uea_name is set the synthetic generator is used.
//
// [model]  every ModelConfig key except num_series, series_length and
//          num_classes, which come from the data. Defaults as in ModelConfig.
//
// [train]
//   epochs               2000
//   lr                   1e-4
//   batch_size           16
//   full_batch_limit     400
//   seed                 7      model initialization and batch shuffling
//   validation_fraction  0
//   patience             0
//
// [output]
//   dir                  mtpool_out

#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "mtpool/dataio.hpp"
#include "mtpool/model.hpp"
#include "mtpool/train.hpp"

namespace mtpool {

struct DataConfig {
    std::filesystem::path train_path;
    std::filesystem::path test_path;
    std::filesystem::path uea_root;
    std::string uea_name;
    data::SyntheticSpec synthetic;
    bool normalize = false;

    bool is_synthetic() const { return train_path.empty() && uea_name.empty(); }
};

struct RunConfig {
    DataConfig data;
    ModelConfig model;
    TrainConfig train;
    std::filesystem::path output_dir = "mtpool_out";
};

/// Text (sectioned key-value) or JSON, detected from the first character.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& config);

/// Loaded train and optional test split; test is empty for a lone .ts file.
struct LoadedData {
    data::Dataset train;
    std::optional<data::Dataset> test;
    std::string name;
};

LoadedData load_data(const DataConfig& config);

}  // namespace mtpool

#endif  // MTPOOL_RUN_CONFIG_HPP
