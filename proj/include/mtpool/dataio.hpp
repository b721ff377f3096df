#ifndef MTPOOL_DATAIO_HPP
#define MTPOOL_DATAIO_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtpool/tensor.hpp"

namespace mtpool::data {

/// One multivariate series (n variables x T steps) and its class index.
struct TimeSeriesSample {
    Tensor series;
    std::size_t label = 0;

    std::size_t num_series() const { return series.shape[0]; }
    std::size_t length() const { return series.shape[1]; }
};

struct DatasetMeta {
    std::string name;
    std::size_t train_size = 0;
    std::size_t test_size = 0;
    std::size_t num_series = 0;
    std::size_t series_length = 0;
    std::size_t classes = 0;
    std::vector<std::string> label_names;
};

struct Dataset {
    DatasetMeta meta;
    std::vector<TimeSeriesSample> samples;

    std::size_t size() const { return samples.size(); }
    /// Throws std::invalid_argument when a sample disagrees with meta.
    void validate() const;
};

/// Error in a `.ts` stream; `line()` is 1-based (0 when not tied to a line).
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& message);
    std::size_t line() const { return line_; }
    const std::string& detail() const { return detail_; }

private:
    std::size_t line_;
    std::string detail_;
};

/// Header directives as declared in the file; absent ones stay empty.
struct TsHeader {
    std::optional<std::string> problem_name;
    std::optional<bool> timestamps;
    std::optional<bool> missing;
    std::optional<bool> univariate;
    std::optional<std::size_t> dimensions;
    std::optional<bool> equal_length;
    std::optional<std::size_t> series_length;
    std::vector<std::string> class_labels;
};

struct ParsedTs {
    TsHeader header;
    std::vector<TimeSeriesSample> samples;
    std::vector<std::string> label_names;
};

ParsedTs parse_ts(std::istream& in);
ParsedTs parse_ts_file(const std::filesystem::path& path);

/// Wraps parsed records into a Dataset (train_size = record count).
Dataset to_dataset(ParsedTs parsed, std::string fallback_name = "dataset");
Dataset load_ts_dataset(const std::filesystem::path& path);

/// Writes `.ts` text whose re-parse reproduces every value bit for bit.
void write_ts(std::ostream& out, const Dataset& dataset);
void write_ts_file(const std::filesystem::path& path, const Dataset& dataset);

struct TrainTestSplit {
    Dataset train;
    Dataset test;
};

/// Loads `<root>/<name>/<name>_TRAIN.ts` and `_TEST.ts` (or the same files
/// directly under `root`). Both metas carry the train and test sizes.
TrainTestSplit load_uea(const std::filesystem::path& root, const std::string& name);

/// Per-variable standardization with population standard deviation.
Dataset znormalize(const Dataset& dataset);

struct SyntheticSpec {
    std::size_t num_classes = 3;
    std::size_t num_series = 4;
    std::size_t length = 64;
    std::size_t per_class = 30;
    std::uint64_t seed = 7;
};

/// Sinusoidal classes: class-dependent frequency and cross-variable coupling,
/// random phase jitter, amplitude and noise. Bitwise deterministic per seed.
Dataset make_synthetic(const SyntheticSpec& spec);
/// Train set from `spec.seed`, test set of the same size from a derived seed.
TrainTestSplit make_synthetic_split(const SyntheticSpec& spec);

}  // namespace mtpool::data

#endif  // MTPOOL_DATAIO_HPP
