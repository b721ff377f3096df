#ifndef MTPOOL_CHECKPOINT_HPP
#define MTPOOL_CHECKPOINT_HPP

// Binary checkpoint layout (all integers and floats little-endian):
//
//   magic      8 bytes  "MTPOOLCK"
//   version    u32      kCheckpointVersion
//   config     u64 byte length, then UTF-8 JSON of the ModelConfig
//   epoch      u64
//   best       f64      best validation metric seen so far
//   adam_step  u64
//   count      u32      number of named arrays that follow
//   array      u32 name length, name bytes, u32 rank, rank x u64 extents,
//              then prod(extents) x f64 values
//
// Array names: "param/<name>", "buffer/<name>", "adam.m/<name>", "adam.v/<name>".
// Optimizer moments are present only once the optimizer has stepped.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "mtpool/model.hpp"
#include "mtpool/train.hpp"

namespace mtpool {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CheckpointMeta {
    std::uint64_t epoch = 0;
    double best_metric = 0.0;
};

std::vector<std::uint8_t> serialize_checkpoint(MtpoolModel& model, const AdamState* adam, const CheckpointMeta& meta);

/// Writes atomically (temp file, then rename).
void save_checkpoint(const std::filesystem::path& path, MtpoolModel& model, const AdamState* adam,
                     const CheckpointMeta& meta);
void save_checkpoint(const std::filesystem::path& path, Trainer& trainer);

struct LoadedCheckpoint {
    std::unique_ptr<MtpoolModel> model;
    AdamState adam;
    CheckpointMeta meta;
};

/// Rebuilds the model from the embedded config and checks every array shape.
LoadedCheckpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mtpool

#endif  // MTPOOL_CHECKPOINT_HPP
