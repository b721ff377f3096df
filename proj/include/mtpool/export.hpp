#ifndef MTPOOL_EXPORT_HPP
#define MTPOOL_EXPORT_HPP

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "mtpool/dataio.hpp"
#include "mtpool/model.hpp"

namespace mtpool {

/// Replaces `path` with `contents` via a sibling temp file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

/// Rows are samples. Returns an N x 2 projection onto the two leading principal
/// axes (missing axes are zero). Each axis is signed so its largest-magnitude
/// loading is positive, which makes the output deterministic.
std::vector<std::array<double, 2>> pca_2d(const std::vector<std::vector<double>>& rows);

/// Eval-mode x_final for every sample.
std::vector<std::vector<double>> embeddings(MtpoolModel& model, const data::Dataset& dataset);

/// Companion path for the PCA file: "emb.csv" -> "emb_pca.csv".
std::filesystem::path pca_path(const std::filesystem::path& path);

/// Writes `sample_index,label,e0..e{d-1}` to `path` and
/// `sample_index,label,pc1,pc2` to pca_path(path).
void export_embeddings(MtpoolModel& model, const data::Dataset& dataset, const std::filesystem::path& path);

struct LayerAssignment {
    std::vector<std::size_t> cluster_of_node;  ///< argmax cluster per input node
    std::size_t clusters = 0;
    std::vector<std::size_t> unused_clusters;  ///< clusters no node maps to
};

std::vector<LayerAssignment> argmax_assignments(MtpoolModel& model, const Tensor& series);

/// For each pooling layer l writes `<stem>_layer<l>.csv` (node,cluster) and one
/// `<stem>_unused.csv` (layer,cluster). Returns every path written.
/// The mean-pool ablation has no assignment layers and writes only the unused file.
std::vector<std::filesystem::path> export_assignments(MtpoolModel& model, const Tensor& series,
                                                      const std::filesystem::path& path);

/// Square matrix as CSV with a `node,n0..` header.
std::string adjacency_csv(const Tensor& adjacency);

/// Learned adjacency of one sample in eval mode.
Tensor sample_adjacency(MtpoolModel& model, const Tensor& series);

}  // namespace mtpool

#endif  // MTPOOL_EXPORT_HPP
