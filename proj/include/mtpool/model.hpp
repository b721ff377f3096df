#ifndef MTPOOL_MODEL_HPP
#define MTPOOL_MODEL_HPP

#include <cstdint>
#include <memory>
#include <vector>

#include "json.hpp"
#include "mtpool/autodiff.hpp"
#include "mtpool/dataio.hpp"
#include "mtpool/gnn.hpp"
#include "mtpool/graphlearn.hpp"
#include "mtpool/pooling.hpp"
#include "mtpool/temporalconv.hpp"

namespace mtpool {

struct ModelConfig {
    // graph structure
    graph::DistanceKind metric = graph::DistanceKind::euclidean;
    graph::AdjacencyMode adjacency = graph::AdjacencyMode::dynamic;
    double c1 = 0.1;
    ad::Activation distance_transform = ad::Activation::identity;
    // temporal convolution
    std::vector<std::size_t> kernel_sizes{3, 5, 7};
    std::size_t channels_per_size = 10;
    temporal::Aggregation temporal_agg = temporal::Aggregation::mean;
    // spatial-temporal encoder
    std::vector<std::size_t> gnn_widths{128};
    bool batch_norm = true;
    /// Eval-mode normalization statistics: the graph's own ("graph") or the
    /// running averages collected during training ("running").
    bool batch_norm_graph_stats_in_eval = true;
    // pooling
    pool::PoolKind pooling = pool::PoolKind::variational;
    std::size_t heads = 2;
    std::size_t reduction = 2;
    std::vector<std::size_t> pool_clusters;  ///< explicit schedule; empty derives it from `reduction`
    bool renormalize_pooled_adjacency = false;
    // classifier
    std::size_t classifier_hidden = 64;
    // data shape
    std::size_t num_series = 0;
    std::size_t series_length = 0;
    std::size_t num_classes = 0;
    std::uint64_t seed = 7;

    /// Throws ConfigError on any out-of-range value.
    void validate() const;
};

nlohmann::json to_json(const ModelConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Intermediate results of one forward pass (all on the same tape).
struct ForwardTrace {
    ad::Var adjacency;
    ad::Var temporal_features;
    ad::Var embeddings;
    std::vector<pool::PoolResult> pools;
    ad::Var x_final;
    ad::Var logits;
    ad::Var probabilities;
};

/// The full pipeline: graph learning, temporal convolution, k-GNN encoding,
/// hierarchical pooling and the classifier head. Parameters are owned here and
/// referenced by address from optimizers, so the model neither copies nor moves.
class MtpoolModel {
public:
    explicit MtpoolModel(const ModelConfig& config);
    MtpoolModel(const MtpoolModel&) = delete;
    MtpoolModel& operator=(const MtpoolModel&) = delete;

    const ModelConfig& config() const { return config_; }

    /// Input-only graph tensor for a series (cacheable across epochs).
    Tensor graph_input(const Tensor& series) const;

    ForwardTrace forward(ad::Tape& tape, const Tensor& series, const Tensor& graph_input, ad::Mode mode);
    ForwardTrace forward(ad::Tape& tape, const Tensor& series, ad::Mode mode);

    /// Eval-mode class probabilities for one series.
    std::vector<double> predict_proba(const Tensor& series);

    /// Throws DimensionError when the sample does not fit the configured n and T.
    void check_sample(const Tensor& series) const;

    ParamList parameters();
    BufferList buffers();
    std::size_t parameter_count();
    void zero_grad();

    graph::AdjacencyBuilder& adjacency() { return adjacency_; }
    temporal::ConvBank& conv() { return conv_; }
    gnn::GnnStack& gnn() { return gnn_; }
    pool::PoolStack& pooling() { return pool_; }
    Tensor& classifier_hidden_weight() { return cls_w1_; }
    Tensor& classifier_output_weight() { return cls_w2_; }
    Tensor& classifier_output_bias() { return cls_b2_; }

private:
    ModelConfig config_;
    Rng rng_;
    graph::AdjacencyBuilder adjacency_;
    temporal::ConvBank conv_;
    gnn::GnnStack gnn_;
    pool::PoolStack pool_;
    Tensor cls_w1_, cls_b1_, cls_w2_, cls_b2_;
};

/// Config with the data shape filled from a dataset.
ModelConfig fit_to(ModelConfig config, const data::DatasetMeta& meta);

}  // namespace mtpool

#endif  // MTPOOL_MODEL_HPP
