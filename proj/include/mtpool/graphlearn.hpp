#ifndef MTPOOL_GRAPHLEARN_HPP
#define MTPOOL_GRAPHLEARN_HPP

#include <string>
#include <string_view>

#include "mtpool/autodiff.hpp"
#include "mtpool/kernels.hpp"
#include "mtpool/params.hpp"

namespace mtpool::graph {

using kernels::DistanceKind;

enum class AdjacencyMode { dynamic, all_one, correlation };

/// Accepts the CLI spellings (`euclid`, `abs`, `dtw`) and the long names.
DistanceKind parse_metric(std::string_view name);
std::string_view metric_name(DistanceKind kind);
AdjacencyMode parse_adjacency(std::string_view name);
std::string_view adjacency_name(AdjacencyMode mode);

/// Node features and a nonnegative row-normalized adjacency, both on a tape.
struct GraphState {
    ad::Var features;
    ad::Var adjacency;
};

Tensor pairwise_distance(const Tensor& x, DistanceKind kind);

/// C[i][j] = softmax_j(-transform(distance(x_i, x_j))).
Tensor similarity_matrix(const Tensor& x, DistanceKind kind,
                         ad::Activation transform = ad::Activation::identity);

/// row_normalize(threshold(activation(C * W_adj), c1)).
ad::Var dynamic_adjacency(ad::Var similarity, ad::Var weights, double c1, ad::Activation activation);

/// |Pearson| between variable rows; zero-variance rows correlate 0 with others, 1 with themselves.
Tensor abs_correlation(const Tensor& x);

/// Input-only adjacency for the ablations: all-one or thresholded |correlation|, row-normalized.
Tensor static_adjacency(const Tensor& x, AdjacencyMode mode, double c1);

struct AdjacencyConfig {
    AdjacencyMode mode = AdjacencyMode::dynamic;
    DistanceKind metric = DistanceKind::euclidean;
    double c1 = 0.1;
    ad::Activation activation = ad::Activation::relu;
    ad::Activation distance_transform = ad::Activation::identity;
};

class AdjacencyBuilder {
public:
    AdjacencyBuilder(std::size_t num_nodes, AdjacencyConfig config, Rng& rng);

    /// The input-only part of the graph: C for dynamic mode, the finished
    /// adjacency otherwise. Depends on no parameter, so callers may cache it.
    Tensor precompute(const Tensor& series) const;

    ad::Var build(ad::Tape& tape, const Tensor& precomputed);

    const AdjacencyConfig& config() const { return config_; }
    Tensor& weights() { return weights_; }
    void collect(const std::string& prefix, ParamList& out);

private:
    AdjacencyConfig config_;
    std::size_t num_nodes_;
    Tensor weights_;
};

}  // namespace mtpool::graph

#endif  // MTPOOL_GRAPHLEARN_HPP
