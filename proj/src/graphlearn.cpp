#include "mtpool/graphlearn.hpp"

#include <cmath>

namespace mtpool::graph {

DistanceKind parse_metric(std::string_view name) {
    if (name == "euclid" || name == "euclidean") return DistanceKind::euclidean;
    if (name == "abs" || name == "absolute") return DistanceKind::absolute;
    if (name == "dtw") return DistanceKind::dtw;
    throw ConfigError("unknown distance metric '" + std::string(name) + "' (expected euclid, abs or dtw)");
}

std::string_view metric_name(DistanceKind kind) {
    switch (kind) {
        case DistanceKind::euclidean: return "euclid";
        case DistanceKind::absolute: return "abs";
        case DistanceKind::dtw: return "dtw";
    }
    return "euclid";
}

AdjacencyMode parse_adjacency(std::string_view name) {
    if (name == "dynamic") return AdjacencyMode::dynamic;
    if (name == "all-one" || name == "all_one") return AdjacencyMode::all_one;
    if (name == "corr" || name == "correlation") return AdjacencyMode::correlation;
    throw ConfigError("unknown adjacency mode '" + std::string(name) + "' (expected dynamic, all-one or corr)");
}

std::string_view adjacency_name(AdjacencyMode mode) {
    switch (mode) {
        case AdjacencyMode::dynamic: return "dynamic";
        case AdjacencyMode::all_one: return "all-one";
        case AdjacencyMode::correlation: return "corr";
    }
    return "dynamic";
}

Tensor pairwise_distance(const Tensor& x, DistanceKind kind) {
    const std::size_t n = x.rows(), T = x.cols();
    Tensor out = Tensor::zeros({n, n});
    kernels::parallel::pairwise_distance(x.values.data(), n, T, kind, kernels::default_dtw_window(T),
                                         out.values.data());
    return out;
}

Tensor similarity_matrix(const Tensor& x, DistanceKind kind, ad::Activation transform) {
    Tensor logits = pairwise_distance(x, kind);
    for (auto& v : logits.values) v = -ad::activate(v, transform);
    return ad::softmax_rows(logits);
}

ad::Var dynamic_adjacency(ad::Var similarity, ad::Var weights, double c1, ad::Activation activation) {
    auto a = ad::activate(ad::matmul(similarity, weights), activation);
    return ad::row_normalize(ad::threshold_mask(a, c1));
}

Tensor abs_correlation(const Tensor& x) {
    const std::size_t n = x.rows(), T = x.cols();
    std::vector<double> mean(n, 0.0), sd(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < T; ++t) mean[i] += x(i, t);
        mean[i] /= static_cast<double>(T);
        for (std::size_t t = 0; t < T; ++t) sd[i] += (x(i, t) - mean[i]) * (x(i, t) - mean[i]);
        sd[i] = std::sqrt(sd[i]);
    }
    Tensor out = Tensor::identity(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double r = 0.0;
            if (sd[i] > 0.0 && sd[j] > 0.0) {
                for (std::size_t t = 0; t < T; ++t) r += (x(i, t) - mean[i]) * (x(j, t) - mean[j]);
                r = std::min(1.0, std::abs(r) / (sd[i] * sd[j]));
            }
            out(i, j) = out(j, i) = r;
        }
    return out;
}

Tensor static_adjacency(const Tensor& x, AdjacencyMode mode, double c1) {
    const std::size_t n = x.rows();
    switch (mode) {
        case AdjacencyMode::all_one:
            return ad::row_normalize(Tensor::filled({n, n}, 1.0));
        case AdjacencyMode::correlation: {
            Tensor c = abs_correlation(x);
            for (auto& v : c.values)
                if (v < c1) v = 0.0;
            return ad::row_normalize(c);
        }
        case AdjacencyMode::dynamic:
            break;
    }
    throw ConfigError("static_adjacency: dynamic mode needs the learned builder");
}

AdjacencyBuilder::AdjacencyBuilder(std::size_t num_nodes, AdjacencyConfig config, Rng& rng)
    : config_(config), num_nodes_(num_nodes) {
    if (!(config_.c1 >= 0.0 && config_.c1 < 1.0))
        throw ConfigError("threshold c1 must lie in [0, 1), got " + std::to_string(config_.c1));
    weights_ = Tensor::identity(num_nodes);
    for (auto& w : weights_.values) w += rng.uniform(-0.01, 0.01);
    weights_.requires_grad = config_.mode == AdjacencyMode::dynamic;
}

Tensor AdjacencyBuilder::precompute(const Tensor& series) const {
    if (series.rows() != num_nodes_)
        throw DimensionError("adjacency builder expects " + std::to_string(num_nodes_) + " variables, got " +
                             std::to_string(series.rows()));
    if (config_.mode == AdjacencyMode::dynamic)
        return similarity_matrix(series, config_.metric, config_.distance_transform);
    return static_adjacency(series, config_.mode, config_.c1);
}

ad::Var AdjacencyBuilder::build(ad::Tape& tape, const Tensor& precomputed) {
    if (config_.mode != AdjacencyMode::dynamic) return tape.constant(precomputed);
    return dynamic_adjacency(tape.constant(precomputed), tape.parameter(weights_), config_.c1, config_.activation);
}

void AdjacencyBuilder::collect(const std::string& prefix, ParamList& out) {
    if (config_.mode == AdjacencyMode::dynamic) out.push_back({prefix + "w_adj", &weights_});
}

}  // namespace mtpool::graph
