#include "mtpool/temporalconv.hpp"

#include <cmath>
#include <string>

namespace mtpool::temporal {

Aggregation parse_aggregation(std::string_view name) {
    if (name == "mean") return Aggregation::mean;
    if (name == "max") return Aggregation::max;
    throw ConfigError("unknown temporal aggregation '" + std::string(name) + "' (expected mean or max)");
}

std::string_view aggregation_name(Aggregation agg) { return agg == Aggregation::mean ? "mean" : "max"; }

ConvBank::ConvBank(ConvBankConfig config, Rng& rng) : config_(std::move(config)) {
    if (config_.kernel_sizes.empty()) throw ConfigError("conv bank needs at least one kernel size");
    if (config_.channels_per_size == 0) throw ConfigError("conv bank needs at least one channel per size");
    for (auto ks : config_.kernel_sizes) {
        if (ks == 0) throw ConfigError("kernel size must be positive");
        const double bound = 1.0 / std::sqrt(static_cast<double>(ks));
        kernels_.push_back(rng.uniform_tensor({config_.channels_per_size, ks}, -bound, bound));
        biases_.push_back(rng.uniform_tensor({config_.channels_per_size}, -bound, bound));
    }
}

std::size_t ConvBank::feature_width() const { return config_.channels_per_size * config_.kernel_sizes.size(); }

void ConvBank::check_length(std::size_t T) const {
    for (auto ks : config_.kernel_sizes)
        if (ks > T)
            throw ConfigError("kernel size " + std::to_string(ks) + " exceeds series length " + std::to_string(T));
}

void ConvBank::collect(const std::string& prefix, ParamList& out) {
    for (std::size_t i = 0; i < kernels_.size(); ++i) {
        const auto tag = prefix + "k" + std::to_string(config_.kernel_sizes[i]);
        out.push_back({tag + ".weight", &kernels_[i]});
        out.push_back({tag + ".bias", &biases_[i]});
    }
}

ad::Var temporal_features(ad::Var series, ConvBank& bank) {
    const auto& shape = series.shape();
    if (shape.size() != 2) throw DimensionError("temporal_features: expected n x T input, got " + shape_str(shape));
    bank.check_length(shape[1]);
    auto& tape = series.tape();
    const std::size_t n = shape[0];
    const std::size_t c = bank.config().channels_per_size;
    std::vector<ad::Var> parts;
    for (std::size_t i = 0; i < bank.kernels().size(); ++i) {
        auto conv = ad::relu(ad::conv1d_valid(series, tape.parameter(bank.kernels()[i]),
                                              tape.parameter(bank.biases()[i])));
        auto pooled = bank.config().aggregation == Aggregation::mean ? ad::reduce_mean(conv, 2)
                                                                     : ad::reduce_max(conv, 2);
        parts.push_back(ad::reshape(pooled, {n, c}));
    }
    return parts.size() == 1 ? parts.front() : ad::concat(parts, 1);
}

}  // namespace mtpool::temporal
