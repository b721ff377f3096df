#ifndef MTPOOL_TEMPORALCONV_HPP
#define MTPOOL_TEMPORALCONV_HPP

#include <string_view>
#include <vector>

#include "mtpool/autodiff.hpp"
#include "mtpool/params.hpp"

namespace mtpool::temporal {

/// How each channel's conv output is collapsed over time before concatenation.
enum class Aggregation { mean, max };

Aggregation parse_aggregation(std::string_view name);
std::string_view aggregation_name(Aggregation agg);

struct ConvBankConfig {
    std::vector<std::size_t> kernel_sizes{3, 5, 7};
    std::size_t channels_per_size = 10;
    Aggregation aggregation = Aggregation::mean;
};

/// One bank of `channels_per_size` kernels per kernel size, relu activated.
class ConvBank {
public:
    ConvBank(ConvBankConfig config, Rng& rng);

    /// Feature width d = channels_per_size * |kernel_sizes|.
    std::size_t feature_width() const;
    /// Throws ConfigError naming the first kernel size longer than T.
    void check_length(std::size_t T) const;

    const ConvBankConfig& config() const { return config_; }
    std::vector<Tensor>& kernels() { return kernels_; }
    std::vector<Tensor>& biases() { return biases_; }
    void collect(const std::string& prefix, ParamList& out);

private:
    ConvBankConfig config_;
    std::vector<Tensor> kernels_;
    std::vector<Tensor> biases_;
};

/// X_TC (n x d): per kernel size, conv -> relu -> time aggregation, concatenated.
ad::Var temporal_features(ad::Var series, ConvBank& bank);

}  // namespace mtpool::temporal

#endif  // MTPOOL_TEMPORALCONV_HPP
