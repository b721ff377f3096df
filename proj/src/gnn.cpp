#include "mtpool/gnn.hpp"

#include <string>

namespace mtpool::gnn {

GnnLayer::GnnLayer(std::size_t d_in, std::size_t d_out, Rng& rng, bool batch_norm, ad::Activation activation)
    : w_self_(rng.glorot(d_in, d_out)),
      w_neighbor_(rng.glorot(d_in, d_out)),
      gamma_(trainable(Tensor::filled({d_out}, 1.0))),
      beta_(trainable(Tensor::zeros({d_out}))),
      norm_(d_out),
      batch_norm_(batch_norm),
      activation_(activation) {}

void GnnLayer::collect(const std::string& prefix, ParamList& params, BufferList& buffers) {
    params.push_back({prefix + "w_self", &w_self_});
    params.push_back({prefix + "w_neighbor", &w_neighbor_});
    if (batch_norm_) {
        params.push_back({prefix + "bn.gamma", &gamma_});
        params.push_back({prefix + "bn.beta", &beta_});
        buffers.push_back({prefix + "bn.running_mean", &norm_.running_mean});
        buffers.push_back({prefix + "bn.running_var", &norm_.running_var});
    }
}

ad::Var kgnn_forward(const graph::GraphState& state, GnnLayer& layer, ad::Mode mode) {
    const auto& fs = state.features.shape();
    if (fs.size() != 2 || fs[1] != layer.input_width())
        throw DimensionError("kgnn_forward: features " + shape_str(fs) + " do not match layer input width " +
                             std::to_string(layer.input_width()));
    const auto& as = state.adjacency.shape();
    if (as.size() != 2 || as[0] != fs[0] || as[1] != fs[0])
        throw DimensionError("kgnn_forward: adjacency " + shape_str(as) + " does not match " +
                             std::to_string(fs[0]) + " nodes");
    auto& tape = state.features.tape();
    auto self_term = ad::matmul(state.features, tape.parameter(layer.w_self_));
    auto neighbor_term = ad::matmul(ad::matmul(state.adjacency, state.features), tape.parameter(layer.w_neighbor_));
    auto h = ad::add(self_term, neighbor_term);
    if (layer.batch_norm_)
        h = ad::batch_norm(h, tape.parameter(layer.gamma_), tape.parameter(layer.beta_), layer.norm_, mode);
    return ad::activate(h, layer.activation_);
}

GnnStack::GnnStack(std::size_t d_in, const std::vector<std::size_t>& widths, Rng& rng, bool batch_norm) {
    std::size_t d = d_in;
    for (auto w : widths) {
        if (w == 0) throw ConfigError("GNN layer width must be positive");
        layers_.emplace_back(d, w, rng, batch_norm);
        d = w;
    }
}

std::size_t GnnStack::output_width(std::size_t d_in) const {
    return layers_.empty() ? d_in : layers_.back().output_width();
}

void GnnStack::collect(const std::string& prefix, ParamList& params, BufferList& buffers) {
    for (std::size_t i = 0; i < layers_.size(); ++i)
        layers_[i].collect(prefix + std::to_string(i) + ".", params, buffers);
}

graph::GraphState encode(const graph::GraphState& state, GnnStack& stack, ad::Mode mode) {
    graph::GraphState out = state;
    for (auto& layer : stack.layers()) out.features = kgnn_forward(out, layer, mode);
    return out;
}

}  // namespace mtpool::gnn
