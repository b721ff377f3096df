#include "mtpool/model.hpp"

#include <set>

namespace mtpool {

namespace {

pool::PoolStackConfig pool_config(const ModelConfig& c) {
    pool::PoolStackConfig p;
    p.kind = c.pooling;
    p.heads = c.heads;
    p.reduction = c.reduction;
    p.clusters = c.pool_clusters;
    p.renormalize_adjacency = c.renormalize_pooled_adjacency;
    return p;
}

const ModelConfig& validated(const ModelConfig& c) {
    c.validate();
    return c;
}

}  // namespace

void ModelConfig::validate() const {
    if (!(c1 >= 0.0 && c1 < 1.0)) throw ConfigError("c1 must lie in [0, 1), got " + std::to_string(c1));
    if (kernel_sizes.empty()) throw ConfigError("kernel_sizes must not be empty");
    for (auto ks : kernel_sizes) {
        if (ks == 0) throw ConfigError("kernel sizes must be positive");
        if (series_length && ks > series_length)
            throw ConfigError("kernel size " + std::to_string(ks) + " exceeds series length " +
                              std::to_string(series_length));
    }
    if (channels_per_size == 0) throw ConfigError("channels_per_size must be positive");
    for (auto w : gnn_widths)
        if (w == 0) throw ConfigError("gnn widths must be positive");
    if (heads == 0) throw ConfigError("heads must be positive");
    if (reduction < 2) throw ConfigError("reduction factor must be >= 2");
    if (!pool_clusters.empty()) {
        if (pool_clusters.back() != 1) throw ConfigError("pool_clusters must end with 1");
        for (std::size_t i = 1; i < pool_clusters.size(); ++i)
            if (pool_clusters[i] >= pool_clusters[i - 1]) throw ConfigError("pool_clusters must strictly decrease");
    }
    if (classifier_hidden == 0) throw ConfigError("classifier_hidden must be positive");
    if (num_series == 0 || series_length == 0 || num_classes == 0)
        throw ConfigError("model needs num_series, series_length and num_classes (fit the config to a dataset)");
}

nlohmann::json to_json(const ModelConfig& c) {
    return nlohmann::json{
        {"metric", graph::metric_name(c.metric)},
        {"adjacency", graph::adjacency_name(c.adjacency)},
        {"c1", c.c1},
        {"distance_transform", ad::activation_name(c.distance_transform)},
        {"kernel_sizes", c.kernel_sizes},
        {"channels_per_size", c.channels_per_size},
        {"temporal_agg", temporal::aggregation_name(c.temporal_agg)},
        {"gnn_widths", c.gnn_widths},
        {"batch_norm", c.batch_norm},
        {"batch_norm_eval", c.batch_norm_graph_stats_in_eval ? "graph" : "running"},
        {"pooling", pool::pool_kind_name(c.pooling)},
        {"heads", c.heads},
        {"reduction", c.reduction},
        {"pool_clusters", c.pool_clusters},
        {"renormalize_pooled_adjacency", c.renormalize_pooled_adjacency},
        {"classifier_hidden", c.classifier_hidden},
        {"num_series", c.num_series},
        {"series_length", c.series_length},
        {"num_classes", c.num_classes},
        {"seed", c.seed},
    };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    static const std::set<std::string> known{
        "metric", "adjacency", "c1", "distance_transform", "kernel_sizes", "channels_per_size", "temporal_agg",
        "gnn_widths", "batch_norm", "batch_norm_eval", "pooling", "heads", "reduction", "pool_clusters",
        "renormalize_pooled_adjacency", "classifier_hidden", "num_series", "series_length", "num_classes", "seed"};
    if (!j.is_object()) throw ConfigError("model config must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw ConfigError("unknown model config key '" + key + "'");
    ModelConfig c;
    try {
        if (j.contains("metric")) c.metric = graph::parse_metric(j["metric"].get<std::string>());
        if (j.contains("adjacency")) c.adjacency = graph::parse_adjacency(j["adjacency"].get<std::string>());
        if (j.contains("c1")) c.c1 = j["c1"].get<double>();
        if (j.contains("distance_transform"))
            c.distance_transform = ad::parse_activation(j["distance_transform"].get<std::string>());
        if (j.contains("kernel_sizes")) c.kernel_sizes = j["kernel_sizes"].get<std::vector<std::size_t>>();
        if (j.contains("channels_per_size")) c.channels_per_size = j["channels_per_size"].get<std::size_t>();
        if (j.contains("temporal_agg")) c.temporal_agg = temporal::parse_aggregation(j["temporal_agg"].get<std::string>());
        if (j.contains("gnn_widths")) c.gnn_widths = j["gnn_widths"].get<std::vector<std::size_t>>();
        if (j.contains("batch_norm")) c.batch_norm = j["batch_norm"].get<bool>();
        if (j.contains("batch_norm_eval")) {
            const auto v = j["batch_norm_eval"].get<std::string>();
            if (v != "graph" && v != "running")
                throw ConfigError("batch_norm_eval must be 'graph' or 'running', got '" + v + "'");
            c.batch_norm_graph_stats_in_eval = v == "graph";
        }
        if (j.contains("pooling")) c.pooling = pool::parse_pool_kind(j["pooling"].get<std::string>());
        if (j.contains("heads")) c.heads = j["heads"].get<std::size_t>();
        if (j.contains("reduction")) c.reduction = j["reduction"].get<std::size_t>();
        if (j.contains("pool_clusters")) c.pool_clusters = j["pool_clusters"].get<std::vector<std::size_t>>();
        if (j.contains("renormalize_pooled_adjacency"))
            c.renormalize_pooled_adjacency = j["renormalize_pooled_adjacency"].get<bool>();
        if (j.contains("classifier_hidden")) c.classifier_hidden = j["classifier_hidden"].get<std::size_t>();
        if (j.contains("num_series")) c.num_series = j["num_series"].get<std::size_t>();
        if (j.contains("series_length")) c.series_length = j["series_length"].get<std::size_t>();
        if (j.contains("num_classes")) c.num_classes = j["num_classes"].get<std::size_t>();
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    return c;
}

ModelConfig fit_to(ModelConfig config, const data::DatasetMeta& meta) {
    config.num_series = meta.num_series;
    config.series_length = meta.series_length;
    config.num_classes = meta.classes;
    return config;
}

MtpoolModel::MtpoolModel(const ModelConfig& config)
    : config_(validated(config)),
      rng_(config.seed),
      adjacency_(config.num_series,
                 graph::AdjacencyConfig{config.adjacency, config.metric, config.c1, ad::Activation::relu,
                                        config.distance_transform},
                 rng_),
      conv_(temporal::ConvBankConfig{config.kernel_sizes, config.channels_per_size, config.temporal_agg}, rng_),
      gnn_(conv_.feature_width(), config.gnn_widths, rng_, config.batch_norm),
      pool_(pool_config(config), config.num_series, gnn_.output_width(conv_.feature_width()), rng_),
      cls_w1_(rng_.glorot(pool_.output_width(), config.classifier_hidden)),
      cls_b1_(trainable(Tensor::zeros({config.classifier_hidden}))),
      cls_w2_(rng_.glorot(config.classifier_hidden, config.num_classes)),
      cls_b2_(trainable(Tensor::zeros({config.num_classes}))) {
    for (auto& layer : gnn_.layers()) layer.norm_state().batch_stats_in_eval = config.batch_norm_graph_stats_in_eval;
}

void MtpoolModel::check_sample(const Tensor& series) const {
    if (series.rank() != 2 || series.shape[0] != config_.num_series || series.shape[1] != config_.series_length)
        throw DimensionError("sample shape " + shape_str(series.shape) + " does not match model input [" +
                             std::to_string(config_.num_series) + "x" + std::to_string(config_.series_length) + "]");
}

Tensor MtpoolModel::graph_input(const Tensor& series) const {
    check_sample(series);
    return adjacency_.precompute(series);
}

ForwardTrace MtpoolModel::forward(ad::Tape& tape, const Tensor& series, const Tensor& graph_input, ad::Mode mode) {
    check_sample(series);
    ForwardTrace tr;
    auto x = tape.constant(series);
    tr.adjacency = adjacency_.build(tape, graph_input);
    tr.temporal_features = temporal::temporal_features(x, conv_);
    auto encoded = gnn::encode({tr.temporal_features, tr.adjacency}, gnn_, mode);
    tr.embeddings = encoded.features;
    auto pooled = pool_.forward(encoded);
    tr.pools = std::move(pooled.layers);
    tr.x_final = pooled.x_final;
    auto hidden = ad::relu(ad::add_row_bias(ad::matmul(tr.x_final, tape.parameter(cls_w1_)), tape.parameter(cls_b1_)));
    tr.logits = ad::add_row_bias(ad::matmul(hidden, tape.parameter(cls_w2_)), tape.parameter(cls_b2_));
    tr.probabilities = ad::softmax_rows(tr.logits);
    return tr;
}

ForwardTrace MtpoolModel::forward(ad::Tape& tape, const Tensor& series, ad::Mode mode) {
    return forward(tape, series, graph_input(series), mode);
}

std::vector<double> MtpoolModel::predict_proba(const Tensor& series) {
    ad::Tape tape;
    auto tr = forward(tape, series, ad::Mode::eval);
    auto p = tr.probabilities.values();
    return {p.begin(), p.end()};
}

ParamList MtpoolModel::parameters() {
    ParamList out;
    adjacency_.collect("graph.", out);
    conv_.collect("conv.", out);
    BufferList unused;
    gnn_.collect("gnn.", out, unused);
    pool_.collect("pool.", out);
    out.push_back({"classifier.w_hidden", &cls_w1_});
    out.push_back({"classifier.b_hidden", &cls_b1_});
    out.push_back({"classifier.w_out", &cls_w2_});
    out.push_back({"classifier.b_out", &cls_b2_});
    return out;
}

BufferList MtpoolModel::buffers() {
    ParamList unused;
    BufferList out;
    gnn_.collect("gnn.", unused, out);
    return out;
}

std::size_t MtpoolModel::parameter_count() {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.tensor->size();
    return n;
}

void MtpoolModel::zero_grad() {
    for (auto& p : parameters()) p.tensor->zero_grad();
}

}  // namespace mtpool
