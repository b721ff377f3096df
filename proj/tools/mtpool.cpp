// mtpool: train, evaluate and inspect MTPool models from the command line.

#include <iostream>

#include "CLI11.hpp"
#include "mtpool/commands.hpp"

namespace {

struct Common {
    std::string config;
    std::string out;
    std::uint64_t seed = 7;
    bool normalize = false;
    std::size_t epochs = 2000;
    double lr = 1e-4;
    std::string pooling = "variational";
    std::string adjacency = "dynamic";
    std::string metric = "euclid";
};

void add_common(CLI::App& cmd, Common& c) {
    cmd.add_option("--config", c.config, "Run config file (sectioned key-value or JSON)");
    cmd.add_option("--out", c.out, "Output directory (overrides [output] dir; default mtpool_out)");
    cmd.add_option("--seed", c.seed, "Seed for model initialization and batch order");
    cmd.add_flag("--normalize", c.normalize, "Z-normalize every variable of every sample");
    cmd.add_option("--epochs", c.epochs, "Training epochs");
    cmd.add_option("--lr", c.lr, "Adam learning rate");
    cmd.add_option("--pooling", c.pooling, "Pooling kind")
        ->check(CLI::IsMember({"variational", "memory", "mean"}));
    cmd.add_option("--adjacency", c.adjacency, "Adjacency construction")
        ->check(CLI::IsMember({"dynamic", "all-one", "corr"}));
    cmd.add_option("--metric", c.metric, "Distance metric for the dynamic adjacency")
        ->check(CLI::IsMember({"euclid", "abs", "dtw"}));
}

mtpool::Overrides overrides(const CLI::App& cmd, const Common& c) {
    mtpool::Overrides o;
    if (cmd.count("--out")) o.out = c.out;
    if (cmd.count("--seed")) o.seed = c.seed;
    o.normalize = c.normalize;
    if (cmd.count("--epochs")) o.epochs = c.epochs;
    if (cmd.count("--lr")) o.lr = c.lr;
    if (cmd.count("--pooling")) o.pooling = c.pooling;
    if (cmd.count("--adjacency")) o.adjacency = c.adjacency;
    if (cmd.count("--metric")) o.metric = c.metric;
    return o;
}

template <typename F>
int with_config(const CLI::App& cmd, const Common& c, F&& run) {
    mtpool::RunConfig config;
    try {
        config = mtpool::resolve_config(c.config, overrides(cmd, c));
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    }
    return run(config);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MTPool multivariate time series classifier"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);

    Common train_opts, eval_opts, embed_opts, graph_opts;
    std::string checkpoint, split = "test", graph_path = "adjacency.csv", synth_out = "synthetic";
    std::size_t sample = 0;
    mtpool::data::SyntheticSpec spec;

    auto* train = app.add_subcommand("train", "Train a model and write checkpoint, log and metrics JSON");
    add_common(*train, train_opts);

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint and print accuracy and confusion counts as JSON");
    add_common(*eval, eval_opts);
    eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    eval->add_option("--split", split, "Dataset split")->check(CLI::IsMember({"train", "test"}));

    auto* embed = app.add_subcommand("embed", "Export embeddings, their 2-D PCA and one sample's cluster assignments");
    add_common(*embed, embed_opts);
    embed->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    embed->add_option("--split", split, "Dataset split")->check(CLI::IsMember({"train", "test"}));
    embed->add_option("--sample", sample, "Sample whose assignments are exported");

    auto* graph = app.add_subcommand("inspect-graph", "Write one sample's learned adjacency as CSV");
    add_common(*graph, graph_opts);
    graph->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    graph->add_option("--split", split, "Dataset split")->check(CLI::IsMember({"train", "test"}));
    graph->add_option("--sample", sample, "Sample index");
    graph->add_option("--file", graph_path, "Output CSV path");

    auto* synth = app.add_subcommand("gen-synth", "Write a synthetic dataset as .ts train and test files");
    synth->add_option("--out", synth_out, "Output directory");
    synth->add_option("--seed", spec.seed, "Data seed");
    synth->add_option("--classes", spec.num_classes, "Number of classes");
    synth->add_option("--series", spec.num_series, "Variables per sample");
    synth->add_option("--length", spec.length, "Time steps per variable");
    synth->add_option("--per-class", spec.per_class, "Samples per class in each split");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    if (*train)
        return with_config(*train, train_opts,
                           [](const mtpool::RunConfig& c) { return mtpool::cmd_train(c, std::cout, std::cerr); });
    if (*eval)
        return with_config(*eval, eval_opts, [&](const mtpool::RunConfig& c) {
            return mtpool::cmd_eval(checkpoint, c, mtpool::parse_split(split), std::cout, std::cerr);
        });
    if (*embed)
        return with_config(*embed, embed_opts, [&](const mtpool::RunConfig& c) {
            return mtpool::cmd_embed(checkpoint, c, mtpool::parse_split(split), sample, std::cout, std::cerr);
        });
    if (*graph)
        return with_config(*graph, graph_opts, [&](const mtpool::RunConfig& c) {
            return mtpool::cmd_inspect_graph(checkpoint, c, mtpool::parse_split(split), sample, graph_path,
                                             std::cout, std::cerr);
        });
    return mtpool::cmd_gen_synth(spec, synth_out, std::cout, std::cerr);
}
