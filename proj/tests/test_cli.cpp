#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mtpool/commands.hpp"
#include "mtpool/run_config.hpp"

using namespace mtpool;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("mtpool_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t line_count(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string l; std::getline(in, l);) ++n;
    return n;
}

// A synthetic run small enough for unit tests.
RunConfig quick_config(const fs::path& out) {
    return parse_run_config(
        "[data]\nclasses = 2\nseries = 3\nlength = 16\nper_class = 4\n"
        "[model]\nkernel_sizes = 3\nchannels_per_size = 2\ngnn_widths = 6\nclassifier_hidden = 6\n"
        "[train]\nepochs = 3\nlr = 1e-3\n"
        "[output]\ndir = " +
        out.string() + "\n");
}

}  // namespace

TEST_CASE("defaults of an empty run config") {
    auto c = parse_run_config("");
    CHECK(c.data.is_synthetic());
    CHECK(c.data.synthetic.num_classes == 3);
    CHECK(c.data.synthetic.num_series == 4);
    CHECK(c.data.synthetic.length == 64);
    CHECK(c.data.synthetic.per_class == 30);
    CHECK(c.data.synthetic.seed == 7);
    CHECK_FALSE(c.data.normalize);
    CHECK(c.train.epochs == 2000);
    CHECK(c.train.adam.lr == 1e-4);
    CHECK(c.train.batch_size == 16);
    CHECK(c.train.full_batch_limit == 400);
    CHECK(c.train.seed == 7);
    CHECK(c.train.validation_fraction == 0.0);
    CHECK(c.train.patience == 0);
    CHECK(c.output_dir == "mtpool_out");
    CHECK(to_json(c.model) == to_json(ModelConfig{}));
}

TEST_CASE("sectioned text config values") {
    auto c = parse_run_config(R"(
# comment line
; another comment
[data]
classes = 2
normalize = true

[model]
kernel_sizes = 3, 5
gnn_widths = [16, 8]
pooling = memory
metric = dtw
c1 = 0.2
batch_norm_eval = running

[train]
epochs = 12
lr = 0.001
seed = 99

[output]
dir = runs/a
)");
    CHECK(c.data.synthetic.num_classes == 2);
    CHECK(c.data.normalize);
    CHECK(c.model.kernel_sizes == std::vector<std::size_t>{3, 5});
    CHECK(c.model.gnn_widths == std::vector<std::size_t>{16, 8});
    CHECK(c.model.pooling == pool::PoolKind::memory);
    CHECK(c.model.metric == graph::DistanceKind::dtw);
    CHECK(c.model.c1 == 0.2);
    CHECK_FALSE(c.model.batch_norm_graph_stats_in_eval);
    CHECK(c.train.epochs == 12);
    CHECK(c.train.adam.lr == 0.001);
    CHECK(c.train.seed == 99);
    CHECK(c.model.seed == 99);
    CHECK(c.output_dir == "runs/a");

    auto again = run_config_from_json(to_json(c));
    CHECK(to_json(again) == to_json(c));
    auto from_json_text = parse_run_config(to_json(c).dump(2));
    CHECK(to_json(from_json_text) == to_json(c));
}

TEST_CASE("config errors name the offending key or line") {
    CHECK_THROWS_WITH_AS(parse_run_config("[data]\ncolour = red\n"), doctest::Contains("colour"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_run_config("[optimizer]\nlr = 1\n"), doctest::Contains("[optimizer]"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_run_config("[model]\nwidth 3\n"), doctest::Contains("line 2"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_run_config("epochs = 3\n"), doctest::Contains("outside of a section"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_run_config("[train]\nepochs = 3\nepochs = 4\n"), doctest::Contains("duplicate"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_run_config("[model]\nnum_classes = 3\n"), doctest::Contains("taken from the data"),
                         ConfigError);
    CHECK_THROWS_AS(parse_run_config("[model]\npooling = average\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[train]\nlr = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[train]\nepochs = many\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[data]\nuea_name = Libras\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"train": {"epochs": 3}, "extra": {}})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("{ not json"), ConfigError);
    CHECK_THROWS_WITH_AS(load_run_config("/nonexistent/run.cfg"), doctest::Contains("/nonexistent/run.cfg"),
                         ConfigError);
}

TEST_CASE("flag overrides win over file values") {
    const auto dir = scratch_dir("overrides");
    {
        std::ofstream f(dir / "run.cfg");
        f << "[train]\nepochs = 5\nseed = 3\n[model]\npooling = memory\n";
    }
    Overrides o;
    o.epochs = 9;
    o.seed = 11;
    o.pooling = "mean";
    o.adjacency = "corr";
    o.metric = "abs";
    o.lr = 0.01;
    o.normalize = true;
    o.out = dir / "out";
    auto c = resolve_config(dir / "run.cfg", o);
    CHECK(c.train.epochs == 9);
    CHECK(c.train.seed == 11);
    CHECK(c.model.seed == 11);
    CHECK(c.model.pooling == pool::PoolKind::mean);
    CHECK(c.model.adjacency == graph::AdjacencyMode::correlation);
    CHECK(c.model.metric == graph::DistanceKind::absolute);
    CHECK(c.train.adam.lr == 0.01);
    CHECK(c.data.normalize);
    CHECK(c.output_dir == dir / "out");
    auto plain = resolve_config(dir / "run.cfg", {});
    CHECK(plain.train.epochs == 5);
    CHECK(plain.model.pooling == pool::PoolKind::memory);
    CHECK(resolve_config("", {}).train.epochs == 2000);
    fs::remove_all(dir);
}

TEST_CASE("train writes checkpoint, log and metrics; reruns match except wall time") {
    const auto dir = scratch_dir("cli_train");
    std::ostringstream out, err;
    auto c = quick_config(dir / "a");
    REQUIRE(cmd_train(c, out, err) == 0);
    CHECK(err.str().empty());
    for (auto f : {"model.ckpt", "training_log.csv", "metrics.json"}) CHECK(fs::exists(dir / "a" / f));
    CHECK(line_count(dir / "a" / "training_log.csv") == 4);

    auto metrics = nlohmann::json::parse(slurp(dir / "a" / "metrics.json"));
    CHECK(metrics["schema_version"] == 1);
    for (auto key : {"train_accuracy", "test_accuracy", "epochs", "wall_seconds", "seed", "synthetic_seed",
                     "num_parameters", "test_confusion", "config"})
        CHECK(metrics.contains(key));
    CHECK(metrics["epochs"] == 3);
    CHECK(metrics["seed"] == 7);
    CHECK(metrics["test_confusion"].size() == 2);

    auto c2 = quick_config(dir / "b");
    REQUIRE(cmd_train(c2, out, err) == 0);
    auto again = nlohmann::json::parse(slurp(dir / "b" / "metrics.json"));
    metrics.erase("wall_seconds");
    again.erase("wall_seconds");
    metrics["config"].erase("output");
    again["config"].erase("output");
    CHECK(metrics == again);
    CHECK(slurp(dir / "a" / "model.ckpt") == slurp(dir / "b" / "model.ckpt"));
    CHECK(slurp(dir / "a" / "training_log.csv") == slurp(dir / "b" / "training_log.csv"));

    c.train.validation_fraction = 0.25;
    c.output_dir = dir / "v";
    REQUIRE(cmd_train(c, out, err) == 0);
    CHECK(fs::exists(dir / "v" / "best.ckpt"));
    CHECK(nlohmann::json::parse(slurp(dir / "v" / "metrics.json"))["best_validation_accuracy"].is_number());
    fs::remove_all(dir);
}

TEST_CASE("eval, embed and inspect-graph on a trained checkpoint") {
    const auto dir = scratch_dir("cli_eval");
    std::ostringstream out, err;
    auto c = quick_config(dir);
    REQUIRE(cmd_train(c, out, err) == 0);
    const auto ckpt = dir / "model.ckpt";

    std::ostringstream eval_out;
    REQUIRE(cmd_eval(ckpt, c, Split::test, eval_out, err) == 0);
    auto j = nlohmann::json::parse(eval_out.str());
    CHECK(j["total"] == 8);
    CHECK(j["confusion"].size() == 2);
    CHECK(j["accuracy"].get<double>() >= 0.0);
    std::ostringstream eval_again;
    cmd_eval(ckpt, c, Split::test, eval_again, err);
    CHECK(eval_out.str() == eval_again.str());

    REQUIRE(cmd_embed(ckpt, c, Split::train, 1, out, err) == 0);
    CHECK(line_count(dir / "embeddings.csv") == 9);
    CHECK(line_count(dir / "embeddings_pca.csv") == 9);
    CHECK(line_count(dir / "assignments_layer0.csv") == 4);
    CHECK_FALSE(fs::exists(dir / "assignments_layer1.csv"));
    CHECK(fs::exists(dir / "assignments_unused.csv"));

    REQUIRE(cmd_inspect_graph(ckpt, c, Split::test, 0, dir / "graph" / "adj.csv", out, err) == 0);
    CHECK(line_count(dir / "graph" / "adj.csv") == 4);

    std::ostringstream bad;
    CHECK(cmd_embed(ckpt, c, Split::train, 50, out, bad) == 2);
    CHECK(bad.str().find("50") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("error exit codes: 1 for config, 2 for data") {
    const auto dir = scratch_dir("cli_errors");
    std::ostringstream out;

    auto missing = quick_config(dir);
    missing.data.train_path = dir / "absent" / "X_TRAIN.ts";
    std::ostringstream err1;
    CHECK(cmd_train(missing, out, err1) == 2);
    const auto message = err1.str();
    CHECK(message.find((dir / "absent" / "X_TRAIN.ts").string()) != std::string::npos);
    CHECK(std::count(message.begin(), message.end(), '\n') == 1);

    auto too_long = quick_config(dir);
    too_long.model.kernel_sizes = {40};
    std::ostringstream err2;
    CHECK(cmd_train(too_long, out, err2) == 1);
    CHECK(err2.str().rfind("config error:", 0) == 0);

    std::ostringstream err3;
    CHECK(cmd_eval(dir / "nope.ckpt", quick_config(dir), Split::test, out, err3) == 2);
    CHECK(err3.str().find("nope.ckpt") != std::string::npos);

    auto c = quick_config(dir / "run");
    REQUIRE(cmd_train(c, out, err3) == 0);
    auto other_shape = c;
    other_shape.data.synthetic.num_series = 5;
    std::ostringstream err4;
    CHECK(cmd_eval(dir / "run" / "model.ckpt", other_shape, Split::test, out, err4) == 2);
    CHECK(err4.str().find("data error:") == 0);
    fs::remove_all(dir);
}

TEST_CASE("gen-synth writes loadable train and test files") {
    const auto dir = scratch_dir("cli_synth");
    std::ostringstream out, err;
    REQUIRE(cmd_gen_synth({2, 3, 20, 5, 4}, dir, out, err) == 0);
    auto train = data::load_ts_dataset(dir / "Synthetic_TRAIN.ts");
    auto test = data::load_ts_dataset(dir / "Synthetic_TEST.ts");
    CHECK(train.size() == 10);
    CHECK(test.size() == 10);
    CHECK(train.meta.num_series == 3);
    CHECK(train.meta.series_length == 20);
    auto split = data::make_synthetic_split({2, 3, 20, 5, 4});
    for (std::size_t i = 0; i < train.size(); ++i)
        CHECK(train.samples[i].series.values == split.train.samples[i].series.values);

    auto c = quick_config(dir / "run");
    c.data.train_path = dir / "Synthetic_TRAIN.ts";
    c.data.test_path = dir / "Synthetic_TEST.ts";
    CHECK(cmd_train(c, out, err) == 0);
    auto m = nlohmann::json::parse(slurp(dir / "run" / "metrics.json"));
    CHECK(m["synthetic_seed"].is_null());
    CHECK(m["dataset"] == "Synthetic");
    CHECK(cmd_gen_synth({0, 3, 20, 5, 4}, dir, out, err) == 1);
    fs::remove_all(dir);
}
