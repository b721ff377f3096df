#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "mtpool/checkpoint.hpp"
#include "mtpool/export.hpp"
#include "mtpool/model.hpp"
#include "mtpool/train.hpp"

using namespace mtpool;
namespace fs = std::filesystem;

namespace {

ModelConfig small_config(const data::DatasetMeta& meta) {
    ModelConfig c;
    c.kernel_sizes = {3, 5};
    c.channels_per_size = 3;
    c.gnn_widths = {8};
    c.classifier_hidden = 8;
    return fit_to(c, meta);
}

data::Dataset small_data(std::uint64_t seed = 3) { return data::make_synthetic({2, 4, 16, 6, seed}); }

std::vector<std::string> read_lines(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    return lines;
}

std::size_t field_count(const std::string& line) { return static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1; }

fs::path scratch_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("mtpool_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<double> snapshot(MtpoolModel& m) {
    std::vector<double> out;
    for (const auto& p : m.parameters()) out.insert(out.end(), p.tensor->values.begin(), p.tensor->values.end());
    return out;
}

// Replaces the embedded config JSON of a serialized checkpoint.
std::vector<std::uint8_t> with_config(const std::vector<std::uint8_t>& bytes, const std::string& json) {
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(bytes[12 + i]) << (8 * i);
    std::vector<std::uint8_t> out(bytes.begin(), bytes.begin() + 12);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(json.size() >> (8 * i)));
    out.insert(out.end(), json.begin(), json.end());
    out.insert(out.end(), bytes.begin() + 20 + static_cast<std::ptrdiff_t>(len), bytes.end());
    return out;
}

}  // namespace

TEST_CASE("forward produces a probability vector") {
    auto ds = small_data();
    MtpoolModel model(small_config(ds.meta));
    for (const auto& s : ds.samples) {
        for (auto mode : {ad::Mode::train, ad::Mode::eval}) {
            ad::Tape tape;
            auto tr = model.forward(tape, s.series, mode);
            CHECK(tr.probabilities.shape() == Shape{1, 2});
            double total = 0.0;
            for (double p : tr.probabilities.values()) total += p;
            CHECK(std::abs(total - 1.0) <= 1e-9);
        }
    }
    CHECK_THROWS_AS(model.predict_proba(Tensor::zeros({3, 16})), DimensionError);
}

TEST_CASE("zero classifier output layer gives uniform probabilities") {
    auto ds = data::make_synthetic({3, 4, 16, 2, 1});
    MtpoolModel model(small_config(ds.meta));
    model.classifier_output_weight().values.assign(model.classifier_output_weight().size(), 0.0);
    model.classifier_output_bias().values.assign(3, 0.0);
    for (double p : model.predict_proba(ds.samples[0].series)) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-15));
}

TEST_CASE("eval mode is deterministic across calls and leaves running stats alone") {
    auto ds = small_data();
    for (bool graph_stats : {true, false}) {
        auto cfg = small_config(ds.meta);
        cfg.batch_norm_graph_stats_in_eval = graph_stats;
        MtpoolModel model(cfg);
        std::vector<std::vector<double>> buffers_before;
        for (const auto& b : model.buffers()) buffers_before.push_back(*b.values);
        auto first = model.predict_proba(ds.samples[1].series);
        auto second = model.predict_proba(ds.samples[1].series);
        CHECK(first == second);
        std::size_t k = 0;
        for (const auto& b : model.buffers()) CHECK(*b.values == buffers_before[k++]);
    }
}

TEST_CASE("adding a constant to every logit keeps the predicted class") {
    Rng rng(8);
    for (int t = 0; t < 50; ++t) {
        auto logits = rng.uniform_tensor({1, 5}, -3, 3, false);
        auto shifted = logits;
        const double c = rng.uniform(-50, 50);
        for (auto& v : shifted.values) v += c;
        CHECK(argmax(ad::softmax_rows(logits).values) == argmax(ad::softmax_rows(shifted).values));
    }
    auto ds = small_data();
    MtpoolModel model(small_config(ds.meta));
    std::vector<std::size_t> before;
    for (const auto& s : ds.samples) before.push_back(argmax(model.predict_proba(s.series)));
    for (auto& v : model.classifier_output_bias().values) v += 7.5;
    for (std::size_t i = 0; i < ds.size(); ++i) CHECK(argmax(model.predict_proba(ds.samples[i].series)) == before[i]);
}

TEST_CASE("adam: zero gradient is a fixed point") {
    Tensor w = trainable(Tensor::matrix({{0.5, -2.0}}));
    ParamList params{{"w", &w}};
    w.zero_grad();
    AdamState state;
    adam_step(params, state, {});
    CHECK(w.values == std::vector<double>{0.5, -2.0});
    state.m[0] = {0.4, -0.2};
    state.v[0] = {0.3, 0.1};
    adam_step(params, state, {});
    CHECK(state.m[0][0] == doctest::Approx(0.36));
    CHECK(state.v[0][1] == doctest::Approx(0.0999));
    CHECK(std::abs(state.m[0][0]) < 0.4);
}

TEST_CASE("adam: first step moves each weight by about lr against the gradient sign") {
    Rng rng(12);
    Tensor a = rng.uniform_tensor({3, 4}, -1, 1);
    Tensor b = trainable(Tensor({3, 4}, a.values));
    const auto a0 = a.values;
    a.zero_grad();
    b.zero_grad();
    for (std::size_t k = 0; k < a.size(); ++k) {
        (*a.grad)[k] = rng.uniform(-5, 5);
        (*b.grad)[k] = (*a.grad)[k];
    }
    auto bcopy = b.values;
    ParamList params{{"a", &a}, {"b", &b}};
    AdamState state;
    AdamConfig cfg;
    adam_step(params, state, cfg);
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double g = (*a.grad)[k];
        const double expected = -cfg.lr * g / (std::abs(g) + cfg.eps);
        CHECK(a.values[k] - a0[k] == doctest::Approx(expected).epsilon(1e-9));
        CHECK(a.values[k] - a0[k] == b.values[k] - bcopy[k]);
    }
    CHECK(state.step == 1);

    Tensor c = trainable(Tensor::zeros({2}));
    ParamList missing{{"c", &c}};
    CHECK_THROWS_AS(adam_step(missing, state, cfg), ContractError);
}

TEST_CASE("accuracy examples") {
    ClassCounts binary{3, 2, 1, 0};
    CHECK(binary_accuracy(binary) == doctest::Approx(5.0 / 6.0));
    auto m = metrics_from_predictions({1, 1, 1, 0, 0, 1}, {1, 1, 1, 0, 0, 0}, 2);
    CHECK(m.accuracy == doctest::Approx(5.0 / 6.0));
    CHECK(m.per_class[1].tp == 3);
    CHECK(m.per_class[1].tn == 2);
    CHECK(m.per_class[1].fp == 1);
    CHECK(m.per_class[1].fn == 0);
    CHECK(binary_accuracy(m.per_class[1]) == m.accuracy);
    CHECK(metrics_from_predictions({0, 2, 1}, {0, 2, 1}, 3).accuracy == 1.0);

    std::vector<std::size_t> labels{0, 0, 1, 0, 0, 1, 0, 0, 1};
    auto majority = metrics_from_predictions(std::vector<std::size_t>(labels.size(), 0), labels, 2);
    CHECK(majority.accuracy == doctest::Approx(2.0 / 3.0));
    for (const auto& c : majority.per_class) CHECK(c.tp + c.tn + c.fp + c.fn == labels.size());
    CHECK_THROWS_AS(metrics_from_predictions({0}, {0, 1}, 2), DimensionError);
}

TEST_CASE("parallel evaluation equals the serial reference") {
    auto ds = data::make_synthetic({3, 4, 24, 7, 2});
    MtpoolModel model(small_config(ds.meta));
    auto par = evaluate(model, ds);
    auto ser = evaluate_serial(model, ds);
    CHECK(par.predictions == ser.predictions);
    CHECK(par.accuracy == ser.accuracy);
    CHECK(par.mean_loss == ser.mean_loss);
    CHECK(par.total == ds.size());
}

namespace {

data::Dataset tiny_batch() {
    auto full = data::make_synthetic({});
    data::Dataset tiny;
    tiny.meta = full.meta;
    for (std::size_t i = 0; i < full.size(); ++i)
        if (i % 30 < 3) tiny.samples.push_back(full.samples[i]);
    tiny.meta.train_size = tiny.size();
    return tiny;
}

// Epochs among the first ten whose loss does not drop below the previous epoch.
std::size_t plateaus_in_first_ten(bool batch_norm, std::uint64_t seed) {
    auto tiny = tiny_batch();
    auto cfg = fit_to(ModelConfig{}, tiny.meta);
    cfg.batch_norm = batch_norm;
    cfg.seed = seed;
    MtpoolModel model(cfg);
    TrainConfig tc;
    tc.epochs = 10;
    tc.adam.lr = 1e-3;
    tc.seed = seed;
    auto log = train(model, tiny, tc);
    std::size_t plateaus = 0;
    for (std::size_t e = 1; e < log.epochs.size(); ++e)
        if (!(log.epochs[e].mean_loss < log.epochs[e - 1].mean_loss)) ++plateaus;
    return plateaus;
}

}  // namespace

TEST_CASE("loss on a tiny batch decreases over the first ten epochs at lr 1e-3, batch norm off") {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        INFO("seed " << seed);
        CHECK(plateaus_in_first_ten(false, seed) <= 2);
    }
}

TEST_CASE("loss on a tiny batch decreases over the first ten epochs at lr 1e-3, default config" * doctest::may_fail()) {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        INFO("seed " << seed);
        CHECK(plateaus_in_first_ten(true, seed) <= 2);
    }
}

TEST_CASE("training is seed-deterministic and epochs=0 is a no-op") {
    auto tiny = tiny_batch();
    TrainConfig tc;
    tc.epochs = 10;
    tc.adam.lr = 1e-3;
    auto cfg = fit_to(ModelConfig{}, tiny.meta);

    MtpoolModel a(cfg);
    auto log_a = train(a, tiny, tc);
    MtpoolModel b(cfg);
    auto log_b = train(b, tiny, tc);
    REQUIRE(log_a.epochs.size() == 10);
    for (std::size_t e = 0; e < 10; ++e) {
        CHECK(log_a.epochs[e].mean_loss == log_b.epochs[e].mean_loss);
        CHECK(log_a.epochs[e].train_accuracy == log_b.epochs[e].train_accuracy);
    }
    CHECK(snapshot(a) == snapshot(b));

    MtpoolModel c(cfg);
    const auto before = snapshot(c);
    tc.epochs = 0;
    CHECK(train(c, tiny, tc).epochs.empty());
    CHECK(snapshot(c) == before);
}

TEST_CASE("mini-batch training path and validation split") {
    auto ds = small_data();
    MtpoolModel model(small_config(ds.meta));
    TrainConfig tc;
    tc.epochs = 3;
    tc.full_batch_limit = 4;
    tc.batch_size = 5;
    tc.validation_fraction = 0.25;
    const auto dir = scratch_dir("valsplit");
    tc.best_checkpoint = dir / "best.ckpt";
    Trainer trainer(model, tc);
    auto log = trainer.run(ds);
    CHECK(log.epochs.size() == 3);
    REQUIRE(log.best_validation_accuracy.has_value());
    for (const auto& e : log.epochs) CHECK(e.validation_accuracy.has_value());
    CHECK(fs::exists(dir / "best.ckpt"));
    CHECK(trainer.optimizer_state().step == 3 * 2);
    fs::remove_all(dir);

    data::Dataset empty;
    empty.meta = ds.meta;
    MtpoolModel other(small_config(ds.meta));
    CHECK_THROWS_WITH_AS(train(other, empty, tc), doctest::Contains("no samples"), DimensionError);
    CHECK_THROWS_AS(Trainer(other, TrainConfig{.batch_size = 0}), ConfigError);
}

TEST_CASE("training rejects a dataset that does not fit the model") {
    auto ds = small_data();
    MtpoolModel model(small_config(ds.meta));
    auto other = data::make_synthetic({2, 3, 16, 2, 1});
    CHECK_THROWS_AS(train(model, other, {}), DimensionError);
    CHECK_THROWS_AS(evaluate(model, other), DimensionError);
}

TEST_CASE("checkpoint: load then save is byte-identical and evaluation is bitwise stable") {
    auto ds = small_data();
    for (auto kind : {pool::PoolKind::variational, pool::PoolKind::memory, pool::PoolKind::mean}) {
        INFO(pool::pool_kind_name(kind));
        auto cfg = small_config(ds.meta);
        cfg.pooling = kind;
        MtpoolModel model(cfg);
        TrainConfig tc;
        tc.epochs = 2;
        Trainer trainer(model, tc);
        trainer.run(ds);
        const auto bytes = serialize_checkpoint(model, &trainer.optimizer_state(), {trainer.epoch(), 0.25});

        auto loaded = deserialize_checkpoint(bytes);
        CHECK(loaded.meta.epoch == 2);
        CHECK(loaded.meta.best_metric == 0.25);
        CHECK(loaded.adam.step == trainer.optimizer_state().step);
        CHECK(serialize_checkpoint(*loaded.model, &loaded.adam, loaded.meta) == bytes);

        auto m1 = evaluate(model, ds);
        auto m2 = evaluate(*loaded.model, ds);
        CHECK(m1.mean_loss == m2.mean_loss);
        CHECK(m1.predictions == m2.predictions);
        for (std::size_t i = 0; i < ds.size(); ++i)
            CHECK(model.predict_proba(ds.samples[i].series) == loaded.model->predict_proba(ds.samples[i].series));

        const auto dir = scratch_dir("ckpt");
        save_checkpoint(dir / "m.ckpt", trainer);
        auto from_file = load_checkpoint(dir / "m.ckpt");
        CHECK(serialize_checkpoint(*from_file.model, &from_file.adam, from_file.meta) ==
              serialize_checkpoint(model, &trainer.optimizer_state(), {trainer.epoch(), trainer.best_metric()}));
        CHECK_FALSE(fs::exists(dir / "m.ckpt.tmp"));
        fs::remove_all(dir);
    }
}

TEST_CASE("checkpoint: untrained model carries no optimizer moments") {
    auto ds = small_data();
    MtpoolModel model(small_config(ds.meta));
    AdamState fresh;
    auto bytes = serialize_checkpoint(model, &fresh, {});
    CHECK(bytes == serialize_checkpoint(model, nullptr, {}));
    auto loaded = deserialize_checkpoint(bytes);
    CHECK(loaded.adam.step == 0);
    CHECK(loaded.adam.m.empty());
}

TEST_CASE("checkpoint: corrupt or inconsistent files are rejected") {
    auto ds = small_data();
    auto cfg = small_config(ds.meta);
    MtpoolModel model(cfg);
    const auto bytes = serialize_checkpoint(model, nullptr, {});

    auto wrong_magic = bytes;
    wrong_magic[0] = 'X';
    CHECK_THROWS_WITH_AS(deserialize_checkpoint(wrong_magic), doctest::Contains("not an MTPool"), CheckpointError);

    auto wrong_version = bytes;
    wrong_version[8] = 9;
    CHECK_THROWS_WITH_AS(deserialize_checkpoint(wrong_version), doctest::Contains("version 9"), CheckpointError);

    auto truncated = bytes;
    truncated.resize(bytes.size() - 3);
    CHECK_THROWS_WITH_AS(deserialize_checkpoint(truncated), doctest::Contains("truncated"), CheckpointError);

    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_WITH_AS(deserialize_checkpoint(trailing), doctest::Contains("trailing"), CheckpointError);

    auto widened = cfg;
    widened.gnn_widths = {9};
    CHECK_THROWS_WITH_AS(deserialize_checkpoint(with_config(bytes, to_json(widened).dump())),
                         doctest::Contains("has shape"), CheckpointError);

    auto deeper = cfg;
    deeper.gnn_widths = {8, 8};
    CHECK_THROWS_WITH_AS(deserialize_checkpoint(with_config(bytes, to_json(deeper).dump())),
                         doctest::Contains("missing array"), CheckpointError);

    auto shallower = cfg;
    shallower.batch_norm = false;
    CHECK_THROWS_WITH_AS(deserialize_checkpoint(with_config(bytes, to_json(shallower).dump())),
                         doctest::Contains("unexpected array"), CheckpointError);

    CHECK_THROWS_AS(deserialize_checkpoint(with_config(bytes, "{not json")), CheckpointError);
    CHECK_THROWS_AS(deserialize_checkpoint(with_config(bytes, R"({"c1": 2.0, "num_series": 4})")), ConfigError);
    CHECK_THROWS_WITH_AS(load_checkpoint("/nonexistent/m.ckpt"), doctest::Contains("/nonexistent/m.ckpt"),
                         CheckpointError);
}

TEST_CASE("embedding export: row and column counts, PCA companion") {
    auto ds = small_data();
    MtpoolModel model(small_config(ds.meta));
    const auto dir = scratch_dir("embed");
    export_embeddings(model, ds, dir / "emb.csv");
    auto lines = read_lines(dir / "emb.csv");
    const std::size_t d = model.pooling().output_width();
    REQUIRE(lines.size() == ds.size() + 1);
    CHECK(lines[0].rfind("sample_index,label,e0", 0) == 0);
    for (const auto& l : lines) CHECK(field_count(l) == 2 + d);
    CHECK(lines[3].rfind("2," + std::to_string(ds.samples[2].label) + ",", 0) == 0);

    auto pca = read_lines(dir / "emb_pca.csv");
    REQUIRE(pca.size() == ds.size() + 1);
    CHECK(pca[0] == "sample_index,label,pc1,pc2");
    for (const auto& l : pca) CHECK(field_count(l) == 4);
    CHECK_THROWS_WITH(export_embeddings(model, ds, "/proc/mtpool_forbidden/emb.csv"),
                      doctest::Contains("/proc/mtpool_forbidden"));
    fs::remove_all(dir);
}

TEST_CASE("PCA of two-dimensional data is a rotation or reflection of the centered data") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 3 + static_cast<std::size_t>(rng.uniform(0, 20));
        std::vector<std::vector<double>> rows(n);
        double mx = 0, my = 0;
        for (auto& r : rows) {
            r = {rng.uniform(-3, 3), rng.uniform(-1, 1) * (trial % 3 + 1)};
            mx += r[0] / n;
            my += r[1] / n;
        }
        auto y = pca_2d(rows);
        REQUIRE(y.size() == n);
        double sy0 = 0, sy1 = 0;
        for (std::size_t i = 0; i < n; ++i) {
            sy0 += y[i][0];
            sy1 += y[i][1];
            // |y_i| equals the centered norm, and pairwise distances are preserved.
            CHECK(std::hypot(y[i][0], y[i][1]) == doctest::Approx(std::hypot(rows[i][0] - mx, rows[i][1] - my)).epsilon(1e-9));
            for (std::size_t j = 0; j < i; ++j)
                CHECK(std::hypot(y[i][0] - y[j][0], y[i][1] - y[j][1]) ==
                      doctest::Approx(std::hypot(rows[i][0] - rows[j][0], rows[i][1] - rows[j][1])).epsilon(1e-9));
        }
        CHECK(std::abs(sy0) <= 1e-9);
        CHECK(std::abs(sy1) <= 1e-9);
    }
    auto one_dim = pca_2d({{1.0}, {3.0}});
    CHECK(one_dim[0][1] == 0.0);
    CHECK(std::abs(one_dim[0][0]) == doctest::Approx(1.0));
}

TEST_CASE("assignment export: node counts, single-cluster layer, pigeonhole") {
    auto ds = data::make_synthetic({2, 6, 16, 2, 4});
    for (auto kind : {pool::PoolKind::variational, pool::PoolKind::memory}) {
        auto cfg = small_config(ds.meta);
        cfg.pooling = kind;
        MtpoolModel model(cfg);
        const auto schedule = model.pooling().schedule();
        REQUIRE(schedule == std::vector<std::size_t>{3, 1});
        auto layers = argmax_assignments(model, ds.samples[0].series);
        REQUIRE(layers.size() == 2);
        std::size_t n_in = 6;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            CHECK(layers[l].cluster_of_node.size() == n_in);
            CHECK(layers[l].clusters == schedule[l]);
            std::set<std::size_t> used(layers[l].cluster_of_node.begin(), layers[l].cluster_of_node.end());
            CHECK(used.size() <= schedule[l]);
            CHECK(used.size() + layers[l].unused_clusters.size() == schedule[l]);
            for (auto u : layers[l].unused_clusters) CHECK(used.count(u) == 0);
            n_in = schedule[l];
        }
        for (auto c : layers[1].cluster_of_node) CHECK(c == 0);

        const auto dir = scratch_dir("assign");
        auto paths = export_assignments(model, ds.samples[0].series, dir / "a.csv");
        REQUIRE(paths.size() == 3);
        CHECK(paths[0] == dir / "a_layer0.csv");
        CHECK(paths[2] == dir / "a_unused.csv");
        auto l0 = read_lines(paths[0]);
        CHECK(l0[0] == "node,cluster");
        CHECK(l0.size() == 7);
        auto l1 = read_lines(paths[1]);
        REQUIRE(l1.size() == 4);
        for (std::size_t i = 1; i < l1.size(); ++i) CHECK(l1[i] == std::to_string(i - 1) + ",0");
        auto unused = read_lines(paths[2]);
        CHECK(unused[0] == "layer,cluster");
        CHECK(unused.size() == 1 + layers[0].unused_clusters.size());
        fs::remove_all(dir);
    }
}

TEST_CASE("adjacency dump is a square CSV with row sums of one") {
    auto ds = small_data();
    MtpoolModel model(small_config(ds.meta));
    auto a = sample_adjacency(model, ds.samples[0].series);
    CHECK(a.shape == Shape{4, 4});
    for (std::size_t i = 0; i < 4; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < 4; ++j) s += a(i, j);
        CHECK((std::abs(s - 1.0) <= 1e-12 || s == 0.0));
    }
    std::istringstream csv(adjacency_csv(a));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "node,n0,n1,n2,n3");
    std::size_t rows = 0;
    while (std::getline(csv, line)) {
        CHECK(field_count(line) == 5);
        ++rows;
    }
    CHECK(rows == 4);
}

TEST_CASE("model config JSON round trip and validation") {
    ModelConfig c;
    c.num_series = 3;
    c.series_length = 12;
    c.num_classes = 2;
    c.pool_clusters = {2, 1};
    c.batch_norm_graph_stats_in_eval = false;
    auto back = model_config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK_THROWS_WITH_AS(model_config_from_json({{"colour", 1}}), doctest::Contains("colour"), ConfigError);
    CHECK_THROWS_AS(model_config_from_json({{"batch_norm_eval", "sometimes"}}), ConfigError);
    CHECK_THROWS_AS(model_config_from_json({{"heads", "two"}}), ConfigError);
    auto bad = c;
    bad.pool_clusters = {2, 2, 1};
    CHECK_THROWS_AS(MtpoolModel{bad}, ConfigError);
    bad = c;
    bad.kernel_sizes = {13};
    CHECK_THROWS_WITH_AS(MtpoolModel{bad}, doctest::Contains("exceeds series length"), ConfigError);
    bad = c;
    bad.num_classes = 0;
    CHECK_THROWS_AS(MtpoolModel{bad}, ConfigError);
}
