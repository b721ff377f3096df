#include "mtpool/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

namespace mtpool {

namespace {

constexpr char kMagic[8] = {'M', 'T', 'P', 'O', 'O', 'L', 'C', 'K'};

class Writer {
public:
    void u32(std::uint32_t v) { le(v, 4); }
    void u64(std::uint64_t v) { le(v, 8); }
    void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
    void bytes(const void* p, std::size_t n) {
        auto b = static_cast<const std::uint8_t*>(p);
        out.insert(out.end(), b, b + n);
    }
    void array(const std::string& name, const Shape& shape, std::span<const double> values) {
        u32(static_cast<std::uint32_t>(name.size()));
        bytes(name.data(), name.size());
        u32(static_cast<std::uint32_t>(shape.size()));
        for (auto d : shape) u64(d);
        for (double v : values) f64(v);
    }

    std::vector<std::uint8_t> out;

private:
    void le(std::uint64_t v, int width) {
        for (int i = 0; i < width; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    std::uint64_t u64() { return le(8); }
    double f64() { return std::bit_cast<double>(le(8)); }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == in_.size(); }

private:
    void need(std::size_t n) {
        if (in_.size() - pos_ < n) throw CheckpointError("checkpoint is truncated");
    }
    std::uint64_t le(int width) {
        need(static_cast<std::size_t>(width));
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
        pos_ += static_cast<std::size_t>(width);
        return v;
    }

    const std::vector<std::uint8_t>& in_;
    std::size_t pos_ = 0;
};

struct Array {
    Shape shape;
    std::vector<double> values;
};

void restore(const std::string& name, const Shape& expected, std::vector<double>& target,
             std::map<std::string, Array>& arrays) {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw CheckpointError("checkpoint is missing array '" + name + "'");
    if (it->second.shape != expected)
        throw CheckpointError("array '" + name + "' has shape " + shape_str(it->second.shape) + ", config implies " +
                              shape_str(expected));
    target = std::move(it->second.values);
    arrays.erase(it);
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(MtpoolModel& model, const AdamState* adam, const CheckpointMeta& meta) {
    Writer w;
    w.bytes(kMagic, sizeof kMagic);
    w.u32(kCheckpointVersion);
    const std::string config = to_json(model.config()).dump();
    w.u64(config.size());
    w.bytes(config.data(), config.size());
    w.u64(meta.epoch);
    w.f64(meta.best_metric);
    const bool with_moments = adam && adam->step > 0;
    w.u64(with_moments ? adam->step : 0);

    auto params = model.parameters();
    auto buffers = model.buffers();
    const std::size_t count = params.size() * (with_moments ? 3 : 1) + buffers.size();
    w.u32(static_cast<std::uint32_t>(count));
    for (const auto& p : params) w.array("param/" + p.name, p.tensor->shape, p.tensor->values);
    for (const auto& b : buffers) w.array("buffer/" + b.name, {b.values->size()}, *b.values);
    if (with_moments) {
        if (adam->m.size() != params.size()) throw CheckpointError("optimizer state does not match the model");
        for (std::size_t i = 0; i < params.size(); ++i) w.array("adam.m/" + params[i].name, params[i].tensor->shape, adam->m[i]);
        for (std::size_t i = 0; i < params.size(); ++i) w.array("adam.v/" + params[i].name, params[i].tensor->shape, adam->v[i]);
    }
    return std::move(w.out);
}

void save_checkpoint(const std::filesystem::path& path, MtpoolModel& model, const AdamState* adam,
                     const CheckpointMeta& meta) {
    const auto bytes = serialize_checkpoint(model, adam, meta);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw CheckpointError("cannot write '" + tmp.string() + "'");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw CheckpointError("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path& path, Trainer& trainer) {
    save_checkpoint(path, trainer.model(), &trainer.optimizer_state(), {trainer.epoch(), trainer.best_metric()});
}

LoadedCheckpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    if (r.str(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) throw CheckpointError("not an MTPool checkpoint");
    const auto version = r.u32();
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    const auto config_len = r.u64();
    ModelConfig config;
    try {
        config = model_config_from_json(nlohmann::json::parse(r.str(config_len)));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint config is not valid JSON: ") + e.what());
    }
    LoadedCheckpoint out;
    out.meta.epoch = r.u64();
    out.meta.best_metric = r.f64();
    out.adam.step = r.u64();

    std::map<std::string, Array> arrays;
    const auto count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.str(r.u32());
        Array a;
        const auto rank = r.u32();
        for (std::uint32_t k = 0; k < rank; ++k) a.shape.push_back(r.u64());
        const auto n = numel(a.shape);
        if (n > bytes.size() / 8) throw CheckpointError("array '" + name + "' is larger than the file");
        a.values.resize(n);
        for (auto& v : a.values) v = r.f64();
        if (!arrays.emplace(name, std::move(a)).second) throw CheckpointError("duplicate array '" + name + "'");
    }
    if (!r.done()) throw CheckpointError("trailing bytes after the last array");

    out.model = std::make_unique<MtpoolModel>(config);
    auto params = out.model->parameters();
    for (const auto& p : params) restore("param/" + p.name, p.tensor->shape, p.tensor->values, arrays);
    for (const auto& b : out.model->buffers()) restore("buffer/" + b.name, {b.values->size()}, *b.values, arrays);
    if (out.adam.step > 0) {
        out.adam.m.resize(params.size());
        out.adam.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            restore("adam.m/" + params[i].name, params[i].tensor->shape, out.adam.m[i], arrays);
            restore("adam.v/" + params[i].name, params[i].tensor->shape, out.adam.v[i], arrays);
        }
    }
    if (!arrays.empty()) throw CheckpointError("checkpoint has unexpected array '" + arrays.begin()->first + "'");
    return out;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace mtpool
