#include "mtpool/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace mtpool {

namespace {

using nlohmann::json;

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

json parse_value(const std::string& raw) {
    if (raw.empty()) return "";
    try {
        return json::parse(raw);
    } catch (const json::parse_error&) {
    }
    if (raw.find(',') != std::string::npos) {
        try {
            return json::parse("[" + raw + "]");
        } catch (const json::parse_error&) {
        }
    }
    return raw;
}

json parse_sections(const std::string& text) {
    static const std::set<std::string> sections{"data", "model", "train", "output"};
    json out = json::object();
    std::string section;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto cut = line.find_first_of("#;");
        const auto body = trim(cut == std::string::npos ? line : line.substr(0, cut));
        if (body.empty()) continue;
        const auto where = "config line " + std::to_string(line_no) + ": ";
        if (body.front() == '[') {
            if (body.back() != ']') throw ConfigError(where + "malformed section header");
            section = trim(std::string_view(body).substr(1, body.size() - 2));
            if (!sections.count(section)) throw ConfigError(where + "unknown section [" + section + "]");
            if (!out.contains(section)) out[section] = json::object();
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
        if (section.empty()) throw ConfigError(where + "key outside of a section");
        const auto key = trim(std::string_view(body).substr(0, eq));
        if (key.empty()) throw ConfigError(where + "empty key");
        if (out[section].contains(key)) throw ConfigError(where + "duplicate key '" + key + "'");
        out[section][key] = parse_value(trim(std::string_view(body).substr(eq + 1)));
    }
    return out;
}

void reject_unknown(const json& j, const std::string& section, const std::set<std::string>& known) {
    if (!j.is_object()) throw ConfigError("section '" + section + "' must be an object");
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
}

template <typename T>
void read(const json& j, const char* key, T& target) {
    if (j.contains(key)) target = j.at(key).get<T>();
}

void read_path(const json& j, const char* key, std::filesystem::path& target) {
    if (j.contains(key)) target = j.at(key).get<std::string>();
}

std::size_t positive(std::size_t v, const char* what) {
    if (v == 0) throw ConfigError(std::string(what) + " must be positive");
    return v;
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("run config must be an object");
    reject_unknown(j, "top level", {"data", "model", "train", "output"});
    RunConfig c;
    try {
        if (j.contains("data")) {
            const auto& d = j["data"];
            reject_unknown(d, "data",
                           {"train_path", "test_path", "uea_root", "uea_name", "classes", "series", "length",
                            "per_class", "synthetic_seed", "normalize"});
            read_path(d, "train_path", c.data.train_path);
            read_path(d, "test_path", c.data.test_path);
            read_path(d, "uea_root", c.data.uea_root);
            read(d, "uea_name", c.data.uea_name);
            read(d, "classes", c.data.synthetic.num_classes);
            read(d, "series", c.data.synthetic.num_series);
            read(d, "length", c.data.synthetic.length);
            read(d, "per_class", c.data.synthetic.per_class);
            read(d, "synthetic_seed", c.data.synthetic.seed);
            read(d, "normalize", c.data.normalize);
        }
        if (j.contains("model")) {
            json m = j["model"];
            if (!m.is_object()) throw ConfigError("section 'model' must be an object");
            for (const char* shape_key : {"num_series", "series_length", "num_classes"})
                if (m.contains(shape_key))
                    throw ConfigError(std::string("'") + shape_key + "' is taken from the data, not the config");
            for (const char* list_key : {"kernel_sizes", "gnn_widths", "pool_clusters"})
                if (m.contains(list_key) && !m[list_key].is_array()) m[list_key] = json::array({m[list_key]});
            c.model = model_config_from_json(m);
        }
        if (j.contains("train")) {
            const auto& t = j["train"];
            reject_unknown(t, "train",
                           {"epochs", "lr", "batch_size", "full_batch_limit", "seed", "validation_fraction",
                            "patience"});
            read(t, "epochs", c.train.epochs);
            read(t, "lr", c.train.adam.lr);
            read(t, "batch_size", c.train.batch_size);
            read(t, "full_batch_limit", c.train.full_batch_limit);
            read(t, "seed", c.train.seed);
            read(t, "validation_fraction", c.train.validation_fraction);
            read(t, "patience", c.train.patience);
        }
        if (j.contains("output")) {
            reject_unknown(j["output"], "output", {"dir"});
            read_path(j["output"], "dir", c.output_dir);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("run config: ") + e.what());
    }
    c.model.seed = c.train.seed;
    if (!c.data.train_path.empty() && !c.data.uea_name.empty())
        throw ConfigError("set either train_path or uea_name, not both");
    if (!c.data.uea_name.empty() && c.data.uea_root.empty()) throw ConfigError("uea_name needs uea_root");
    positive(c.data.synthetic.num_classes, "classes");
    positive(c.data.synthetic.num_series, "series");
    positive(c.data.synthetic.length, "length");
    positive(c.data.synthetic.per_class, "per_class");
    positive(c.train.batch_size, "batch_size");
    if (!(c.train.adam.lr > 0.0)) throw ConfigError("lr must be positive");
    return c;
}

RunConfig parse_run_config(const std::string& text) {
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ConfigError(std::string("config JSON: ") + e.what());
        }
        return run_config_from_json(j);
    }
    return run_config_from_json(parse_sections(text));
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_run_config(text.str());
}

json to_json(const RunConfig& c) {
    json model = to_json(c.model);
    for (const char* k : {"num_series", "series_length", "num_classes", "seed"}) model.erase(k);
    json data{{"classes", c.data.synthetic.num_classes}, {"series", c.data.synthetic.num_series},
              {"length", c.data.synthetic.length},        {"per_class", c.data.synthetic.per_class},
              {"synthetic_seed", c.data.synthetic.seed},  {"normalize", c.data.normalize}};
    if (!c.data.train_path.empty()) data["train_path"] = c.data.train_path.string();
    if (!c.data.test_path.empty()) data["test_path"] = c.data.test_path.string();
    if (!c.data.uea_root.empty()) data["uea_root"] = c.data.uea_root.string();
    if (!c.data.uea_name.empty()) data["uea_name"] = c.data.uea_name;
    return json{{"data", data},
                {"model", model},
                {"train",
                 {{"epochs", c.train.epochs},
                  {"lr", c.train.adam.lr},
                  {"batch_size", c.train.batch_size},
                  {"full_batch_limit", c.train.full_batch_limit},
                  {"seed", c.train.seed},
                  {"validation_fraction", c.train.validation_fraction},
                  {"patience", c.train.patience}}},
                {"output", {{"dir", c.output_dir.string()}}}};
}

LoadedData load_data(const DataConfig& config) {
    LoadedData out;
    if (!config.uea_name.empty()) {
        auto split = data::load_uea(config.uea_root, config.uea_name);
        out.train = std::move(split.train);
        out.test = std::move(split.test);
        out.name = config.uea_name;
    } else if (!config.train_path.empty()) {
        out.train = data::load_ts_dataset(config.train_path);
        if (!config.test_path.empty()) out.test = data::load_ts_dataset(config.test_path);
        out.name = out.train.meta.name;
    } else {
        auto split = data::make_synthetic_split(config.synthetic);
        out.train = std::move(split.train);
        out.test = std::move(split.test);
        out.name = out.train.meta.name;
    }
    if (out.test && (out.test->meta.num_series != out.train.meta.num_series ||
                     out.test->meta.series_length != out.train.meta.series_length ||
                     out.test->meta.classes != out.train.meta.classes))
        throw DimensionError("train and test sets of '" + out.name + "' have different shapes");
    if (config.normalize) {
        out.train = data::znormalize(out.train);
        if (out.test) out.test = data::znormalize(*out.test);
    }
    return out;
}

}  // namespace mtpool
