#include "mtpool/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace mtpool::data {

namespace {

std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

std::string lower(std::string_view s) {
    std::string r(s);
    std::transform(r.begin(), r.end(), r.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return r;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            parts.push_back(s.substr(start));
            return parts;
        }
        parts.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

std::vector<std::string_view> words(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        std::size_t j = i;
        while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

bool parse_bool(std::string_view token, std::size_t line, std::string_view directive) {
    const auto t = lower(token);
    if (t == "true") return true;
    if (t == "false") return false;
    throw ParseError(line, "@" + std::string(directive) + " expects true or false, got '" + std::string(token) + "'");
}

std::size_t parse_count(std::string_view token, std::size_t line, std::string_view directive) {
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc() || p != token.data() + token.size() || v == 0)
        throw ParseError(line, "@" + std::string(directive) + " expects a positive integer, got '" +
                                   std::string(token) + "'");
    return v;
}

double parse_value(std::string_view token, std::size_t line) {
    auto t = trim(token);
    if (!t.empty() && t.front() == '+') t.remove_prefix(1);
    double v = 0.0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || p != t.data() + t.size() || !std::isfinite(v))
        throw ParseError(line, "non-numeric value '" + std::string(trim(token)) + "'");
    return v;
}

std::string format_value(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

}  // namespace

ParseError::ParseError(std::size_t line, const std::string& message)
    : std::runtime_error(line ? "line " + std::to_string(line) + ": " + message : message),
      line_(line),
      detail_(message) {}

void Dataset::validate() const {
    if (meta.label_names.size() != meta.classes)
        throw std::invalid_argument("dataset '" + meta.name + "': class count does not match label names");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (s.series.rank() != 2 || s.num_series() != meta.num_series || s.length() != meta.series_length)
            throw std::invalid_argument("dataset '" + meta.name + "': sample " + std::to_string(i) + " has shape " +
                                        shape_str(s.series.shape) + ", expected [" +
                                        std::to_string(meta.num_series) + "x" +
                                        std::to_string(meta.series_length) + "]");
        if (s.label >= meta.classes)
            throw std::invalid_argument("dataset '" + meta.name + "': sample " + std::to_string(i) +
                                        " has label " + std::to_string(s.label) + " >= " +
                                        std::to_string(meta.classes));
    }
}

ParsedTs parse_ts(std::istream& in) {
    ParsedTs out;
    TsHeader& h = out.header;
    bool in_data = false;
    bool have_labels = false;
    std::optional<std::size_t> dims_seen;
    std::optional<std::size_t> length_seen;
    std::string raw;
    std::size_t line_no = 0;

    while (std::getline(in, raw)) {
        ++line_no;
        const auto line = trim(raw);
        if (line.empty() || line.front() == '#') continue;

        if (line.front() == '@') {
            if (in_data) throw ParseError(line_no, "header directive after @data");
            auto tokens = words(line.substr(1));
            if (tokens.empty()) throw ParseError(line_no, "empty header directive");
            const auto key = lower(tokens.at(0));
            auto need_arg = [&](std::size_t n) {
                if (tokens.size() < n + 1) throw ParseError(line_no, "@" + key + " is missing its value");
            };
            if (key == "problemname") {
                need_arg(1);
                h.problem_name = std::string(tokens[1]);
            } else if (key == "timestamps") {
                need_arg(1);
                h.timestamps = parse_bool(tokens[1], line_no, key);
                if (*h.timestamps) throw ParseError(line_no, "time-stamped series are not supported");
            } else if (key == "missing") {
                need_arg(1);
                h.missing = parse_bool(tokens[1], line_no, key);
            } else if (key == "univariate") {
                need_arg(1);
                h.univariate = parse_bool(tokens[1], line_no, key);
            } else if (key == "dimensions" || key == "dimension") {
                need_arg(1);
                h.dimensions = parse_count(tokens[1], line_no, key);
            } else if (key == "equallength") {
                need_arg(1);
                h.equal_length = parse_bool(tokens[1], line_no, key);
                if (!*h.equal_length) throw ParseError(line_no, "unequal-length series are not supported");
            } else if (key == "serieslength") {
                need_arg(1);
                h.series_length = parse_count(tokens[1], line_no, key);
            } else if (key == "classlabel") {
                need_arg(1);
                if (!parse_bool(tokens[1], line_no, key))
                    throw ParseError(line_no, "unlabelled data is not supported (@classLabel false)");
                if (tokens.size() < 3) throw ParseError(line_no, "@classLabel true declares no labels");
                for (std::size_t i = 2; i < tokens.size(); ++i) {
                    std::string name(tokens[i]);
                    if (std::find(h.class_labels.begin(), h.class_labels.end(), name) != h.class_labels.end())
                        throw ParseError(line_no, "duplicate class label '" + name + "'");
                    h.class_labels.push_back(std::move(name));
                }
                have_labels = true;
            } else if (key == "data") {
                if (!have_labels) throw ParseError(line_no, "@data reached without a @classLabel declaration");
                if (h.univariate && *h.univariate && h.dimensions && *h.dimensions != 1)
                    throw ParseError(line_no, "@univariate true conflicts with @dimensions " +
                                                  std::to_string(*h.dimensions));
                in_data = true;
                out.label_names = h.class_labels;
            } else {
                throw ParseError(line_no, "unknown header directive '@" + std::string(tokens[0]) + "'");
            }
            continue;
        }

        if (!in_data) throw ParseError(line_no, "data record before @data");

        auto fields = split(line, ':');
        if (fields.size() < 2) throw ParseError(line_no, "record has no class label field");
        const std::string label(trim(fields.back()));
        fields.pop_back();
        const auto it = std::find(out.label_names.begin(), out.label_names.end(), label);
        if (it == out.label_names.end()) throw ParseError(line_no, "unknown class label '" + label + "'");

        const std::size_t dims = fields.size();
        if (h.univariate && *h.univariate && dims != 1)
            throw ParseError(line_no, "@univariate true but record has " + std::to_string(dims) + " dimensions");
        if (h.dimensions && dims != *h.dimensions)
            throw ParseError(line_no, "record has " + std::to_string(dims) + " dimensions, @dimensions declares " +
                                          std::to_string(*h.dimensions));
        if (dims_seen && dims != *dims_seen)
            throw ParseError(line_no, "record has " + std::to_string(dims) + " dimensions, earlier records have " +
                                          std::to_string(*dims_seen));
        dims_seen = dims;

        std::vector<double> values;
        std::size_t length = 0;
        for (std::size_t d = 0; d < dims; ++d) {
            auto tokens = split(fields[d], ',');
            if (d == 0) length = tokens.size();
            if (tokens.size() != length)
                throw ParseError(line_no, "ragged dimension lengths: dimension " + std::to_string(d) + " has " +
                                              std::to_string(tokens.size()) + " values, dimension 0 has " +
                                              std::to_string(length));
            for (auto tok : tokens) values.push_back(parse_value(tok, line_no));
        }
        if (h.series_length && length != *h.series_length)
            throw ParseError(line_no, "series length " + std::to_string(length) + " does not match @seriesLength " +
                                          std::to_string(*h.series_length));
        if (length_seen && length != *length_seen)
            throw ParseError(line_no, "series length " + std::to_string(length) + " differs from earlier records (" +
                                          std::to_string(*length_seen) + ")");
        length_seen = length;

        TimeSeriesSample sample;
        sample.series = Tensor({dims, length}, std::move(values));
        sample.label = static_cast<std::size_t>(it - out.label_names.begin());
        out.samples.push_back(std::move(sample));
    }
    if (!in_data) throw ParseError(0, "missing @data section");
    return out;
}

ParsedTs parse_ts_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    try {
        return parse_ts(in);
    } catch (const ParseError& e) {
        throw ParseError(e.line(), path.string() + ": " + e.detail());
    }
}

Dataset to_dataset(ParsedTs parsed, std::string fallback_name) {
    Dataset ds;
    ds.meta.name = parsed.header.problem_name.value_or(std::move(fallback_name));
    ds.meta.label_names = std::move(parsed.label_names);
    ds.meta.classes = ds.meta.label_names.size();
    ds.meta.train_size = parsed.samples.size();
    if (!parsed.samples.empty()) {
        ds.meta.num_series = parsed.samples.front().num_series();
        ds.meta.series_length = parsed.samples.front().length();
    } else {
        ds.meta.num_series = parsed.header.dimensions.value_or(0);
        ds.meta.series_length = parsed.header.series_length.value_or(0);
    }
    ds.samples = std::move(parsed.samples);
    ds.validate();
    return ds;
}

Dataset load_ts_dataset(const std::filesystem::path& path) {
    return to_dataset(parse_ts_file(path), path.stem().string());
}

void write_ts(std::ostream& out, const Dataset& ds) {
    out << "@problemName " << ds.meta.name << '\n';
    out << "@timeStamps false\n";
    out << "@missing false\n";
    out << "@univariate " << (ds.meta.num_series == 1 ? "true" : "false") << '\n';
    if (ds.meta.num_series != 1) out << "@dimensions " << ds.meta.num_series << '\n';
    out << "@equalLength true\n";
    out << "@seriesLength " << ds.meta.series_length << '\n';
    out << "@classLabel true";
    for (const auto& l : ds.meta.label_names) out << ' ' << l;
    out << "\n@data\n";
    for (const auto& s : ds.samples) {
        const std::size_t n = s.num_series(), T = s.length();
        for (std::size_t v = 0; v < n; ++v) {
            for (std::size_t t = 0; t < T; ++t) {
                if (t) out << ',';
                out << format_value(s.series(v, t));
            }
            out << ':';
        }
        out << ds.meta.label_names.at(s.label) << '\n';
    }
}

void write_ts_file(const std::filesystem::path& path, const Dataset& dataset) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
        write_ts(out, dataset);
        if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

TrainTestSplit load_uea(const std::filesystem::path& root, const std::string& name) {
    auto pick = [&](const std::string& suffix) {
        auto nested = root / name / (name + suffix);
        if (std::filesystem::exists(nested)) return nested;
        return root / (name + suffix);
    };
    const auto train_path = pick("_TRAIN.ts");
    const auto test_path = pick("_TEST.ts");
    for (const auto& p : {train_path, test_path})
        if (!std::filesystem::exists(p)) throw std::runtime_error("dataset file not found: '" + p.string() + "'");
    TrainTestSplit split{load_ts_dataset(train_path), load_ts_dataset(test_path)};
    if (split.train.meta.label_names != split.test.meta.label_names ||
        split.train.meta.num_series != split.test.meta.num_series ||
        split.train.meta.series_length != split.test.meta.series_length)
        throw std::runtime_error("train and test files of '" + name + "' disagree on labels or shape");
    for (auto* d : {&split.train, &split.test}) {
        d->meta.name = name;
        d->meta.train_size = split.train.size();
        d->meta.test_size = split.test.size();
    }
    return split;
}

Dataset znormalize(const Dataset& dataset) {
    Dataset out = dataset;
    for (auto& s : out.samples) {
        const std::size_t n = s.num_series(), T = s.length();
        for (std::size_t v = 0; v < n; ++v) {
            double mean = 0.0;
            for (std::size_t t = 0; t < T; ++t) mean += s.series(v, t);
            mean /= static_cast<double>(T);
            double var = 0.0;
            for (std::size_t t = 0; t < T; ++t) var += (s.series(v, t) - mean) * (s.series(v, t) - mean);
            const double sd = std::sqrt(var / static_cast<double>(T));
            for (std::size_t t = 0; t < T; ++t)
                s.series(v, t) = sd > 0.0 ? (s.series(v, t) - mean) / sd : 0.0;
        }
    }
    return out;
}

Dataset make_synthetic(const SyntheticSpec& spec) {
    if (spec.num_classes == 0 || spec.num_series == 0 || spec.length == 0 || spec.per_class == 0)
        throw ConfigError("synthetic dataset needs every count >= 1");
    const std::size_t M = spec.num_classes, n = spec.num_series, T = spec.length;
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> jitter(-0.3, 0.3);
    std::uniform_real_distribution<double> amp(0.8, 1.2);
    std::normal_distribution<double> noise(0.0, 0.1);
    constexpr double two_pi = 2.0 * std::numbers::pi;

    // Frequencies (cycles per window) stay below a quarter of the sampling rate.
    const double step = std::clamp(static_cast<double>(T) / (4.0 * static_cast<double>(M)), 0.25, 2.0);

    Dataset ds;
    ds.meta.name = "Synthetic";
    ds.meta.num_series = n;
    ds.meta.series_length = T;
    ds.meta.classes = M;
    for (std::size_t k = 0; k < M; ++k) ds.meta.label_names.push_back("c" + std::to_string(k));

    std::vector<double> base(n * T);
    for (std::size_t i = 0; i < M * spec.per_class; ++i) {
        const std::size_t k = i % M;
        const double freq = 1.0 + step * static_cast<double>(k);
        const double coupling = M > 1 ? 0.8 * static_cast<double>(k) / static_cast<double>(M - 1) : 0.0;
        const double shift = jitter(rng);
        for (std::size_t v = 0; v < n; ++v) {
            const double a = amp(rng);
            const double phase = std::numbers::pi * static_cast<double>(v) / static_cast<double>(n) + shift;
            for (std::size_t t = 0; t < T; ++t)
                base[v * T + t] = a * std::sin(two_pi * freq * static_cast<double>(t) / static_cast<double>(T) + phase);
        }
        TimeSeriesSample s;
        s.series = Tensor::zeros({n, T});
        s.label = k;
        for (std::size_t v = 0; v < n; ++v) {
            const std::size_t next = (v + 1) % n;
            for (std::size_t t = 0; t < T; ++t)
                s.series(v, t) = base[v * T + t] + (n > 1 ? coupling * base[next * T + t] : 0.0) + noise(rng);
        }
        ds.samples.push_back(std::move(s));
    }
    ds.meta.train_size = ds.samples.size();
    return ds;
}

TrainTestSplit make_synthetic_split(const SyntheticSpec& spec) {
    SyntheticSpec test_spec = spec;
    test_spec.seed = spec.seed ^ 0x9e3779b97f4a7c15ULL;
    TrainTestSplit split{make_synthetic(spec), make_synthetic(test_spec)};
    for (auto* d : {&split.train, &split.test}) {
        d->meta.train_size = split.train.size();
        d->meta.test_size = split.test.size();
    }
    return split;
}

}  // namespace mtpool::data
