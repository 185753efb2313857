#include "breachcast/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <unistd.h>

#include <json.hpp>

#include "breachcast/error.hpp"

namespace breachcast::io {
namespace {

using nlohmann::json;

// ---- Text helpers -----------------------------------------------------------

std::string_view trim(std::string_view s) {
    const auto ws = " \t\r";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        auto line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        pos = end + 1;
    }
    return lines;
}

// Splits one CSV row on commas that are outside quotes and parentheses.
// Quoted fields lose their quotes and "" becomes ".
std::vector<std::string> split_fields(std::string_view line, const std::string& where) {
    std::vector<std::string> fields;
    std::string cur;
    int depth = 0;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cur += ch;
            }
            continue;
        }
        if (ch == '"') {
            quoted = true;
        } else if (ch == '(') {
            ++depth;
            cur += ch;
        } else if (ch == ')') {
            if (--depth < 0) throw ParseError(where + ", column " + std::to_string(fields.size() + 1) + ": unbalanced ')'");
            cur += ch;
        } else if (ch == ',' && depth == 0) {
            fields.emplace_back(trim(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (quoted) throw ParseError(where + ": unterminated quote");
    if (depth != 0) throw ParseError(where + ", column " + std::to_string(fields.size() + 1) + ": unbalanced '('");
    fields.emplace_back(trim(cur));
    return fields;
}

std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + '"';
}

std::optional<double> to_double(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc{} || r.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

std::string format_digits(double v, int digits) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, digits);
    return {buf, r.ptr};
}

std::string shortest(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, r.ptr};
}

// Shortest decimal y with forward(y) == target, searched near `guess`.
template <class Forward>
std::string format_preimage(double target, double guess, Forward forward) {
    for (int digits = 1; digits <= 17; ++digits) {
        const auto s = format_digits(guess, digits);
        if (forward(*to_double(s)) == target) return s;
    }
    double up = guess, down = guess;
    for (int i = 0; i < 8; ++i) {
        up = std::nextafter(up, INFINITY);
        down = std::nextafter(down, -INFINITY);
        if (forward(up) == target) return shortest(up);
        if (forward(down) == target) return shortest(down);
    }
    return shortest(guess);
}

// Header line "# breachcast <kind> key=value ...".
std::map<std::string, std::string> parse_marker(std::string_view line, std::string_view kind, const std::string& where) {
    const std::string prefix = "# breachcast " + std::string(kind);
    if (line.substr(0, prefix.size()) != prefix) {
        throw SchemaError(where + ": missing '" + prefix + "' header line");
    }
    std::map<std::string, std::string> kv;
    std::istringstream in{std::string(line.substr(prefix.size()))};
    std::string tok;
    while (in >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw ParseError(where + ": malformed header token '" + tok + "'");
        kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    const auto it = kv.find("schema_version");
    if (it == kv.end()) throw SchemaError(where + ": header lacks schema_version");
    if (it->second != std::to_string(schema_version)) {
        throw SchemaError(where + ": schema_version " + it->second + " is not the supported version " +
                          std::to_string(schema_version));
    }
    return kv;
}

std::string marker(std::string_view kind, std::string_view extra = {}) {
    std::string s = "# breachcast " + std::string(kind) + " schema_version=" + std::to_string(schema_version);
    if (!extra.empty()) s += " " + std::string(extra);
    return s + "\n";
}

// ---- Dataset layout ----------------------------------------------------------

struct ColumnSpec {
    const char* name;
    const char* unit;
};

constexpr ColumnSpec dataset_columns[] = {
    {"name", "-"},
    {"dam_height", "m"},
    {"released_volume", "volume_factor m3"},
    {"level_drop", "m"},
    {"final_height", "m"},
    {"initial_depth_ratio", "-"},
    {"embankment_slope", "-"},
    {"crest_width", "m"},
    {"basin_exponent", "-"},
    {"side_angle", "deg"},
    {"peak_discharge", "m3/s"},
    {"final_width", "m"},
};
constexpr std::size_t column_count = std::size(dataset_columns);

std::string column_header() {
    std::string s;
    for (std::size_t i = 0; i < column_count; ++i) {
        if (i) s += ',';
        s += std::string(dataset_columns[i].name) + " [" + dataset_columns[i].unit + "]";
    }
    return s + "\n";
}

using DefaultFn = stochastic::DistSpec (*)();
constexpr DefaultFn spec_defaults[] = {default_embankment_slope, default_crest_width, default_basin_exponent,
                                       default_side_angle};

std::string nearest_existing_dir(const std::filesystem::path& p) {
    auto parent = p.parent_path();
    return parent.empty() ? std::string(".") : parent.string();
}

json to_json_doubles(std::span<const double> v) {
    json a = json::array();
    for (double x : v) a.push_back(x);
    return a;
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
    if (!obj.is_object()) throw ParseError(where + ": expected an object");
    for (const auto& [key, _] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
    }
}

void check_schema(const json& doc, const std::string& where) {
    if (!doc.is_object() || !doc.contains("schema_version")) throw SchemaError(where + ": missing schema_version");
    const auto& v = doc.at("schema_version");
    if (!v.is_number_integer() || v.get<int>() != schema_version) {
        throw SchemaError(where + ": schema_version " + v.dump() + " is not the supported version " +
                          std::to_string(schema_version));
    }
}

json parse_json(std::string_view text, const std::string& where) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(where + ": " + e.what());
    }
}

double number_at(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
    const auto& v = obj.at(key);
    if (!v.is_number()) throw ConfigError(where + ": '" + key + "' must be a number");
    return v.get<double>();
}

stochastic::DistSpec spec_at(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
    const auto& v = obj.at(key);
    if (v.is_number()) return stochastic::Constant{v.get<double>()};
    if (!v.is_string()) throw ConfigError(where + ": '" + key + "' must be a number or a distribution string");
    try {
        return stochastic::parse_distribution(v.get<std::string>());
    } catch (const Error& e) {
        throw ParseError(where + ": '" + key + "': " + e.what());
    }
}

}  // namespace

std::string format_number(double value) { return format_digits(value, 17); }

void write_text_atomic(const std::filesystem::path& path, std::string_view contents) {
    auto tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot create '" + tmp.string() + "' in " + nearest_existing_dir(path));
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw IoError("write to '" + tmp.string() + "' failed");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot rename onto '" + path.string() + "'");
    }
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

stochastic::DistSpec default_embankment_slope() { return stochastic::TruncatedNormal{2.16, 0.66, 1.0, 10.0}; }
stochastic::DistSpec default_crest_width() { return stochastic::LogNormal{1.55, 0.51}; }
stochastic::DistSpec default_basin_exponent() { return stochastic::Uniform{1.0, 4.0}; }
stochastic::DistSpec default_side_angle() { return stochastic::Uniform{45.0, 90.0}; }

Dataset parse_dataset(std::string_view text, std::string_view source) {
    const std::string src(source);
    const auto lines = split_lines(text);
    std::size_t i = 0;
    while (i < lines.size() && trim(lines[i]).empty()) ++i;
    if (i == lines.size()) throw SchemaError(src + ": empty dataset");
    const auto kv = parse_marker(trim(lines[i]), "dataset", src + ":" + std::to_string(i + 1));
    Dataset ds;
    if (const auto it = kv.find("volume_factor"); it != kv.end()) {
        const auto f = to_double(it->second);
        if (!f || !(*f > 0.0) || !std::isfinite(*f)) throw ParseError(src + ": volume_factor must be a positive number");
        ds.volume_factor = *f;
    } else {
        throw SchemaError(src + ": header lacks volume_factor");
    }

    bool have_columns = false;
    for (++i; i < lines.size(); ++i) {
        const auto line = trim(lines[i]);
        if (line.empty() || line.front() == '#') continue;
        const std::string where = src + ":" + std::to_string(i + 1);
        const auto fields = split_fields(line, where);
        if (!have_columns) {
            if (fields.size() != column_count) throw SchemaError(where + ": expected " + std::to_string(column_count) + " columns");
            for (std::size_t c = 0; c < column_count; ++c) {
                const auto name = trim(std::string_view(fields[c]).substr(0, fields[c].find('[')));
                if (name != dataset_columns[c].name) {
                    throw SchemaError(where + ", column " + std::to_string(c + 1) + ": expected '" +
                                      dataset_columns[c].name + "'");
                }
            }
            have_columns = true;
            continue;
        }
        if (fields.size() != column_count) {
            throw ParseError(where + ": expected " + std::to_string(column_count) + " fields, found " +
                             std::to_string(fields.size()));
        }
        const auto cell = [&](std::size_t c) {
            return where + ", column " + std::to_string(c + 1) + " (" + dataset_columns[c].name + ")";
        };
        const auto number = [&](std::size_t c) {
            const auto v = to_double(fields[c]);
            if (!v || !std::isfinite(*v)) throw ParseError(cell(c) + ": '" + fields[c] + "' is not a number");
            return *v;
        };
        const auto positive = [&](std::size_t c) {
            const double v = number(c);
            if (!(v > 0.0)) throw ValidationError(cell(c) + ": must be positive");
            return v;
        };
        const auto spec = [&](std::size_t c, DefaultFn fallback) {
            if (fields[c] == "default") return fallback();
            try {
                return stochastic::parse_distribution(fields[c]);
            } catch (const Error& e) {
                throw ParseError(cell(c) + ": " + e.what());
            }
        };
        inference::ObservationRecord r;
        r.name = fields[0];
        if (r.name.empty()) throw ParseError(cell(0) + ": empty name");
        r.knowns.dam_height = positive(1);
        r.knowns.released_volume = positive(2) * ds.volume_factor;
        r.knowns.level_drop = positive(3);
        r.knowns.final_height = positive(4);
        r.knowns.initial_depth_ratio = positive(5);
        r.inputs.embankment_slope = spec(6, default_embankment_slope);
        r.inputs.crest_width = spec(7, default_crest_width);
        r.inputs.basin_exponent = spec(8, default_basin_exponent);
        r.inputs.side_angle = spec(9, default_side_angle);
        r.log_peak = std::log10(positive(10));
        if (!fields[11].empty()) r.log_width = std::log10(positive(11));
        try {
            inference::validate(r);
        } catch (const ValidationError& e) {
            throw ValidationError(where + ": " + e.what());
        }
        ds.records.push_back(std::move(r));
    }
    if (!have_columns) throw SchemaError(src + ": missing column header row");
    return ds;
}

Dataset read_dataset(const std::filesystem::path& path) { return parse_dataset(read_text(path), path.string()); }

std::string serialize_dataset(const Dataset& ds) {
    const double f = ds.volume_factor;
    std::string out = marker("dataset", "volume_factor=" + shortest(f));
    out += column_header();
    const auto log10_of = [](double y) { return std::log10(y); };
    for (const auto& r : ds.records) {
        const auto& k = r.knowns;
        std::vector<std::string> cells{
            csv_field(r.name),
            shortest(k.dam_height),
            format_preimage(k.released_volume, k.released_volume / f, [f](double y) { return y * f; }),
            shortest(k.level_drop),
            shortest(k.final_height),
            shortest(k.initial_depth_ratio)};
        const stochastic::DistSpec* specs[] = {&r.inputs.embankment_slope, &r.inputs.crest_width,
                                               &r.inputs.basin_exponent, &r.inputs.side_angle};
        for (std::size_t s = 0; s < 4; ++s) {
            cells.push_back(*specs[s] == spec_defaults[s]() ? std::string("default")
                                                            : csv_field(stochastic::format_distribution(*specs[s])));
        }
        cells.push_back(format_preimage(r.log_peak, std::pow(10.0, r.log_peak), log10_of));
        cells.push_back(r.log_width ? format_preimage(*r.log_width, std::pow(10.0, *r.log_width), log10_of) : "");
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c) out += ',';
            out += cells[c];
        }
        out += '\n';
    }
    return out;
}

predict::PredictionCase parse_case(std::string_view text) {
    const std::string where = "case";
    const auto doc = parse_json(text, where);
    check_schema(doc, where);
    reject_unknown(doc, {"schema_version", "name", "dam", "reservoir", "breach", "erosion"}, where);
    predict::PredictionCase c;
    c.name = doc.value("name", std::string("case"));
    const auto& dam = doc.at("dam");
    reject_unknown(dam, {"height", "crest_width", "embankment_slope", "side_angle"}, where + ".dam");
    c.dam_height = spec_at(dam, "height", where + ".dam");
    c.crest_width = spec_at(dam, "crest_width", where + ".dam");
    c.embankment_slope = spec_at(dam, "embankment_slope", where + ".dam");
    c.side_angle = spec_at(dam, "side_angle", where + ".dam");
    if (!doc.contains("reservoir") || !doc.contains("breach") || !doc.contains("erosion")) {
        throw ConfigError(where + ": needs dam, reservoir, breach and erosion blocks");
    }
    const auto& res = doc.at("reservoir");
    reject_unknown(res, {"basin_exponent", "level_drop", "released_volume"}, where + ".reservoir");
    c.basin_exponent = spec_at(res, "basin_exponent", where + ".reservoir");
    c.level_drop = number_at(res, "level_drop", where + ".reservoir");
    c.released_volume = number_at(res, "released_volume", where + ".reservoir");
    const auto& br = doc.at("breach");
    reject_unknown(br, {"final_height", "initial_depth_ratio"}, where + ".breach");
    c.final_height = number_at(br, "final_height", where + ".breach");
    c.initial_depth_ratio = number_at(br, "initial_depth_ratio", where + ".breach");
    const auto& er = doc.at("erosion");
    reject_unknown(er, {"gamma_location", "gamma_scale", "velocity_exponent", "radius_exponent"}, where + ".erosion");
    c.erosion.gamma_location = number_at(er, "gamma_location", where + ".erosion");
    c.erosion.gamma_scale = number_at(er, "gamma_scale", where + ".erosion");
    c.erosion.velocity_exponent = number_at(er, "velocity_exponent", where + ".erosion");
    c.erosion.radius_exponent = number_at(er, "radius_exponent", where + ".erosion");
    predict::validate(c);
    return c;
}

predict::PredictionCase read_case(const std::filesystem::path& path) {
    try {
        return parse_case(read_text(path));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

RunConfig parse_run_config(std::string_view text) {
    const std::string where = "config";
    const auto doc = parse_json(text, where);
    check_schema(doc, where);
    reject_unknown(doc,
                   {"schema_version", "chains", "iterations", "seed", "residual_model", "initial_draws", "max_draws",
                    "target_precision", "min_effective_samples", "jump_scale"},
                   where);
    RunConfig c;
    const auto count = [&](const char* key) -> std::optional<std::size_t> {
        if (!doc.contains(key)) return std::nullopt;
        const auto& v = doc.at(key);
        if (!v.is_number_unsigned()) throw ConfigError(where + ": '" + key + "' must be a non-negative integer");
        return v.get<std::size_t>();
    };
    const auto real = [&](const char* key) -> std::optional<double> {
        if (!doc.contains(key)) return std::nullopt;
        return number_at(doc, key, where);
    };
    c.chains = count("chains");
    c.iterations = count("iterations");
    if (const auto s = count("seed")) c.seed = static_cast<std::uint64_t>(*s);
    c.initial_draws = count("initial_draws");
    c.max_draws = count("max_draws");
    c.target_precision = real("target_precision");
    c.min_effective_samples = real("min_effective_samples");
    c.jump_scale = real("jump_scale");
    if (doc.contains("residual_model")) {
        if (!doc.at("residual_model").is_string()) throw ConfigError(where + ": 'residual_model' must be a string");
        c.residual_model = doc.at("residual_model").get<std::string>();
        parse_residual_kind(*c.residual_model);
    }
    return c;
}

inference::ResidualKind parse_residual_kind(std::string_view text) {
    if (text == "gaussian") return inference::ResidualKind::gaussian;
    if (text == "zero-noise") return inference::ResidualKind::zero_noise;
    throw ConfigError("unknown residual model '" + std::string(text) + "' (expected gaussian or zero-noise)");
}

std::string_view residual_kind_name(inference::ResidualKind kind) {
    return kind == inference::ResidualKind::gaussian ? "gaussian" : "zero-noise";
}

std::string hydrograph_csv(const forward::Hydrograph& h) {
    std::string out = marker("hydrograph");
    out += "time [s],discharge [m3/s],top_width [m],bottom_level [m],reservoir_level [m]\n";
    for (const auto& s : h.samples) {
        out += format_number(s.time) + ',' + format_number(s.discharge) + ',' + format_number(s.top_width) + ',' +
               format_number(s.bottom_level) + ',' + format_number(s.reservoir_level) + '\n';
    }
    return out;
}

void write_archive(const mcmc::ChainArchive& a, const std::filesystem::path& path) {
    std::string csv = marker("chain-archive");
    csv += "chain,iteration";
    for (const auto& n : a.names()) csv += ',' + n;
    csv += ",log_posterior,accepted\n";
    for (std::size_t g = 0; g < a.generations(); ++g) {
        for (std::size_t c = 0; c < a.chains(); ++c) {
            csv += std::to_string(c) + ',' + std::to_string(g);
            for (double v : a.state(g, c)) csv += ',' + format_number(v);
            csv += ',' + format_number(a.log_posterior(g, c)) + ',' + (a.accepted(g, c) ? '1' : '0') + '\n';
        }
    }
    json meta;
    meta["schema_version"] = schema_version;
    meta["parameters"] = a.names();
    meta["chains"] = a.chains();
    meta["generations"] = a.generations();
    meta["seed"] = a.seed;
    meta["jump_scale"] = a.jump_scale;
    meta["jitter"] = to_json_doubles(a.jitter);
    meta["burn_in"] = a.burn_in;
    meta["thinning_lag"] = a.thinning_lag;
    meta["residual_model"] = a.residual_model;
    meta["budget_exhausted"] = a.budget_exhausted;
    meta["elapsed_seconds"] = a.elapsed_seconds;
    if (!a.target_settings.empty()) meta["target_settings"] = a.target_settings;
    write_text_atomic(path, csv);
    auto sidecar = path;
    sidecar += ".json";
    write_text_atomic(sidecar, meta.dump(2) + "\n");
}

mcmc::ChainArchive read_archive(const std::filesystem::path& path) {
    auto sidecar = path;
    sidecar += ".json";
    const std::string where = sidecar.string();
    const auto meta = parse_json(read_text(sidecar), where);
    check_schema(meta, where);
    mcmc::ChainArchive a(meta.at("parameters").get<std::vector<std::string>>(), meta.at("chains").get<std::size_t>());
    const auto gens = meta.at("generations").get<std::size_t>();
    a.seed = meta.at("seed").get<std::uint64_t>();
    a.jump_scale = meta.at("jump_scale").get<double>();
    a.jitter = meta.at("jitter").get<std::vector<double>>();
    a.burn_in = meta.at("burn_in").get<std::size_t>();
    a.thinning_lag = meta.at("thinning_lag").get<std::size_t>();
    a.residual_model = meta.at("residual_model").get<std::string>();
    a.budget_exhausted = meta.at("budget_exhausted").get<bool>();
    a.elapsed_seconds = meta.at("elapsed_seconds").get<double>();
    if (meta.contains("target_settings")) a.target_settings = meta.at("target_settings").get<std::map<std::string, double>>();

    const std::string text = read_text(path);
    const auto lines = split_lines(text);
    const std::string src = path.string();
    if (lines.empty()) throw SchemaError(src + ": empty archive");
    parse_marker(lines[0], "chain-archive", src + ":1");
    const std::size_t d = a.dimension(), m = a.chains();
    std::vector<double> states(m * d), logp(m);
    std::vector<std::uint8_t> flags(m);
    std::size_t row = 0;
    for (std::size_t i = 2; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        const std::string at = src + ":" + std::to_string(i + 1);
        const auto f = split_fields(lines[i], at);
        if (f.size() != d + 4) throw ParseError(at + ": wrong field count");
        const std::size_t g = row / m, c = row % m;
        if (f[0] != std::to_string(c) || f[1] != std::to_string(g)) throw ParseError(at + ": rows out of order");
        for (std::size_t p = 0; p < d + 1; ++p) {
            const auto v = to_double(f[2 + p]);
            if (!v) throw ParseError(at + ", column " + std::to_string(3 + p) + ": not a number");
            (p < d ? states[c * d + p] : logp[c]) = *v;
        }
        flags[c] = f[d + 3] == "1" ? 1 : 0;
        if (++row % m == 0) a.append(states, logp, flags);
    }
    if (row % m != 0 || a.generations() != gens) throw ParseError(src + ": generation count disagrees with the sidecar");
    return a;
}

std::string diagnostics_json(const mcmc::DiagnosticsReport& r, const mcmc::ChainArchive& a) {
    const auto& names = a.names();
    json doc;
    doc["schema_version"] = schema_version;
    doc["chains"] = a.chains();
    doc["generations"] = a.generations();
    doc["burn_in"] = {{"generations", r.burn_in.generations}, {"converged", r.burn_in.converged}};
    doc["analysis_start"] = r.analysis_start;
    doc["thinning_lag"] = r.effective.thinning_lag;
    doc["acceptance_rate"] = r.acceptance;
    doc["chain_acceptance_rate"] = to_json_doubles(r.chain_acceptance);
    json ess, denom, final_psrf;
    for (std::size_t p = 0; p < names.size(); ++p) {
        ess[names[p]] = r.effective.count[p];
        denom[names[p]] = r.effective.denominator[p];
        final_psrf[names[p]] = r.final_psrf.univariate[p];
    }
    doc["effective_samples"] = ess;
    doc["autocorrelation_denominator"] = denom;
    doc["final_psrf"] = {{"univariate", final_psrf}, {"multivariate", r.final_psrf.multivariate}};
    json trace;
    trace["generation"] = r.trace.generation;
    trace["multivariate"] = r.trace.multivariate;
    json uni;
    for (std::size_t p = 0; p < names.size(); ++p) {
        std::vector<double> col;
        for (const auto& row : r.trace.univariate) col.push_back(row[p]);
        uni[names[p]] = col;
    }
    trace["univariate"] = uni;
    doc["psrf_trace"] = trace;
    return doc.dump(2) + "\n";
}

void write_posterior(const analysis::PosteriorSamples& s, const std::filesystem::path& path) {
    std::string out = marker("posterior", "residual_model=" + std::string(residual_kind_name(s.kind)));
    for (std::size_t p = 0; p < s.names.size(); ++p) out += (p ? "," : "") + s.names[p];
    out += ",log_posterior\n";
    for (std::size_t i = 0; i < s.draws.size(); ++i) {
        for (double v : s.draws[i]) out += format_number(v) + ',';
        out += (s.log_posterior.empty() ? std::string() : format_number(s.log_posterior[i])) + '\n';
    }
    write_text_atomic(path, out);
}

analysis::PosteriorSamples read_posterior(const std::filesystem::path& path) {
    const std::string src = path.string();
    const std::string text = read_text(path);
    const auto lines = split_lines(text);
    if (lines.size() < 2) throw SchemaError(src + ": truncated posterior file");
    const auto kv = parse_marker(lines[0], "posterior", src + ":1");
    analysis::PosteriorSamples s;
    const auto model = kv.find("residual_model");
    if (model == kv.end()) throw SchemaError(src + ": header lacks residual_model");
    s.kind = parse_residual_kind(model->second);
    auto header = split_fields(lines[1], src + ":2");
    if (header.empty() || header.back() != "log_posterior") throw SchemaError(src + ": last column must be log_posterior");
    header.pop_back();
    s.names = header;
    if (s.names != inference::parameter_names(s.kind)) throw SchemaError(src + ": columns do not match the residual model");
    bool all_logp = true;
    for (std::size_t i = 2; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        const std::string at = src + ":" + std::to_string(i + 1);
        const auto f = split_fields(lines[i], at);
        if (f.size() != s.names.size() + 1) throw ParseError(at + ": wrong field count");
        std::vector<double> row;
        for (std::size_t p = 0; p < s.names.size(); ++p) {
            const auto v = to_double(f[p]);
            if (!v) throw ParseError(at + ", column " + std::to_string(p + 1) + ": not a number");
            row.push_back(*v);
        }
        s.draws.push_back(std::move(row));
        const auto lp = to_double(f.back());
        if (lp) s.log_posterior.push_back(*lp);
        else all_logp = false;
    }
    if (!all_logp) s.log_posterior.clear();
    return s;
}

void write_gof(std::span<const analysis::GofRecord> gof, std::uint64_t seed, std::size_t resamples,
               const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::string samples = marker("gof-samples");
    samples += "record,replicate,model_peak [log10 m3/s],noise_peak [log10],residual_peak [log10],"
               "model_width [log10 m],noise_width [log10],residual_width [log10]\n";
    for (const auto& g : gof) {
        const auto rq = g.residual_peak();
        const auto rw = g.residual_width();
        for (std::size_t k = 0; k < g.model_peak.size(); ++k) {
            samples += csv_field(g.name) + ',' + std::to_string(k) + ',' + format_number(g.model_peak[k]) + ',' +
                       format_number(g.noise_peak[k]) + ',' + format_number(rq[k]);
            if (g.observed_width) {
                samples += ',' + format_number(g.model_width[k]) + ',' + format_number(g.noise_width[k]) + ',' +
                           format_number(rw[k]);
            } else {
                samples += ",,,";
            }
            samples += '\n';
        }
    }
    write_text_atomic(dir / "samples.csv", samples);

    stochastic::RngStream rng(seed, 0x676f66);
    std::string pct = marker("gof-percentiles");
    pct += "component,rank,record,percentile [-],median [-],q25 [-],q75 [-],q05 [-],q95 [-]\n";
    json summary;
    summary["schema_version"] = schema_version;
    const std::pair<analysis::Component, const char*> components[] = {
        {analysis::Component::overall, "overall"}, {analysis::Component::peak, "peak"}, {analysis::Component::width, "width"}};
    for (const auto& [comp, label] : components) {
        auto boot = rng.substream(static_cast<std::uint64_t>(comp));
        const auto seq = analysis::percentile_sequence(gof, comp, resamples, boot);
        for (std::size_t i = 0; i < seq.size(); ++i) {
            const auto& p = seq[i];
            pct += std::string(label) + ',' + std::to_string(i) + ',' + csv_field(p.name) + ',' +
                   format_number(p.percentile) + ',' + format_number(p.bands.median) + ',' +
                   format_number(p.bands.q25) + ',' + format_number(p.bands.q75) + ',' +
                   format_number(p.bands.q05) + ',' + format_number(p.bands.q95) + '\n';
        }
        auto boot_summary = rng.substream(16 + static_cast<std::uint64_t>(comp));
        const auto s = analysis::summarize(gof, comp, resamples, boot_summary);
        summary[label] = {{"mean_residual", s.mean_residual},
                          {"mean_residual_error", s.mean_residual_error},
                          {"interval95", s.interval95},
                          {"interval95_error", s.interval95_error},
                          {"variance",
                           {{"residual", s.variance.residual},
                            {"model_error", s.variance.model_error},
                            {"noise", s.variance.noise},
                            {"cross", s.variance.cross}}}};
    }
    summary["residual_correlation"] = analysis::residual_correlation(gof);
    json failures;
    for (const auto& g : gof) failures[g.name] = g.failures;
    summary["failures"] = failures;
    write_text_atomic(dir / "percentiles.csv", pct);
    write_text_atomic(dir / "summary.json", summary.dump(2) + "\n");
}

void write_ensemble(const predict::EnsembleSummary& e, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::string members = marker("ensemble-members");
    members += "member,ok,peak_discharge [m3/s],final_width [m],time_to_peak [s],duration [s],failure_mode,"
               "wider_than_dam,scaling [-]\n";
    for (const auto& m : e.members) {
        members += std::to_string(m.index) + ',' + (m.ok ? '1' : '0') + ',' + format_number(m.peak_discharge) + ',' +
                   format_number(m.final_width) + ',' + format_number(m.time_to_peak) + ',' +
                   format_number(m.duration) + ',' +
                   (m.failure_mode == forward::FailureMode::total ? "total" : "partial") + ',' +
                   (m.wider_than_dam ? '1' : '0') + ',' + format_number(m.scaling) + '\n';
    }
    write_text_atomic(dir / "members.csv", members);

    std::string bands = marker("ensemble-bands");
    bands += "time [s]";
    for (double p : e.levels) bands += ",q" + shortest(p) + " [m3/s]";
    bands += '\n';
    for (std::size_t g = 0; g < e.time_grid.size(); ++g) {
        bands += format_number(e.time_grid[g]);
        for (const auto& b : e.bands) bands += ',' + format_number(b[g]);
        bands += '\n';
    }
    write_text_atomic(dir / "bands.csv", bands);

    std::string hist = marker("ensemble-histograms");
    hist += "quantity,bin_lo [log10],bin_hi [log10],count\n";
    const std::pair<const predict::Histogram*, const char*> hs[] = {{&e.peak_histogram, "peak_discharge"},
                                                                    {&e.width_histogram, "final_width"}};
    for (const auto& [h, label] : hs) {
        for (std::size_t b = 0; b < h->counts.size(); ++b) {
            hist += std::string(label) + ',' + format_number(h->edges[b]) + ',' + format_number(h->edges[b + 1]) +
                    ',' + std::to_string(h->counts[b]) + '\n';
        }
    }
    write_text_atomic(dir / "histograms.csv", hist);

    json s;
    s["schema_version"] = schema_version;
    s["members"] = e.members.size();
    s["failed"] = e.failed;
    s["total_failures"] = e.total_failures;
    s["partial_failures"] = e.partial_failures;
    std::size_t wider = 0;
    double max_total_peak_time = 0.0, min_partial_duration = INFINITY;
    for (const auto& m : e.members) {
        if (!m.ok) continue;
        wider += m.wider_than_dam ? 1 : 0;
        if (m.failure_mode == forward::FailureMode::total) {
            max_total_peak_time = std::max(max_total_peak_time, m.time_to_peak);
        } else {
            min_partial_duration = std::min(min_partial_duration, m.duration);
        }
    }
    s["wider_than_dam"] = wider;
    s["max_total_time_to_peak_s"] = max_total_peak_time;
    s["min_partial_duration_s"] = std::isfinite(min_partial_duration) ? json(min_partial_duration) : json(nullptr);
    s["levels"] = e.levels;
    write_text_atomic(dir / "summary.json", s.dump(2) + "\n");
}

}  // namespace breachcast::io
