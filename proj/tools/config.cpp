#include "config.hpp"

#include "mhalab/diversity.hpp"
#include "mhalab/error.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace cli {

Fields::Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError("config: '" + path_ + "' must be an object");
}

std::string Fields::where(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
}

const json& Fields::require(const std::string& key) {
    if (!obj_.contains(key)) {
        throw ConfigError("config: missing required field '" + where(key) + "'");
    }
    used_.insert(key);
    return obj_.at(key);
}

const json& Fields::raw(const std::string& key) { return require(key); }

double Fields::number(const std::string& key) {
    const json& v = require(key);
    if (!v.is_number() || !std::isfinite(v.get<double>())) {
        throw ConfigError("config: field '" + where(key) + "' must be a finite number");
    }
    return v.get<double>();
}

double Fields::number(const std::string& key, double fallback) {
    return has(key) ? number(key) : fallback;
}

std::size_t Fields::count(const std::string& key) {
    const json& v = require(key);
    if (!v.is_number_unsigned()) {
        throw ConfigError("config: field '" + where(key) + "' must be a nonnegative integer");
    }
    return v.get<std::size_t>();
}

std::size_t Fields::count(const std::string& key, std::size_t fallback) {
    return has(key) ? count(key) : fallback;
}

std::uint64_t Fields::seed(const std::string& key) {
    const json& v = require(key);
    if (!v.is_number_unsigned()) {
        throw ConfigError("config: field '" + where(key) + "' must be a nonnegative integer");
    }
    return v.get<std::uint64_t>();
}

std::uint64_t Fields::seed(const std::string& key, std::uint64_t fallback) {
    return has(key) ? seed(key) : fallback;
}

bool Fields::flag(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = require(key);
    if (!v.is_boolean()) throw ConfigError("config: field '" + where(key) + "' must be true or false");
    return v.get<bool>();
}

std::string Fields::text(const std::string& key) {
    const json& v = require(key);
    if (!v.is_string()) throw ConfigError("config: field '" + where(key) + "' must be a string");
    return v.get<std::string>();
}

std::string Fields::text(const std::string& key, const std::string& fallback) {
    return has(key) ? text(key) : fallback;
}

std::vector<double> Fields::numbers(const std::string& key) {
    const json& v = require(key);
    if (!v.is_array()) throw ConfigError("config: field '" + where(key) + "' must be an array");
    std::vector<double> out;
    for (const auto& x : v) {
        if (!x.is_number() || !std::isfinite(x.get<double>())) {
            throw ConfigError("config: field '" + where(key) + "' must hold finite numbers");
        }
        out.push_back(x.get<double>());
    }
    return out;
}

std::vector<std::size_t> Fields::counts(const std::string& key) {
    const json& v = require(key);
    if (!v.is_array()) throw ConfigError("config: field '" + where(key) + "' must be an array");
    std::vector<std::size_t> out;
    for (const auto& x : v) {
        if (!x.is_number_unsigned()) {
            throw ConfigError("config: field '" + where(key) + "' must hold nonnegative integers");
        }
        out.push_back(x.get<std::size_t>());
    }
    return out;
}

Fields Fields::object(const std::string& key) { return Fields(require(key), where(key)); }

void Fields::finish() const {
    std::string unknown;
    for (const auto& [key, value] : obj_.items()) {
        if (!used_.contains(key)) unknown += (unknown.empty() ? "'" : ", '") + where(key) + "'";
    }
    if (!unknown.empty()) throw ConfigError("config: unknown field " + unknown);
}

json load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    json doc;
    try {
        doc = json::parse(buf.str());
    } catch (const json::parse_error& e) {
        throw ConfigError("config: parse error at byte " + std::to_string(e.byte) + ": " +
                          e.what());
    }
    if (!doc.is_object()) throw ConfigError("config: top level must be an object");
    if (!doc.contains("version")) throw ConfigError("config: missing required field 'version'");
    if (!doc["version"].is_number_integer() || doc["version"] != 1) {
        throw ConfigError("config: unsupported 'version' (expected 1)");
    }
    return doc;
}

mhalab::RegressionTask parse_task(Fields f) {
    mhalab::TaskSpec spec;
    try {
        spec.family = mhalab::parse_family(f.text("family"));
        spec.law = mhalab::parse_input_law(f.text("law", "gaussian"));
    } catch (const mhalab::Error& e) {
        throw ConfigError(std::string("config: task: ") + e.what());
    }
    spec.p = f.count("p");
    spec.noise_sd = f.number("noise_sd");
    spec.heteroscedastic = f.flag("heteroscedastic", false);
    spec.amplitude = f.number("amplitude", 1.0);
    spec.frequency = f.number("frequency", 2.0);
    spec.components = f.count("components", 3);
    spec.param_seed = f.seed("param_seed", 0);
    f.finish();
    return mhalab::RegressionTask(spec);
}

ProjectionSpec parse_projection(Fields f, bool allow_mix) {
    ProjectionSpec spec;
    if (f.has("weights_file")) {
        spec.weights_file = f.text("weights_file");
    } else {
        spec.H = f.count("H");
        spec.d_k = f.count("d_k");
        if (allow_mix) spec.mix = f.number("mix");
        spec.seed = f.seed("seed", 0);
    }
    spec.key_scale = f.number("key_scale", 1.0);
    if (f.has("value_contamination")) spec.value_contamination = f.numbers("value_contamination");
    f.finish();
    return spec;
}

mhalab::ProjectionSet build_projection(const ProjectionSpec& spec, std::size_t p) {
    mhalab::ProjectionSet proj =
        spec.weights_file.empty()
            ? mhalab::with_key_scale(
                  mhalab::make_projection_family(p, spec.d_k, spec.H, spec.mix, spec.seed),
                  spec.key_scale)
            : mhalab::projection_set_from_keys(mhalab::read_weight_file(spec.weights_file));
    if (!spec.weights_file.empty() && spec.key_scale != 1.0) proj = mhalab::with_key_scale(proj, spec.key_scale);
    if (proj.p() != p) {
        throw ConfigError("config: projections have p = " + std::to_string(proj.p()) +
                          " but the task has p = " + std::to_string(p));
    }
    if (!spec.value_contamination.empty()) {
        proj = mhalab::contaminate_values(proj, spec.value_contamination);
    }
    return proj;
}

mhalab::WeightScheme parse_weights(Fields f, std::size_t H) {
    const std::string scheme = f.text("scheme");
    mhalab::WeightScheme w;
    try {
        const mhalab::WeightKind kind = mhalab::parse_weight_kind(scheme);
        if (kind == mhalab::WeightKind::custom) {
            w = mhalab::make_custom_weights(f.numbers("alpha"));
            if (w.H() != H) {
                throw ConfigError("config: weights.alpha has " + std::to_string(w.H()) +
                                  " entries for " + std::to_string(H) + " heads");
            }
        } else {
            w = mhalab::make_weights(kind, H, f.number("rho", 1.0));
        }
    } catch (const mhalab::Error& e) {
        throw ConfigError(std::string("config: weights: ") + e.what());
    }
    f.finish();
    return w;
}

} // namespace cli
