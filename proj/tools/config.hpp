#pragma once

#include "mhalab/arch_search.hpp"
#include "mhalab/decomposition.hpp"
#include "mhalab/mha.hpp"
#include "mhalab/synthetic.hpp"

#include "json.hpp"

#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace cli {

using nlohmann::json;

/// Malformed or incomplete configuration; exit code 1.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reads one JSON object, remembering which keys were consumed so that
/// leftovers can be reported as unknown.
class Fields {
public:
    Fields(const json& obj, std::string path);

    bool has(const std::string& key) const { return obj_.contains(key); }
    const json& raw(const std::string& key);

    double number(const std::string& key);
    double number(const std::string& key, double fallback);
    std::size_t count(const std::string& key);
    std::size_t count(const std::string& key, std::size_t fallback);
    std::uint64_t seed(const std::string& key);
    std::uint64_t seed(const std::string& key, std::uint64_t fallback);
    bool flag(const std::string& key, bool fallback);
    std::string text(const std::string& key);
    std::string text(const std::string& key, const std::string& fallback);
    std::vector<double> numbers(const std::string& key);
    std::vector<std::size_t> counts(const std::string& key);
    Fields object(const std::string& key);

    /// Throws ConfigError naming every key that was never read.
    void finish() const;

private:
    const json& require(const std::string& key);
    std::string where(const std::string& key) const;

    const json& obj_;
    std::string path_;
    std::set<std::string> used_;
};

json load_config(const std::string& path);

mhalab::RegressionTask parse_task(Fields task);

struct ProjectionSpec {
    std::size_t H = 0, d_k = 0;
    double mix = 1.0;
    std::uint64_t seed = 0;
    double key_scale = 1.0;
    std::vector<double> value_contamination; ///< empty means none
    std::string weights_file;                ///< replaces the family when set
};

ProjectionSpec parse_projection(Fields proj, bool allow_mix);
mhalab::ProjectionSet build_projection(const ProjectionSpec& spec, std::size_t p);
mhalab::WeightScheme parse_weights(Fields weights, std::size_t H);

} // namespace cli
