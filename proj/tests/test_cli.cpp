#include "doctest.h"

#include "json.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kSource = MHA_NW_LAB_SOURCE_DIR;
const std::string kCli = MHA_NW_LAB_CLI;

struct Result {
    int code = -1;
    std::string output; ///< stdout and stderr interleaved
};

Result run(const std::string& args, const std::string& env = "") {
    const std::string line = env + (env.empty() ? "" : " ") + "'" + kCli + "' " + args + " 2>&1";
    Result r;
    FILE* pipe = ::popen(line.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buf{};
    std::size_t got = 0;
    while ((got = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), got);
    const int status = ::pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

/// Fresh scratch directory removed at scope exit.
struct Scratch {
    fs::path dir;
    explicit Scratch(const std::string& tag)
        : dir(fs::temp_directory_path() /
              ("mha-nw-lab-cli-" + tag + "-" + std::to_string(::getpid()))) {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }
    fs::path operator/(const std::string& name) const { return dir / name; }
};

json small_decompose() {
    json doc = json::parse(slurp(kSource / "configs/decompose_canonical.json"));
    doc["n"] = 120;
    doc["R"] = 30;
    doc["Q"] = 8;
    return doc;
}

double value_after(const std::string& text, const std::string& key) {
    const auto pos = text.find("\n" + key + " ");
    REQUIRE(pos != std::string::npos);
    return std::strtod(text.c_str() + pos + key.size() + 2, nullptr);
}

} // namespace

TEST_CASE("version flag") {
    const Result r = run("--version");
    CHECK(r.code == 0);
    CHECK(r.output.find("mha-nw-lab 0.1.0") != std::string::npos);
}

TEST_CASE("missing, unknown and malformed config fields") {
    Scratch s("config");
    json doc = small_decompose();
    doc.erase("n");
    spit(s / "no_n.json", doc.dump());
    Result r = run("decompose --config '" + (s / "no_n.json").string() + "' --out '" +
                   (s / "out").string() + "'");
    CHECK(r.code == 1);
    CHECK(r.output.find("'n'") != std::string::npos);
    CHECK_FALSE(fs::exists(s / "out"));

    doc = small_decompose();
    doc["replicates"] = 10;
    spit(s / "extra.json", doc.dump());
    r = run("decompose --config '" + (s / "extra.json").string() + "'");
    CHECK(r.code == 1);
    CHECK(r.output.find("replicates") != std::string::npos);

    doc = small_decompose();
    doc.erase("version");
    spit(s / "unversioned.json", doc.dump());
    r = run("decompose --config '" + (s / "unversioned.json").string() + "'");
    CHECK(r.code == 1);
    CHECK(r.output.find("version") != std::string::npos);

    r = run("decompose --config '" + (s / "absent.json").string() + "'");
    CHECK(r.code == 1);
}

TEST_CASE("decompose writes reports, a manifest, and deterministic tables") {
    Scratch s("decompose");
    spit(s / "small.json", small_decompose().dump(2));
    const std::string cfg = "--config '" + (s / "small.json").string() + "'";

    const Result a = run("decompose " + cfg + " --out '" + (s / "a").string() + "'",
                         "MHA_NW_LAB_THREADS=1");
    CHECK(a.code == 0);
    CHECK(a.output.find("gate identity_residual: PASS") != std::string::npos);
    for (const char* f : {"decomposition.csv", "report.json", "config.json", "MANIFEST"})
        CHECK(fs::exists(s / "a" / f));
    CHECK_FALSE(fs::exists(s / "a" / ".lock"));
    const std::string manifest = slurp(s / "a" / "MANIFEST");
    CHECK(manifest.find("  decomposition.csv\n") != std::string::npos);
    CHECK(manifest.find("  report.json\n") != std::string::npos);

    const Result b = run("decompose " + cfg + " --out '" + (s / "b").string() + "'",
                         "MHA_NW_LAB_THREADS=4");
    CHECK(b.code == 0);
    CHECK(slurp(s / "a/decomposition.csv") == slurp(s / "b/decomposition.csv"));
    CHECK(slurp(s / "a/cov_bound.csv") == slurp(s / "b/cov_bound.csv"));
    CHECK(slurp(s / "a/MANIFEST") == slurp(s / "b/MANIFEST"));

    // The echoed config reproduces the run.
    const Result c = run("decompose --config '" + (s / "a/config.json").string() + "' --out '" +
                         (s / "c").string() + "'");
    CHECK(c.code == 0);
    CHECK(slurp(s / "a/decomposition.csv") == slurp(s / "c/decomposition.csv"));

    const json report = json::parse(slurp(s / "a/report.json"));
    CHECK(report["seed"] == 2024);
    CHECK(report["config"]["n"] == 120);
    CHECK(report.contains("code_version"));
}

TEST_CASE("seed override is applied and echoed") {
    Scratch s("seed");
    spit(s / "small.json", small_decompose().dump());
    const std::string cfg = "--config '" + (s / "small.json").string() + "'";
    CHECK(run("decompose " + cfg + " --out '" + (s / "a").string() + "'").code == 0);
    CHECK(run("decompose " + cfg + " --seed 7 --out '" + (s / "b").string() + "'").code == 0);
    CHECK(slurp(s / "a/decomposition.csv") != slurp(s / "b/decomposition.csv"));
    CHECK(json::parse(slurp(s / "b/config.json"))["seed"] == 7);
}

TEST_CASE("an existing lock refuses the output directory") {
    Scratch s("lock");
    spit(s / "small.json", small_decompose().dump());
    fs::create_directories(s / "out");
    spit(s / "out/.lock", "");
    const Result r = run("decompose --config '" + (s / "small.json").string() + "' --out '" +
                         (s / "out").string() + "'");
    CHECK(r.code == 1);
    CHECK(r.output.find("lock") != std::string::npos);
    CHECK(fs::exists(s / "out/.lock"));
    CHECK_FALSE(fs::exists(s / "out/decomposition.csv"));
}

TEST_CASE("hdi on the fixtures") {
    Result r = run("hdi '" + (kSource / "fixtures/hdi_orthogonal.json").string() + "'");
    CHECK(r.code == 0);
    CHECK(value_after(r.output, "hdi") == doctest::Approx(1.0));
    CHECK(value_after(r.output, "hdi_normalized") == doctest::Approx(1.0));

    r = run("hdi --weights '" + (kSource / "fixtures/hdi_identical.json").string() + "'");
    CHECK(r.code == 0);
    CHECK(value_after(r.output, "hdi") == doctest::Approx(0.75));
    CHECK(std::abs(value_after(r.output, "hdi_normalized")) < 1e-12);
}

TEST_CASE("hdi reports parse offsets and offending heads") {
    Scratch s("hdi");
    const std::string good = slurp(kSource / "fixtures/hdi_orthogonal.json");
    spit(s / "truncated.json", good.substr(0, good.size() / 2));
    Result r = run("hdi '" + (s / "truncated.json").string() + "'");
    CHECK(r.code == 1);
    CHECK(r.output.find("byte") != std::string::npos);

    spit(s / "shape.json",
         R"({"version": 1, "heads": [{"p": 2, "d_k": 1, "data": [1, 0]}, {"p": 3, "d_k": 1, "data": [0, 1, 0]}]})");
    r = run("hdi '" + (s / "shape.json").string() + "'");
    CHECK(r.code == 1);
    CHECK(r.output.find("head 1") != std::string::npos);

    r = run("hdi '" + (kSource / "fixtures/hdi_orthogonal.json").string() + "' --out '" +
            (s / "out").string() + "'");
    CHECK(r.code == 0);
    CHECK(fs::exists(s / "out/hdi.csv"));
}

TEST_CASE("sweep-arch with a prime budget has two rows") {
    Scratch s("prime");
    json doc = json::parse(slurp(kSource / "configs/sweep_arch_prime.json"));
    doc["R"] = 6;
    doc["Q"] = 8;
    doc["n"] = 100;
    spit(s / "prime.json", doc.dump());
    const Result r = run("sweep-arch --config '" + (s / "prime.json").string() + "' --out '" +
                         (s / "out").string() + "'");
    CHECK(r.code == 0);
    const std::string csv = slurp(s / "out/sweep_arch.csv");
    std::size_t lines = 0;
    for (char c : csv) lines += c == '\n';
    CHECK(lines == 3);
}

TEST_CASE("optimize-proj rejects infeasible budgets") {
    Scratch s("optimize");
    json doc = json::parse(slurp(kSource / "configs/optimize_proj.json"));
    doc["H"] = 5;
    spit(s / "bad.json", doc.dump());
    const Result r = run("optimize-proj --config '" + (s / "bad.json").string() + "' --out '" +
                         (s / "out").string() + "'");
    CHECK(r.code == 1);
    CHECK(r.output.find("infeasible") != std::string::npos);
    CHECK_FALSE(fs::exists(s / "out"));
}

TEST_CASE("failed scientific gates exit with 2") {
    Scratch s("gate");
    json doc = json::parse(slurp(kSource / "configs/weights_homogeneous.json"));
    doc["n"] = 100;
    doc["R"] = 20;
    doc["Q"] = 8;
    doc["gates"]["expect"] = "geometric_wins";
    spit(s / "gate.json", doc.dump());
    const Result r = run("weights-compare --config '" + (s / "gate.json").string() + "' --out '" +
                         (s / "out").string() + "'");
    CHECK(r.code == 2);
    CHECK(r.output.find("FAIL") != std::string::npos);
    CHECK(fs::exists(s / "out/weights.csv"));
}

TEST_CASE("unknown subcommands and missing arguments are usage errors") {
    CHECK(run("transmogrify").code == 1);
    CHECK(run("decompose").code == 1);
    CHECK(run("hdi").code == 1);
}
