#include "doctest.h"

#include "mhalab/csv.hpp"
#include "mhalab/error.hpp"
#include "mhalab/parallel.hpp"
#include "mhalab/seeding.hpp"

#include <atomic>
#include <cstdlib>
#include <limits>
#include <sstream>
#include <stdexcept>

using namespace mhalab;

TEST_CASE("format_double round-trips") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.0, 6.02214076e23, 0.0}) {
        const std::string s = format_double(v);
        CHECK(std::strtod(s.c_str(), nullptr) == v);
    }
    CHECK(format_double(0.5) == "0.5");
    CHECK(format_double(2.0) == "2");
}

TEST_CASE("csv quoting follows RFC 4180") {
    CHECK(CsvWriter::quote("plain") == "plain");
    CHECK(CsvWriter::quote("a,b") == "\"a,b\"");
    CHECK(CsvWriter::quote("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK(CsvWriter::quote("two\nlines") == "\"two\nlines\"");

    std::ostringstream out;
    CsvWriter w(out);
    w.row({"scheme", "rho"});
    w.row({"geometric(0.5)", "0.5"});
    CHECK(out.str() == "scheme,rho\r\ngeometric(0.5),0.5\r\n");
}

TEST_CASE("seed derivation is stable and separates streams") {
    static_assert(derive_seed(2024, "data", 3) == derive_seed(2024, "data", 3));
    CHECK(derive_seed(2024, "data", 3) != derive_seed(2024, "data", 4));
    CHECK(derive_seed(2024, "data", 0) != derive_seed(2024, "pilot", 0));
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("parallel_for visits every index once and rethrows") {
    for (std::size_t threads : {1u, 3u, 8u}) {
        set_thread_count(threads);
        CHECK(thread_count() == threads);
        std::vector<std::atomic<int>> hits(1000);
        parallel_for(hits.size(), [&](std::size_t i) { hits[i].fetch_add(1); });
        bool once = true;
        for (auto& h : hits) once = once && h.load() == 1;
        CHECK(once);
        CHECK_THROWS_AS(parallel_for(50,
                                     [](std::size_t i) {
                                         if (i == 17) throw std::runtime_error("boom");
                                     }),
                        std::runtime_error);
    }
    set_thread_count(0);
    CHECK(thread_count() >= 1);
    parallel_for(0, [](std::size_t) { FAIL("no work expected"); });
}
