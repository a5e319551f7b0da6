#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "rpgraph/common.hpp"
#include "rpgraph/digest.hpp"
#include "rpgraph/io.hpp"
#include "rpgraph/rng.hpp"

using namespace rpgraph;

TEST_CASE("sha256 matches published vectors") {
    CHECK(sha256(std::string("")).hex() ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256(std::string("abc")).hex() ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256(std::string("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq")).hex() ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
    // streamed in pieces gives the same result
    Sha256 h;
    h.update("ab", 2);
    h.update("c", 1);
    CHECK(h.finish().hex() == sha256(std::string("abc")).hex());
}

TEST_CASE("counter rng is a pure function of (seed, node, dim)") {
    const double a = counter_rng::normal(42, 7, 11);
    const double b = counter_rng::normal(42, 7, 11);
    CHECK(a == b);
    CHECK(counter_rng::normal(42, 7, 12) != a);
    CHECK(counter_rng::normal(43, 7, 11) != a);
}

TEST_CASE("counter rng normal moments") {
    // mean of 1e6 standard normal draws within 4 standard errors, variance within 1%
    const std::size_t n = 1'000'000;
    double sum = 0, sum2 = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double v = counter_rng::normal(1234, k / 1000, k % 1000);
        sum += v;
        sum2 += v * v;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    CHECK(std::abs(mean) < 4.0 / std::sqrt(double(n)));
    CHECK(var == Catch::Approx(1.0).epsilon(0.01));
}

TEST_CASE("counter rng ternary values and frequencies") {
    const double s = 3.0;
    std::size_t zeros = 0;
    const std::size_t n = 1'000'000;
    for (std::size_t k = 0; k < n; ++k) {
        const double v = counter_rng::ternary(99, k, 0, s);
        const bool valid = v == 0.0 || v == std::sqrt(3.0) || v == -std::sqrt(3.0);
        if (!valid) FAIL("unexpected ternary value " << v);
        if (v == 0.0) ++zeros;
    }
    CHECK(std::abs(double(zeros) / n - 2.0 / 3.0) < 0.01);
}

TEST_CASE("parallel_for covers every index once for any thread count") {
    for (unsigned threads : {1u, 2u, 3u, 7u}) {
        std::vector<int> hits(1000, 0);
        parallel_for(hits.size(), threads, [&](std::size_t i) { hits[i] += 1; });
        CHECK(std::accumulate(hits.begin(), hits.end(), 0) == 1000);
        CHECK(*std::min_element(hits.begin(), hits.end()) == 1);
    }
}

TEST_CASE("ordered_sum is permutation independent") {
    std::vector<double> a = {1e-9, 3.14, -2.5e7, 0.125, 9.9e-17, 42.0};
    std::vector<double> b = {42.0, 9.9e-17, 0.125, -2.5e7, 3.14, 1e-9};
    CHECK(ordered_sum(a) == ordered_sum(b));
}

TEST_CASE("binary io round trip and truncation detection") {
    const auto dir = std::filesystem::temp_directory_path() / "rpgraph_core_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "blob.bin";
    {
        BinaryWriter w(path);
        w.u16(0xbeef);
        w.u64(0x0123456789abcdefull);
        w.f64(-1.25);
        w.str("hello");
        w.close();
    }
    {
        BinaryReader r(path);
        CHECK(r.u16() == 0xbeef);
        CHECK(r.u64() == 0x0123456789abcdefull);
        CHECK(r.f64() == -1.25);
        CHECK(r.str() == "hello");
        CHECK(r.at_eof());
    }
    // chop one byte off the end
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 1);
    BinaryReader r(path);
    r.u16();
    r.u64();
    r.f64();
    CHECK_THROWS_AS(r.str(), IoError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("atomic_write leaves no temp file behind") {
    const auto dir = std::filesystem::temp_directory_path() / "rpgraph_atomic_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "out.txt";
    atomic_write(path, [](const std::filesystem::path& tmp) {
        std::ofstream(tmp) << "payload";
    });
    CHECK(read_text_file(path) == "payload");
    CHECK(!std::filesystem::exists(path.string() + ".tmp"));
    std::filesystem::remove_all(dir);
}
