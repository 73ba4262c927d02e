#include "doctest.h"
#include "helpers.hpp"

#include "uareg/common.hpp"
#include "uareg/feature_io.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

using namespace uareg;

namespace {

Spectrogram sample_spec() {
    Spectrogram spec;
    spec.values = Matrix(3, 4);
    for (std::size_t i = 0; i < spec.values.data.size(); ++i)
        spec.values.data[i] = static_cast<float>(i) * 0.25f - 1.0f;
    spec.meta.feature_kind = "mel";
    spec.meta.sample_rate = 32000.0;
    spec.meta.band = BandConfig{100.0, 8000.0};
    spec.meta.config_hash = "deadbeef";
    spec.meta.record_id = "rec-7";
    spec.meta.offset_s = 15.0;
    return spec;
}

} // namespace

TEST_CASE("feature files round-trip values and metadata exactly") {
    testutil::TempDir tmp("fio");
    const auto path = tmp.sub("a.uaspec");
    const auto spec = sample_spec();
    save_feature(spec, path);

    const auto back = load_feature(path);
    CHECK(back.values.rows == 3);
    CHECK(back.values.cols == 4);
    REQUIRE(back.values.data.size() == spec.values.data.size());
    for (std::size_t i = 0; i < spec.values.data.size(); ++i)
        REQUIRE(back.values.data[i] == spec.values.data[i]); // float32 is stored verbatim
    CHECK(back.meta.feature_kind == "mel");
    CHECK(back.meta.sample_rate == doctest::Approx(32000.0));
    CHECK(back.meta.band.f_lo == doctest::Approx(100.0));
    CHECK(back.meta.band.f_hi == doctest::Approx(8000.0));
    CHECK(back.meta.config_hash == "deadbeef");
    CHECK(back.meta.record_id == "rec-7");
    CHECK(back.meta.offset_s == doctest::Approx(15.0));
}

TEST_CASE("corrupt feature files are rejected with a reason") {
    testutil::TempDir tmp("fio");
    const auto path = tmp.sub("a.uaspec");
    save_feature(sample_spec(), path);

    CHECK_THROWS_AS(load_feature(tmp.sub("missing.uaspec")), Error);

    // Wrong magic.
    {
        auto bytes = testutil::slurp(path);
        bytes[0] = 'X';
        std::ofstream(tmp.sub("magic.uaspec"), std::ios::binary) << bytes;
        CHECK_THROWS_WITH_AS(load_feature(tmp.sub("magic.uaspec")),
                             doctest::Contains("corrupt header"), Error);
    }

    // Payload cut short.
    {
        auto bytes = testutil::slurp(path);
        bytes.resize(16 + 5);
        std::ofstream(tmp.sub("short.uaspec"), std::ios::binary) << bytes;
        CHECK_THROWS_WITH_AS(load_feature(tmp.sub("short.uaspec")),
                             doctest::Contains("payload mismatch"), Error);
    }

    // Trailer missing entirely.
    {
        auto bytes = testutil::slurp(path);
        bytes.resize(16 + 3 * 4 * 4);
        std::ofstream(tmp.sub("no_trailer.uaspec"), std::ios::binary) << bytes;
        CHECK_THROWS_WITH_AS(load_feature(tmp.sub("no_trailer.uaspec")),
                             doctest::Contains("missing trailer"), Error);
    }

    // Trailer not JSON.
    {
        auto bytes = testutil::slurp(path);
        bytes.resize(16 + 3 * 4 * 4);
        bytes += "not json";
        std::ofstream(tmp.sub("bad_trailer.uaspec"), std::ios::binary) << bytes;
        CHECK_THROWS_WITH_AS(load_feature(tmp.sub("bad_trailer.uaspec")),
                             doctest::Contains("malformed trailer"), Error);
    }

    // A header so truncated the dimensions are missing.
    {
        std::ofstream(tmp.sub("stub.uaspec"), std::ios::binary) << "UASPEC1";
        CHECK_THROWS_WITH_AS(load_feature(tmp.sub("stub.uaspec")),
                             doctest::Contains("corrupt header"), Error);
    }
}
