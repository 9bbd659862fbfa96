// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "climgan/archive_io.hpp"

using namespace climgan;

namespace {

std::string bytes_of(const ClimateArchive& a) {
    std::ostringstream os;
    write_archive(os, a);
    return os.str();
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("climgan_test_io_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

// Expected bytes built by hand from the documented layout.
TEST(Cgb1, HeaderAndDataBytesMatchLayout) {
    ClimateArchive a(1, 2, 1, {"pr_norm", "tas_norm"});
    a.values = {1.0f, -2.0f, 0.5f, 3.0f};
    const std::string b = bytes_of(a);
    ASSERT_EQ(b.size(), 8u + 4 * 4 + 8 + 2 * 16 + 4 * 4);
    EXPECT_EQ(b.substr(0, 8), "CLIMGRB1");
    const unsigned char header[] = {1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0};
    EXPECT_EQ(b.substr(8, 24), std::string(reinterpret_cast<const char*>(header), 24));
    EXPECT_EQ(b.substr(32, 16), "pr_norm         ");
    EXPECT_EQ(b.substr(48, 16), "tas_norm        ");
    // IEEE-754 single: 1.0 = 0x3f800000, -2.0 = 0xc0000000.
    const unsigned char data[] = {0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0};
    EXPECT_EQ(b.substr(64, 8), std::string(reinterpret_cast<const char*>(data), 8));
}

TEST(Cgb1, RoundTripIsBitExact) {
    auto a = synthesize_archive(4, 8, 1, 3);
    a.values[5] = -0.0f;
    std::stringstream ss;
    write_archive(ss, a);
    const auto b = read_archive(ss);
    EXPECT_EQ(b.names, a.names);
    ASSERT_EQ(b.values.size(), a.values.size());
    EXPECT_EQ(std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(float)), 0);
    EXPECT_TRUE(b.has_canonical_variables());
}

TEST(Cgb1, FileRoundTripAndStatsSidecar) {
    const auto path = temp_path("a.cgb").string();
    const auto a = synthesize_archive(4, 4, 1, 11);
    save_archive(path, a);
    EXPECT_EQ(load_archive(path), a);
    const auto s = compute_stats(a);
    save_stats(stats_path_for(path), s);
    const auto back = load_stats(stats_path_for(path));
    for (int v = 0; v < 3; ++v) {
        EXPECT_EQ(back.means[v], s.means[v]);
        EXPECT_EQ(back.stds[v], s.stds[v]);
    }
    std::ifstream is(stats_path_for(path));
    const auto j = json::parse(is);
    EXPECT_TRUE(j.contains("version") && j.contains("means") && j.contains("stds"));
    std::filesystem::remove(path);
    std::filesystem::remove(stats_path_for(path));
}

TEST(Cgb1, CorruptFilesAreRejected) {
    const auto good = bytes_of(synthesize_archive(4, 4, 1, 1));
    auto bad_magic = good;
    bad_magic[3] = 'X';
    std::istringstream m(bad_magic);
    EXPECT_THROW(read_archive(m), FormatError);

    auto bad_version = good;
    bad_version[8] = 2;
    std::istringstream v(bad_version);
    EXPECT_THROW(read_archive(v), FormatError);

    std::istringstream t(good.substr(0, good.size() - 3));
    EXPECT_THROW(read_archive(t), FormatError);

    std::istringstream e("");
    EXPECT_THROW(read_archive(e), FormatError);
    EXPECT_THROW(load_archive("/nonexistent/dir/x.cgb"), std::runtime_error);
}

TEST(Cgb1, OverlongNameRejected) {
    ClimateArchive a(1, 1, 1, {"a_variable_name_too_long"});
    std::ostringstream os;
    EXPECT_THROW(write_archive(os, a), std::invalid_argument);
}

TEST(Stats, JsonValidation) {
    EXPECT_THROW(json::parse(R"({"version":1,"means":[1,2,3],"stds":[1,0,1]})").get<NormalizationStats>(),
                 FormatError);
    EXPECT_THROW(json::parse(R"({"version":1,"means":[1,2,3],"stds":[1,1,1],"extra":0})").get<NormalizationStats>(),
                 FormatError);
    EXPECT_THROW(json::parse(R"({"version":2,"means":[1,2,3],"stds":[1,1,1]})").get<NormalizationStats>(),
                 FormatError);
    const auto s = json::parse(R"({"version":1,"means":[1,2,3],"stds":[4,5,6]})").get<NormalizationStats>();
    EXPECT_EQ(s.stds[2], 6.0);
}
