#include <gtest/gtest.h>

#include <filesystem>

#include "stpasec/document.hpp"
#include "stpasec/error.hpp"
#include "stpasec/util.hpp"
#include "test_support.hpp"

namespace stpasec {
namespace {

TEST(Util, TrimAndCase) {
  EXPECT_EQ(util::trim("  a b \n"), "a b");
  EXPECT_EQ(util::trim(" \t"), "");
  EXPECT_EQ(util::to_upper("yes."), "YES.");
  EXPECT_TRUE(util::iequals("Wi-Fi", "wi-fi"));
  EXPECT_FALSE(util::iequals("Wi-Fi", "wifi"));
  EXPECT_TRUE(util::istarts_with("Reconnaissance:", "recon"));
}

TEST(Util, CollapseWhitespace) { EXPECT_EQ(util::collapse_whitespace("  Windows \t\n Server  "), "Windows Server"); }

TEST(Util, SplitLinesHandlesCrLf) {
  const auto lines = util::split_lines("a\r\nb\n\nc");
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], "a");
  EXPECT_EQ(lines[2], "");
  EXPECT_EQ(lines[3], "c");
}

TEST(Util, Sha256KnownVectors) {
  EXPECT_EQ(util::sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(util::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Util, SubstituteIsSinglePass) {
  EXPECT_EQ(util::substitute("{a} and {b}", {{"a", "{b}"}, {"b", "x"}}), "{b} and x");
  EXPECT_EQ(util::substitute("{unknown} {a}", {{"a", "1"}}), "{unknown} 1");
}

TEST(Util, Slugify) {
  EXPECT_EQ(util::slugify("IDx-DR v2.3"), "idx-dr-v2-3");
  EXPECT_EQ(util::slugify("  d-Nav!"), "d-nav");
  EXPECT_EQ(util::slugify("***"), "unnamed");
}

TEST(Util, AtomicWriteRoundTrip) {
  const auto dir = testing::scratch_dir("atomic");
  const auto path = (dir / "f.txt").string();
  util::write_file_atomic(path, "one");
  util::write_file_atomic(path, "two");
  EXPECT_EQ(util::read_file(path), "two");
  EXPECT_EQ(std::distance(std::filesystem::directory_iterator(dir), std::filesystem::directory_iterator()), 1);
}

TEST(Document, YamlScalarsFollowCoreSchema) {
  const json j = yaml_to_json("a: 1\nb: true\nc: \"true\"\nd: ~\ne: [x, 2.5]\n");
  EXPECT_EQ(j["a"], 1);
  EXPECT_EQ(j["b"], true);
  EXPECT_EQ(j["c"], "true");
  EXPECT_TRUE(j["d"].is_null());
  EXPECT_EQ(j["e"][1], 2.5);
}

TEST(Document, FieldReaderRejectsUnknownKeys) {
  FieldReader r(json{{"known", "x"}, {"typo", 1}}, "cfg");
  EXPECT_EQ(r.required_string("known"), "x");
  EXPECT_THROW(r.finish(), ConfigError);
}

TEST(Document, FieldReaderOwnsTemporaries) {
  FieldReader r(json::parse(R"({"name": "value"})"), "cfg");
  EXPECT_EQ(r.required_string("name"), "value");
  EXPECT_NO_THROW(r.finish());
}

TEST(Document, MissingFileNamesPath) {
  try {
    load_document("/nonexistent/dir/x.json");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/x.json"), std::string::npos);
  }
}

}  // namespace
}  // namespace stpasec
