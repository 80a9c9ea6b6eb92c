#include <cstdlib>
#include <limits>
#include <string>
#include <vector>

#include <doctest.h>

#include "kinerec/errors.hpp"
#include "kinerec/serialization.hpp"
#include "test_support.hpp"

using namespace kinerec;

TEST_SUITE_BEGIN("serialization");

TEST_CASE("format_double is shortest-exact and round-trips bitwise") {
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(-0.5) == "-0.5");
  CHECK(format_double(0.1) == "0.10000000000000001");

  const std::vector<double> tricky = {3.141592653589793,
                                      1e-300,
                                      -1e300,
                                      std::numeric_limits<double>::max(),
                                      std::numeric_limits<double>::denorm_min(),
                                      123456789.123456789,
                                      -0.0,
                                      2.2250738585072014e-308};
  for (double x : tricky) {
    const std::string text = format_double(x);
    const double back = std::strtod(text.c_str(), nullptr);
    CHECK(back == x);
  }

  CHECK_THROWS_AS(format_double(std::numeric_limits<double>::quiet_NaN()), NumericError);
  CHECK_THROWS_AS(format_double(std::numeric_limits<double>::infinity()), NumericError);
}

TEST_CASE("json_escape handles quotes, backslashes, and control bytes") {
  CHECK(json_escape("plain") == "plain");
  CHECK(json_escape("a\"b") == "a\\\"b");
  CHECK(json_escape("a\\b") == "a\\\\b");
  CHECK(json_escape("line\nbreak") == "line\\nbreak");
  CHECK(json_escape(std::string(1, '\x07')) == "\\u0007");
  CHECK(json_escape("tab\there") == "tab\\there");
}

TEST_CASE("JsonWriter emits canonical bytes") {
  JsonWriter w;
  w.begin_object();
  w.key("a").begin_array().value(1).value(2).end_array();
  w.key("b").value(std::string("x\"y"));
  w.key("c").value(true);
  w.key("d").value(0.5);
  w.key("e").null();
  w.end_object();
  CHECK(w.str() == R"({"a":[1,2],"b":"x\"y","c":true,"d":0.5,"e":null})");

  JsonWriter v;
  Eigen::Vector3d p(1.0, -2.0, 0.25);
  v.begin_object().key("p").value(p).end_object();
  CHECK(v.str() == R"({"p":[1,-2,0.25]})");
}

TEST_CASE("fnv1a64 matches the published reference vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("text file round trip and line splitting") {
  kinerec_test::TempDir tmp("serialization");
  const std::string path = tmp.path("blob.txt");
  const std::string body = "first\nsecond\n\nlast\n";
  write_text_file(path, body);
  CHECK(read_text_file(path) == body);

  const std::vector<std::string> lines = read_lines(path);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "first");
  CHECK(lines[2].empty());
  CHECK(lines[3] == "last");

  CHECK_THROWS_AS(read_text_file(tmp.path("missing.txt")), ValidationError);
}

TEST_SUITE_END();
