#include <doctest.h>

#include <sstream>

#include "tfe/config.hpp"
#include "tfe/errors.hpp"

using namespace tfe;

TEST_CASE("config parses key=value lines with comments and blanks") {
  std::istringstream is(
      "# leading comment\n"
      "alpha=1\n"
      "\n"
      "  beta = two words \n"
      "gamma=3 # inline comment\n");
  KeyValueConfig c = KeyValueConfig::parse(is);
  CHECK(c.has("alpha"));
  CHECK(c.get_string("alpha") == "1");
  CHECK(c.get_string("beta") == "two words");
  CHECK(c.get_string("gamma") == "3");
  CHECK_FALSE(c.has("delta"));
}

TEST_CASE("config strips carriage returns") {
  std::istringstream is("key=value\r\nother=x\r\n");
  KeyValueConfig c = KeyValueConfig::parse(is);
  CHECK(c.get_string("key") == "value");
  CHECK(c.get_string("other") == "x");
}

TEST_CASE("config keeps first position but last value on duplicate keys") {
  std::istringstream is("a=1\nb=2\na=3\n");
  KeyValueConfig c = KeyValueConfig::parse(is);
  CHECK(c.get_string("a") == "3");
  REQUIRE(c.entries().size() == 2);
  CHECK(c.entries()[0].first == "a");
  CHECK(c.entries()[0].second == "3");
  CHECK(c.entries()[1].first == "b");
}

TEST_CASE("config rejects malformed lines with the line number") {
  std::istringstream is("good=1\nno equals sign\n");
  CHECK_THROWS_WITH_AS(KeyValueConfig::parse(is),
                       doctest::Contains("config line 2"), FormatError);
  std::istringstream is2("=missing\n");
  CHECK_THROWS_AS(KeyValueConfig::parse(is2), FormatError);
}

TEST_CASE("config set_line applies overrides and rejects junk") {
  KeyValueConfig c;
  c.set_line("x=1");
  c.set_line("x=2");
  CHECK(c.get_string("x") == "2");
  CHECK_THROWS_AS(c.set_line("nonsense"), ValidationError);
  CHECK_THROWS_AS(c.set_line("=1"), ValidationError);
}

TEST_CASE("config typed getters convert and validate") {
  std::istringstream is(
      "d=2.5\n"
      "neg=-4\n"
      "u=18446744073709551615\n"
      "n=42\n"
      "t1=true\nt2=1\nf1=false\nf2=0\n"
      "junk=12abc\n");
  KeyValueConfig c = KeyValueConfig::parse(is);

  CHECK(c.get_double("d", 0.0) == 2.5);
  CHECK(c.get_double("absent", 7.5) == 7.5);
  CHECK(c.get_double("neg", 0.0) == -4.0);
  CHECK_THROWS_AS(c.get_double("junk", 0.0), ValidationError);

  CHECK(c.get_u64("u", 0) == 18446744073709551615ULL);
  CHECK(c.get_u64("absent", 9) == 9);
  CHECK_THROWS_AS(c.get_u64("neg", 0), ValidationError);
  CHECK_THROWS_AS(c.get_u64("junk", 0), ValidationError);

  CHECK(c.get_size("n", 0) == 42);
  CHECK(c.get_size("absent", 5) == 5);

  CHECK(c.get_bool("t1", false));
  CHECK(c.get_bool("t2", false));
  CHECK_FALSE(c.get_bool("f1", true));
  CHECK_FALSE(c.get_bool("f2", true));
  CHECK(c.get_bool("absent", true));
  CHECK_THROWS_AS(c.get_bool("d", false), ValidationError);
}

TEST_CASE("config required string throws when missing") {
  KeyValueConfig c;
  c.set("present", "x");
  CHECK(c.get_string("present") == "x");
  CHECK_THROWS_WITH_AS(c.get_string("absent"), doctest::Contains("absent"),
                       ValidationError);
}
