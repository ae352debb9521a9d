#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <stdexcept>
#include <string>

#include "charphish/encoder.hpp"

using namespace charphish;

TEST_CASE("alphabet maps printable ascii to 1..95 in codepoint order") {
  CHECK(Alphabet::kSize == 95);
  CHECK(Alphabet::index_of(' ') == 1);
  CHECK(Alphabet::index_of('!') == 2);
  CHECK(Alphabet::index_of('0') == 0x30 - 0x1f);
  CHECK(Alphabet::index_of('A') == 0x41 - 0x1f);
  CHECK(Alphabet::index_of('a') == 0x61 - 0x1f);
  CHECK(Alphabet::index_of('~') == 95);
  // full round trip over every symbol
  for (int c = 0x20; c <= 0x7e; ++c) {
    const int idx = Alphabet::index_of(static_cast<char>(c));
    CHECK(idx == c - 0x1f);
    CHECK(Alphabet::symbol(idx) == static_cast<char>(c));
  }
}

TEST_CASE("out-of-alphabet characters collapse to the pad index") {
  CHECK(Alphabet::index_of('\n') == 0);
  CHECK(Alphabet::index_of('\t') == 0);
  CHECK(Alphabet::index_of('\r') == 0);
  CHECK(Alphabet::index_of('\0') == 0);
  CHECK(Alphabet::index_of(static_cast<char>(0x7f)) == 0);
  CHECK(Alphabet::index_of(static_cast<char>(0x80)) == 0);
  CHECK(Alphabet::index_of(static_cast<char>(0xff)) == 0);
}

TEST_CASE("symbol rejects out-of-range indices") {
  CHECK_THROWS_AS(Alphabet::symbol(0), std::out_of_range);
  CHECK_THROWS_AS(Alphabet::symbol(96), std::out_of_range);
  CHECK_THROWS_AS(Alphabet::symbol(-1), std::out_of_range);
}

TEST_CASE("symbols lists the 95 characters in index order") {
  const std::string s = Alphabet::symbols();
  REQUIRE(s.size() == 95);
  CHECK(s.front() == ' ');
  CHECK(s.back() == '~');
  for (size_t i = 1; i < s.size(); ++i) CHECK(s[i] == s[i - 1] + 1);
}

TEST_CASE("encode pads short text with zeros") {
  const auto e = encode("Hi", 8);
  REQUIRE(e.indices.size() == 8);
  CHECK(e.original_length == 2);
  CHECK(e.indices[0] == Alphabet::index_of('H'));
  CHECK(e.indices[1] == Alphabet::index_of('i'));
  for (size_t i = 2; i < 8; ++i) CHECK(e.indices[i] == 0);
}

TEST_CASE("encode truncates long text to t_max") {
  const std::string text = "abcdefghij";
  const auto e = encode(text, 4);
  REQUIRE(e.indices.size() == 4);
  CHECK(e.original_length == 4);
  for (int i = 0; i < 4; ++i) CHECK(e.indices[i] == Alphabet::index_of(text[i]));
}

TEST_CASE("encode maps newline and non-ascii bytes to zero in place") {
  const auto e = encode("a\nb", 5);
  CHECK(e.indices[0] == Alphabet::index_of('a'));
  CHECK(e.indices[1] == 0);
  CHECK(e.indices[2] == Alphabet::index_of('b'));
  CHECK(e.original_length == 3);

  const auto f = encode(std::string("x\xc3\xa9y"), 6);  // e-acute as two bytes
  CHECK(f.indices[0] == Alphabet::index_of('x'));
  CHECK(f.indices[1] == 0);
  CHECK(f.indices[2] == 0);
  CHECK(f.indices[3] == Alphabet::index_of('y'));
  CHECK(f.original_length == 4);
}

TEST_CASE("encode of empty text is all padding") {
  const auto e = encode("", 3);
  REQUIRE(e.indices.size() == 3);
  CHECK(e.original_length == 0);
  for (int v : e.indices) CHECK(v == 0);
}

TEST_CASE("decode drops pad indices and inverts encode for clean ascii") {
  const std::string text = "The quick brown fox! 123 $%^";
  const auto e = encode(text, static_cast<int>(text.size()) + 10);
  CHECK(decode(e.indices) == text);
}

TEST_CASE("decode rejects out-of-range indices") {
  CHECK_THROWS_AS(decode({1, 96}), std::out_of_range);
  CHECK_THROWS_AS(decode({-1}), std::out_of_range);
}

TEST_CASE("labels one-hot as clean=[1,0] phishing=[0,1]") {
  const auto c = one_hot(Label::kClean);
  const auto p = one_hot(Label::kPhishing);
  CHECK(c[0] == 1.0f);
  CHECK(c[1] == 0.0f);
  CHECK(p[0] == 0.0f);
  CHECK(p[1] == 1.0f);
}
