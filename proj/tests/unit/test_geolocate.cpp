#include <doctest.h>

#include <random>

#include "geobias/errors.hpp"
#include "geobias/geolocate.hpp"

using namespace geobias;

namespace {

GeoIpBlockRow row(const std::string& net, const std::string& zip) {
  GeoIpBlockRow r;
  r.network = net;
  r.cidr = parse_cidr(net);
  r.postal_code = zip;
  return r;
}

}  // namespace

TEST_SUITE("geolocate") {
  TEST_CASE("ipv4 parsing") {
    CHECK(parse_ipv4("1.2.3.4").value == 0x01020304u);
    CHECK(parse_ipv4("255.255.255.255").value == 0xFFFFFFFFu);
    CHECK(parse_ipv4("010.0.0.1").value == 0x0A000001u);
    CHECK(format_ipv4(Ipv4Address{0xC0A80001u}) == "192.168.0.1");
    for (const char* bad : {"1.2.3", "1.2.3.4.5", "256.1.1.1", "a.b.c.d", "1..2.3", "", " 1.2.3.4",
                            "1.2.3.4 ", "99999999999.1.1.1"}) {
      CHECK_THROWS_AS(parse_ipv4(bad), InputError);
    }
  }

  TEST_CASE("cidr masking and range") {
    const Cidr c = parse_cidr("10.1.2.3/16");
    CHECK(c.host_bits_masked);
    CHECK(format_cidr(c) == "10.1.0.0/16");
    CHECK(c.first() == 0x0A010000u);
    CHECK(c.last() == 0x0A01FFFFu);
    CHECK(parse_cidr("0.0.0.0/0").last() == 0xFFFFFFFFu);
    CHECK(parse_cidr("1.2.3.4/32").last() == 0x01020304u);
    CHECK_FALSE(parse_cidr("1.2.3.0/24").host_bits_masked);
    CHECK_THROWS_AS(parse_cidr("1.2.3.4/33"), InputError);
    CHECK_THROWS_AS(parse_cidr("1.2.3.4"), InputError);
  }

  TEST_CASE("lookup finds the covering block") {
    const auto index = build_index({row("10.0.1.0/24", "20001"), row("10.0.0.0/24", "20000"),
                                    row("10.0.2.0/24", "")});
    CHECK(lookup(index, parse_ipv4("10.0.0.0"))->zip == "20000");
    CHECK(lookup(index, parse_ipv4("10.0.0.255"))->zip == "20000");
    CHECK(lookup(index, parse_ipv4("10.0.1.7"))->zip == "20001");
    CHECK_FALSE(lookup(index, parse_ipv4("10.0.2.7")).has_value());  // no postal code
    CHECK(index.find(parse_ipv4("10.0.2.7")) != nullptr);
    CHECK_FALSE(lookup(index, parse_ipv4("10.0.3.0")).has_value());
    CHECK_FALSE(lookup(index, parse_ipv4("9.255.255.255")).has_value());
  }

  TEST_CASE("overlapping blocks name both networks") {
    try {
      build_index({row("10.0.0.0/16", "1"), row("10.0.5.0/24", "2")});
      FAIL("expected an overlap error");
    } catch (const InputError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("10.0.0.0/16") != std::string::npos);
      CHECK(msg.find("10.0.5.0/24") != std::string::npos);
    }
  }

  TEST_CASE("host bits produce a warning") {
    const auto index = build_index({row("10.0.0.9/24", "20000")});
    CHECK(index.warnings().size() == 1);
  }

  TEST_CASE("agrees with a linear scan") {
    std::mt19937_64 gen(17);
    std::vector<GeoIpBlockRow> rows;
    // disjoint blocks at random /20 slots with random prefix lengths
    std::vector<std::uint32_t> slots(4096);
    for (std::uint32_t i = 0; i < slots.size(); ++i) slots[i] = i;
    std::shuffle(slots.begin(), slots.end(), gen);
    for (int i = 0; i < 300; ++i) {
      const int prefix = 20 + static_cast<int>(gen() % 13);
      const std::uint32_t base = (0x0A000000u | (slots[static_cast<std::size_t>(i)] << 12));
      const std::string net = format_ipv4(Ipv4Address{base}) + "/" + std::to_string(prefix);
      rows.push_back(row(net, std::to_string(10000 + i)));
    }
    const auto index = build_index(rows);
    for (int i = 0; i < 20000; ++i) {
      const Ipv4Address ip{0x0A000000u | static_cast<std::uint32_t>(gen() % (1u << 24))};
      std::optional<ZipCode> expect;
      for (const auto& r : rows) {
        if (ip.value >= r.cidr.first() && ip.value <= r.cidr.last()) expect = r.postal_code;
      }
      const auto got = lookup(index, ip);
      REQUIRE(got.has_value() == expect.has_value());
      if (got) CHECK(got->zip == *expect);
    }
  }
}
