#pragma once

#include <cstdint>
#include <compare>
#include <string>
#include <string_view>

namespace geobias {

struct Ipv4Address {
  std::uint32_t value = 0;

  friend auto operator<=>(const Ipv4Address&, const Ipv4Address&) = default;
};

// Dotted quad, four decimal octets 0-255. Leading zeros are read as decimal
// ("010" is ten). Throws InputError otherwise.
Ipv4Address parse_ipv4(std::string_view text);
std::string format_ipv4(Ipv4Address ip);

struct Cidr {
  Ipv4Address base;       // host bits cleared
  int prefix_length = 0;  // 0..32
  bool host_bits_masked = false;

  std::uint32_t first() const { return base.value; }
  std::uint32_t last() const;

  friend bool operator==(const Cidr&, const Cidr&) = default;
};

// "a.b.c.d/n". Host bits set in the base address are cleared and reported
// through Cidr::host_bits_masked.
Cidr parse_cidr(std::string_view text);
std::string format_cidr(const Cidr& cidr);

}  // namespace geobias
