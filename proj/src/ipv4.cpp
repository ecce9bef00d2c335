#include "geobias/ipv4.hpp"

#include "geobias/errors.hpp"

namespace geobias {

namespace {

std::uint32_t prefix_mask(int prefix_length) {
  if (prefix_length == 0) return 0;
  return ~std::uint32_t{0} << (32 - prefix_length);
}

}  // namespace

Ipv4Address parse_ipv4(std::string_view text) {
  const std::string quoted = "'" + std::string(text) + "'";
  std::uint32_t value = 0;
  int octets = 0;
  std::size_t pos = 0;
  while (true) {
    if (pos >= text.size() || text[pos] < '0' || text[pos] > '9') {
      throw InputError("invalid IPv4 address " + quoted);
    }
    unsigned octet = 0;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
      octet = octet * 10 + static_cast<unsigned>(text[pos] - '0');
      if (octet > 255) throw InputError("IPv4 octet out of range in " + quoted);
      ++pos;
    }
    value = (value << 8) | octet;
    ++octets;
    if (pos == text.size()) break;
    if (text[pos] != '.' || octets == 4) {
      throw InputError("invalid IPv4 address " + quoted);
    }
    ++pos;
  }
  if (octets != 4) throw InputError("IPv4 address needs 4 octets: " + quoted);
  return Ipv4Address{value};
}

std::string format_ipv4(Ipv4Address ip) {
  const std::uint32_t v = ip.value;
  return std::to_string(v >> 24) + '.' + std::to_string((v >> 16) & 0xFF) + '.' +
         std::to_string((v >> 8) & 0xFF) + '.' + std::to_string(v & 0xFF);
}

std::uint32_t Cidr::last() const {
  return base.value | ~prefix_mask(prefix_length);
}

Cidr parse_cidr(std::string_view text) {
  const auto slash = text.find('/');
  if (slash == std::string_view::npos) {
    throw InputError("CIDR network missing '/': '" + std::string(text) + "'");
  }
  const Ipv4Address addr = parse_ipv4(text.substr(0, slash));
  const std::string_view len_text = text.substr(slash + 1);
  if (len_text.empty() || len_text.size() > 2) {
    throw InputError("invalid CIDR prefix length in '" + std::string(text) + "'");
  }
  int len = 0;
  for (char c : len_text) {
    if (c < '0' || c > '9') {
      throw InputError("invalid CIDR prefix length in '" + std::string(text) + "'");
    }
    len = len * 10 + (c - '0');
  }
  if (len > 32) {
    throw InputError("CIDR prefix length > 32 in '" + std::string(text) + "'");
  }
  Cidr cidr;
  cidr.prefix_length = len;
  cidr.base.value = addr.value & prefix_mask(len);
  cidr.host_bits_masked = cidr.base.value != addr.value;
  return cidr;
}

std::string format_cidr(const Cidr& cidr) {
  return format_ipv4(cidr.base) + '/' + std::to_string(cidr.prefix_length);
}

}  // namespace geobias
