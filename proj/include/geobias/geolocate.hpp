#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "geobias/geometry.hpp"
#include "geobias/ingest.hpp"
#include "geobias/ipv4.hpp"

namespace geobias {

struct GeoIpBlock {
  std::uint32_t start = 0;
  std::uint32_t end = 0;  // inclusive
  ZipCode zip;            // empty: no postal assignment
  std::optional<GeoPoint> point;
  std::string network;
};

struct GeoIpAssignment {
  ZipCode zip;
  std::optional<GeoPoint> point;
};

// Sorted, non-overlapping IPv4 blocks. Immutable after build_index.
class GeoIpIndex {
 public:
  const std::vector<GeoIpBlock>& blocks() const { return blocks_; }
  // One entry per source network whose base address had host bits set.
  const std::vector<std::string>& warnings() const { return warnings_; }

  // Block covering ip, if any.
  const GeoIpBlock* find(Ipv4Address ip) const;

 private:
  friend GeoIpIndex build_index(const std::vector<GeoIpBlockRow>& rows);
  std::vector<GeoIpBlock> blocks_;
  std::vector<std::string> warnings_;
};

// Throws InputError naming both networks when two blocks overlap.
GeoIpIndex build_index(const std::vector<GeoIpBlockRow>& rows);

// Absent when no block covers ip or the covering block has no postal code.
std::optional<GeoIpAssignment> lookup(const GeoIpIndex& index, Ipv4Address ip);

}  // namespace geobias
