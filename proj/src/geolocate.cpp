#include "geobias/geolocate.hpp"

#include <algorithm>

#include "geobias/errors.hpp"

namespace geobias {

GeoIpIndex build_index(const std::vector<GeoIpBlockRow>& rows) {
  GeoIpIndex index;
  index.blocks_.reserve(rows.size());
  for (const auto& row : rows) {
    GeoIpBlock block;
    block.start = row.cidr.first();
    block.end = row.cidr.last();
    block.zip = row.postal_code;
    if (row.latitude && row.longitude) {
      block.point = GeoPoint{*row.latitude, *row.longitude};
    }
    block.network = row.network;
    if (row.cidr.host_bits_masked) {
      index.warnings_.push_back("network " + row.network +
                                " has host bits set; using " +
                                format_cidr(row.cidr));
    }
    index.blocks_.push_back(std::move(block));
  }
  std::stable_sort(index.blocks_.begin(), index.blocks_.end(),
                   [](const GeoIpBlock& a, const GeoIpBlock& b) {
                     return a.start < b.start;
                   });
  for (std::size_t i = 1; i < index.blocks_.size(); ++i) {
    const auto& prev = index.blocks_[i - 1];
    const auto& cur = index.blocks_[i];
    if (cur.start <= prev.end) {
      throw InputError("overlapping GeoIP networks " + prev.network + " and " +
                       cur.network);
    }
  }
  return index;
}

const GeoIpBlock* GeoIpIndex::find(Ipv4Address ip) const {
  // first block starting after ip; its predecessor is the only candidate
  auto it = std::upper_bound(
      blocks_.begin(), blocks_.end(), ip.value,
      [](std::uint32_t v, const GeoIpBlock& b) { return v < b.start; });
  if (it == blocks_.begin()) return nullptr;
  --it;
  return ip.value <= it->end ? &*it : nullptr;
}

std::optional<GeoIpAssignment> lookup(const GeoIpIndex& index, Ipv4Address ip) {
  const GeoIpBlock* block = index.find(ip);
  if (!block || block->zip.empty()) return std::nullopt;
  return GeoIpAssignment{block->zip, block->point};
}

}  // namespace geobias
