#pragma once

#include <algorithm>
#include <string>
#include <string_view>

namespace geobias {

// Five-digit ZIP / ZCTA key. An empty string means "absent" wherever a ZIP
// is optional.
using ZipCode = std::string;

inline bool is_valid_zip(std::string_view zip) {
  return zip.size() == 5 &&
         std::all_of(zip.begin(), zip.end(),
                     [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace geobias
