#pragma once

#include <string>
#include <vector>

namespace hopsearch {

/// One retrieved passage with the score that placed it.
struct Hit {
    std::string id;
    double score = 0.0;

    bool operator==(const Hit&) const = default;
};

/// Best first.
using RankedList = std::vector<Hit>;

} // namespace hopsearch
