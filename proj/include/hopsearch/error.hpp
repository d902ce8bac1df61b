#pragma once

#include <stdexcept>

namespace hopsearch {

/// Every failure raised by the engine. Messages are single-line and name the
/// offending input (line number, id, file) where one exists.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace hopsearch
