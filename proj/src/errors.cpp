#include "mathbode/errors.hpp"

#include <fmt/format.h>

namespace mathbode {

DataError::DataError(const std::string& what, std::size_t line)
    : Error(fmt::format("line {}: {}", line, what)), line_(line) {}

}  // namespace mathbode
