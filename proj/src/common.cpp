#include "optexec/common.hpp"

#include <sstream>

namespace optexec {

SingularMatrixError::SingularMatrixError(std::size_t pivot_index, double pivot_value)
    : std::runtime_error([&] {
          std::ostringstream os;
          os << "singular matrix: pivot " << pivot_index << " has magnitude " << pivot_value;
          return os.str();
      }()),
      pivot_index_(pivot_index),
      pivot_value_(pivot_value) {}

}  // namespace optexec
