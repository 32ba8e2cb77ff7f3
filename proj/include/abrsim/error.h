#ifndef ABRSIM_ERROR_H_
#define ABRSIM_ERROR_H_

#include <stdexcept>
#include <string>

namespace abrsim {

// Raised for invalid inputs and violated preconditions across the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace abrsim

#endif  // ABRSIM_ERROR_H_
