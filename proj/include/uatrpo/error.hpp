#pragma once

#include <stdexcept>
#include <string>

namespace uatrpo {

// Base of every error raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Precondition violated by the caller (bad dimensions, out-of-range parameters).
struct InvalidArgument : Error {
  using Error::Error;
};

// The policy produced a non-finite output; the run cannot continue.
struct DivergedPolicy : Error {
  using Error::Error;
};

// The sketch carried no usable range information (empty basis or all
// eigenvalues below the floor). Optimizers skip the update on this error.
struct NoSubspace : Error {
  using Error::Error;
};

// Malformed configuration (unknown key, unparsable value).
struct ConfigError : Error {
  using Error::Error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

}  // namespace uatrpo
