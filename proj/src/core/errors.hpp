#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace semstab {

// Error classes map 1:1 onto the C API status codes and (where documented)
// the CLI exit-code contract: config=2, endpoint=3, aborted=4.
enum class Errc {
  usage = 1,
  config = 2,
  endpoint = 3,
  aborted = 4,
  io = 5,
  internal = 6,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string msg) : std::runtime_error(std::move(msg)), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, std::string msg) { throw Error(code, std::move(msg)); }

[[noreturn]] inline void raise_usage(std::string msg) { raise(Errc::usage, std::move(msg)); }
[[noreturn]] inline void raise_config(std::string msg) { raise(Errc::config, std::move(msg)); }
[[noreturn]] inline void raise_endpoint(std::string msg) { raise(Errc::endpoint, std::move(msg)); }
[[noreturn]] inline void raise_io(std::string msg) { raise(Errc::io, std::move(msg)); }

}  // namespace semstab
