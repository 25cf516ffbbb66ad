#pragma once

#include <stdexcept>
#include <string>

namespace ayf {

// Configuration problems: unknown keys, missing guidance models, bad values
// read from an experiment file. The CLI maps these to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced non-finite values for too long, or a discriminator
// gradient blew up. Exit code 3.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint corruption or config-hash mismatch. Exit code 4.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Output files could not be written or read. Exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A closed form was evaluated where it has a pole.
class SingularityError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// An object was used out of sequence (e.g. a tape recorded before the
// parameters changed).
class InvalidState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace ayf
