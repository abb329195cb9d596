// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace forgetrace {

// Base class for every error raised by the library. Messages are short and
// stable; tests match on them.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or precondition on user-supplied parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input files (JSONL, vocab, checkpoint, run config).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Numerical failure during training.
class DivergenceError : public Error {
 public:
  DivergenceError() : Error("divergence") {}
};

}  // namespace forgetrace
