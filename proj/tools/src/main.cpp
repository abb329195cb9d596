// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "forgetrace/cli.hpp"

int main(int argc, char** argv) {
  return forgetrace::cli::dispatch({argv + 1, argv + argc}, std::cout, std::cerr);
}
