// Copyright 2026 The ovmine Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ovmine/cli.hpp"

int main(int argc, char** argv) { return ovmine::run_cli(argc, argv); }
