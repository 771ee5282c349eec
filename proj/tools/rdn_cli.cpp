// Copyright 2026 The RDN-SR Authors
// SPDX-License-Identifier: Apache-2.0

#include "rdn/cli.hpp"

int main(int argc, char** argv) { return rdn::cli::run(argc, argv); }
