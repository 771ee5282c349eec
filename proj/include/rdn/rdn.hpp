// Copyright 2026 The RDN-SR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "rdn/autodiff.hpp"
#include "rdn/checkpoint.hpp"
#include "rdn/config.hpp"
#include "rdn/data.hpp"
#include "rdn/errors.hpp"
#include "rdn/gradcheck.hpp"
#include "rdn/image.hpp"
#include "rdn/metrics.hpp"
#include "rdn/model.hpp"
#include "rdn/optim.hpp"
#include "rdn/resample.hpp"
#include "rdn/rng.hpp"
#include "rdn/tensor.hpp"
#include "rdn/train.hpp"
