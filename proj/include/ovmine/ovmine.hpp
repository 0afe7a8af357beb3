// Copyright 2026 The ovmine Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ovmine/class_adjust.hpp"
#include "ovmine/concept_augment.hpp"
#include "ovmine/config.hpp"
#include "ovmine/dataset.hpp"
#include "ovmine/error.hpp"
#include "ovmine/evaluate.hpp"
#include "ovmine/geometry.hpp"
#include "ovmine/imram.hpp"
#include "ovmine/linalg.hpp"
#include "ovmine/mined_io.hpp"
#include "ovmine/parallel.hpp"
#include "ovmine/proposal_mining.hpp"
#include "ovmine/rng.hpp"
#include "ovmine/synth.hpp"
#include "ovmine/tensor_io.hpp"
