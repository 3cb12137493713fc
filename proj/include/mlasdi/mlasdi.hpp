// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mlasdi/checkpoint.hpp"
#include "mlasdi/config.hpp"
#include "mlasdi/core/adam.hpp"
#include "mlasdi/core/dense_matrix.hpp"
#include "mlasdi/core/mlp.hpp"
#include "mlasdi/data.hpp"
#include "mlasdi/error.hpp"
#include "mlasdi/eval.hpp"
#include "mlasdi/gp.hpp"
#include "mlasdi/latent_dynamics.hpp"
#include "mlasdi/multistage.hpp"
