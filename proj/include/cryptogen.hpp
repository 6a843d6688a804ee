/*
 * Copyright 2026 The CryptoGen Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

// Umbrella header.

#include "cryptogen/arcc.hpp"
#include "cryptogen/backend.hpp"
#include "cryptogen/costmodel.hpp"
#include "cryptogen/encodings.hpp"
#include "cryptogen/errors.hpp"
#include "cryptogen/fixed_point.hpp"
#include "cryptogen/kv_cache.hpp"
#include "cryptogen/linear_kernels.hpp"
#include "cryptogen/log.hpp"
#include "cryptogen/matrix.hpp"
#include "cryptogen/matrix_io.hpp"
#include "cryptogen/model.hpp"
#include "cryptogen/modular.hpp"
#include "cryptogen/mpc.hpp"
#include "cryptogen/nonlinear.hpp"
#include "cryptogen/pipeline.hpp"
#include "cryptogen/verify.hpp"
