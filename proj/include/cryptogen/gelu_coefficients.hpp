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

// Generated by tools/fit_gelu.py; do not edit by hand.
//
// On [0, 3.2] the odd part h(a) = a * (Phi(a) - 1/2) of GELU is approximated
// by a quartic written as a composition of two quadratics:
//
//   inner(a) = a^2 + kInnerLinear * a + kInnerConstant
//   h(a)    ~= kOuterQuadratic * inner(a)^2 + kOuterLinear * a + kOuterConstant
//
// and GELU(x) = x / 2 + h(|x|). The quartic has no constant term, so
// h(0) = 0 up to rounding of the constants. Max abs error on the range:
// 2.135e-3.

namespace cryptogen::gelu_fit {

inline constexpr double kRange = 3.2;
inline constexpr double kInnerLinear = -4.4147489486424893;
inline constexpr double kInnerConstant = 3.3374777673270284;
inline constexpr double kOuterQuadratic = 0.020264001235452252;
inline constexpr double kOuterLinear = 0.56778655732952821;
inline constexpr double kOuterConstant = -0.2257158027811618;
inline constexpr double kMaxAbsError = 2.135e-3;

}  // namespace cryptogen::gelu_fit
