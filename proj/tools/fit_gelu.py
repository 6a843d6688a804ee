#!/usr/bin/env python3
# Copyright 2026 The CryptoGen Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
#
# SPDX-License-Identifier: Apache-2.0

"""Fits the GELU polynomial used by the secure GELU protocol.

GELU(x) = x/2 + h(|x|) with h(a) = a * (Phi(a) - 1/2). On [0, 3.2] h is
approximated by a quartic P4, rewritten as a composition of two quadratics

    inner(a) = a^2 + alpha*a + beta
    P4(a)    = kappa * inner(a)^2 + gamma*a + delta

so it evaluates with two sequential multiplications (a*a, then inner*inner).

Prints the frozen coefficients in the layout of gelu_coefficients.hpp.
"""
import numpy as np
from scipy.optimize import minimize
from scipy.special import erf

LO, HI = 0.0, 3.2
grid = np.linspace(LO, HI, 20001)
target = grid * 0.5 * erf(grid / np.sqrt(2.0))


def max_err(coeffs):
    # h(0) = 0 exactly, so the quartic has no constant term.
    return np.max(np.abs(np.polyval(np.append(coeffs, 0.0), grid) - target))


def main():
    design = np.vstack([grid**4, grid**3, grid**2, grid]).T
    ls, *_ = np.linalg.lstsq(design, target, rcond=None)
    mm = minimize(max_err, ls, method="Nelder-Mead",
                  options={"xatol": 1e-14, "fatol": 1e-14, "maxiter": 200000})
    a4, a3, a2, a1 = mm.x if mm.fun < max_err(ls) else ls
    a0 = 0.0
    alpha = a3 / (2 * a4)
    beta = (a2 / a4 - alpha * alpha) / 2
    kappa = a4
    gamma = a1 - 2 * a4 * alpha * beta
    delta = a0 - a4 * beta * beta
    a = grid
    inner = a * a + alpha * a + beta
    err = np.max(np.abs(kappa * inner * inner + gamma * a + delta - target))
    print(f"// max |h - P4| on [{LO}, {HI}] = {err:.6e}")
    for name, v in (("kInnerLinear", alpha), ("kInnerConstant", beta),
                    ("kOuterQuadratic", kappa), ("kOuterLinear", gamma),
                    ("kOuterConstant", delta)):
        print(f"inline constexpr double {name} = {v:.17g};")


if __name__ == "__main__":
    main()
