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

#include <stdexcept>
#include <string>

namespace cryptogen {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid backend, fixed-point or model parameters.
class ParamError : public Error {
 public:
  using Error::Error;
};

/// Operand shapes do not fit the slot count or each other.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An operation would drive a ciphertext's noise budget below zero.
class BudgetExhausted : public Error {
 public:
  using Error::Error;
};

/// Decryption of a ciphertext whose noise budget reached zero.
class DecryptionFailure : public Error {
 public:
  using Error::Error;
};

/// Malformed file, manifest or JSON document.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Fixed-point value left the representable signed range of Z_p.
class OverflowError : public Error {
 public:
  using Error::Error;
};

}  // namespace cryptogen
