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

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <string_view>

namespace cryptogen::log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

/// Level from the CRYPTOGEN_LOG environment variable (error, warn, info,
/// debug); warn when unset or unrecognized.
inline Level level_from_env() {
  const char* v = std::getenv("CRYPTOGEN_LOG");
  if (v == nullptr) return Level::Warn;
  const std::string_view s(v);
  if (s == "error") return Level::Error;
  if (s == "info") return Level::Info;
  if (s == "debug") return Level::Debug;
  return Level::Warn;
}

inline Level& threshold() {
  static Level level = level_from_env();
  return level;
}

inline bool enabled(Level l) { return static_cast<int>(l) <= static_cast<int>(threshold()); }

inline void write(Level l, const std::string& msg) {
  if (!enabled(l)) return;
  static std::mutex mu;
  static constexpr const char* names[] = {"error", "warn", "info", "debug"};
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "[cryptogen " << names[static_cast<int>(l)] << "] " << msg << "\n";
}

template <class... Args>
void emit(Level l, const Args&... args) {
  if (!enabled(l)) return;
  std::ostringstream os;
  (os << ... << args);
  write(l, os.str());
}

template <class... Args>
void info(const Args&... args) { emit(Level::Info, args...); }
template <class... Args>
void debug(const Args&... args) { emit(Level::Debug, args...); }
template <class... Args>
void warn(const Args&... args) { emit(Level::Warn, args...); }

}  // namespace cryptogen::log
