/* Copyright 2026 The fsia Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Small shared utilities: hashing, atomic file output, a deterministic
// parallel loop.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>

namespace fsia {

/// 64-bit FNV-1a. `seed` lets callers chain several buffers.
std::uint64_t fnv1a(std::span<const std::uint8_t> bytes,
                    std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::string_view text,
                    std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string hex64(std::uint64_t value);

/// Writes through a temporary sibling and renames over `path`.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents);

std::string read_file(const std::filesystem::path& path);

/// Runs body(i) for i in [0, n) on up to `threads` workers. Each index is
/// visited exactly once; callers keep results per index so that any
/// reduction afterwards happens in index order.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                  unsigned threads = 0);

/// Worker count used when callers pass 0: FSIA_THREADS or hardware
/// concurrency.
unsigned default_threads();

}  // namespace fsia
