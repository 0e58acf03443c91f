// Copyright 2026 The avrel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "avrel/common.hpp"

namespace avrel {

// Calls fn(i) for i in [0, n) on up to `workers` threads. Work items must
// write to disjoint outputs; the first exception is rethrown after join.
template <class F>
void parallel_for(std::size_t n, std::size_t workers, F&& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  auto run = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first) first = std::current_exception();
        next = n;
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t k = std::min(workers, n);
  for (std::size_t t = 0; t < k; ++t) pool.emplace_back(run);
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

// Worker count from AVREL_THREADS, else 1.
inline std::size_t default_workers() {
  const char* env = std::getenv("AVREL_THREADS");
  if (!env || !*env) return 1;
  try {
    std::size_t pos = 0;
    const long v = std::stol(env, &pos);
    if (pos != std::string(env).size() || v < 1) throw std::invalid_argument("bad");
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("AVREL_THREADS", "AVREL_THREADS must be a positive integer");
  }
}

}  // namespace avrel
