// Copyright 2026 The pyrseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <vector>

namespace pyrseg {

/// Maximum-cardinality matching in a bipartite graph (Hopcroft-Karp).
/// adj[u] lists the right vertices adjacent to left vertex u.
/// Returns match_left[u] = matched right vertex or kUnmatched.
class BipartiteMatcher {
 public:
  static constexpr std::size_t kUnmatched = static_cast<std::size_t>(-1);

  BipartiteMatcher(std::size_t left, std::size_t right, std::vector<std::vector<std::size_t>> adj);

  std::size_t solve();
  const std::vector<std::size_t>& match_left() const { return match_left_; }
  const std::vector<std::size_t>& match_right() const { return match_right_; }

 private:
  bool bfs();
  bool dfs(std::size_t u);

  std::size_t left_, right_;
  std::vector<std::vector<std::size_t>> adj_;
  std::vector<std::size_t> match_left_, match_right_, dist_, iter_;
};

std::size_t max_bipartite_matching(std::size_t left, std::size_t right, std::vector<std::vector<std::size_t>> adj);

}  // namespace pyrseg
