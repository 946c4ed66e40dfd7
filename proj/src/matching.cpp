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

#include "pyrseg/matching.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <string>

#include "pyrseg/error.hpp"

namespace pyrseg {

namespace {
constexpr std::size_t kInf = std::numeric_limits<std::size_t>::max();
}

BipartiteMatcher::BipartiteMatcher(std::size_t left, std::size_t right, std::vector<std::vector<std::size_t>> adj)
    : left_(left), right_(right), adj_(std::move(adj)) {
  if (adj_.size() != left_) throw InvalidArgument("BipartiteMatcher: adjacency size differs from left count");
  for (const auto& row : adj_)
    for (auto v : row)
      if (v >= right_) throw InvalidArgument("BipartiteMatcher: right vertex " + std::to_string(v) + " out of range");
}

bool BipartiteMatcher::bfs() {
  std::queue<std::size_t> q;
  bool found = false;
  for (std::size_t u = 0; u < left_; ++u) {
    if (match_left_[u] == kUnmatched) {
      dist_[u] = 0;
      q.push(u);
    } else {
      dist_[u] = kInf;
    }
  }
  while (!q.empty()) {
    const auto u = q.front();
    q.pop();
    for (auto v : adj_[u]) {
      const auto w = match_right_[v];
      if (w == kUnmatched) {
        found = true;
      } else if (dist_[w] == kInf) {
        dist_[w] = dist_[u] + 1;
        q.push(w);
      }
    }
  }
  return found;
}

// Iterative layered DFS to avoid deep recursion on long augmenting paths.
bool BipartiteMatcher::dfs(std::size_t root) {
  struct Frame {
    std::size_t u;
  };
  std::vector<Frame> stack{{root}};
  std::vector<std::size_t> via;  // right vertex taken from each frame
  while (!stack.empty()) {
    const auto u = stack.back().u;
    bool advanced = false;
    while (iter_[u] < adj_[u].size()) {
      const auto v = adj_[u][iter_[u]];
      const auto w = match_right_[v];
      if (w == kUnmatched) {
        // Augment along the stack.
        via.push_back(v);
        for (std::size_t i = stack.size(); i-- > 0;) {
          const auto uu = stack[i].u, vv = via[i];
          match_left_[uu] = vv;
          match_right_[vv] = uu;
        }
        return true;
      }
      if (dist_[w] == dist_[u] + 1) {
        via.push_back(v);
        stack.push_back({w});
        advanced = true;
        break;
      }
      ++iter_[u];
    }
    if (advanced) continue;
    dist_[u] = kInf;
    stack.pop_back();
    if (!stack.empty()) {
      via.pop_back();
      ++iter_[stack.back().u];
    }
  }
  return false;
}

std::size_t BipartiteMatcher::solve() {
  match_left_.assign(left_, kUnmatched);
  match_right_.assign(right_, kUnmatched);
  dist_.assign(left_, kInf);
  iter_.assign(left_, 0);
  std::size_t size = 0;
  while (bfs()) {
    std::fill(iter_.begin(), iter_.end(), 0);
    for (std::size_t u = 0; u < left_; ++u)
      if (match_left_[u] == kUnmatched && dfs(u)) ++size;
  }
  return size;
}

std::size_t max_bipartite_matching(std::size_t left, std::size_t right, std::vector<std::vector<std::size_t>> adj) {
  BipartiteMatcher m(left, right, std::move(adj));
  return m.solve();
}

}  // namespace pyrseg
