// Copyright 2026 The s2d Authors
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

// Independent reference computations. Nothing here calls into the library
// code paths they are used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace oracle {

/// Full (n+1) x (m+1) Levenshtein table.
inline std::size_t levenshtein_table(const std::u32string& a, const std::u32string& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, sub});
    }
  }
  return d[a.size()][b.size()];
}

/// Memoized recursive LCS.
inline std::size_t lcs_recursive(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  std::function<std::size_t(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> std::size_t {
    if (i == a.size() || j == b.size()) return 0;
    const auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    const std::size_t v = a[i] == b[j] ? 1 + go(i + 1, j + 1) : std::max(go(i + 1, j), go(i, j + 1));
    memo[key] = v;
    return v;
  };
  return go(0, 0);
}

/// chrF on ASCII strings by explicit n-gram enumeration (no whitespace).
inline double chrf_enumerated(const std::string& cand, const std::string& ref) {
  double p_sum = 0, r_sum = 0;
  int orders = 0;
  for (std::size_t n = 1; n <= 6; ++n) {
    if (cand.size() < n || ref.size() < n) continue;
    std::vector<std::string> cg, rg;
    for (std::size_t i = 0; i + n <= cand.size(); ++i) cg.push_back(cand.substr(i, n));
    for (std::size_t i = 0; i + n <= ref.size(); ++i) rg.push_back(ref.substr(i, n));
    std::vector<bool> used(rg.size(), false);
    double m = 0;
    for (const auto& g : cg) {
      for (std::size_t k = 0; k < rg.size(); ++k) {
        if (!used[k] && rg[k] == g) {
          used[k] = true;
          m += 1;
          break;
        }
      }
    }
    p_sum += m / static_cast<double>(cg.size());
    r_sum += m / static_cast<double>(rg.size());
    ++orders;
  }
  if (orders == 0) return 0.0;
  const double p = p_sum / orders, r = r_sum / orders;
  return p + r == 0 ? 0.0 : 100.0 * 5.0 * p * r / (4.0 * p + r);
}

struct SmallGraph {
  std::vector<std::string> labels;
  std::vector<std::pair<int, int>> edges;
};

/// Exact unit-cost graph edit distance by enumerating every assignment of the
/// vertices of `a` to vertices of `b` or to deletion.
inline double brute_force_ged(const SmallGraph& a, const SmallGraph& b) {
  const int na = static_cast<int>(a.labels.size());
  const int nb = static_cast<int>(b.labels.size());
  double best = 1e18;
  std::vector<int> map(na, -1);
  std::function<void(int, std::vector<bool>&)> go = [&](int i, std::vector<bool>& used) {
    if (i == na) {
      double cost = 0;
      for (int k = 0; k < na; ++k) {
        if (map[k] < 0) cost += 1;
        else if (a.labels[k] != b.labels[map[k]]) cost += 1;
      }
      for (int k = 0; k < nb; ++k) cost += used[k] ? 0 : 1;
      std::vector<std::pair<int, int>> mapped;
      for (const auto& [s, t] : a.edges) {
        if (map[s] >= 0 && map[t] >= 0) mapped.emplace_back(map[s], map[t]);
        else cost += 1;
      }
      std::vector<bool> matched(b.edges.size(), false);
      for (const auto& e : mapped) {
        bool found = false;
        for (std::size_t k = 0; k < b.edges.size(); ++k) {
          if (!matched[k] && b.edges[k] == e) {
            matched[k] = true;
            found = true;
            break;
          }
        }
        if (!found) cost += 1;
      }
      for (const bool m : matched) cost += m ? 0 : 1;
      best = std::min(best, cost);
      return;
    }
    map[i] = -1;
    go(i + 1, used);
    for (int k = 0; k < nb; ++k) {
      if (used[k]) continue;
      used[k] = true;
      map[i] = k;
      go(i + 1, used);
      used[k] = false;
      map[i] = -1;
    }
  };
  std::vector<bool> used(nb, false);
  go(0, used);
  return best;
}

}  // namespace oracle
