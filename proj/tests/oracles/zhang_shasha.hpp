#pragma once

// Reference tree edit distance (Zhang & Shasha keyroot dynamic program),
// written independently of the production engine. Unit costs.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "e3/structsim.hpp"

namespace oracle {

namespace detail {

struct Flat {
  std::vector<std::string> label;  // by postorder index, 1-based
  std::vector<int> lld;            // leftmost leaf descendant, 1-based
};

inline int flatten(const e3::structsim::LabeledTree& t, Flat& out) {
  int first_leaf = -1;
  for (const auto& c : t.children) {
    const int l = flatten(c, out);
    if (first_leaf < 0) first_leaf = l;
  }
  out.label.push_back(t.label);
  const int me = static_cast<int>(out.label.size()) - 1;
  out.lld.push_back(first_leaf < 0 ? me : first_leaf);
  return out.lld[me];
}

inline Flat make_flat(const e3::structsim::LabeledTree& t) {
  Flat f;
  f.label.emplace_back();
  f.lld.push_back(0);
  flatten(t, f);
  return f;
}

}  // namespace detail

inline std::int64_t zhang_shasha(const e3::structsim::LabeledTree& a,
                                 const e3::structsim::LabeledTree& b) {
  const auto fa = detail::make_flat(a);
  const auto fb = detail::make_flat(b);
  const int n = static_cast<int>(fa.label.size()) - 1;
  const int m = static_cast<int>(fb.label.size()) - 1;

  auto keyroots = [](const detail::Flat& f, int size) {
    std::vector<int> out;
    for (int i = 1; i <= size; ++i) {
      bool is_key = true;
      for (int j = i + 1; j <= size; ++j) {
        if (f.lld[j] == f.lld[i]) {
          is_key = false;
          break;
        }
      }
      if (is_key) out.push_back(i);
    }
    return out;
  };

  std::vector<std::vector<std::int64_t>> td(n + 1, std::vector<std::int64_t>(m + 1, 0));

  for (int i : keyroots(fa, n)) {
    for (int j : keyroots(fb, m)) {
      const int li = fa.lld[i], lj = fb.lld[j];
      // t[x][y]: forest distance, row/column 0 is the empty forest
      std::vector<std::vector<std::int64_t>> t(i - li + 2,
                                               std::vector<std::int64_t>(j - lj + 2, 0));
      for (int x = 1; x <= i - li + 1; ++x) t[x][0] = t[x - 1][0] + 1;
      for (int y = 1; y <= j - lj + 1; ++y) t[0][y] = t[0][y - 1] + 1;
      for (int x = li; x <= i; ++x) {
        for (int y = lj; y <= j; ++y) {
          const int xi = x - li + 1, yj = y - lj + 1;
          const std::int64_t del = t[xi - 1][yj] + 1;
          const std::int64_t ins = t[xi][yj - 1] + 1;
          if (fa.lld[x] == li && fb.lld[y] == lj) {
            const std::int64_t ren = t[xi - 1][yj - 1] + (fa.label[x] == fb.label[y] ? 0 : 1);
            t[xi][yj] = std::min({del, ins, ren});
            td[x][y] = t[xi][yj];
          } else {
            const std::int64_t sub = t[fa.lld[x] - li][fb.lld[y] - lj] + td[x][y];
            t[xi][yj] = std::min({del, ins, sub});
          }
        }
      }
    }
  }
  return td[n][m];
}

}  // namespace oracle
