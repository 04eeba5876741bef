// Tree edit distance by path decomposition.
//
// The driver follows the APTED scheme: a cost model picks, for every pair of
// subtrees (v, w), the root-leaf path (left, right or heavy; in either tree)
// whose single-path computation is cheapest, and the general recursion
// computes all subtree-pair distances bottom-up along the chosen paths.
//
// Single-path functions:
//   * left / right paths use the keyroot dynamic program (the right variant
//     runs it on the mirrored orientation);
//   * heavy (or any other) paths use a forest dynamic program over all
//     subforests of the other subtree. A subforest reachable by deleting
//     leftmost/rightmost roots is exactly {y : pre(y) >= p, post(y) <= q},
//     so the tables are indexed by (p, q).
//
// All distances are exact integers under unit costs.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "e3/structsim.hpp"

namespace e3::structsim {
namespace {

using Cost = std::int64_t;

struct Orientation {
  std::vector<int> post;         // node -> postorder position
  std::vector<int> post_to_node; // postorder position -> node
  std::vector<int> lld;          // node -> leftmost leaf (in this orientation)
  std::vector<char> keyroot_in_parent;  // node is not the first child
};

// Nodes are numbered in left-to-right preorder.
struct IndexedTree {
  std::vector<int> label;
  std::vector<int> size;
  std::vector<int> parent;
  std::vector<std::vector<int>> children;
  std::vector<int> heavy;  // child with the largest subtree, -1 for leaves
  Orientation left;        // left-to-right
  Orientation right;       // mirrored

  int n() const { return static_cast<int>(label.size()); }
};

void add_nodes(const LabeledTree& t, int parent, IndexedTree& out,
               std::unordered_map<std::string, int>& labels) {
  const int id = out.n();
  auto [it, inserted] = labels.emplace(t.label, static_cast<int>(labels.size()));
  out.label.push_back(it->second);
  out.size.push_back(1);
  out.parent.push_back(parent);
  out.children.emplace_back();
  out.heavy.push_back(-1);
  if (parent >= 0) out.children[parent].push_back(id);
  for (const auto& c : t.children) add_nodes(c, id, out, labels);
  if (parent >= 0) out.size[parent] += out.size[id];
}

void build_orientation(const IndexedTree& t, bool mirrored, Orientation& o) {
  const int n = t.n();
  o.post.assign(n, 0);
  o.post_to_node.assign(n, 0);
  o.lld.assign(n, 0);
  o.keyroot_in_parent.assign(n, 0);
  int counter = 0;
  // iterative postorder
  std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    const auto& ch = t.children[node];
    if (next < ch.size()) {
      const int child = mirrored ? ch[ch.size() - 1 - next] : ch[next];
      ++next;
      stack.emplace_back(child, 0);
      continue;
    }
    o.post[node] = counter;
    o.post_to_node[counter] = node;
    ++counter;
    if (ch.empty()) {
      o.lld[node] = node;
    } else {
      const int first = mirrored ? ch.back() : ch.front();
      o.lld[node] = o.lld[first];
      for (std::size_t i = 0; i < ch.size(); ++i) {
        const int c = ch[i];
        o.keyroot_in_parent[c] = (c != first);
      }
    }
    stack.pop_back();
  }
}

IndexedTree index_tree(const LabeledTree& root, std::unordered_map<std::string, int>& labels) {
  IndexedTree t;
  add_nodes(root, -1, t, labels);
  for (int v = 0; v < t.n(); ++v) {
    int best = -1;
    for (int c : t.children[v]) {
      if (best < 0 || t.size[c] > t.size[best]) best = c;
    }
    t.heavy[v] = best;
  }
  build_orientation(t, false, t.left);
  build_orientation(t, true, t.right);
  return t;
}

enum class PathKind : std::uint8_t { kLeft, kRight, kHeavy };

struct Choice {
  PathKind kind;
  bool in_second;
};

class TedEngine {
 public:
  TedEngine(const LabeledTree& a, const LabeledTree& b, TedOptions options)
      : options_(options) {
    std::unordered_map<std::string, int> labels;
    t1_ = index_tree(a, labels);
    t2_ = index_tree(b, labels);
    n1_ = t1_.n();
    n2_ = t2_.n();
    delta_.assign(static_cast<std::size_t>(n1_) * n2_, -1);
    if (options_.strategy == PathStrategy::kOptimal) compute_strategy();
    rng_.seed(options_.seed);
  }

  Cost run() {
    gted(0, 0);
    return d(0, 0);
  }

 private:
  // ------------------------------------------------------------- storage
  Cost& d(int v, int w) { return delta_[static_cast<std::size_t>(v) * n2_ + w]; }

  // View of the two trees for a single-path computation. When `swapped`,
  // the path lies in the second tree: F is tree 2, G is tree 1, deletions in
  // F are insertions of the original problem and delta is read transposed.
  struct View {
    const IndexedTree* f;
    const IndexedTree* g;
    bool swapped;
  };

  Cost dist(const View& vw, int f_node, int g_node) {
    return vw.swapped ? d(g_node, f_node) : d(f_node, g_node);
  }
  void set_dist(const View& vw, int f_node, int g_node, Cost value) {
    if (vw.swapped) {
      d(g_node, f_node) = value;
    } else {
      d(f_node, g_node) = value;
    }
  }
  static Cost ren(const View& vw, int f_node, int g_node) {
    return vw.f->label[f_node] == vw.g->label[g_node] ? 0 : 1;
  }
  static constexpr Cost kDel = 1;
  static constexpr Cost kIns = 1;

  // ------------------------------------------------------------ strategy
  void compute_strategy() {
    const auto kl1 = keyroot_sizes(t1_, t1_.left);
    const auto kr1 = keyroot_sizes(t1_, t1_.right);
    const auto kl2 = keyroot_sizes(t2_, t2_.left);
    const auto kr2 = keyroot_sizes(t2_, t2_.right);
    const auto a1 = all_subforests(t1_);
    const auto a2 = all_subforests(t2_);

    const std::size_t cells = static_cast<std::size_t>(n1_) * n2_;
    std::vector<double> cost(cells), hl1(cells), hr1(cells), hh1(cells), hl2(cells),
        hr2(cells), hh2(cells);
    strategy_.assign(cells, Choice{PathKind::kLeft, false});
    auto at = [this](int v, int w) { return static_cast<std::size_t>(v) * n2_ + w; };

    for (int pv = 0; pv < n1_; ++pv) {
      const int v = t1_.left.post_to_node[pv];
      const auto& cv = t1_.children[v];
      for (int pw = 0; pw < n2_; ++pw) {
        const int w = t2_.left.post_to_node[pw];
        const auto& cw = t2_.children[w];

        // Sums of costs of subtrees hanging off each path type.
        double l1 = 0, r1 = 0, h1 = 0, l2 = 0, r2 = 0, h2 = 0;
        if (!cv.empty()) {
          const int first = cv.front(), last = cv.back(), hv = t1_.heavy[v];
          double all = 0;
          for (int c : cv) all += cost[at(c, w)];
          l1 = hl1[at(first, w)] + all - cost[at(first, w)];
          r1 = hr1[at(last, w)] + all - cost[at(last, w)];
          h1 = hh1[at(hv, w)] + all - cost[at(hv, w)];
        }
        if (!cw.empty()) {
          const int first = cw.front(), last = cw.back(), hw = t2_.heavy[w];
          double all = 0;
          for (int c : cw) all += cost[at(v, c)];
          l2 = hl2[at(v, first)] + all - cost[at(v, first)];
          r2 = hr2[at(v, last)] + all - cost[at(v, last)];
          h2 = hh2[at(v, hw)] + all - cost[at(v, hw)];
        }
        const std::size_t k = at(v, w);
        hl1[k] = l1;
        hr1[k] = r1;
        hh1[k] = h1;
        hl2[k] = l2;
        hr2[k] = r2;
        hh2[k] = h2;

        const double s1 = t1_.size[v], s2 = t2_.size[w];
        const double options[6] = {
            s1 * kl2[w] + l1, s1 * kr2[w] + r1, s1 * a2[w] + h1,
            s2 * kl1[v] + l2, s2 * kr1[v] + r2, s2 * a1[v] + h2,
        };
        int best = 0;
        for (int i = 1; i < 6; ++i) {
          if (options[i] < options[best]) best = i;
        }
        cost[k] = options[best];
        strategy_[k] = Choice{static_cast<PathKind>(best % 3), best >= 3};
      }
    }
  }

  // Sum of subtree sizes over the keyroots of each subtree: the number of
  // relevant subforests for the keyroot decomposition in that orientation.
  static std::vector<double> keyroot_sizes(const IndexedTree& t, const Orientation& o) {
    std::vector<double> out(t.n(), 0);
    for (int p = 0; p < t.n(); ++p) {
      const int v = o.post_to_node[p];
      double sum = t.size[v];
      for (int c : t.children[v]) {
        sum += out[c] - (o.keyroot_in_parent[c] ? 0 : t.size[c]);
      }
      out[v] = sum;
    }
    return out;
  }

  static std::vector<double> all_subforests(const IndexedTree& t) {
    std::vector<double> sum_sizes(t.n(), 0), out(t.n(), 0);
    for (int p = 0; p < t.n(); ++p) {
      const int v = t.left.post_to_node[p];
      double s = t.size[v];
      for (int c : t.children[v]) s += sum_sizes[c];
      sum_sizes[v] = s;
      const double n = t.size[v];
      out[v] = n * (n + 3) / 2 - s;
    }
    return out;
  }

  Choice choose(int v, int w) {
    switch (options_.strategy) {
      case PathStrategy::kOptimal:
        return strategy_[static_cast<std::size_t>(v) * n2_ + w];
      case PathStrategy::kLeftInFirst: return {PathKind::kLeft, false};
      case PathStrategy::kRightInFirst: return {PathKind::kRight, false};
      case PathStrategy::kHeavyInFirst: return {PathKind::kHeavy, false};
      case PathStrategy::kLeftInSecond: return {PathKind::kLeft, true};
      case PathStrategy::kRightInSecond: return {PathKind::kRight, true};
      case PathStrategy::kHeavyInSecond: return {PathKind::kHeavy, true};
      case PathStrategy::kRandom: {
        const auto r = rng_() % 6;
        return {static_cast<PathKind>(r % 3), r >= 3};
      }
    }
    return {PathKind::kLeft, false};
  }

  // ---------------------------------------------------------- recursion
  static int path_child(const IndexedTree& t, int node, PathKind kind) {
    const auto& ch = t.children[node];
    if (ch.empty()) return -1;
    switch (kind) {
      case PathKind::kLeft: return ch.front();
      case PathKind::kRight: return ch.back();
      case PathKind::kHeavy: return t.heavy[node];
    }
    return -1;
  }

  void gted(int v, int w) {
    Choice choice{PathKind::kLeft, true};
    if (t2_.size[w] == 1) {
      choice = {PathKind::kLeft, true};
    } else if (t1_.size[v] == 1) {
      choice = {PathKind::kLeft, false};
    } else {
      choice = choose(v, w);
    }

    if (!choice.in_second) {
      for (int x = v; x >= 0; x = path_child(t1_, x, choice.kind)) {
        const int on_path = path_child(t1_, x, choice.kind);
        for (int c : t1_.children[x]) {
          if (c != on_path) gted(c, w);
        }
      }
      run_spf(View{&t1_, &t2_, false}, v, w, choice.kind);
    } else {
      for (int y = w; y >= 0; y = path_child(t2_, y, choice.kind)) {
        const int on_path = path_child(t2_, y, choice.kind);
        for (int c : t2_.children[y]) {
          if (c != on_path) gted(v, c);
        }
      }
      run_spf(View{&t2_, &t1_, true}, w, v, choice.kind);
    }
  }

  void run_spf(const View& vw, int f_root, int g_root, PathKind kind) {
    switch (kind) {
      case PathKind::kLeft:
        spf_keyroot(vw, f_root, g_root, vw.f->left, vw.g->left);
        break;
      case PathKind::kRight:
        spf_keyroot(vw, f_root, g_root, vw.f->right, vw.g->right);
        break;
      case PathKind::kHeavy:
        spf_general(vw, f_root, g_root, kind);
        break;
    }
  }

  // --------------------------------------------------- keyroot single path
  // Distances from every node on the orientation's leftmost path of F_v to
  // every node of G_w. Off-path subtree pairs must already be in delta.
  void spf_keyroot(const View& vw, int v, int w, const Orientation& of,
                   const Orientation& og) {
    const IndexedTree& f = *vw.f;
    const IndexedTree& g = *vw.g;
    const int n = f.size[v];
    const int m = g.size[w];
    const int fbase = of.post[v] - n;  // local position = post - fbase (1-based)
    const int gbase = og.post[w] - m;

    std::vector<int> f_node(n + 1), f_lld(n + 1), g_node(m + 1), g_lld(m + 1);
    for (int i = 1; i <= n; ++i) {
      f_node[i] = of.post_to_node[fbase + i];
      f_lld[i] = of.post[of.lld[f_node[i]]] - fbase;
    }
    std::vector<int> keyroots;
    for (int j = 1; j <= m; ++j) {
      g_node[j] = og.post_to_node[gbase + j];
      g_lld[j] = og.post[og.lld[g_node[j]]] - gbase;
      if (j == m || og.keyroot_in_parent[g_node[j]]) keyroots.push_back(j);
    }

    fd_.assign(static_cast<std::size_t>(n + 1) * (m + 1), 0);
    auto fd = [&](int i, int j) -> Cost& {
      return fd_[static_cast<std::size_t>(i) * (m + 1) + j];
    };

    for (int kr : keyroots) {
      const int l2 = g_lld[kr];
      fd(0, l2 - 1) = 0;
      for (int i = 1; i <= n; ++i) fd(i, l2 - 1) = fd(i - 1, l2 - 1) + kDel;
      for (int j = l2; j <= kr; ++j) fd(0, j) = fd(0, j - 1) + kIns;
      for (int i = 1; i <= n; ++i) {
        for (int j = l2; j <= kr; ++j) {
          const Cost del = fd(i - 1, j) + kDel;
          const Cost ins = fd(i, j - 1) + kIns;
          if (f_lld[i] == 1 && g_lld[j] == l2) {
            const Cost sub = fd(i - 1, j - 1) + ren(vw, f_node[i], g_node[j]);
            const Cost best = std::min({del, ins, sub});
            fd(i, j) = best;
            set_dist(vw, f_node[i], g_node[j], best);
          } else {
            const Cost sub =
                fd(f_lld[i] - 1, g_lld[j] - 1) + dist(vw, f_node[i], g_node[j]);
            fd(i, j) = std::min({del, ins, sub});
          }
        }
      }
    }
  }

  // --------------------------------------------------- general single path
  void spf_general(const View& vw, int v, int w, PathKind kind) {
    const IndexedTree& f = *vw.f;
    const IndexedTree& g = *vw.g;
    const int m = g.size[w];
    const int gpre0 = w;  // preorder ids of G_w are w .. w+m-1
    const int gpost0 = g.left.post[w] - m + 1;

    // local G arrays, indexed by local preorder p / local postorder q
    std::vector<int> post_of(m), pre_of_post(m), gsize(m);
    for (int p = 0; p < m; ++p) {
      const int node = gpre0 + p;
      post_of[p] = g.left.post[node] - gpost0;
      pre_of_post[post_of[p]] = p;
      gsize[p] = g.size[node];
    }
    const int stride = m + 1;  // q index = q + 1
    auto idx = [stride](int p, int q) {
      return static_cast<std::size_t>(p) * stride + (q + 1);
    };
    const std::size_t table = static_cast<std::size_t>(m + 1) * stride;

    // insertion cost of S(p, q)
    std::vector<Cost> empty(table, 0);
    for (int q = 0; q < m; ++q) {
      for (int p = m - 1; p >= 0; --p) {
        empty[idx(p, q)] = empty[idx(p + 1, q)] + (post_of[p] > q ? 0 : kIns);
      }
    }

    std::vector<int> path;
    for (int x = v; x >= 0; x = path_child(f, x, kind)) path.push_back(x);

    std::vector<Cost> below = empty;  // table of F_c (the path child), or empty forest
    std::vector<Cost> right_full(table), children(table), current(table);

    for (auto it = path.rbegin(); it != path.rend(); ++it) {
      const int x = *it;
      const int c = (it == path.rbegin()) ? -1 : *(it - 1);

      if (c < 0) {
        children = empty;
      } else {
        // right part: nodes with F-postorder in (post(c), post(x))
        const int rfirst = f.left.post[c] + 1;
        const int nr = f.left.post[x] - rfirst;
        std::vector<Cost> work(static_cast<std::size_t>(nr + 1) * stride);
        auto wk = [stride](int j, int q) {
          return static_cast<std::size_t>(j) * stride + (q + 1);
        };
        for (int p = 0; p <= m; ++p) {
          for (int q = -1; q < m; ++q) work[wk(0, q)] = below[idx(p, q)];
          for (int j = 1; j <= nr; ++j) {
            const int u = f.left.post_to_node[rfirst + j - 1];
            const int su = f.size[u];
            for (int q = -1; q < m; ++q) {
              Cost val;
              if (p == m || q == -1) {
                val = work[wk(j - 1, q)] + kDel;
              } else if (pre_of_post[q] < p) {
                val = work[wk(j, q - 1)];
              } else {
                const int y = pre_of_post[q];
                val = std::min({work[wk(j - 1, q)] + kDel, work[wk(j, q - 1)] + kIns,
                                dist(vw, u, gpre0 + y) + work[wk(j - su, q - gsize[y])]});
              }
              work[wk(j, q)] = val;
            }
          }
          for (int q = -1; q < m; ++q) right_full[idx(p, q)] = work[wk(nr, q)];
        }

        // left part: nodes with F-preorder in (pre(x), pre(c))
        const int nl = c - x - 1;
        std::vector<Cost> col(static_cast<std::size_t>(nl + 1) * (m + 1));
        auto ck = [m](int l, int p) { return static_cast<std::size_t>(l) * (m + 1) + p; };
        for (int q = -1; q < m; ++q) {
          for (int p = 0; p <= m; ++p) col[ck(0, p)] = right_full[idx(p, q)];
          for (int l = 1; l <= nl; ++l) {
            const int u = c - l;
            const int su = f.size[u];
            for (int p = m; p >= 0; --p) {
              Cost val;
              if (p == m || q == -1) {
                val = col[ck(l - 1, p)] + kDel;
              } else if (post_of[p] > q) {
                val = col[ck(l, p + 1)];
              } else {
                val = std::min({col[ck(l - 1, p)] + kDel, col[ck(l, p + 1)] + kIns,
                                dist(vw, u, gpre0 + p) + col[ck(l - su, p + gsize[p])]});
              }
              col[ck(l, p)] = val;
            }
          }
          for (int p = 0; p <= m; ++p) children[idx(p, q)] = col[ck(nl, p)];
        }
      }

      // the path node itself
      for (int q = -1; q < m; ++q) {
        for (int p = m; p >= 0; --p) {
          Cost val;
          if (p == m || q == -1) {
            val = children[idx(p, q)] + kDel;
          } else if (post_of[p] > q) {
            val = current[idx(p + 1, q)];
          } else {
            const int y = p;
            val = std::min({children[idx(p, q)] + kDel, current[idx(p + 1, q)] + kIns,
                            children[idx(p + 1, post_of[y] - 1)] +
                                ren(vw, x, gpre0 + y) + empty[idx(p + gsize[y], q)]});
          }
          current[idx(p, q)] = val;
        }
      }
      for (int p = 0; p < m; ++p) set_dist(vw, x, gpre0 + p, current[idx(p, post_of[p])]);
      std::swap(below, current);
    }
  }

  TedOptions options_;
  IndexedTree t1_, t2_;
  int n1_ = 0, n2_ = 0;
  std::vector<Cost> delta_;
  std::vector<Choice> strategy_;
  std::vector<Cost> fd_;
  std::mt19937_64 rng_;
};

void to_tree(const sql::AstNode& node, const TreeOptions& options, LabeledTree& out) {
  out.label = (options.strip_literals && node.kind == sql::NodeKind::kLiteral)
                  ? std::string(sql::kind_name(node.kind))
                  : node.label();
  out.children.resize(node.children.size());
  for (std::size_t i = 0; i < node.children.size(); ++i) {
    to_tree(node.children[i], options, out.children[i]);
  }
}

}  // namespace

std::size_t tree_size(const LabeledTree& tree) noexcept {
  std::size_t n = 1;
  for (const auto& c : tree.children) n += tree_size(c);
  return n;
}

LabeledTree to_labeled_tree(const sql::AstNode& node, TreeOptions options) {
  LabeledTree out;
  to_tree(node, options, out);
  return out;
}

LabeledTree to_labeled_tree(const sql::QueryAst& ast, TreeOptions options) {
  return to_labeled_tree(ast.root, options);
}

std::int64_t ted(const LabeledTree& a, const LabeledTree& b, TedOptions options) {
  return TedEngine(a, b, options).run();
}

double struct_similarity(const LabeledTree& a, const LabeledTree& b) {
  const double denom = static_cast<double>(std::max(tree_size(a), tree_size(b)));
  const double sim = 1.0 - static_cast<double>(ted(a, b)) / denom;
  return std::clamp(sim, 0.0, 1.0);
}

double struct_similarity(const sql::QueryAst& q, const sql::QueryAst& qi,
                         TreeOptions options) {
  return struct_similarity(to_labeled_tree(q, options), to_labeled_tree(qi, options));
}

}  // namespace e3::structsim
