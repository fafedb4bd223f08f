#include "bpl/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace bpl {

namespace {

constexpr const char* kModule = "assignment";
constexpr double kInf = std::numeric_limits<double>::infinity();

void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& cost) {
  for (Index r = 0; r < cost.rows(); ++r) {
    for (Index c = 0; c < cost.cols(); ++c) {
      if (!std::isfinite(cost(r, c))) {
        throw Error(ErrorCode::NonFinite, kModule,
                    "entry (" + std::to_string(r) + ", " + std::to_string(c) + ") is not finite");
      }
    }
  }
}

double tie_tolerance(const Eigen::Ref<const Eigen::MatrixXd>& cost) {
  const double scale = cost.size() ? cost.cwiseAbs().maxCoeff() : 0.0;
  return 1e-9 * (1.0 + scale) * static_cast<double>(std::max<Index>(1, std::min(cost.rows(), cost.cols())));
}

// Shortest-augmenting-path Hungarian method for rows <= cols. Returns the
// column of every row plus the dual potentials (u for rows, v for columns,
// v <= 0 and v < 0 only on matched columns).
struct CoreSolution {
  std::vector<Index> col_of_row;
  Eigen::VectorXd u, v;
};

CoreSolution solve_core(const Eigen::Ref<const Eigen::MatrixXd>& cost) {
  const Index n = cost.rows();
  const Index m = cost.cols();
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n + 1);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(m + 1);
  std::vector<Index> row_of(static_cast<std::size_t>(m + 1), 0);  // 1-based, 0 = free
  std::vector<Index> way(static_cast<std::size_t>(m + 1), 0);
  std::vector<double> minv(static_cast<std::size_t>(m + 1));
  std::vector<char> used(static_cast<std::size_t>(m + 1));

  for (Index i = 1; i <= n; ++i) {
    row_of[0] = i;
    Index j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const Index i0 = row_of[j0];
      double delta = kInf;
      Index j1 = 0;
      for (Index j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u(i0) - v(j);
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Index j = 0; j <= m; ++j) {
        if (used[j]) {
          u(row_of[j]) += delta;
          v(j) -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (row_of[j0] != 0);
    do {
      const Index j1 = way[j0];
      row_of[j0] = row_of[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  CoreSolution sol;
  sol.col_of_row.assign(static_cast<std::size_t>(n), -1);
  for (Index j = 1; j <= m; ++j) {
    if (row_of[j] != 0) sol.col_of_row[row_of[j] - 1] = j - 1;
  }
  sol.u = u.tail(n);
  sol.v = v.tail(m);
  return sol;
}

// Optimal cost of an assignment of min(R, C) pairs, ignoring ties.
double optimal_cost(const Eigen::Ref<const Eigen::MatrixXd>& cost) {
  if (cost.rows() == 0 || cost.cols() == 0) return 0.0;
  if (cost.rows() <= cost.cols()) {
    const auto sol = solve_core(cost);
    double total = 0.0;
    for (Index r = 0; r < cost.rows(); ++r) total += cost(r, sol.col_of_row[r]);
    return total;
  }
  const Eigen::MatrixXd t = cost.transpose();
  return optimal_cost(t);
}

Eigen::MatrixXd select(const Eigen::Ref<const Eigen::MatrixXd>& cost, const std::vector<Index>& rows,
                       const std::vector<Index>& cols) {
  Eigen::MatrixXd sub(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) sub(r, c) = cost(rows[r], cols[c]);
  }
  return sub;
}

Assignment finish(const Eigen::Ref<const Eigen::MatrixXd>& cost, std::vector<std::pair<Index, Index>> pairs) {
  std::sort(pairs.begin(), pairs.end());
  Assignment a;
  a.pairs = std::move(pairs);
  for (const auto& [r, c] : a.pairs) a.total_cost += cost(r, c);
  return a;
}

}  // namespace

Assignment lsa(const Eigen::Ref<const Eigen::MatrixXd>& cost) {
  require_finite(cost);
  const Index R = cost.rows();
  const Index C = cost.cols();
  if (R == 0 || C == 0) return {};

  // Duals of one optimal solution. By complementary slackness every optimal
  // assignment uses only zero-reduced-cost pairs, and a row with negative
  // dual is matched in every optimum; this prunes the lexicographic search.
  Eigen::VectorXd row_dual, col_dual;
  bool row_may_skip_dual = false;
  if (R <= C) {
    auto sol = solve_core(cost);
    row_dual = sol.u;
    col_dual = sol.v;
  } else {
    const Eigen::MatrixXd t = cost.transpose();
    auto sol = solve_core(t);
    row_dual = sol.v;  // <= 0; rows with zero dual may stay unmatched
    col_dual = sol.u;
    row_may_skip_dual = true;
  }
  const double tol = tie_tolerance(cost);
  const double best = optimal_cost(cost);
  const Index need = std::min(R, C);

  std::vector<std::pair<Index, Index>> fixed;
  std::vector<char> col_used(static_cast<std::size_t>(C), 0);
  double fixed_cost = 0.0;

  // Cost of the best completion given the decisions taken for rows < r plus
  // a tentative decision for row r.
  auto completion = [&](Index next_row, double partial, Index pairs_fixed) {
    std::vector<Index> rows, cols;
    for (Index i = next_row; i < R; ++i) rows.push_back(i);
    for (Index j = 0; j < C; ++j) {
      if (!col_used[j]) cols.push_back(j);
    }
    const Index remaining = need - pairs_fixed;
    if (static_cast<Index>(std::min(rows.size(), cols.size())) < remaining) return kInf;
    return partial + optimal_cost(select(cost, rows, cols));
  };

  for (Index r = 0; r < R; ++r) {
    if (static_cast<Index>(fixed.size()) == need) break;
    struct Option {
      Index col;  // -1 = leave row unmatched
    };
    std::vector<Option> options;
    for (Index j = 0; j < C; ++j) {
      if (col_used[j]) continue;
      if (cost(r, j) - row_dual(r) - col_dual(j) <= tol) options.push_back({j});
    }
    const bool can_skip = row_may_skip_dual && row_dual(r) >= -tol && (R - r - 1) >= (need - static_cast<Index>(fixed.size()));
    if (can_skip) options.push_back({-1});
    if (options.empty()) {
      // Numerically degenerate duals; fall back to testing every column.
      for (Index j = 0; j < C; ++j) {
        if (!col_used[j]) options.push_back({j});
      }
      if (R > C) options.push_back({-1});
    }

    Option chosen = options.back();
    for (std::size_t o = 0; o + 1 < options.size(); ++o) {
      const Option& opt = options[o];
      double total;
      if (opt.col >= 0) {
        col_used[opt.col] = 1;
        total = completion(r + 1, fixed_cost + cost(r, opt.col), static_cast<Index>(fixed.size()) + 1);
        col_used[opt.col] = 0;
      } else {
        total = completion(r + 1, fixed_cost, static_cast<Index>(fixed.size()));
      }
      if (total <= best + tol) {
        chosen = opt;
        break;
      }
    }
    if (chosen.col >= 0) {
      col_used[chosen.col] = 1;
      fixed_cost += cost(r, chosen.col);
      fixed.emplace_back(r, chosen.col);
    }
  }
  return finish(cost, std::move(fixed));
}

Assignment lsa_bruteforce(const Eigen::Ref<const Eigen::MatrixXd>& cost) {
  require_finite(cost);
  const Index R = cost.rows();
  const Index C = cost.cols();
  const Index need = std::min(R, C);
  if (need > kBruteforceLimit) {
    throw Error(ErrorCode::BoundExceeded, kModule,
                "min(R, C) = " + std::to_string(need) + " exceeds " + std::to_string(kBruteforceLimit));
  }
  if (need == 0) return {};
  const double tol = tie_tolerance(cost);

  std::vector<std::pair<Index, Index>> current, best_pairs;
  std::vector<char> col_used(static_cast<std::size_t>(C), 0);
  double best = kInf;

  // Depth-first over rows; at each row try columns ascending, then "unmatched".
  // This visits pair lists in lexicographic order, so keeping the first
  // optimum found (within tolerance) realizes the tie rule.
  auto dfs = [&](auto&& self, Index r) -> void {
    const Index have = static_cast<Index>(current.size());
    if (have == need) {
      double total = 0.0;
      for (const auto& [i, j] : current) total += cost(i, j);
      if (total < best - tol) {
        best = total;
        best_pairs = current;
      }
      return;
    }
    if (R - r < need - have) return;
    for (Index j = 0; j < C; ++j) {
      if (col_used[j]) continue;
      col_used[j] = 1;
      current.emplace_back(r, j);
      self(self, r + 1);
      current.pop_back();
      col_used[j] = 0;
    }
    if (R - r - 1 >= need - have) self(self, r + 1);
  };
  dfs(dfs, 0);
  return finish(cost, std::move(best_pairs));
}

Eigen::MatrixXd iou_matrix(const Masks& a, const Masks& b) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorCode::ShapeMismatch, kModule,
                "mask sets cover " + std::to_string(a.cols()) + " and " + std::to_string(b.cols()) +
                    " points");
  }
  const Eigen::MatrixXd fa = a.cast<double>();
  const Eigen::MatrixXd fb = b.cast<double>();
  const Eigen::MatrixXd inter = fa * fb.transpose();
  const Eigen::VectorXd size_a = fa.rowwise().sum();
  const Eigen::VectorXd size_b = fb.rowwise().sum();
  Eigen::MatrixXd iou(a.rows(), b.rows());
  for (Index r = 0; r < a.rows(); ++r) {
    for (Index c = 0; c < b.rows(); ++c) {
      const double uni = size_a(r) + size_b(c) - inter(r, c);
      iou(r, c) = uni > 0.0 ? inter(r, c) / uni : 0.0;
    }
  }
  return iou;
}

namespace {

void check_mask_values(const Masks& m) {
  if ((m.array() > 1).any()) {
    throw Error(ErrorCode::InvalidArgument, kModule, "mask entries must be 0 or 1");
  }
}

}  // namespace

double joint_score(const Masks& seed, std::span<const Masks> passes, const JointMatching& matching,
                   JointObjective objective) {
  double score = 0.0;
  std::vector<Eigen::MatrixXd> seed_iou;
  for (std::size_t k = 0; k < passes.size(); ++k) {
    const auto iou = iou_matrix(passes[k], seed);
    for (std::size_t j = 0; j < matching.seed_of[k].size(); ++j) {
      const auto s = matching.seed_of[k][j];
      if (s >= 0) score += iou(static_cast<Index>(j), s);
    }
  }
  if (objective == JointObjective::AllPairs) {
    // member[k][s] = pass-k mask assigned to seed s, or -1.
    std::vector<std::vector<Index>> member(passes.size(), std::vector<Index>(seed.rows(), -1));
    for (std::size_t k = 0; k < passes.size(); ++k) {
      for (std::size_t j = 0; j < matching.seed_of[k].size(); ++j) {
        if (matching.seed_of[k][j] >= 0) member[k][matching.seed_of[k][j]] = static_cast<Index>(j);
      }
    }
    for (std::size_t k = 0; k < passes.size(); ++k) {
      for (std::size_t l = k + 1; l < passes.size(); ++l) {
        const auto iou = iou_matrix(passes[k], passes[l]);
        for (Index s = 0; s < seed.rows(); ++s) {
          if (member[k][s] >= 0 && member[l][s] >= 0) score += iou(member[k][s], member[l][s]);
        }
      }
    }
  }
  return score;
}

JointMatching npartite_bruteforce(const Masks& seed, std::span<const Masks> passes, JointObjective objective) {
  if (seed.rows() > kNpartiteMaxInstances || passes.size() > kNpartiteMaxPasses) {
    throw Error(ErrorCode::BoundExceeded, kModule,
                "exact n-partite search limited to |I| <= 4 and K <= 3 (got |I| = " +
                    std::to_string(seed.rows()) + ", K = " + std::to_string(passes.size()) + ")");
  }
  check_mask_values(seed);
  for (const auto& p : passes) {
    if (p.cols() != seed.cols()) {
      throw Error(ErrorCode::ShapeMismatch, kModule, "pass masks cover a different point count");
    }
    if (p.rows() > kNpartiteMaxInstances + 2) {
      throw Error(ErrorCode::BoundExceeded, kModule, "pass has too many instances for exact search");
    }
    check_mask_values(p);
  }
  const Index M = seed.rows();

  // Every injection of min(M, M_k) pass masks into seed slots, for each pass.
  std::vector<std::vector<std::vector<std::int32_t>>> choices(passes.size());
  for (std::size_t k = 0; k < passes.size(); ++k) {
    const Index Mk = passes[k].rows();
    const Index need = std::min(M, Mk);
    std::vector<std::int32_t> cur(static_cast<std::size_t>(Mk), -1);
    std::vector<char> used(static_cast<std::size_t>(M), 0);
    auto rec = [&](auto&& self, Index j, Index placed) -> void {
      if (j == Mk) {
        if (placed == need) choices[k].push_back(cur);
        return;
      }
      for (Index s = 0; s < M; ++s) {
        if (used[s]) continue;
        used[s] = 1;
        cur[j] = static_cast<std::int32_t>(s);
        self(self, j + 1, placed + 1);
        used[s] = 0;
      }
      cur[j] = -1;
      if (Mk - j - 1 >= need - placed) self(self, j + 1, placed);
    };
    rec(rec, 0, 0);
  }

  // Precompute IoUs so each joint candidate is scored by table lookups.
  std::vector<Eigen::MatrixXd> to_seed;
  for (const auto& p : passes) to_seed.push_back(iou_matrix(p, seed));
  std::vector<std::vector<Eigen::MatrixXd>> between(passes.size(), std::vector<Eigen::MatrixXd>(passes.size()));
  if (objective == JointObjective::AllPairs) {
    for (std::size_t k = 0; k < passes.size(); ++k) {
      for (std::size_t l = k + 1; l < passes.size(); ++l) between[k][l] = iou_matrix(passes[k], passes[l]);
    }
  }

  JointMatching best;
  best.score = -kInf;
  std::vector<std::size_t> pick(passes.size(), 0);
  std::vector<std::vector<Index>> member(passes.size(), std::vector<Index>(static_cast<std::size_t>(M), -1));
  auto score_of = [&]() {
    double s = 0.0;
    for (std::size_t k = 0; k < passes.size(); ++k) {
      std::fill(member[k].begin(), member[k].end(), -1);
      const auto& c = choices[k][pick[k]];
      for (std::size_t j = 0; j < c.size(); ++j) {
        if (c[j] >= 0) {
          s += to_seed[k](static_cast<Index>(j), c[j]);
          member[k][c[j]] = static_cast<Index>(j);
        }
      }
    }
    if (objective == JointObjective::AllPairs) {
      for (std::size_t k = 0; k < passes.size(); ++k) {
        for (std::size_t l = k + 1; l < passes.size(); ++l) {
          for (Index q = 0; q < M; ++q) {
            if (member[k][q] >= 0 && member[l][q] >= 0) s += between[k][l](member[k][q], member[l][q]);
          }
        }
      }
    }
    return s;
  };
  auto rec = [&](auto&& self, std::size_t k) -> void {
    if (k == passes.size()) {
      const double s = score_of();
      if (s > best.score + 1e-12) {
        best.score = s;
        best.seed_of.clear();
        for (std::size_t q = 0; q < passes.size(); ++q) best.seed_of.push_back(choices[q][pick[q]]);
      }
      return;
    }
    for (std::size_t c = 0; c < choices[k].size(); ++c) {
      pick[k] = c;
      self(self, k + 1);
    }
  };
  rec(rec, 0);
  return best;
}

JointMatching per_pass_matching(const Masks& seed, std::span<const Masks> passes, double min_iou) {
  JointMatching out;
  for (const auto& p : passes) {
    const Eigen::MatrixXd iou = iou_matrix(p, seed);
    const auto a = lsa(-iou);
    std::vector<std::int32_t> seed_of(static_cast<std::size_t>(p.rows()), -1);
    for (const auto& [row, col] : a.pairs) {
      if (iou(row, col) >= min_iou) seed_of[row] = static_cast<std::int32_t>(col);
    }
    out.seed_of.push_back(std::move(seed_of));
  }
  out.score = joint_score(seed, passes, out, JointObjective::SeedStar);
  return out;
}

}  // namespace bpl
