#pragma once

#include <cstdint>
#include <vector>
#include <string_view>

namespace pawprint {

/// a: both correct, b: row model only, c: column model only, d: both wrong.
struct ContingencyTable {
  std::uint64_t a = 0;
  std::uint64_t b = 0;
  std::uint64_t c = 0;
  std::uint64_t d = 0;

  std::uint64_t total() const { return a + b + c + d; }
};

enum class Direction { RowBetter, ColBetter, Tie };

std::string_view to_string(Direction d);
/// "↑" row better, "↓" column better, "=" tie.
std::string_view arrow(Direction d);

struct McNemarResult {
  double chi2 = 0.0;
  double p = 1.0;
  Direction direction = Direction::Tie;
};

/// Uncorrected statistic (b - c)^2 / (b + c) with its 1-dof chi-square
/// survival p = erfc(sqrt(chi2 / 2)). With b + c == 0 the result is
/// chi2 = 0, p = 1, Tie.
McNemarResult mcnemar(const ContingencyTable& table);

/// Tallies paired per-query correctness flags. Throws LengthMismatch.
ContingencyTable correctness_vector(const std::vector<bool>& row_correct, const std::vector<bool>& col_correct);

}  // namespace pawprint
