#include "pawprint/stats.hpp"

#include <cmath>
#include <string>

#include "pawprint/core.hpp"

namespace pawprint {

std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::RowBetter: return "RowBetter";
    case Direction::ColBetter: return "ColBetter";
    case Direction::Tie: return "Tie";
  }
  return "Tie";
}

std::string_view arrow(Direction d) {
  switch (d) {
    case Direction::RowBetter: return "↑";
    case Direction::ColBetter: return "↓";
    case Direction::Tie: return "=";
  }
  return "=";
}

McNemarResult mcnemar(const ContingencyTable& t) {
  McNemarResult r;
  if (t.b + t.c == 0) return r;
  const double diff = static_cast<double>(t.b) - static_cast<double>(t.c);
  r.chi2 = diff * diff / static_cast<double>(t.b + t.c);
  r.p = std::erfc(std::sqrt(r.chi2 / 2.0));
  r.direction = t.b > t.c ? Direction::RowBetter : t.c > t.b ? Direction::ColBetter : Direction::Tie;
  return r;
}

ContingencyTable correctness_vector(const std::vector<bool>& row_correct, const std::vector<bool>& col_correct) {
  if (row_correct.size() != col_correct.size()) {
    throw Error(ErrorCode::LengthMismatch, "correctness vectors have lengths " +
                                               std::to_string(row_correct.size()) + " and " +
                                               std::to_string(col_correct.size()));
  }
  ContingencyTable t;
  for (std::size_t i = 0; i < row_correct.size(); ++i) {
    const bool r = row_correct[i], c = col_correct[i];
    if (r && c) ++t.a;
    else if (r) ++t.b;
    else if (c) ++t.c;
    else ++t.d;
  }
  return t;
}

}  // namespace pawprint
