#pragma once

#include <Eigen/Dense>

#include <vector>

#include "oracles.hpp"

namespace testing_helpers {

inline Eigen::MatrixXd to_matrix(const std::vector<oracle::Vec>& rows) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

inline std::vector<oracle::Vec> to_rows(const Eigen::MatrixXd& m) {
  std::vector<oracle::Vec> rows(static_cast<std::size_t>(m.rows()), oracle::Vec(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = m(r, c);
  return rows;
}

}  // namespace testing_helpers
