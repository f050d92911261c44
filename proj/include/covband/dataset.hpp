#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

namespace covband {

// Supervised regression data: rows of X are observations, y holds the
// matching labels.
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;

  int n() const { return static_cast<int>(X.rows()); }
  int dim() const { return static_cast<int>(X.cols()); }

  void check() const {
    if (X.rows() != y.size()) {
      throw std::invalid_argument("Dataset: X rows and y length differ");
    }
  }

  // Copy of the dataset with row i removed.
  Dataset drop_row(int i) const {
    if (i < 0 || i >= n()) {
      throw std::out_of_range("Dataset::drop_row: index out of range");
    }
    Dataset out;
    out.X.resize(n() - 1, dim());
    out.y.resize(n() - 1);
    int r = 0;
    for (int j = 0; j < n(); ++j) {
      if (j == i) continue;
      out.X.row(r) = X.row(j);
      out.y(r) = y(j);
      ++r;
    }
    return out;
  }

  Dataset select_rows(const std::vector<int>& idx) const {
    Dataset out;
    out.X.resize(static_cast<int>(idx.size()), dim());
    out.y.resize(static_cast<int>(idx.size()));
    for (int r = 0; r < static_cast<int>(idx.size()); ++r) {
      if (idx[r] < 0 || idx[r] >= n()) {
        throw std::out_of_range("Dataset::select_rows: index out of range");
      }
      out.X.row(r) = X.row(idx[r]);
      out.y(r) = y(idx[r]);
    }
    return out;
  }
};

}  // namespace covband
