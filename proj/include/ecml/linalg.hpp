#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <string>

#include "ecml/error.hpp"

namespace ecml {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Matrix symmetrize(const Matrix& m) { return (m + m.transpose()) * 0.5; }

inline bool is_symmetric(const Matrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

struct SymmetricEigen {
  Vector values;   // ascending
  Matrix vectors;  // columns, matched to values
};

// Spectral decomposition of a real symmetric matrix. Eigenvalues ascend;
// each eigenvector is sign-normalized so its first entry with magnitude
// above 1e-12 is positive, which makes the factorization reproducible.
inline SymmetricEigen symmetric_eigen(const Matrix& m) {
  if (m.rows() != m.cols()) {
    throw ValidationError("eigendecomposition needs a square matrix, got " +
                          std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
  if (!m.allFinite()) {
    throw NumericalError("eigendecomposition input has non-finite entries (" +
                         std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
  if (solver.info() != Eigen::Success) {
    std::ostringstream os;
    os << "symmetric eigendecomposition did not converge (size " << m.rows()
       << ", frobenius norm " << m.norm() << ")";
    throw NumericalError(os.str());
  }
  SymmetricEigen out{solver.eigenvalues(), solver.eigenvectors()};
  for (Eigen::Index c = 0; c < out.vectors.cols(); ++c) {
    for (Eigen::Index r = 0; r < out.vectors.rows(); ++r) {
      const double v = out.vectors(r, c);
      if (std::abs(v) > 1e-12) {
        if (v < 0) out.vectors.col(c) *= -1.0;
        break;
      }
    }
  }
  return out;
}

inline Vector symmetric_eigenvalues(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("symmetric eigenvalue computation did not converge (size " +
                         std::to_string(m.rows()) + ")");
  }
  return solver.eigenvalues();
}

}  // namespace ecml
